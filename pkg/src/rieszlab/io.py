"""Plain-text graph files, JSON sidecars and CSV helpers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .builders import BuilderSpec
from .graph import WeightedGraph


def format_weight(w: float) -> str:
    # repr gives the shortest string that round-trips
    return repr(float(w))


def write_graph(g: WeightedGraph, path):
    """Write ``vertices N`` then one ``u v w`` line per undirected edge (loops included)."""
    lines = [f"vertices {g.n}"]
    lines += [f"{u} {v} {format_weight(w)}" for u, v, w in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> WeightedGraph:
    """Inverse of :func:`write_graph`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "vertices":
            raise ValueError(f"{path}: expected 'vertices N' header")
        n = int(header[1])
        edges = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'u v w'")
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return WeightedGraph.from_edges(n, edges)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path, spec: BuilderSpec, g: WeightedGraph, metric):
    meta = {
        "family": spec.family,
        "builder": spec.to_dict(),
        "beta": metric.describe(),
        "bound": metric.bound,
        "eps_LB": g.laziness,
        "vertices": g.n,
        "edges": g.edge_count,
        "loops": int(np.count_nonzero(g.loops)),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_sidecar(path):
    p = sidecar_path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text())


def read_vector(path, n=None) -> np.ndarray:
    """Read a vertex function: either one value per line or ``vertex,value`` rows."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                continue  # header
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    if len(rows[0]) == 1:
        vals = np.array([r[0] for r in rows])
    else:
        size = n if n is not None else int(max(r[0] for r in rows)) + 1
        vals = np.zeros(size)
        for r in rows:
            vals[int(r[0])] = r[1]
    if n is not None and len(vals) != n:
        raise ValueError(f"{path}: expected {n} values, got {len(vals)}")
    return vals


def write_vector(path, values, name="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", name])
        for i, v in enumerate(np.asarray(values)):
            w.writerow([i, format_weight(v)])


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
