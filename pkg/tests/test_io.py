import json

import numpy as np
import pytest

from rieszlab.builders import BuilderSpec, build
from rieszlab.io import (
    read_graph,
    read_sidecar,
    read_vector,
    sidecar_path,
    write_graph,
    write_sidecar,
    write_table,
    write_vector,
)


def test_graph_round_trip(tmp_path, weighted_random):
    g, _ = weighted_random
    path = tmp_path / "g.txt"
    write_graph(g, path)
    h = read_graph(path)
    assert (g.weights != h.weights).nnz == 0


def test_graph_file_format(tmp_path, k2):
    path = tmp_path / "k2.txt"
    write_graph(k2.graph, path)
    assert path.read_text().splitlines() == ["vertices 2", "0 0 1.0", "0 1 1.0", "1 1 1.0"]


@pytest.mark.parametrize(
    "text,match",
    [("nodes 2\n0 1 1\n", "header"), ("vertices 2\n0 1\n", "u v w"), ("vertices 3\n0 1 1\n1 1 1\n0 0 1\n2 2 1\n", "connected"), ("vertices 3\n0 1 1\n", "measure")],
)
def test_graph_errors(tmp_path, text, match):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError, match=match):
        read_graph(path)


def test_sidecar(tmp_path):
    spec = BuilderSpec.sierpinski(2)
    b = build(spec)
    path = tmp_path / "s.txt"
    assert read_sidecar(path) is None
    write_sidecar(path, spec, b.graph, b.metric)
    assert sidecar_path(path).name == "s.txt.json"
    meta = read_sidecar(path)
    assert meta["vertices"] == 15 and meta["edges"] == 27 and meta["loops"] == 15
    assert meta["eps_LB"] == 0.5
    assert BuilderSpec.from_dict(meta["builder"]) == spec
    json.dumps(meta)


def test_vector_formats(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("1.5\n-2\n3\n")
    np.testing.assert_array_equal(read_vector(a), [1.5, -2, 3])
    b = tmp_path / "b.csv"
    write_vector(b, [0.25, 1e-300, -7.0])
    np.testing.assert_array_equal(read_vector(b, 3), [0.25, 1e-300, -7.0])
    c = tmp_path / "c.csv"
    c.write_text("vertex,value\n2,1.0\n0,4.0\n")
    np.testing.assert_array_equal(read_vector(c, 4), [4, 0, 1, 0])


def test_vector_errors(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("header\n")
    with pytest.raises(ValueError, match="no numeric"):
        read_vector(a)
    a.write_text("1\n2\n")
    with pytest.raises(ValueError, match="expected 3"):
        read_vector(a, 3)


def test_table(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, ["a", "b"], [[1, 2], [3, 4]])
    assert p.read_text().splitlines() == ["a,b", "1,2", "3,4"]
