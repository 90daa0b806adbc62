"""Command line interface: ``rieszlab <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calculus, experiments, functionals, hardy, io, markov
from .builders import BuilderSpec, build
from .graph import QuasiMetric

FAMILY_ALIASES = {"free-product": "free_product", "gasket": "sierpinski", "grid": "lattice"}
INT_PARAMS = {"level", "dim", "side", "n"}


def parse_spec(text: str) -> BuilderSpec:
    """``family:key=value,...``, e.g. ``sierpinski:level=4`` or ``lattice:dim=2,side=31,beta=2``."""
    family, _, rest = text.partition(":")
    family = FAMILY_ALIASES.get(family, family)
    params, extra = {}, {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        key = key.strip()
        if key in ("alpha", "beta"):
            extra[key] = float(val)
        elif key in INT_PARAMS:
            params[key] = int(val)
        else:
            raise argparse.ArgumentTypeError(f"unknown parameter {key!r} in {text!r}")
    try:
        return BuilderSpec(family, params, **extra)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def spec_from_args(args) -> BuilderSpec:
    fam = FAMILY_ALIASES.get(args.family, args.family)
    extra = {"alpha": args.alpha}
    if args.beta is not None:
        extra["beta"] = args.beta
    if fam == "free_product":
        if len(args.factor or []) != 2:
            raise SystemExit("free products need exactly two --factor specs")
        return BuilderSpec.free_product(*args.factor, alpha=args.alpha)
    params = {k: getattr(args, k) for k in ("level", "dim", "side", "n") if getattr(args, k) is not None}
    return BuilderSpec(fam, params, **extra)


def load(args):
    """Graph and metric from ``--graph`` (with its sidecar) or ``--spec``."""
    if getattr(args, "spec", None) is not None:
        b = build(args.spec)
        return b.graph, b.metric, b.spec
    if getattr(args, "graph", None) is None:
        raise SystemExit("give --graph FILE or --spec FAMILY:PARAMS")
    g = io.read_graph(args.graph)
    meta = io.read_sidecar(args.graph)
    if meta is None:
        beta = getattr(args, "beta_metric", None)
        return g, QuasiMetric.constant(2.0 if beta is None else beta), None
    spec = BuilderSpec.from_dict(meta["builder"])
    if spec.family == "free_product":
        f1, f2 = (build(f) for f in spec.params["factors"])
        q = QuasiMetric.product(f1.graph, f1.metric, f2.graph, f2.metric)
    else:
        q = QuasiMetric.constant(spec.default_beta)
    return g, q, spec


def int_list(text):
    return [int(v) for v in text.split(",") if v]


def float_list(text):
    return [float(v) for v in text.split(",") if v]


def read_tent(path, n) -> functionals.TentField:
    """Tent field from ``k,vertex,value`` rows."""
    rows = np.loadtxt(path, delimiter=",", comments="#", skiprows=1, ndmin=2)
    K = int(rows[:, 0].max())
    out = np.zeros((K, n))
    out[rows[:, 0].astype(int) - 1, rows[:, 1].astype(int)] = rows[:, 2]
    return functionals.TentField(out)


# commands ------------------------------------------------------------------------


def cmd_build(args):
    spec = spec_from_args(args)
    b = build(spec)
    io.write_graph(b.graph, args.out)
    meta = io.write_sidecar(args.out, spec, b.graph, b.metric)
    print(f"wrote {args.out} ({meta['vertices']} vertices, {meta['edges']} edges)")


def cmd_kernel(args):
    g, _, _ = load(args)
    kf = markov.kernel_rows(g, args.source, args.steps)
    m = g.measure
    rows = []
    for k in range(kf.steps + 1):
        p = kf.at(k)
        mass = float(p @ m)
        rows.extend([k, y, io.format_weight(p[y]), io.format_weight(mass)] for y in range(g.n))
    io.write_table(args.out, ["k", "y", "p_k", "mass"], rows)
    print(f"wrote {args.out}; max mass defect {kf.mass_defect(m):.3g}")


def cmd_riesz(args):
    g, _, _ = load(args)
    f = io.read_vector(args.input, g.n)
    F = calculus.riesz_transform(g, f)
    x, y, v = F.rows()
    io.write_table(args.out, ["x", "y", "F"], [[int(a), int(b), io.format_weight(c)] for a, b, c in zip(x, y, v)])
    print(f"wrote {args.out}; ||F||_2 = {F.norm():.6g}, ||f - mean||_2 = {calculus.lp_norm(g, markov.project_mean_zero(g, f)):.6g}")


def cmd_functional(args):
    g, q, _ = load(args)
    if args.kind in ("A", "C"):
        F = read_tent(args.input, g.n)
        out = functionals.tent_A(g, q, F) if args.kind == "A" else functionals.tent_C(g, q, F)
    else:
        f = io.read_vector(args.input, g.n)
        if args.kind == "M":
            out = functionals.maximal_function(g, q, f)
        elif args.kind == "L":
            out = functionals.lp_functional_L(g, q, args.beta, f, args.K_max, check_tail=True)
        else:
            K = args.K_max or functionals.default_K_max(g, q)
            out = functionals.lp_functional_g(g, args.beta, f, K, check_tail=True)
    io.write_vector(args.out, out, args.kind)
    print(f"wrote {args.out}")


def cmd_decompose(args):
    g, q, _ = load(args)
    f = io.read_vector(args.input, g.n)
    if args.riesz:
        dec = hardy.riesz_hardy_map(g, q, f, eps=args.eps, tol=args.tol)
    else:
        dec = hardy.molecular_decompose(g, q, f, beta=args.beta, eps=args.eps, tol=args.tol)
    pieces = []
    for lam, mol in zip(dec.coefficients, dec.pieces):
        chk = hardy.check_molecule(mol)
        pieces.append({
            "ball": {"center": mol.center, "radius": mol.k},
            "lambda": float(lam),
            "margin": chk.margin,
            "worst_annulus": chk.worst_j,
            "valid": chk.valid,
            "l1": chk.l1,
            "scale": mol.scale,
        })
    out = {
        "kind": "form" if args.riesz else "function",
        "beta": 0.5 if args.riesz else args.beta,
        "eps": args.eps,
        "residual": dec.residual,
        "coefficient_sum": dec.coefficient_sum,
        "source_l1": dec.source_norm,
        "info": experiments._plain(dec.info),
        "pieces": pieces,
    }
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {args.out}: {len(pieces)} molecules, residual {dec.residual:.3g}")


def cmd_verify_ue(args):
    g, q, spec = load(args)
    rep = experiments.verify_ue(g, q, args.N, args.k, margin=args.margin)
    return finish(rep, args, spec)


def cmd_verify_gaffney(args):
    g, q, spec = load(args)
    rep = experiments.verify_gaffney(
        g, q, ops=args.ops, center=args.center, k_grid=args.k, js=args.j, N=args.N, p=args.p, seed=args.seed
    )
    return finish(rep, args, spec)


def cmd_fit_diagonal(args):
    g, q, spec = load(args)
    x = args.x if args.x is not None else [experiments.interior_vertex(g, q)]
    rep = experiments.fit_on_diagonal(g, q, x, args.k, target=args.target)
    return finish(rep, args, spec)


def cmd_riesz_sweep(args):
    fam = FAMILY_ALIASES.get(args.family, args.family)
    rep = experiments.riesz_lp_sweep(fam, args.levels, args.p, args.probes, args.seed)
    return finish(rep, args)


def cmd_free_product(args):
    rep = experiments.free_product_experiment(args.first, args.second, args.k, seed=args.seed)
    return finish(rep, args)


def cmd_report(args):
    rep = experiments.Report.from_dict(json.loads(Path(args.report).read_text()))
    return finish(rep, args, write_json=False)


def finish(rep, args, spec=None, write_json=True):
    if spec is not None:
        rep.graph.setdefault("builder", spec.to_dict())
    print(rep.summary())
    if write_json and args.out:
        Path(args.out).write_text(rep.to_json(clock=args.clock) + "\n")
    if args.csv:
        d = Path(args.csv)
        d.mkdir(parents=True, exist_ok=True)
        for name in rep.tables:
            (d / f"{rep.experiment}_{name}.csv").write_text(rep.table_csv(name))
    if args.svg:
        plot_report(rep, args.svg)
    return 1 if args.strict and not rep.passed else 0


# plotting -----------------------------------------------------------------------


def _series(rep):
    """``(xlabel, ylabel, {label: (x, y)})`` for a log-log plot of a report."""
    t = rep.tables
    if rep.experiment == "fit-diagonal":
        rows = t["diagonal"]["rows"]
        out = {}
        for x, k, p, *_ in rows:
            out.setdefault(f"x={x}", ([], []))
            out[f"x={x}"][0].append(k)
            out[f"x={x}"][1].append(p)
        return "k", "p_2k(x,x)", out
    if rep.experiment == "verify-ue":
        ks = rep.params["k_grid"]
        return "k", "C_N(k)", {f"N={r[0]}": (ks, r[1:]) for r in t["constants"]["rows"]}
    if rep.experiment == "verify-gaffney":
        ks = rep.params["k_grid"]
        out = {}
        for op, fit in rep.fits.items():
            pts = [(k, c) for k, c in zip(ks, fit["constants"]) if c > 0]
            if pts:
                out[op] = tuple(zip(*pts))
        return "t", "constant", out
    if rep.experiment == "riesz-sweep":
        out = {}
        for n, p, r, _ in t["ratios"]["rows"]:
            out.setdefault(f"p={p}", ([], []))
            out[f"p={p}"][0].append(n)
            out[f"p={p}"][1].append(r)
        return "n", "max ratio", out
    if rep.experiment == "free-product":
        rows = t["diagonal"]["rows"]
        cols = t["diagonal"]["columns"]
        ks = [r[0] for r in rows]
        return "k", "value", {c: (ks, [r[i] for r in rows]) for i, c in enumerate(cols) if i > 0}
    raise ValueError(f"no plot for experiment {rep.experiment!r}")


def plot_report(rep, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise SystemExit("SVG output needs matplotlib (pip install rieszlab[plot])") from exc
    xl, yl, series = _series(rep)
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (x, y) in series.items():
        ax.loglog(x, y, "o-", label=label, ms=3)
    ax.set_xlabel(xl)
    ax.set_ylabel(yl)
    ax.set_title(rep.experiment)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# parser ---------------------------------------------------------------------------


def _graph_args(p):
    p.add_argument("--graph", help="graph file written by 'build' (metric read from its sidecar)")
    p.add_argument("--spec", type=parse_spec, help="build on the fly, e.g. sierpinski:level=4")
    p.add_argument("--beta-metric", type=float, help="metric exponent for graph files without sidecar")


def _report_args(p):
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="directory for CSV tables")
    p.add_argument("--svg", help="write a log-log plot (needs matplotlib)")
    p.add_argument("--clock", action="store_true", help="include wall-clock time in the JSON")
    p.add_argument("--strict", action="store_true", help="exit with status 1 if a verdict fails")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rieszlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a graph file and its JSON sidecar")
    p.add_argument("--family", required=True, help="lattice, path, cycle, sierpinski or free_product")
    p.add_argument("--level", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--side", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float, default=0.5, help="loop fraction of lazify")
    p.add_argument("--beta", type=float, help="override the metric exponent")
    p.add_argument("--factor", type=parse_spec, action="append", help="factor spec (free products, twice)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("kernel", help="kernel rows p_k(x, .) for k = 0..steps")
    _graph_args(p)
    p.add_argument("--source", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("riesz", help="Riesz transform d Delta^{-1/2} f as directed-edge rows")
    _graph_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_riesz)

    p = sub.add_parser("functional", help="square functionals and the maximal function")
    _graph_args(p)
    p.add_argument("--kind", choices=list("LgACM"), required=True)
    p.add_argument("--input", required=True, help="vertex CSV (L, g, M) or k,vertex,value tent CSV (A, C)")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--K-max", dest="K_max", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_functional)

    p = sub.add_parser("decompose", help="molecular decomposition of a mean-zero function")
    _graph_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--riesz", action="store_true", help="decompose d Delta^{-1/2} f into form molecules")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("verify-ue", help="empirical upper-estimate constants")
    _graph_args(p)
    p.add_argument("--N", type=int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--k", type=int_list, default=[4, 8, 16, 32, 64])
    p.add_argument("--margin", type=float, default=4.0)
    _report_args(p)
    p.set_defaults(func=cmd_verify_ue)

    p = sub.add_parser("verify-gaffney", help="empirical Gaffney constants on annulus pairs")
    _graph_args(p)
    p.add_argument("--ops", type=lambda s: s.split(","), default=["kdelta", "grad"])
    p.add_argument("--center", type=int)
    p.add_argument("--k", type=int_list, default=[4, 8, 16, 32, 64])
    p.add_argument("--j", type=int_list, default=[1, 2, 3, 4])
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    _report_args(p)
    p.set_defaults(func=cmd_verify_gaffney)

    p = sub.add_parser("fit-diagonal", help="on-diagonal decay exponent")
    _graph_args(p)
    p.add_argument("--x", type=int_list, help="sample vertices (default: the most interior vertex)")
    p.add_argument("--k", type=int_list, default=[8, 11, 16, 23, 32, 45, 64, 91, 128])
    p.add_argument("--target", type=float)
    _report_args(p)
    p.set_defaults(func=cmd_fit_diagonal)

    p = sub.add_parser("riesz-sweep", help="L^p ratios of the Riesz transform across graph sizes")
    p.add_argument("--family", default="sierpinski")
    p.add_argument("--levels", type=int_list, default=[3, 4, 5, 6])
    p.add_argument("--p", type=float_list, default=[1.1, 1.3, 1.5, 1.7, 2.0])
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _report_args(p)
    p.set_defaults(func=cmd_riesz_sweep)

    p = sub.add_parser("free-product", help="free-product counterexample")
    p.add_argument("--first", type=parse_spec, default=parse_spec("lattice:dim=2,side=41"))
    p.add_argument("--second", type=parse_spec, default=parse_spec("sierpinski:level=5"))
    p.add_argument("--k", type=int_list, default=[6, 8, 12, 17, 24, 34, 48, 68, 96])
    p.add_argument("--seed", type=int, default=0)
    _report_args(p)
    p.set_defaults(func=cmd_free_product)

    p = sub.add_parser("report", help="summarize a saved JSON report and export its tables")
    p.add_argument("report")
    _report_args(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
