import json

import numpy as np
import pytest

from rieszlab.cli import main, parse_spec
from rieszlab.builders import BuilderSpec
from rieszlab.io import read_graph, write_vector


@pytest.fixture
def gasket_file(tmp_path):
    path = tmp_path / "g.txt"
    assert main(["build", "--family", "sierpinski", "--level", "3", "--out", str(path)]) == 0
    return path


@pytest.fixture
def f_file(tmp_path, gasket_file):
    g = read_graph(gasket_file)
    f = np.random.default_rng(0).normal(size=g.n)
    path = tmp_path / "f.csv"
    write_vector(path, f - (g.measure @ f) / g.measure.sum())
    return path


def test_parse_spec():
    assert parse_spec("gasket:level=4") == BuilderSpec.sierpinski(4)
    assert parse_spec("grid:dim=2,side=31,beta=2.5") == BuilderSpec.lattice(2, 31, beta=2.5)
    with pytest.raises(Exception):
        parse_spec("path:length=3")


def test_build_and_sidecar(gasket_file, capsys):
    meta = json.loads(gasket_file.with_name("g.txt.json").read_text())
    assert meta["vertices"] == 42 and meta["edges"] == 81
    assert read_graph(gasket_file).n == 42


def test_build_free_product(tmp_path):
    out = tmp_path / "fp.txt"
    argv = ["build", "--family", "free-product", "--factor", "path:n=3", "--factor", "cycle:n=4", "--out", str(out)]
    assert main(argv) == 0
    assert read_graph(out).n == 12
    with pytest.raises(SystemExit):
        main(["build", "--family", "free-product", "--factor", "path:n=3", "--out", str(out)])


def test_kernel(gasket_file, tmp_path):
    out = tmp_path / "k.csv"
    main(["kernel", "--graph", str(gasket_file), "--source", "0", "--steps", "5", "--out", str(out)])
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape == (6 * 42, 4)
    np.testing.assert_allclose(rows[:, 3], 1, atol=1e-14)


def test_riesz(gasket_file, f_file, tmp_path):
    out = tmp_path / "r.csv"
    main(["riesz", "--graph", str(gasket_file), "--input", str(f_file), "--out", str(out)])
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    assert rows.shape[1] == 3
    # loops carry zero and the form is antisymmetric
    assert np.all(rows[rows[:, 0] == rows[:, 1], 2] == 0)


@pytest.mark.parametrize("kind", ["L", "g", "M"])
def test_functional_vertex_kinds(gasket_file, f_file, tmp_path, kind):
    out = tmp_path / f"{kind}.csv"
    main(["functional", "--graph", str(gasket_file), "--kind", kind, "--input", str(f_file), "--K-max", "30", "--out", str(out)])
    vals = np.loadtxt(out, delimiter=",", skiprows=1)
    assert vals.shape == (42, 2) and np.all(vals[:, 1] >= 0)


@pytest.mark.parametrize("kind", ["A", "C"])
def test_functional_tent_kinds(gasket_file, tmp_path, kind):
    tent = tmp_path / "t.csv"
    tent.write_text("k,vertex,value\n1,3,2.0\n2,10,-1.0\n")
    out = tmp_path / f"{kind}.csv"
    main(["functional", "--graph", str(gasket_file), "--kind", kind, "--input", str(tent), "--out", str(out)])
    vals = np.loadtxt(out, delimiter=",", skiprows=1)
    assert vals[:, 1].max() > 0


@pytest.mark.parametrize("riesz", [False, True])
def test_decompose(gasket_file, f_file, tmp_path, riesz):
    out = tmp_path / "d.json"
    argv = ["decompose", "--graph", str(gasket_file), "--input", str(f_file), "--out", str(out)]
    main(argv + (["--riesz"] if riesz else []))
    d = json.loads(out.read_text())
    assert d["kind"] == ("form" if riesz else "function")
    assert d["residual"] <= 1e-6
    assert d["pieces"] and all(p["valid"] for p in d["pieces"])


def test_verify_ue_strict_and_outputs(tmp_path):
    out, csv = tmp_path / "ue.json", tmp_path / "csv"
    argv = ["verify-ue", "--spec", "path:n=1025", "--N", "0,1,2", "--out", str(out), "--csv", str(csv), "--strict"]
    assert main(argv) == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == "1.0" and "wall_clock" not in rep
    assert (csv / "verify-ue_constants.csv").exists()
    bad = ["verify-ue", "--spec", "path:n=1025,beta=1", "--N", "0", "--strict"]
    assert main(bad) == 1


def test_verify_gaffney(tmp_path):
    out = tmp_path / "gf.json"
    assert main(["verify-gaffney", "--spec", "path:n=401", "--center", "200", "--out", str(out), "--strict"]) == 0
    rep = json.loads(out.read_text())
    assert {v["name"] for v in rep["verdicts"]} == {"band_kdelta", "band_grad"}


def test_fit_diagonal_and_report(tmp_path, capsys):
    out = tmp_path / "fd.json"
    main(["fit-diagonal", "--spec", "lattice:dim=2,side=41", "--k", "4,8,16,32,64", "--target", "-1", "--out", str(out), "--clock"])
    rep = json.loads(out.read_text())
    assert "wall_clock" in rep
    csv = tmp_path / "csv"
    assert main(["report", str(out), "--csv", str(csv)]) == 0
    assert "fit-diagonal" in capsys.readouterr().out
    assert (csv / "fit-diagonal_diagonal.csv").exists()


def test_report_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        main(["verify-gaffney", "--spec", "gasket:level=3", "--k", "2,4,8", "--j", "0,1", "--p", "1.5", "--seed", "4", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_riesz_sweep(tmp_path):
    out = tmp_path / "rs.json"
    assert main(["riesz-sweep", "--levels", "2,3,4", "--p", "1.5,2", "--out", str(out), "--strict"]) == 0


def test_free_product_small(tmp_path):
    out = tmp_path / "fp.json"
    main(["free-product", "--first", "path:n=31", "--second", "gasket:level=3", "--k", "2,3,4,6,8", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert next(v for v in rep["verdicts"] if v["name"] == "factorization")["passed"]


def test_svg(tmp_path):
    pytest.importorskip("matplotlib")
    svg = tmp_path / "p.svg"
    main(["fit-diagonal", "--spec", "path:n=201", "--k", "2,4,8,16,32", "--svg", str(svg)])
    assert svg.read_text().lstrip().startswith("<?xml")


def test_missing_graph():
    with pytest.raises(SystemExit):
        main(["kernel", "--source", "0", "--steps", "1", "--out", "x.csv"])


def test_graph_without_sidecar(tmp_path, gasket_file, f_file):
    bare = tmp_path / "bare.txt"
    bare.write_text(gasket_file.read_text())
    out = tmp_path / "m.csv"
    main(["functional", "--graph", str(bare), "--beta-metric", "1", "--kind", "M", "--input", str(f_file), "--out", str(out)])
    assert out.exists()
