import json

import numpy as np
import pytest

from polybilliard import cli
from polybilliard.geometry import dump_polyhedron, regular_tetrahedron, unit_cube


@pytest.fixture()
def cube_file(tmp_path):
    p = tmp_path / "cube.json"
    p.write_text(json.dumps(dump_polyhedron(unit_cube())))
    return str(p)


@pytest.fixture()
def tetra_file(tmp_path):
    p = tmp_path / "tetra.json"
    p.write_text(json.dumps(dump_polyhedron(regular_tetrahedron())))
    return str(p)


def test_simulate_jsonl(cube_file, capsys):
    rc = cli.main(["simulate", cube_file, "--m", "0.5,0.5,0",
                   "--theta", "0,0,1", "--steps", "6"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    meta = json.loads(lines[0])
    assert "config_hash" in meta and meta["status"] == "completed"
    recs = [json.loads(l) for l in lines[1:]]
    assert [r["face"] for r in recs] == ["z0", "z1", "z0", "z1", "z0", "z1"]
    assert recs[1]["m"] == [0.5, 0.5, 1.0]


def test_code_singular(cube_file, capsys):
    rc = cli.main(["code", cube_file, "--m", "0.5,0.5,0",
                   "--theta", "1,1,1", "--steps", "5"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "singular"
    assert out["word"] == ["z0"]
    assert out["singularity"]["kind"] == "edge-hit"


def test_unfold_residual(cube_file, capsys):
    rc = cli.main(["unfold", cube_file, "--m", "0.25,0.5,0",
                   "--theta", "1,0,1", "--steps", "8"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    meta = json.loads(lines[0])
    assert meta["residual"] < 1e-12
    pts = [json.loads(l)["point"] for l in lines[1:]]
    assert np.allclose(pts[2], [1.25, 0.5, 1.0])


def test_group_outputs(cube_file, tetra_file, capsys):
    assert cli.main(["group", cube_file]) == 0
    assert capsys.readouterr().out.strip() == "8"
    assert cli.main(["group", tetra_file, "--bound", "1000"]) == 0
    assert capsys.readouterr().out.strip() == "NOT_CLOSED(1000)"


def test_cell_subcommand(cube_file, capsys):
    rc = cli.main(["cell", cube_file, "--theta", "1,0,1",
                   "--word", "z0,x1,z1,x0,z0,x1,z1,x0"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "tube"
    assert out["period"] == 4


def test_complexity_csv_and_meta(cube_file, tmp_path, capsys):
    out = tmp_path / "table.csv"
    rc = cli.main(["complexity", cube_file, "--nmax", "4", "--budget", "2e4",
                   "--seed", "7", "--threads", "2", "--out", str(out)])
    assert rc == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert rows[1] == "n,p_hat,log_p_over_n"
    table = [r.split(",") for r in rows[2:]]
    assert table[0][:2] == ["1", "6"]
    assert table[1][:2] == ["2", "30"]
    meta = json.loads((tmp_path / "table.csv.meta.json").read_text())
    assert meta["budget"] == 20000 and meta["seed"] == 7


def test_complexity_deterministic(cube_file, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out, threads in ((a, "1"), (b, "3")):
        rc = cli.main(["complexity", cube_file, "--nmax", "4", "--budget", "15000",
                       "--seed", "11", "--threads", threads, "--out", str(out)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()


def test_transversal_pair(tmp_path, capsys):
    edges = tmp_path / "edges.json"
    edges.write_text(json.dumps({"edges": [
        {"p": [0, 0, 0], "x": [1, 0, 0]},
        {"p": [0, 1, 0], "x": [0, 0, 1]},
    ]}))
    rc = cli.main(["transversal", str(edges)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["constraint"]["kind"] == "rational"
    assert out["constraint"]["numerator"] == [1.0, 0.0, 0.0]
    assert out["constraint"]["denominator"] == [0.0, -1.0, 0.0]


def test_transversal_triple(tmp_path, capsys):
    edges = tmp_path / "edges.json"
    edges.write_text(json.dumps({"edges": [
        {"p": [0, 0, 0], "x": [1, 0, 0]},
        {"p": [0, 1, 0], "x": [0, 0, 1]},
        {"p": [2, 0, 1], "x": [0, 1, 0]},
    ]}))
    rc = cli.main(["transversal", str(edges), "--probes", "50", "--seed", "3"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["max_probe_count"] <= 4
    assert out["transversals_on_surface"] == len(out["transversals"])


def test_exit_code_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert cli.main(["group", str(bad)]) == cli.EXIT_PARSE
    assert cli.main(["group", str(tmp_path / "missing.json")]) == cli.EXIT_PARSE


def test_exit_code_nonconvex(tmp_path):
    cube = unit_cube()
    data = dump_polyhedron(cube)
    idx = max(range(8), key=lambda i: sum(data["vertices"][i]))
    data["vertices"][idx] = [2.0, 2.0, 2.0]
    f = tmp_path / "warped.json"
    f.write_text(json.dumps(data))
    assert cli.main(["group", str(f)]) == cli.EXIT_NONCONVEX


def test_exit_code_precondition(cube_file):
    # outward direction cannot seed an orbit
    rc = cli.main(["simulate", cube_file, "--m", "0.5,0.5,0", "--theta", "0,0,-1"])
    assert rc == cli.EXIT_PRECONDITION
    # repeated label in a cell word
    rc = cli.main(["cell", cube_file, "--theta", "0,0,1", "--word", "z0,z0"])
    assert rc == cli.EXIT_PRECONDITION
    # tolerance override out of bounds
    rc = cli.main(["group", cube_file, "--tol", "plane=0.5"])
    assert rc == cli.EXIT_PRECONDITION


def test_direction_normalization_warning(cube_file, capsys):
    rc = cli.main(["code", cube_file, "--m", "0.5,0.5,0",
                   "--theta", "0,0,7", "--steps", "2"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "normalizing" in captured.err
    assert json.loads(captured.out)["word"] == ["z0", "z1"]
