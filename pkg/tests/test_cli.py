import csv
import json

import pytest

from hho.cli import CSV_HEADER, EXTRA_COLUMNS, ConfigError, RunConfig, main


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_smoke(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--mesh", "tri", "--n", "8", "--degree", "1", "--out", str(out)]) == 0
    for name in ("solution.vtu", "summary.csv", "balance.csv", "estimators.csv", "config.json"):
        assert (out / name).is_file()
    assert "N_dof" in capsys.readouterr().out
    assert len(_read_csv(out / "balance.csv")) == 2 * 8 ** 2 + 1


def test_invalid_degree_exit_2(tmp_path, capsys):
    assert main(["solve", "--degree", "-1", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "degree" in err and "usage:" in err


def test_adr_zeta_validation(tmp_path, capsys):
    assert main(["solve", "--problem", "adr", "--zeta", "0.5", "--out", str(tmp_path)]) == 2
    assert "zeta must be ≥ 1" in capsys.readouterr().err


def test_unknown_command_and_missing_mesh_file(tmp_path):
    assert main(["frobnicate"]) == 2
    assert main(["solve", "--mesh", f"file:{tmp_path / 'nope.mesh'}", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("cfg", [
    dict(levels=0), dict(n=0), dict(p=1.0, problem="plaplace"), dict(kappa=-1.0, problem="adr"),
    dict(mesh="hexagons"), dict(command="converge", levels=2), dict(command="adapt", problem="adr"),
    dict(command="adapt", theta=0.0), dict(mesh="lshape", problem="plaplace"), dict(stab="dg"),
])
def test_config_validation(cfg):
    with pytest.raises(ConfigError):
        RunConfig(**cfg).validate()


def test_config_precedence(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"degree": 0, "n": 4, "mesh": "cart"}))
    out = tmp_path / "o"
    assert main(["solve", "--config", str(conf), "--n", "2", "--out", str(out)]) == 0
    used = json.loads((out / "config.json").read_text())
    assert used["degree"] == 0 and used["mesh"] == "cart" and used["n"] == 2


def test_config_unknown_key(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"degre": 0}))
    assert main(["solve", "--config", str(conf), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("problem,extra", [("poisson", []), ("plaplace", ["--p", "4"]),
                                           ("adr", ["--kappa", "1"])])
def test_convergence_csv_header(tmp_path, problem, extra):
    out = tmp_path / problem
    code = main(["converge", "--problem", problem, "--mesh", "tri", "--n", "2", "--levels", "3",
                 "--degree", "0", "--out", str(out)] + extra)
    assert code in (0, 3)
    rows = _read_csv(out / "convergence.csv")
    assert rows[0] == CSV_HEADER + EXTRA_COLUMNS[problem]
    assert rows[0][:8] == "level,h,ndof,err_energy,err_l2,err_jump,eoc_energy,eoc_l2".split(",")
    assert len(rows) == 4


def test_convergence_gate_pass(tmp_path, capsys):
    code = main(["converge", "--mesh", "tri", "--n", "4", "--levels", "3", "--degree", "1",
                 "--out", str(tmp_path)])
    assert code == 0
    assert "PASS final EOC energy" in capsys.readouterr().out


def test_convergence_gate_failure_exit_3(tmp_path, capsys, monkeypatch):
    import hho.cli
    monkeypatch.setattr(hho.cli, "gate_bounds", lambda cfg: ((10.0, 11.0), None))
    code = main(["converge", "--mesh", "tri", "--n", "2", "--levels", "3", "--degree", "0",
                 "--out", str(tmp_path)])
    assert code == 3
    assert "FAIL final EOC energy" in capsys.readouterr().out


def test_convergence_reproducible(tmp_path):
    args = ["converge", "--mesh", "voro", "--n", "3", "--levels", "3", "--degree", "1", "--seed", "7"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a/convergence.csv").read_bytes() == (tmp_path / "b/convergence.csv").read_bytes()


def test_adapt_lshape(tmp_path):
    out = tmp_path / "ad"
    assert main(["adapt", "--mesh", "lshape", "--n", "2", "--degree", "0", "--max-iter", "3",
                 "--out", str(out)]) == 0
    rows = _read_csv(out / "adapt.csv")
    assert rows[0] == ["iter", "ndof", "energy_error", "eta_total", "effectivity"]
    assert len(rows) == 4


def test_file_mesh(tmp_path):
    from hho.mesh import generate_mesh, write_mesh
    path = tmp_path / "m.mesh"
    write_mesh(generate_mesh("voronoi_polygonal", 3), path)
    assert main(["solve", "--mesh", f"file:{path}", "--degree", "0", "--out", str(tmp_path / "o")]) == 0
