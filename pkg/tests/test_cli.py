import csv
import json

import numpy as np
import pytest

from hdbvp import cli, io


def small(kind="dirichlet", eps=0.1, **extra):
    cfg = {
        "name": f"small-{kind}",
        "seed": 0,
        "grid": {"n": 1, "m": 1, "N": 16, "t_min": 0.015625, "t_max": 64.0, "K": 33},
        "coefficients": {
            "base": {"generator": "hermitean", "seed": 1, "amplitude": 0.5},
            "perturbation": {"profile": "slab", "eps": eps, "seed": 3, "t0": 0.25, "t1": 1.0},
        },
        "problem": {"kind": kind, "datum": {"type": "random", "band": 3, "seed": 7}},
        "audits": ["apriori", "roundtrip"],
        "mandatory_audits": ["roundtrip"],
    }
    cfg.update(extra)
    return cfg


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_bundled_laplace(tmp_path):
    assert "laplace-dirichlet" in cli.bundled_scenarios()
    assert cli.main(["solve", "--config", "laplace-dirichlet", "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    poisson = [r for r in rows if r["key"] == "poisson_error"]
    assert poisson and float(json.loads(poisson[0]["value"])) < 1e-6
    assert {"f.bin", "g.bin", "u.bin", "manifest.json"} <= {p.name for p in tmp_path.iterdir()}


def test_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "grid": {"n": 1, "m": 1, "N": "sixteen"}}))
    assert cli.main(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "/grid/N" in err or "/: " in err
    code, man = cli.run_scenario({"name": "x"})
    assert code == cli.EXIT_CONFIG and man["status"] == "config-error"
    with pytest.raises(cli.ConfigError):
        cli.load_config(tmp_path / "missing.json")


def test_expected_divergence(tmp_path):
    assert cli.main(["solve", "--config", "adversarial-divergence", "--out", str(tmp_path)]) == cli.EXIT_OK
    m = manifest(tmp_path)
    assert m["picard"]["converged"] is False


def test_unmet_divergence_is_audit_failure(tmp_path):
    cfg = cli.load_config("adversarial-divergence")
    cfg["adversarial"]["target"] = 0.3
    code, m = cli.run_scenario(cfg, tmp_path)
    assert code == cli.EXIT_AUDIT


def test_deterministic_manifest(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run_scenario(small("neumann"), a)
    cli.run_scenario(small("neumann"), b)
    ma, mb = manifest(a), manifest(b)
    ma.pop("timestamps"), mb.pop("timestamps")
    assert ma == mb
    assert (a / "g.bin").read_bytes() == (b / "g.bin").read_bytes()


def test_seed_override(tmp_path):
    cfg = cli.override_seeds(small(), 11)
    assert cfg["seed"] == 11 and cfg["coefficients"]["base"]["seed"] > 11
    _, m1 = cli.run_scenario(small(), tmp_path / "a", seed_override=11)
    _, m2 = cli.run_scenario(small(), tmp_path / "b")
    assert m1["config"]["seed"] == 11
    assert m1["results"] != m2["results"]


def test_set_path():
    cfg = cli.set_path(small(), "coefficients.perturbation.eps", 0.3)
    assert cfg["coefficients"]["perturbation"]["eps"] == 0.3
    with pytest.raises(cli.ConfigError):
        cli.set_path(small(), "coefficients.base", 1)
    with pytest.raises(cli.ConfigError):
        cli.set_path(small(), "nowhere.eps", 1)


def test_sweep_monotone_rate(tmp_path):
    table = cli.sweep(small(), "coefficients.perturbation.eps", [0.1, 0.3, 0.6], tmp_path, workers=2)
    rates = [r["contraction_rate"] for r in table]
    assert all(r["exit_code"] == cli.EXIT_OK for r in table)
    assert np.all(np.diff(rates) > 0)
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [float(r["value"]) for r in rows] == [0.1, 0.3, 0.6]
    assert (tmp_path / "coefficients_perturbation_eps=0.3" / "manifest.json").exists()


def test_empty_sweep(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small()))
    code = cli.main(["sweep", "--config", str(cfg), "--param", "coefficients.perturbation.eps",
                     "--values", "", "--out", str(tmp_path / "s")])
    assert code == cli.EXIT_OK
    assert (tmp_path / "s" / "sweep.csv").read_text().startswith("value,")


def test_export(tmp_path, capsys):
    cli.run_scenario(small(), tmp_path)
    src = tmp_path / "u.bin"
    assert cli.main(["export", str(src), "--format", "csv"]) == cli.EXIT_OK
    g1, v1 = io.read_dump(src)
    g2, v2 = io.read_csv(tmp_path / "u.csv")
    assert np.array_equal(v1, v2)
    back = cli.export(tmp_path / "u.csv", "bin")
    assert back.name == "u.bin" or back.name == "u_export.bin"
    one = cli.export(src, "csv", tmp_path / "slice.csv", t=1.0)
    gs, vs = io.read_csv(one)
    k = io.nearest_slice(g1, 1.0)
    assert gs.K == 1 and np.array_equal(vs[0], v1[k])
    assert gs.t_nodes[0] == pytest.approx(g1.t_nodes[k])
    assert cli.main(["export", str(tmp_path / "nope.bin")]) == cli.EXIT_CONFIG
    assert cli.main(["export", str(src), "--format", "xml"]) == cli.EXIT_CONFIG


def test_audit_verb(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small("regularity", audits=["apriori", "regularity"],
                                    mandatory_audits=["regularity"])))
    code = cli.main(["audit", "--config", str(cfg), "--out", str(tmp_path / "o")])
    m = manifest(tmp_path / "o")
    assert code == cli.EXIT_OK, m["status"]
    assert m["audits"]["regularity"]["passed"]


def test_module_entry():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "hdbvp", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "solve" in r.stdout
