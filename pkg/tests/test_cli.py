import math
import os

import numpy as np
import pytest

from vvrate.cli import ConfigError, main, parse_real, resolve
from vvrate.output import read_csv


def run(tmp_path, *args):
    return main(list(args) + ["--out-dir", str(tmp_path)])


def table(path):
    header, rows = read_csv(path)
    return {h: [r[i] for r in rows] for i, h in enumerate(header)}


def test_parse_real():
    assert parse_real("2^-14") == 2.0**-14
    assert parse_real(" 0.25 ") == 0.25
    with pytest.raises(ValueError):
        parse_real("abc")


def test_solve_exact_smoke(tmp_path):
    code = run(tmp_path, "solve", "--terminal", "cone", "--k", "1", "--d", "1", "--eps", "0.1",
               "--t", "0", "--engine", "exact")
    assert code == 0
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0].startswith("# t=0.0 eps=0.1 dx=")
    assert len(lines) == 42
    assert sorted(os.listdir(tmp_path)) == ["field.csv", "resolved.cfg"]


def test_solve_fd_negative_eps(tmp_path, capsys):
    assert run(tmp_path, "solve", "--engine", "fd", "--eps", "-1") == 2
    assert "eps" in capsys.readouterr().err


def test_solve_affine_gap(tmp_path):
    assert run(tmp_path, "solve", "--terminal", "affine", "--slope", "1", "--eps", "0.1",
               "--emit-gap") == 0
    gaps = np.loadtxt(tmp_path / "gap.csv", delimiter=",", comments="#")[:, -1]
    assert np.all(np.abs(gaps) <= 1e-10)


def test_solve_fd_with_drift(tmp_path):
    assert run(tmp_path, "solve", "--engine", "fd", "--terminal", "neg_sqrt",
               "--drift", "sinusoidal:0.3", "--eps", "0.1", "--dx", "0.02", "--plot") == 0
    assert (tmp_path / "field.svg").read_text().startswith("<svg")


def test_example_k2(tmp_path):
    assert run(tmp_path, "example", "--k", "2", "--tau", "1", "--eps-min", "2^-14",
               "--eps-max", "2^-4") == 0
    cols = table(tmp_path / "example_k2.csv")
    assert list(cols) == ["eps", "gap", "expansion", "residual_over_eps"]
    resid = [float(v) for v in cols["residual_over_eps"]]
    assert len(resid) == 11
    assert all(b <= a for a, b in zip(resid, resid[1:]))


def test_example_k1_expansion(tmp_path):
    assert run(tmp_path, "example", "--k", "1") == 0
    cols = table(tmp_path / "example_k1.csv")
    for e, ex in zip(cols["eps"], cols["expansion"]):
        assert float(ex) == -float(e) * math.log(2)
    resid = [float(v) for v in cols["residual_over_eps"]]
    assert all(b <= a for a, b in zip(resid, resid[1:]))


def test_example_k0_rejected(tmp_path, capsys):
    assert run(tmp_path, "example", "--k", "0") == 2
    assert "example.k" in capsys.readouterr().err


def test_rate_k2(tmp_path):
    assert run(tmp_path, "rate", "--terminal", "cone", "--k", "2", "--d", "2", "--x", "0",
               "--eps-grid", "dyadic:6:14") == 0
    fit = table(tmp_path / "ratefit.csv")
    assert list(fit) == ["t", "x1", "x2", "A", "B", "residual_rms", "n_eps"]
    assert abs(float(fit["A"][0]) + 0.5) <= 0.05
    gaps = table(tmp_path / "gaps.csv")
    assert list(gaps) == ["eps", "t", "x1", "x2", "phi_eps", "phi_zero", "gap", "method"]
    assert set(table(tmp_path / "bounds.csv")["status"]) == {"PASS"}


def test_rate_single_eps_is_config_error(tmp_path, capsys):
    assert run(tmp_path, "rate", "--eps-grid", "0.1") == 2
    assert "eps_grid" in capsys.readouterr().err


def test_entropy_zero_drift(tmp_path, capsys):
    assert run(tmp_path, "entropy", "--drift", "zero", "--eps", "0.1", "--tau", "0.5",
               "--d", "1") == 0
    assert "holds=1" in capsys.readouterr().out
    bound = table(tmp_path / "entropy_bound.csv")
    assert bound["holds"] == ["1"]
    assert table(tmp_path / "entropy.csv").keys() == {"s", "entropy", "fisher", "mass",
                                                      "div_drift_cum", "laplacian_cum"}


def test_entropy_pipeline(tmp_path):
    assert run(tmp_path, "entropy", "--drift", "pipeline", "--terminal", "cone", "--eps", "0.1",
               "--tau", "0.1", "--dx", "0.02", "--half-width", "2.5") == 0
    bound = table(tmp_path / "entropy_bound.csv")
    assert bound["holds"] == ["1"]
    assert "integrated_laplacian" in bound


def test_gap_neg_sqrt(tmp_path):
    assert run(tmp_path, "gap", "--terminal", "neg_sqrt", "--eps", "0.05") == 0
    cols = table(tmp_path / "gaps.csv")
    for t, g in zip(cols["t"], cols["gap"]):
        assert float(g) <= (1 - float(t)) * 0.05 / 2 + 1e-8


def test_gap_seed_controls_points(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out, seed in ((a, "3"), (b, "3"), (c, "4")):
        assert main(["gap", "--terminal", "cone", "--eps", "0.1", "--n-points", "5",
                     "--seed", seed, "--out-dir", str(out)]) == 0
    assert (a / "gaps.csv").read_bytes() == (b / "gaps.csv").read_bytes()
    assert (a / "gaps.csv").read_bytes() != (c / "gaps.csv").read_bytes()


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nexample.k = 3\ntau = 0.5  # inline\nseed = 7\n")
    config, _ = resolve(["example", "--config", str(cfg), "--tau", "0.25"])
    assert config.values["example.k"] == "3"
    assert config.values["tau"] == "0.25"
    assert config.seed == 7
    out = tmp_path / "out"
    assert main(["example", "--config", str(cfg), "--out-dir", str(out)]) == 0
    resolved = (out / "resolved.cfg").read_text()
    assert "example.k = 3\n" in resolved and "seed = 7\n" in resolved
    # the echoed configuration reproduces the run
    again = tmp_path / "again"
    assert main(["example", "--config", str(out / "resolved.cfg"), "--out-dir", str(again)]) == 0
    assert (again / "example_k3.csv").read_bytes() == (out / "example_k3.csv").read_bytes()
    assert (again / "resolved.cfg").read_bytes() == (out / "resolved.cfg").read_bytes()
    assert main(["rate", "--config", str(out / "resolved.cfg"), "--out-dir", str(again)]) == 2


@pytest.mark.parametrize("text,key", [("bogus = 1\n", "bogus"), ("seed = x\n", "seed"),
                                      ("no equals sign\n", "line 1")])
def test_config_errors_name_the_key(tmp_path, capsys, text, key):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["example", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert key in capsys.readouterr().err


def test_bad_values_name_the_key(tmp_path, capsys):
    assert run(tmp_path, "solve", "--terminal", "pyramid") == 2
    assert "terminal.kind" in capsys.readouterr().err
    assert run(tmp_path, "solve", "--drift", "wobbly") == 2
    assert "hamiltonian.drift" in capsys.readouterr().err
    assert run(tmp_path, "rate", "--x", "0,0", "--d", "1") == 2
    assert "x" in capsys.readouterr().err


def test_outputs_stay_in_out_dir(tmp_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "out"
    for argv in (["example", "--k", "2", "--plot"],
                 ["rate", "--eps-grid", "dyadic:2:9", "--plot"],
                 ["gap", "--eps", "0.1", "--n-points", "2", "--plot"],
                 ["entropy", "--eps", "0.1", "--tau", "0.2", "--plot"],
                 ["solve", "--eps", "0.1", "--plot"]):
        assert main(argv + ["--out-dir", str(out)]) == 0
    assert os.listdir(work) == []
    assert {"resolved.cfg", "example_k2.svg", "rate.svg", "gaps.svg", "entropy.svg",
            "field.svg"} <= set(os.listdir(out))


def test_config_error_type():
    err = ConfigError("eps", "must be > 0")
    assert err.key == "eps" and "eps" in str(err)
