import json
import math
import time

import numpy as np
import pytest

from heatchain.harness import io
from heatchain.harness.cli import main
from heatchain.harness.config import ConfigError, resolve

SIM = {"n": 8, "m": 100, "t": 0.01, "T_L": 2.0, "T_R": 1.0}


def _cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_simulate_smoke(tmp_path):
    out = tmp_path / "o"
    t0 = time.perf_counter()
    assert main(["simulate", "--config", _cfg(tmp_path, SIM), "--out", str(out)]) == 0
    assert time.perf_counter() - t0 < 5
    assert sorted(p.name for p in out.iterdir()) == ["config.json", "metadata.json", "simulate.csv"]
    meta = json.loads((out / "metadata.json").read_text())
    assert tuple(sorted(meta)) == tuple(sorted(io.METADATA_KEYS))
    rows = io.read_csv(out / "simulate.csv")
    assert {r["quantity"] for r in rows} == {"energy", "integrated_current"}


def test_simulate_bytes_reproducible_across_threads(tmp_path):
    cfg = _cfg(tmp_path, dict(SIM, block=16, m=90))
    blobs = []
    for k, threads in enumerate(("1", "3")):
        out = tmp_path / f"o{k}"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        blobs.append((out / "simulate.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_seed_flag_overrides_file(tmp_path):
    cfg = _cfg(tmp_path, dict(SIM, seed=1))
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", cfg, "--out", str(a)])
    main(["simulate", "--config", cfg, "--out", str(b), "--seed", "2"])
    assert json.loads((b / "config.json").read_text())["seed"] == 2
    assert (a / "simulate.csv").read_bytes() != (b / "simulate.csv").read_bytes()


def test_missing_key_named(tmp_path, capsys):
    bad = {k: v for k, v in SIM.items() if k != "T_L"}
    assert main(["simulate", "--config", _cfg(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
    assert "T_L" in capsys.readouterr().err


def test_unknown_key_and_bad_values_rejected():
    with pytest.raises(ConfigError, match="unknown key 'temperature'"):
        resolve("simulate", dict(SIM, temperature=3))
    with pytest.raises(ConfigError, match="gamma"):
        resolve("simulate", dict(SIM, gamma=-1))
    with pytest.raises(ConfigError, match="record_times"):
        resolve("simulate", dict(SIM, record_times=[0.5]))
    with pytest.raises(ConfigError, match="n_list"):
        resolve("converge", {"n_list": [32, 64]})


def test_unreadable_config_file(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 2
    (tmp_path / "x.json").write_text("{not json")
    assert main(["simulate", "--config", str(tmp_path / "x.json")]) == 2


def test_numerical_gate_exit(tmp_path):
    # a step far above the stability bound is refused at run time
    cfg = _cfg(tmp_path, dict(SIM, h=10.0))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_covariance_equilibrium_flat(tmp_path):
    cfg = _cfg(tmp_path, {"n": 16, "t": 0.2, "T_L": 1.5, "T_R": 1.5})
    out = tmp_path / "o"
    assert main(["covariance", "--config", cfg, "--out", str(out)]) == 0
    assert not (out / "fourier.csv").exists()
    rows = [r for r in io.read_csv(out / "covariance.csv") if r["quantity"] == "energy" and float(r["time"]) == 0.2]
    e = np.array([float(r["value"]) for r in rows])
    # site 0 has no stretch variable, so its energy is T/2
    np.testing.assert_allclose(e[1:], 1.5, atol=1e-12)
    assert e[0] == pytest.approx(0.75, abs=1e-12)


def test_covariance_fourier_report_on_flag(tmp_path):
    cfg = _cfg(tmp_path, {"n": 8, "t": 0.05, "T_L": 2.0, "T_R": 1.0, "fourier_report": True, "max_step": 1e-3})
    out = tmp_path / "o"
    assert main(["covariance", "--config", cfg, "--out", str(out)]) == 0
    rep = {r["residual"]: float(r["value"]) for r in io.read_csv(out / "fourier.csv")}
    assert rep["max_residual"] < 1e-6


def test_covariance_n32_budget(tmp_path):
    cfg = _cfg(tmp_path, {"n": 32, "t": 0.3, "T_L": 2.0, "T_R": 1.0})
    t0 = time.perf_counter()
    assert main(["covariance", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert time.perf_counter() - t0 < 60


def test_pde_modes_and_kernel_table(tmp_path):
    st = tmp_path / "st"
    assert main(["pde", "--config", _cfg(tmp_path, {"T_L": 2.0, "T_R": 1.0, "N": 32}), "--out", str(st)]) == 0
    rows = io.read_csv(st / "pde.csv")
    prof = [r for r in rows if r["quantity"] == "T_s"]
    assert len(prof) == 101
    assert float(prof[0]["value"]) == pytest.approx(2.0, abs=1e-3)

    ev = tmp_path / "ev"
    cfg = {"T_L": 2.0, "T_R": 1.0, "N": 32, "mode": "evolution", "t": 0.2, "record_times": [0.1, 0.2]}
    assert main(["pde", "--config", _cfg(tmp_path, cfg, "e.json"), "--out", str(ev)]) == 0
    rows = io.read_csv(ev / "pde.csv")
    assert {r["time"] for r in rows if r["quantity"] == "coefficient"} == {"0.1", "0.2"}
    assert sum(r["quantity"] == "T" for r in rows) == 2 * 101

    kt = tmp_path / "kt"
    kcfg = {"u_points": 7, "rho_points": 3, "g_points": 2, "n_box": 4}
    assert main(["kernels", "--config", _cfg(tmp_path, kcfg, "k.json"), "--out", str(kt)]) == 0
    pk = tmp_path / "pk"
    cfg = {"T_L": 2.0, "T_R": 1.0, "N": 32, "kernel_table": str(kt / "kernels.csv")}
    assert main(["pde", "--config", _cfg(tmp_path, cfg, "pk.json"), "--out", str(pk)]) == 0
    coords = [float(r["coord"]) for r in io.read_csv(pk / "pde.csv") if r["quantity"] == "T_s"]
    assert len(coords) == 7 and coords[0] == pytest.approx(0.5 * (1 - math.cos(math.pi / 14)))


def test_pde_incompatible_initial_data(tmp_path):
    cfg = {"T_L": 2.0, "T_R": 1.0, "N": 32, "mode": "evolution", "initial": {"kind": "constant", "T0": 1.5}}
    assert main(["pde", "--config", _cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_converge_equilibrium(tmp_path):
    cfg = {"T_L": 1.0, "T_R": 1.0, "n_list": [8, 12, 16], "t": 0.05, "N": 32}
    out = tmp_path / "o"
    assert main(["converge", "--config", _cfg(tmp_path, cfg), "--out", str(out)]) == 0
    rows = io.read_csv(out / "converge.csv")
    assert [int(r["n"]) for r in rows] == [8, 12, 16]
    assert all(float(r["e_n"]) < 1e-6 for r in rows)


def test_verify_exit_codes(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out)]) == 4
    text = capsys.readouterr()
    assert "operator identity" in text.err
    assert "quartic integral" in text.out
    ok = _cfg(tmp_path, {"tstar_constant": math.pi**2})
    assert main(["verify", "--config", ok, "--out", str(tmp_path / "v2")]) == 0
    rows = io.read_csv(tmp_path / "v2" / "verify.csv")
    assert all(r["passed"] == "true" for r in rows)
