from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
import yaml

from adaptid.coeffs import HeatPlant, WavePlant
from adaptid.harness import (
    ExperimentConfig,
    build_bounds,
    build_model,
    build_plant,
    list_presets,
    load_config,
    load_preset,
    run_identify,
    run_reconstruct,
    run_simulate,
    run_sweep_rho,
    run_verify_pe,
)
from adaptid.signals import Zero


def small_delay(**changes) -> ExperimentConfig:
    """Delay plant at n = 2: one window is 6 pi s, so 25 s runs are enough."""
    base = load_preset("delay").override(n=2, t_end=25.0, dt=1e-2, decimation=0.5, name="small")
    return base.override(**changes)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_presets_available():
    names = list_presets()
    for kind in ("delay", "heat", "wave"):
        assert kind in names and f"{kind}_loose" in names


def test_example_presets():
    d = load_preset("delay")
    assert (d.n, d.gamma, d.alpha0, d.t_end) == (11, 50.0, 0.01, 200.0)
    assert d.omega_n == pytest.approx(1 / 12)
    h = load_preset("heat")
    assert (h.n, h.gamma, h.alpha0) == (9, 30.0, 0.1)
    plant = build_plant(h.plant)
    assert isinstance(plant, HeatPlant)
    assert plant.params_at(50.0) == (5.0, 1.5)
    assert plant.params_at(120.0)[0] == pytest.approx(6.0 + 0.0005 * 120.0)
    w = load_preset("wave")
    assert w.n == 16 and w.gamma == 50.0
    assert w.alpha0[:2] == [0.02, 0.02] and not any(w.alpha0[2:])
    assert len(w.alpha0) == build_model(build_plant(w.plant), 16).r


def test_config_yaml_round_trip(tmp_path):
    cfg = load_preset("heat").override(name="copy", t_end=12.5)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg.to_dict()))
    back = load_config(path)
    assert back == cfg


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("plant: {type: delay, K: 1, a: 1, b: 1, tau: 0}\nn: 3\nspeed: 4\n")
    with pytest.raises(ValueError, match="speed"):
        load_config(path)


@pytest.mark.parametrize("changes", [dict(n=-1), dict(dt=0.0), dict(decimation=-1.0)])
def test_config_validation(changes):
    with pytest.raises(ValueError):
        small_delay(**changes)


def test_unknown_plant_type():
    with pytest.raises(ValueError):
        ExperimentConfig(plant={"type": "beam"}, n=3)


def test_identify_needs_one_window():
    with pytest.raises(ValueError, match="window"):
        run_identify(small_delay(t_end=10.0))


def test_missing_bounds():
    with pytest.raises(ValueError):
        build_bounds(build_plant(small_delay().plant), None)


def test_tabulated_wave_plant():
    plant = build_plant({"type": "wave", "ei": {"xi": [0, 0.5, 1], "values": [20, 25, 30]}})
    assert isinstance(plant, WavePlant)
    assert plant.ei(0.25) == pytest.approx(22.5)


def test_identify_outputs(tmp_path):
    cfg = small_delay()
    summary = run_identify(cfg, tmp_path)
    est = read_rows(tmp_path / "small_estimates.csv")
    rec = read_rows(tmp_path / "small_reconstruction.csv")
    assert est[0] == ["t", "p0", "p1", "p2", "q0", "q1", "J"]
    assert rec[0] == ["t", "K", "tau", "a", "b"]
    assert len(est) == len(rec) == 1 + 51
    assert float(est[-1][0]) == pytest.approx(25.0)
    saved = json.loads((tmp_path / "small_summary.json").read_text())
    assert saved["guards_passed"] and saved["error"] is None
    assert saved["config"]["n"] == 2
    assert set(saved["reconstructed"]) == {"K", "tau", "a", "b"}
    assert saved["true_parameters"] == {"K": 1.5, "tau": 0.1, "a": 0.3, "b": 1.0}
    traj = summary["trajectory"]
    assert traj["alpha"].shape == (51, 5)
    assert np.all(np.diff(traj["J"][-10:]) <= 1e-9)


def test_identify_is_deterministic(tmp_path):
    run_identify(small_delay(), tmp_path / "a")
    run_identify(small_delay(), tmp_path / "b")
    for suffix in ("estimates", "reconstruction"):
        a = (tmp_path / "a" / f"small_{suffix}.csv").read_bytes()
        b = (tmp_path / "b" / f"small_{suffix}.csv").read_bytes()
        assert a == b


def test_identify_divergence_keeps_partial_output(tmp_path):
    cfg = small_delay(method="rk4", gamma=1e6, name="blowup")
    summary = run_identify(cfg, tmp_path)
    assert not summary["guards_passed"]
    assert summary["error"]["type"] == "EstimatorDivergence"
    text = (tmp_path / "blowup_estimates.csv").read_text().splitlines()
    assert text[-1].startswith("# error:")
    assert len(text) >= 3
    assert not json.loads((tmp_path / "blowup_summary.json").read_text())["guards_passed"]


def test_simulate_zero_input(tmp_path):
    summary = run_simulate(small_delay(t_end=2.0, name="quiet"), tmp_path, signal=Zero())
    rows = read_rows(summary["trajectory"])
    assert rows[0] == ["t", "u", "y"]
    assert all(float(r[2]) == 0.0 for r in rows[1:])


def test_simulate_default_multisine(tmp_path):
    summary = run_simulate(small_delay(t_end=3.0), tmp_path)
    rows = read_rows(summary["trajectory"])
    u = np.array([float(r[1]) for r in rows[1:]])
    t = np.array([float(r[0]) for r in rows[1:]])
    want = sum(np.sin(m * t / 3) for m in range(1, 4))
    np.testing.assert_allclose(u, want, atol=1e-12)


def test_empty_sweep(tmp_path):
    reports = run_sweep_rho(load_preset("heat"), tmp_path, n_range=[])
    assert reports == []
    assert read_rows(tmp_path / "heat_sweep.csv") == [["n", "omega", "kappa", "tail", "rho_u", "method"]]


def test_sweep_shares_kappa_cache():
    cache: dict = {}
    tight = run_sweep_rho(load_preset("wave"), None, [3, 4], kappa_cache=cache)
    loose = run_sweep_rho(load_preset("wave_loose"), None, [3, 4], kappa_cache=cache)
    for a, b in zip(tight, loose):
        assert b.rho_u >= a.rho_u


def test_verify_pe_heat(tmp_path):
    summary = run_verify_pe(load_preset("heat"), tmp_path)
    assert summary["guards_passed"]
    assert summary["report"]["rho_u"] == pytest.approx(5.624e-7, rel=0.05)
    assert (tmp_path / "heat_pe_summary.json").exists()


def test_reconstruct_from_estimates(tmp_path):
    run_identify(small_delay(), tmp_path)
    out = tmp_path / "again.csv"
    invalid = run_reconstruct("delay", tmp_path / "small_estimates.csv", out)
    assert read_rows(out) == read_rows(tmp_path / "small_reconstruction.csv")
    assert invalid == sum(math.isnan(float(r[1])) for r in read_rows(out)[1:])


def test_reconstruct_skips_error_trailer(tmp_path):
    path = tmp_path / "est.csv"
    path.write_text("t,q1,q2,J\n0.0,0.8109302162163288,0.01890697837836712,1.0\n"
                    "0.1,1.5,0.01,2.0\n# error: estimate diverged\n")
    out = tmp_path / "rec.csv"
    assert run_reconstruct("wave", path, out) == 1
    rows = read_rows(out)
    assert float(rows[1][1]) == pytest.approx(20.0, rel=1e-9)
    assert rows[2][1] == "nan"
