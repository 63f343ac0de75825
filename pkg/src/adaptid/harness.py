"""Experiment configuration and the simulate / identify / sweep runners.

A run is described by an :class:`ExperimentConfig`, usually loaded from a
YAML file such as ``presets/delay.yaml``. Every runner writes its artifacts
into an output directory and returns a summary dictionary that embeds the
fully resolved configuration.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from . import pe
from .coeffs import (
    CoeffModel,
    DelayPlant,
    HeatPlant,
    LinearEI,
    Schedule,
    TabulatedEI,
    WavePlant,
    bounds_for,
    delay_coeffs,
    heat_coeffs,
    wave_coeffs_peano,
)
from .identifier import EstimatorDivergence, SlidingWindowEstimator
from .pipeline import RegressorStream
from .plants import PlantInstability, simulate, write_trajectory
from .reconstruct import PARAM_NAMES, reconstruct
from .signals import MultiSine

__all__ = [
    "ExperimentConfig",
    "load_config",
    "load_preset",
    "list_presets",
    "build_plant",
    "build_model",
    "build_bounds",
    "run_identify",
    "run_simulate",
    "run_sweep_rho",
    "run_verify_pe",
    "run_reconstruct",
]

PLANT_KINDS = ("delay", "heat", "wave")


@dataclass
class ExperimentConfig:
    """Resolved settings of one experiment.

    ``plant`` is a mapping with a ``type`` key (``delay``, ``heat`` or
    ``wave``) and the true parameter values. ``bounds`` holds the parameter
    box used by the excitation checks. ``omega`` of ``None`` means
    ``1 / (n + 1)``.
    """

    plant: dict
    n: int
    gamma: float = 50.0
    alpha0: Union[float, list] = 0.01
    t_end: float = 200.0
    dt: float = 1e-3
    omega: Optional[float] = None
    grid_points: Optional[int] = None
    decimation: float = 0.1
    method: str = "exponential"
    bounds: Optional[dict] = None
    sweep: dict = field(default_factory=lambda: {"n_min": 1, "n_max": 17})
    name: str = "experiment"
    seed: int = 0

    def __post_init__(self):
        kind = self.plant.get("type")
        if kind not in PLANT_KINDS:
            raise ValueError(f"plant.type must be one of {PLANT_KINDS}, got {kind!r}")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.decimation <= 0:
            raise ValueError("decimation must be positive")

    @property
    def kind(self) -> str:
        return self.plant["type"]

    @property
    def omega_n(self) -> float:
        return 1.0 / (self.n + 1) if self.omega is None else float(self.omega)

    @property
    def window(self) -> float:
        return 2.0 * math.pi / self.omega_n

    def validate_for_identify(self) -> None:
        if self.t_end <= self.window:
            raise ValueError(
                f"t_end={self.t_end:g} must exceed one window 2*pi/omega = {self.window:g}"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["omega_resolved"] = self.omega_n
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names - {"omega_resolved"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: copy.deepcopy(v) for k, v in data.items() if k in names})

    def override(self, **changes) -> "ExperimentConfig":
        d = dataclasses.asdict(self)
        d.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data)


def list_presets() -> list[str]:
    root = resources.files("adaptid") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("adaptid") / "presets"
    with resources.as_file(root / f"{name}.yaml") as path:
        return load_config(path)


# ---------------------------------------------------------------------------
# construction


def _schedule(value) -> Schedule:
    if isinstance(value, (int, float)):
        return Schedule.constant(float(value))
    return Schedule(tuple(tuple(float(x) for x in piece) for piece in value))


def build_plant(spec: dict):
    kind = spec["type"]
    if kind == "delay":
        return DelayPlant(K=spec["K"], a=spec["a"], b=spec["b"], tau=spec["tau"])
    if kind == "heat":
        return HeatPlant(theta=_schedule(spec["theta"]), lam=_schedule(spec["lam"]))
    if kind == "wave":
        ei = spec["ei"]
        if "xi" in ei:
            profile = TabulatedEI(np.asarray(ei["xi"], float), np.asarray(ei["values"], float))
        else:
            profile = LinearEI(float(ei["a"]), float(ei["b"]))
        return WavePlant(profile)
    raise ValueError(f"unknown plant type {kind!r}")


def build_model(plant, n: int, t: float = 0.0) -> CoeffModel:
    """True coefficients and default known/unknown mask at time ``t``."""
    if isinstance(plant, DelayPlant):
        return delay_coeffs(plant.K, plant.a, plant.b, plant.tau, n)
    if isinstance(plant, HeatPlant):
        theta, lam = plant.params_at(t)
        return heat_coeffs(theta, lam, n)
    if isinstance(plant, WavePlant):
        return wave_coeffs_peano(plant.ei, n)
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


def build_bounds(plant, box: Optional[dict]):
    if box is None:
        raise ValueError("config has no bounds box")
    return bounds_for(plant, box)


def _true_params(config: ExperimentConfig, plant, t: float) -> dict:
    if isinstance(plant, DelayPlant):
        return {"K": plant.K, "tau": plant.tau, "a": plant.a, "b": plant.b}
    if isinstance(plant, HeatPlant):
        theta, lam = plant.params_at(t)
        return {"theta": theta, "lam": lam}
    ei = config.plant["ei"]
    if "xi" in ei:
        return {}
    return {"a": float(ei["a"]), "b": float(ei["b"])}


# ---------------------------------------------------------------------------
# output helpers


class _CsvLog:
    """Row-by-row CSV writer; an aborted run keeps its rows plus an error trailer."""

    def __init__(self, path: Path, header):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(header)

    def row(self, values):
        self._w.writerow([repr(float(v)) for v in values])

    def trailer(self, message: str):
        self._fh.write(f"# error: {message}\n")

    def close(self):
        self._fh.flush()
        self._fh.close()


def _write_summary(out_dir: Path, name: str, summary: dict) -> Path:
    path = out_dir / f"{name}_summary.json"
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    return path


# ---------------------------------------------------------------------------
# runners


def run_identify(config: ExperimentConfig, out_dir=None, progress=None) -> dict:
    """Run the full simulate, filter, estimate and reconstruct loop.

    Writes ``<name>_estimates.csv`` (``t,<coef names>,J``),
    ``<name>_reconstruction.csv`` (``t,<param names>``) and
    ``<name>_summary.json`` into ``out_dir`` when given.
    """
    config.validate_for_identify()
    n, dt, omega = config.n, config.dt, config.omega_n
    plant = build_plant(config.plant)
    model = build_model(plant, n)
    stream = RegressorStream(plant, n, omega, dt, grid_points=config.grid_points)
    est = SlidingWindowEstimator(model, omega, config.gamma, config.alpha0, dt, method=config.method)
    coef_names = model.unknown_names
    param_names = PARAM_NAMES[config.kind]

    out = Path(out_dir) if out_dir is not None else None
    est_log = rec_log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        est_log = _CsvLog(out / f"{config.name}_estimates.csv", ["t", *coef_names, "J"])
        rec_log = _CsvLog(out / f"{config.name}_reconstruction.csv", ["t", *param_names])

    n_steps = int(round(config.t_end / dt))
    every = max(1, int(round(config.decimation / dt)))
    times, alphas, costs, recs = [], [], [], []
    error = None
    phi = stream.phi()
    started = time.perf_counter()
    k = 0
    try:
        while True:
            t = k * dt
            est.push(phi)
            if k % every == 0 or k == n_steps:
                J = est.cost()
                rec = reconstruct(config.kind, dict(zip(coef_names, est.alpha)))
                values = [rec.params[p] for p in param_names]
                times.append(t)
                alphas.append(est.alpha.copy())
                costs.append(J)
                recs.append(values)
                if est_log is not None:
                    est_log.row([t, *est.alpha, J])
                    rec_log.row([t, *values])
                if progress is not None:
                    progress(t, est.alpha, J)
            if k == n_steps:
                break
            est.advance()
            stream.advance()
            phi = stream.phi()
            k += 1
    except (PlantInstability, EstimatorDivergence) as exc:
        error = {"type": type(exc).__name__, "t": exc.t, "message": str(exc)}
        for log in (est_log, rec_log):
            if log is not None:
                log.trailer(str(exc))
    finally:
        for log in (est_log, rec_log):
            if log is not None:
                log.close()
    elapsed = time.perf_counter() - started

    t_final = times[-1] if times else 0.0
    truth = _true_params(config, plant, t_final)
    final_alpha = alphas[-1] if alphas else est.alpha
    final_model = build_model(plant, n, t_final)
    final_rec = dict(zip(param_names, recs[-1])) if recs else {}
    summary = {
        "name": config.name,
        "command": "identify",
        "config": config.to_dict(),
        "t_final": t_final,
        "estimates": dict(zip(coef_names, map(float, final_alpha))),
        "true_coefficients": dict(zip(coef_names, map(float, final_model.alpha))),
        "coefficient_error": float(np.linalg.norm(final_alpha - final_model.alpha)),
        "reconstructed": final_rec,
        "true_parameters": truth,
        "final_cost": float(costs[-1]) if costs else math.nan,
        "elapsed_s": elapsed,
        "guards_passed": error is None,
        "error": error,
    }
    if out is not None:
        _write_summary(out, config.name, summary)
    summary["trajectory"] = {
        "t": np.asarray(times),
        "alpha": np.asarray(alphas),
        "J": np.asarray(costs),
        "params": np.asarray(recs),
        "coef_names": coef_names,
        "param_names": list(param_names),
    }
    return summary


def run_simulate(config: ExperimentConfig, out_dir, signal=None) -> dict:
    """Plant-only run writing ``<name>_trajectory.csv`` with ``t,u,y``."""
    plant = build_plant(config.plant)
    signal = signal if signal is not None else MultiSine(config.omega_n, config.n + 1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{config.name}_trajectory.csv"
    error = None
    try:
        t, u, y = simulate(plant, signal, config.t_end, config.dt, config.grid_points, config.decimation)
        write_trajectory(path, t, u, y)
    except PlantInstability as exc:
        error = {"type": type(exc).__name__, "t": exc.t, "message": str(exc)}
        with open(path, "a") as fh:
            fh.write(f"# error: {exc}\n")
    summary = {
        "name": config.name,
        "command": "simulate",
        "config": config.to_dict(),
        "trajectory": str(path),
        "guards_passed": error is None,
        "error": error,
    }
    _write_summary(out, config.name, summary)
    return summary


def run_sweep_rho(config: ExperimentConfig, out_dir=None, n_range=None,
                  kappa_cache: Optional[dict] = None, kappa_source: str = "data") -> list:
    """Bound ratio sweep over ``n``; writes ``<name>_sweep.csv``.

    ``kappa_source`` applies to plants with mixed unknowns, see
    :func:`adaptid.pe.report_for`.
    """
    plant = build_plant(config.plant)
    bounds = build_bounds(plant, config.bounds)
    if n_range is None:
        n_range = range(int(config.sweep["n_min"]), int(config.sweep["n_max"]) + 1)
    reports = pe.sweep(
        plant,
        bounds,
        list(n_range),
        model_factory=lambda n: build_model(plant, n),
        dt=config.dt,
        grid_points=config.grid_points,
        kappa_cache=kappa_cache,
        kappa_source=kappa_source,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pe.write_sweep_csv(out / f"{config.name}_sweep.csv", reports)
    return reports


def run_verify_pe(config: ExperimentConfig, out_dir=None) -> dict:
    """Excitation level and bound ratio at the configured ``n``."""
    plant = build_plant(config.plant)
    bounds = build_bounds(plant, config.bounds)
    model = build_model(plant, config.n)
    report = pe.report_for(plant, model, bounds, config.omega_n, dt=config.dt,
                           grid_points=config.grid_points)
    summary = {
        "name": config.name,
        "command": "verify-pe",
        "config": config.to_dict(),
        "report": dataclasses.asdict(report),
        "guards_passed": bool(report.kappa > 0 and math.isfinite(report.rho_u) and report.settled),
        "error": None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_summary(out, f"{config.name}_pe", summary)
    return summary


def run_reconstruct(kind: str, estimates_csv, out_path) -> int:
    """Re-run reconstruction on an estimates CSV; returns the invalid-row count."""
    invalid = 0
    names = PARAM_NAMES[kind]
    with open(estimates_csv) as src, open(out_path, "w", newline="") as dst:
        rows = csv.reader(line for line in src if not line.startswith("#"))
        header = next(rows)
        writer = csv.writer(dst)
        writer.writerow(["t", *names])
        for row in rows:
            values = dict(zip(header, map(float, row)))
            rec = reconstruct(kind, values)
            invalid += not rec.valid
            writer.writerow([repr(values["t"]), *(repr(float(rec.params[p])) for p in names)])
    return invalid
