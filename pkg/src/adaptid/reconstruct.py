"""Recover physical parameters from (estimated) transfer-function coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coeffs import SERIES_RTOL, _xsinhx, heat_q_series

__all__ = [
    "ReconstructionError",
    "ReconstructionResult",
    "bisect_increasing",
    "reconstruct_delay",
    "reconstruct_heat",
    "reconstruct_wave",
    "reconstruct",
    "PARAM_NAMES",
]

PARAM_NAMES = {
    "delay": ("K", "tau", "a", "b"),
    "heat": ("theta", "lam"),
    "wave": ("a", "b"),
}


class ReconstructionError(ValueError):
    """Coefficients fall outside the invertible region of the plant map."""


@dataclass(frozen=True)
class ReconstructionResult:
    params: dict
    residual: float = 0.0
    iterations: int = 0
    valid: bool = field(default=True)

    @classmethod
    def invalid(cls, names) -> "ReconstructionResult":
        return cls({k: math.nan for k in names}, math.nan, 0, False)


def bisect_increasing(f: Callable[[float], float], target: float, lo: float = 1e-9,
                      hi: float = 1.0, hi_cap: float = 1e6, tol: float = 1e-12,
                      max_iter: int = 400, check_points: int = 64,
                      floor: float | None = None) -> tuple[float, int]:
    """Solve ``f(x) = target`` for increasing ``f`` on ``[lo, hi_cap]``.

    The upper end is doubled until it brackets the root. Before bisecting,
    ``f`` is sampled on the bracket and any decrease aborts the solve. If
    the root lies below ``lo`` and ``floor`` is given, the bracket starts
    at ``floor`` instead.
    Returns the root and the number of bisection iterations.
    """
    g_lo = f(lo) - target
    if g_lo > 0 and floor is not None and f(floor) - target <= 0:
        lo, g_lo = floor, f(floor) - target
    if g_lo > 0:
        raise ReconstructionError(f"target {target:g} is below f({lo:g}) = {f(lo):g}")
    g_hi = f(hi) - target
    while g_hi < 0:
        if hi >= hi_cap:
            raise ReconstructionError(f"no sign change on [{lo:g}, {hi_cap:g}] for target {target:g}")
        hi = min(2.0 * hi, hi_cap)
        g_hi = f(hi) - target
    xs = np.geomspace(max(lo, 1e-12 * hi), hi, check_points)
    vals = np.array([f(x) for x in xs])
    if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        raise ReconstructionError("target function is not monotone on the bracket")
    it = 0
    while hi - lo > tol * max(1.0, abs(hi)) and it < max_iter:
        mid = 0.5 * (lo + hi)
        g = f(mid) - target
        if g == 0.0:
            lo = hi = mid
            break
        if g < 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def reconstruct_delay(p0: float, p1: float, q0: float, q1: float) -> ReconstructionResult:
    """``p0 = K``, ``p1 = -K tau``, ``q0 = b``, ``q1 = a``."""
    if abs(p0) <= 1e-9:
        raise ReconstructionError("p0 is too close to zero to recover K")
    K = float(p0)
    tau = -float(p1) / K
    params = {"K": K, "tau": tau, "a": float(q1), "b": float(q0)}
    residual = abs(-K * tau - p1)
    return ReconstructionResult(params, residual, 0)


def reconstruct_heat(q0: float, q1: float, series_tol: float = SERIES_RTOL) -> ReconstructionResult:
    """Invert ``q0 = sqrt(r) sinh sqrt(r)`` for ``r = lam / theta``, then use ``q1``."""
    if not (q0 > 0 and q1 > 0):
        raise ReconstructionError(f"heat coefficients must be positive, got q0={q0}, q1={q1}")
    r, it = bisect_increasing(_xsinhx, q0, hi_cap=1e6, floor=0.0)
    theta = heat_q_series(1, r, 1.0, series_tol) / q1
    lam = r * theta
    residual = max(abs(_xsinhx(r) - q0), abs(heat_q_series(1, r, 1.0 / theta, series_tol) - q1))
    return ReconstructionResult({"theta": float(theta), "lam": float(lam)}, float(residual), it)


def _wave_ratio(x: float) -> float:
    # (a/b) log((a+b)/a) with x = a/b, written with log1p for small 1/x
    return x * math.log1p(1.0 / x)


def reconstruct_wave(q1: float, q2: float) -> ReconstructionResult:
    """Linear ``EI = a + b xi`` from ``q1 = (a/b) ln((a+b)/a)``, ``q2 = (1 - q1)/b``."""
    if not (0.0 < q1 < 1.0) or not q2 > 0:
        raise ReconstructionError(f"need 0 < q1 < 1 and q2 > 0, got q1={q1}, q2={q2}")
    b = (1.0 - q1) / q2
    # solve for the ratio x = a/b; the map is increasing from 0 to 1
    x, it = bisect_increasing(_wave_ratio, q1, hi_cap=1e12)
    a = x * b
    residual = abs(_wave_ratio(x) - q1)
    return ReconstructionResult({"a": float(a), "b": float(b)}, float(residual), it)


def reconstruct(kind: str, coeffs: dict) -> ReconstructionResult:
    """Dispatch on plant kind using named coefficients; invalid input gives NaNs."""
    try:
        if kind == "delay":
            return reconstruct_delay(coeffs["p0"], coeffs["p1"], coeffs["q0"], coeffs["q1"])
        if kind == "heat":
            return reconstruct_heat(coeffs["q0"], coeffs["q1"])
        if kind == "wave":
            return reconstruct_wave(coeffs["q1"], coeffs["q2"])
    except ReconstructionError:
        return ReconstructionResult.invalid(PARAM_NAMES[kind])
    raise ValueError(f"unknown plant kind {kind!r}")
