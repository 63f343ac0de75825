"""Numerical checks of the persistency-of-excitation assumption.

For a truncation order ``n`` and base frequency ``omega`` the excitation
level ``kappa`` bounds the window Gram of the unknown regressor entries
from below. Together with the coefficient bound sequences it gives the
ratio

    rho_u = sum_{k>n} (p_u[k] + q_u[k]) (n+1)^{n+k+5/2} omega^{n+k} / (omega kappa),

which certifies a small asymptotic estimation error when it is small.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .coeffs import CoeffBounds, CoeffModel, WavePlant, closed_form_tf, series_tf, wave_tf
from .filters import E_gain
from .pipeline import RegressorStream

__all__ = [
    "PEReport",
    "lambda_min",
    "regressor_gains",
    "steady_state_gram",
    "bound_tf",
    "kappa_numerator_unknown",
    "kappa_denominator_unknown",
    "kappa_steady_state",
    "kappa_from_data",
    "data_kappa",
    "tail_sum",
    "rho_upper",
    "rho_simplified",
    "gain_sup",
    "report_for",
    "sweep",
    "write_sweep_csv",
]

METHODS = ("analytic-numerator", "analytic-denominator", "data-driven")
SWEEP_HEADER = ["n", "omega", "kappa", "tail", "rho_u", "method"]


@dataclass(frozen=True)
class PEReport:
    n: int
    omega: float
    kappa: float
    tail: float
    rho_u: float
    method: str
    settled: bool = True
    windows: int = field(default=0, compare=False)


def lambda_min(M) -> float:
    """Smallest eigenvalue of a symmetric matrix (symmetrized first)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.size == 0:
        raise ValueError("empty matrix")
    S = 0.5 * (M + M.T)
    return float(np.linalg.eigvalsh(S)[0])


def _re_outer_sum(H: np.ndarray) -> np.ndarray:
    """``Re sum_m conj(h_m) h_m^T`` for rows ``h_m`` of ``H``."""
    return np.real(H.conj().T @ H)


def regressor_gains(n: int, omega: float, G) -> np.ndarray:
    """Complex steady-state gains of the full regressor at ``m omega``, m=1..n+1.

    Row ``m - 1`` holds ``E(jm omega) [s^0..s^n, -G s^0..-G s^n]``.
    """
    freqs = omega * np.arange(1, n + 2)
    s = 1j * freqs
    S = s[:, None] ** np.arange(n + 1)[None, :]
    E = E_gain(n, omega, s)[:, None]
    g = np.asarray(G, dtype=complex).reshape(-1, 1)
    return np.hstack([E * S, -E * g * S])


def steady_state_gram(n: int, omega: float, G) -> np.ndarray:
    """Window Gram of the periodic steady-state regressor under the multisine.

    ``G`` holds the plant gains at ``m omega``. Over one window of length
    ``2 pi / omega`` the Gram equals ``(pi / omega) Re sum_m conj(h_m) h_m^T``.
    """
    return (math.pi / omega) * _re_outer_sum(regressor_gains(n, omega, G))


def kappa_numerator_unknown(model: CoeffModel, omega: float) -> float:
    """Excitation level when only numerator coefficients are unknown."""
    n = model.n
    if model.unknown_in_denominator:
        raise ValueError("model has unknown denominator coefficients; use the denominator form or data")
    idx = model.unknown_index
    if idx.size == 0:
        raise ValueError("model has no unknown coefficients")
    s = 1j * omega * np.arange(1, n + 2)
    H = E_gain(n, omega, s)[:, None] * s[:, None] ** idx[None, :]
    return (math.pi / (2.0 * omega)) * lambda_min(_re_outer_sum(H))


def _series_log_terms(log_fn: Callable[[int], float], start: int, step: int, log_x: float,
                      rtol: float = 1e-16, kmax: int = 4000) -> float:
    """``sum_j exp(log_fn(k) + k log_x)`` for ``k = start, start+step, ...``."""
    total = 0.0
    k = start
    misses = 0
    while k <= kmax:
        lt = log_fn(k)
        if lt == -math.inf:
            misses += 1
            if misses > 8 and total == 0.0:
                break
            k += step
            continue
        term = math.exp(lt + k * log_x)
        total += term
        if term < rtol * total and k > start + 4 * step:
            break
        k += step
    return total


def bound_tf(model: CoeffModel, bounds: CoeffBounds, omega) -> np.ndarray:
    """``G_u(j omega)``: known numerator over the dominating bound denominator.

    The denominator is ``sum q_u[2k] omega^{2k} + j sum q_u[2k+1] omega^{2k+1}``.
    """
    out = []
    for w in np.atleast_1d(np.asarray(omega, dtype=float)):
        s = 1j * w
        num = np.polyval(model.p[::-1], s)
        lw = math.log(w) if w > 0 else -math.inf
        if w > 0:
            re = _series_log_terms(bounds.log_q_u, 0, 2, lw)
            im = _series_log_terms(bounds.log_q_u, 1, 2, lw)
        else:
            re, im = bounds.q_u(0), 0.0
        out.append(num / complex(re, im))
    return np.asarray(out)


def kappa_denominator_unknown(model: CoeffModel, bounds: CoeffBounds, omega: float) -> float:
    """Excitation level when only denominator coefficients are unknown."""
    n = model.n
    if model.unknown_in_numerator:
        raise ValueError("model has unknown numerator coefficients; use the numerator form or data")
    idx = model.unknown_index - (n + 1)
    if idx.size == 0:
        raise ValueError("model has no unknown coefficients")
    freqs = omega * np.arange(1, n + 2)
    s = 1j * freqs
    Gu = bound_tf(model, bounds, freqs)
    H = (Gu * E_gain(n, omega, s))[:, None] * s[:, None] ** idx[None, :]
    return (math.pi / (2.0 * omega)) * lambda_min(_re_outer_sum(H))


def kappa_steady_state(model: CoeffModel, omega: float, G) -> float:
    """``lambda_min / 2`` of the exact steady-state Gram restricted to unknowns."""
    M = steady_state_gram(model.n, omega, G)
    idx = model.unknown_index
    return 0.5 * lambda_min(M[np.ix_(idx, idx)])


def kappa_from_data(phi_series, dt: float, omega: float, unknown_index=None,
                    rtol: float = 0.01) -> tuple[float, bool]:
    """Data-driven excitation level from regressor samples spaced ``dt`` apart.

    The samples are cut into consecutive windows of length ``2 pi / omega``
    (adjacent windows share their boundary sample) and the trapezoidal Gram
    of each is formed. The result is half the smallest eigenvalue of the
    last complete window; ``settled`` is true once that eigenvalue changed
    by less than ``rtol`` relative to the previous window.
    """
    phi = np.asarray(phi_series, dtype=float)
    if phi.ndim != 2:
        raise ValueError("phi_series must be a 2-D array of samples")
    if unknown_index is not None:
        phi = phi[:, np.asarray(unknown_index)]
    per = int(math.ceil(2.0 * math.pi / omega / dt - 1e-9))
    n_win = (phi.shape[0] - 1) // per
    if n_win < 1:
        raise ValueError("need at least one full window of samples")
    lams = []
    for w in range(n_win):
        block = phi[w * per:(w + 1) * per + 1]
        M = block.T @ block - 0.5 * (np.outer(block[0], block[0]) + np.outer(block[-1], block[-1]))
        lams.append(lambda_min(dt * M))
    return 0.5 * max(lams[-1], 0.0), _settled(lams, rtol)


def _settled(lams, rtol) -> bool:
    if len(lams) < 2:
        return False
    prev, last = lams[-2], lams[-1]
    if last == prev:
        return True
    return abs(last - prev) < rtol * max(abs(last), abs(prev))


def data_kappa(plant, model: CoeffModel, omega: float, dt: float = 1e-3,
               grid_points: Optional[int] = None, horizon_windows: int = 20,
               rtol: float = 0.01, min_windows: int = 3) -> tuple[float, bool, int]:
    """Simulate the plant and filters and evaluate the data-driven level.

    Window Grams are accumulated on the fly; the run stops as soon as the
    settling rule holds (after at least ``min_windows`` windows) or after
    ``horizon_windows`` windows. Returns ``(kappa, settled, windows)``.
    """
    idx = model.unknown_index
    stream = RegressorStream(plant, model.n, omega, dt, grid_points=grid_points)
    per = int(math.ceil(2.0 * math.pi / omega / dt - 1e-9))
    r = idx.size
    lams: list[float] = []
    acc = np.zeros((r, r))
    first = stream.phi()[idx]
    acc += 0.5 * np.outer(first, first)
    j = 0
    while len(lams) < horizon_windows:
        stream.advance()
        x = stream.phi()[idx]
        j += 1
        if j < per:
            acc += np.outer(x, x)
            continue
        half = 0.5 * np.outer(x, x)
        lams.append(lambda_min(dt * (acc + half)))
        acc = half.copy()
        j = 0
        if len(lams) >= min_windows and _settled(lams, rtol):
            return 0.5 * max(lams[-1], 0.0), True, len(lams)
    return 0.5 * max(lams[-1], 0.0), False, len(lams)


def _log_tail_term(n: int, omega: float, bounds: CoeffBounds, k: int) -> float:
    """``log`` of ``(p_u[k]+q_u[k]) (n+1)^{n+k+5/2} omega^{n+k}``."""
    lp, lq = bounds.log_p_u(k), bounds.log_q_u(k)
    if max(lp, lq) == -math.inf:
        return -math.inf
    lb = float(np.logaddexp(lp, lq))
    return lb + (n + k + 2.5) * math.log(n + 1) + (n + k) * math.log(omega)


def tail_sum(n: int, omega: float, bounds: CoeffBounds, mode: str = "log",
             rtol: float = 1e-16, kmax_extra: int = 4000) -> float:
    """Tail ``sum_{k>n}(p_u[k]+q_u[k])(n+1)^{n+k+5/2} omega^{n+k}``.

    ``mode="log"`` forms each term in the log domain; ``mode="direct"``
    multiplies the raw floating factors and may overflow for large ``n``.
    Summation stops once a term falls below ``rtol`` of the partial sum.
    If the first terms all vanish (finite-order plant) the tail is zero.
    """
    if mode not in ("log", "direct"):
        raise ValueError(f"mode must be 'log' or 'direct', got {mode!r}")
    total = 0.0
    zeros = 0
    for k in range(n + 1, n + 1 + kmax_extra):
        lt = _log_tail_term(n, omega, bounds, k)
        if lt == -math.inf:
            zeros += 1
            if total == 0.0 and zeros >= 8:
                break
            continue
        if mode == "log":
            term = math.exp(lt)
        else:
            term = (bounds.p_u(k) + bounds.q_u(k)) * float(n + 1) ** (n + k + 2.5) * omega ** (n + k)
        total += term
        if term < rtol * total:
            break
    return total


def rho_upper(n: int, omega: float, kappa: float, bounds: CoeffBounds, mode: str = "log") -> float:
    if not kappa > 0:
        raise ValueError(f"kappa must be positive (got {kappa}); excitation fails at n={n}")
    return tail_sum(n, omega, bounds, mode) / (omega * kappa)


def rho_simplified(n: int, kappa: float, bounds: CoeffBounds, rtol: float = 1e-16) -> float:
    """``(n+1)^{7/2} sum_{k>n}(p_u[k]+q_u[k]) / kappa``, valid at ``omega = 1/(n+1)``."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    total = 0.0
    zeros = 0
    for k in range(n + 1, n + 4001):
        term = bounds.p_u(k) + bounds.q_u(k)
        if term == 0.0:
            zeros += 1
            if total == 0.0 and zeros >= 8:
                break
            continue
        total += term
        if term < rtol * total:
            break
    return float(n + 1) ** 3.5 * total / kappa


def true_tf(plant, model: CoeffModel, omega) -> np.ndarray:
    """Plant gains at ``omega``: closed form where available, else the series."""
    if isinstance(plant, WavePlant):
        return series_tf(model, 1j * np.asarray(omega, dtype=float))
    return closed_form_tf(plant, omega)


def gain_sup(plant, lo: float = 1e-3, hi: float = 1e3,
             points: int = 2001) -> float:
    """``1 + sup |G(j omega)|`` sampled at 0 and on a log grid over ``[lo, hi]``."""
    freqs = np.concatenate([[0.0], np.geomspace(lo, hi, points)])
    if isinstance(plant, WavePlant):
        # the truncated series is meaningless at high frequency; integrate instead
        G = wave_tf(plant, 1j * freqs, grid=max(2000, int(hi * 4)))
    else:
        G = closed_form_tf(plant, freqs)
    return 1.0 + float(np.max(np.abs(G)))


def pe_method(model: CoeffModel) -> str:
    if model.unknown_in_numerator and model.unknown_in_denominator:
        return "data-driven"
    if model.unknown_in_numerator:
        return "analytic-numerator"
    return "analytic-denominator"


def report_for(plant, model: CoeffModel, bounds: CoeffBounds, omega: float, dt: float = 1e-3,
               grid_points: Optional[int] = None, kappa: Optional[float] = None,
               kappa_source: str = "data", horizon_windows: int = 20) -> PEReport:
    """Excitation level, tail and ratio at one ``n``.

    For mixed unknowns ``kappa_source`` picks between a simulation
    (``"data"``) and the exact steady-state Gram of the true plant
    (``"steady-state"``). A precomputed ``kappa`` skips both.
    """
    n = model.n
    method = pe_method(model)
    settled, windows = True, 0
    if kappa is None:
        if method == "analytic-numerator":
            kappa = kappa_numerator_unknown(model, omega)
        elif method == "analytic-denominator":
            kappa = kappa_denominator_unknown(model, bounds, omega)
        elif kappa_source == "steady-state":
            G = true_tf(plant, model, omega * np.arange(1, n + 2))
            kappa = kappa_steady_state(model, omega, G)
        elif kappa_source == "data":
            kappa, settled, windows = data_kappa(plant, model, omega, dt, grid_points,
                                                 horizon_windows=horizon_windows)
        else:
            raise ValueError(f"unknown kappa source {kappa_source!r}")
    tail = tail_sum(n, omega, bounds)
    rho = tail / (omega * kappa) if kappa > 0 else math.inf
    return PEReport(n, omega, float(kappa), tail, rho, method, settled, windows)


def sweep(plant, bounds: CoeffBounds, n_range: Iterable[int], model_factory: Callable[[int], CoeffModel],
          omega_rule: Callable[[int], float] = lambda n: 1.0 / (n + 1), dt: float = 1e-3,
          grid_points: Optional[int] = None, kappa_cache: Optional[dict] = None,
          kappa_source: str = "data") -> list[PEReport]:
    """One :class:`PEReport` per ``n``.

    ``kappa_cache`` (keyed by ``n``) lets two sweeps of the same plant with
    different bound boxes share the data-driven levels, which do not depend
    on the bounds.
    """
    reports = []
    for n in n_range:
        model = model_factory(n)
        omega = omega_rule(n)
        cached = None
        if kappa_cache is not None and pe_method(model) == "data-driven":
            cached = kappa_cache.get(n)
        rep = report_for(plant, model, bounds, omega, dt, grid_points,
                         kappa=cached[0] if cached else None, kappa_source=kappa_source)
        if cached:
            rep = PEReport(rep.n, rep.omega, rep.kappa, rep.tail, rep.rho_u, rep.method, cached[1], cached[2])
        elif kappa_cache is not None and rep.method == "data-driven":
            kappa_cache[n] = (rep.kappa, rep.settled, rep.windows)
        reports.append(rep)
    return reports


def write_sweep_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in reports:
            w.writerow([r.n, repr(r.omega), repr(r.kappa), repr(r.tail), repr(r.rho_u), r.method])
