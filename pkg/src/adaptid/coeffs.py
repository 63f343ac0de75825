"""Transfer-function coefficients of the supported plant families.

A plant transfer function is represented as a ratio of two power series

    G(s) = (p_0 + p_1 s + p_2 s^2 + ...) / (q_0 + q_1 s + q_2 s^2 + ...)

and a :class:`CoeffModel` keeps the first ``n + 1`` coefficients of each
series together with a mask of the coefficients that are known a priori.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Schedule",
    "LinearEI",
    "TabulatedEI",
    "DelayPlant",
    "HeatPlant",
    "WavePlant",
    "PlantSpec",
    "CoeffModel",
    "CoeffBounds",
    "delay_coeffs",
    "heat_coeffs",
    "heat_q_series",
    "heat_log_series",
    "wave_coeffs_peano",
    "bounds_for",
    "closed_form_tf",
    "series_tf",
    "wave_tf",
]

SERIES_RTOL = 1e-14


# ---------------------------------------------------------------------------
# plant descriptions


@dataclass(frozen=True)
class Schedule:
    """Piecewise-affine function of time.

    ``pieces`` is a sequence of ``(t_start, offset, slope)``; the value at
    time ``t`` is ``offset + slope * t`` for the last piece whose
    ``t_start`` is strictly below ``t`` (the first piece also covers
    ``t <= t_start``).
    """

    pieces: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("schedule needs at least one piece")
        starts = [p[0] for p in self.pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("schedule pieces must have increasing start times")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(((0.0, float(value), 0.0),))

    def __call__(self, t: float) -> float:
        piece = self.pieces[0]
        for p in self.pieces[1:]:
            if t > p[0]:
                piece = p
            else:
                break
        return piece[1] + piece[2] * t

    @property
    def is_constant(self) -> bool:
        return len(self.pieces) == 1 and self.pieces[0][2] == 0.0


def _as_schedule(value) -> Schedule:
    if isinstance(value, Schedule):
        return value
    return Schedule.constant(float(value))


@dataclass(frozen=True)
class LinearEI:
    """Elastic rigidity ``EI(xi) = a + b * xi``."""

    a: float
    b: float

    def __call__(self, xi):
        return self.a + self.b * np.asarray(xi, dtype=float)


@dataclass(frozen=True)
class TabulatedEI:
    """Elastic rigidity sampled on ``xi`` and linearly interpolated."""

    xi: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.xi) != len(self.values) or len(self.xi) < 2:
            raise ValueError("tabulated EI needs matching xi/values with >= 2 samples")
        if self.xi[0] > 0.0 or self.xi[-1] < 1.0:
            raise ValueError("tabulated EI must cover [0, 1]")

    def __call__(self, xi):
        return np.interp(np.asarray(xi, dtype=float), self.xi, self.values)


@dataclass(frozen=True)
class DelayPlant:
    """Second-order lag with output delay, ``G(s) = K e^{-tau s} / (s^2 + a s + b)``."""

    K: float
    a: float
    b: float
    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"delay must be nonnegative, got tau={self.tau}")


@dataclass(frozen=True)
class HeatPlant:
    """Rod ``T_t = theta T_xx - lam T`` with flux input at 1 and output T(0)."""

    theta: Union[float, Schedule]
    lam: Union[float, Schedule]

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_schedule(self.theta))
        object.__setattr__(self, "lam", _as_schedule(self.lam))
        for name in ("theta", "lam"):
            sched = getattr(self, name)
            for t0, off, slope in sched.pieces:
                # affine pieces: positivity at the piece start and, if the
                # slope is negative, it is the caller's problem afterwards
                if off + slope * max(t0, 0.0) <= 0:
                    raise ValueError(f"heat parameter {name} must be positive")

    def params_at(self, t: float = 0.0) -> tuple[float, float]:
        return self.theta(t), self.lam(t)


@dataclass(frozen=True)
class WavePlant:
    """String ``w_tt = (EI w_x)_x`` with ``w_x(0) = w_t(0)``, ``w(1) = u``, output ``w(0)``."""

    ei: Union[LinearEI, TabulatedEI]

    def __post_init__(self):
        grid = np.linspace(0.0, 1.0, 1001)
        if np.any(self.ei(grid) <= 0):
            raise ValueError("EI must be positive on [0, 1]")


PlantSpec = Union[DelayPlant, HeatPlant, WavePlant]


# ---------------------------------------------------------------------------
# coefficient containers


@dataclass(frozen=True)
class CoeffModel:
    """Truncated numerator/denominator coefficients with a known-entry mask.

    The full coefficient vector is ``beta = [p_0..p_n, q_0..q_n]``; the
    unknown sub-vector ``alpha`` keeps the unmasked entries in that order.
    """

    n: int
    p: np.ndarray
    q: np.ndarray
    known_mask: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        mask = np.asarray(self.known_mask, dtype=bool)
        if p.shape != (self.n + 1,) or q.shape != (self.n + 1,):
            raise ValueError(f"p and q must have n+1={self.n + 1} entries")
        if mask.shape != (2 * self.n + 2,):
            raise ValueError(f"known_mask must have 2n+2={2 * self.n + 2} entries")
        for name, arr in (("p", p), ("q", q), ("known_mask", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    @property
    def unknown_index(self) -> np.ndarray:
        return np.flatnonzero(~self.known_mask)

    @property
    def r(self) -> int:
        return int(np.count_nonzero(~self.known_mask))

    @property
    def alpha(self) -> np.ndarray:
        return self.select(self.beta)

    @property
    def selection(self) -> np.ndarray:
        """Matrix ``L`` of shape ``(r, 2n+2)`` with ``alpha = L @ beta``."""
        L = np.zeros((self.r, 2 * self.n + 2))
        L[np.arange(self.r), self.unknown_index] = 1.0
        return L

    @property
    def names(self) -> list[str]:
        return [f"p{k}" for k in range(self.n + 1)] + [f"q{k}" for k in range(self.n + 1)]

    @property
    def unknown_names(self) -> list[str]:
        names = self.names
        return [names[i] for i in self.unknown_index]

    @property
    def unknown_in_numerator(self) -> bool:
        return bool(np.any(~self.known_mask[: self.n + 1]))

    @property
    def unknown_in_denominator(self) -> bool:
        return bool(np.any(~self.known_mask[self.n + 1 :]))

    def select(self, beta) -> np.ndarray:
        return np.asarray(beta, dtype=float)[self.unknown_index]

    def embed(self, alpha, beta=None) -> np.ndarray:
        """Full vector with unknown entries replaced by ``alpha``.

        Known entries come from ``beta`` (default: this model's values).
        """
        out = np.array(self.beta if beta is None else beta, dtype=float)
        out[self.unknown_index] = alpha
        return out

    def known_part(self) -> np.ndarray:
        """``beta`` with the unknown entries zeroed."""
        out = self.beta
        out[self.unknown_index] = 0.0
        return out

    def with_mask(self, known_mask) -> "CoeffModel":
        return CoeffModel(self.n, self.p, self.q, np.asarray(known_mask, dtype=bool))


@dataclass(frozen=True)
class CoeffBounds:
    """Known upper bounds ``p_u[k]``, ``q_u[k]`` on coefficient magnitudes.

    The sequences are infinite, so they are stored as functions returning
    ``log`` of the bound (``-inf`` for a zero bound). ``c0`` and ``c`` give
    the envelope ``c0 * c**k / k!`` dominating both sequences.
    """

    log_p_u: Callable[[int], float]
    log_q_u: Callable[[int], float]
    c0: float
    c: float
    label: str = field(default="", compare=False)

    def p_u(self, k: int) -> float:
        return math.exp(self.log_p_u(k))

    def q_u(self, k: int) -> float:
        return math.exp(self.log_q_u(k))

    def p_u_array(self, kmax: int) -> np.ndarray:
        return np.array([self.p_u(k) for k in range(kmax + 1)])

    def q_u_array(self, kmax: int) -> np.ndarray:
        return np.array([self.q_u(k) for k in range(kmax + 1)])

    def log_envelope(self, k: int) -> float:
        return math.log(self.c0) + k * math.log(self.c) - math.lgamma(k + 1)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# ---------------------------------------------------------------------------
# per-plant coefficients


def delay_coeffs(K: float, a: float, b: float, tau: float, n: int) -> CoeffModel:
    """Coefficients of ``K e^{-tau s} / (s^2 + a s + b)``.

    All ``p_k`` and ``q_0 = b``, ``q_1 = a`` are unknown; ``q_2 = 1`` and the
    vanishing ``q_k`` (k >= 3) are known.
    """
    if n < 2:
        raise ValueError(f"delay model needs n >= 2 for its second-order denominator, got {n}")
    k = np.arange(n + 1)
    p = np.array([K * (-tau) ** j / math.factorial(j) for j in k], dtype=float)
    q = np.zeros(n + 1)
    q[0], q[1], q[2] = b, a, 1.0
    mask = np.zeros(2 * n + 2, dtype=bool)
    mask[n + 1 + 2 :] = True
    return CoeffModel(n, p, q, mask)


def heat_log_series(k: int, ratio: float, tol: float = SERIES_RTOL) -> float:
    """``log sum_i ratio**i * C(k+i, k) / (2k+2i-1)!`` for ``k >= 1``.

    Accumulated with log-sum-exp so very large ``k`` cannot underflow. The
    terms rise then fall; summation stops on the falling side once a term
    drops below ``tol`` relative to the partial sum.
    """
    if k < 1:
        raise ValueError("series form only holds for k >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    log_r = _log(ratio)
    log_tol = math.log(tol)
    log_total = -math.inf
    prev = -math.inf
    i = 0
    while True:
        log_term = math.lgamma(k + i + 1) - math.lgamma(k + 1) - math.lgamma(i + 1) - math.lgamma(2 * k + 2 * i)
        if i > 0:
            if log_r == -math.inf:
                break
            log_term += i * log_r
        log_total = np.logaddexp(log_total, log_term)
        if log_term < prev and log_term < log_total + log_tol:
            break
        prev = log_term
        i += 1
    return float(log_total)


def heat_q_series(k: int, ratio: float, scale: float = 1.0, tol: float = SERIES_RTOL) -> float:
    """``scale**k * sum_i ratio**i * C(k+i, k) / (2k+2i-1)!`` for ``k >= 1``.

    With ``scale = 1/theta`` and ``ratio = lam/theta`` this is the heat
    plant's ``q_k``. See :func:`heat_log_series` for the truncation rule.
    """
    return math.exp(heat_log_series(k, ratio, tol) + k * math.log(scale))


def _xsinhx(r: float) -> float:
    root = math.sqrt(r)
    return root * math.sinh(root)


def heat_coeffs(theta: float, lam: float, n: int, tol: float = SERIES_RTOL) -> CoeffModel:
    """Coefficients of ``1 / (sqrt((s+lam)/theta) sinh sqrt((s+lam)/theta))``.

    ``p_0 = 1`` and every other ``p_k`` vanishes; all ``q_k`` are unknown.
    """
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = lam / theta
    p = np.zeros(n + 1)
    p[0] = 1.0
    q = np.empty(n + 1)
    q[0] = _xsinhx(r)
    for k in range(1, n + 1):
        q[k] = heat_q_series(k, r, 1.0 / theta, tol)
    mask = np.zeros(2 * n + 2, dtype=bool)
    mask[: n + 1] = True
    return CoeffModel(n, p, q, mask)


def wave_coeffs_peano(ei, n: int, grid: int = 1000, known_q0: bool = False) -> CoeffModel:
    """Coefficients of the string plant via Peano-Baker propagation.

    The transition ``z' = [[0, 1/EI], [s^2, 0]] z`` is integrated from
    ``xi = 0`` (``z = [1, s EI(0)]``) to ``xi = 1`` with ``z`` stored as
    polynomials in ``s`` truncated at degree ``n + 1``; each polynomial
    coefficient obeys a linear ODE in ``xi``, advanced by classical RK4 on
    ``grid`` uniform intervals. ``q_k`` is the ``s^k`` coefficient of the
    first component at ``xi = 1``.

    ``p_0 = 1`` and the remaining ``p_k`` vanish; all are known. ``q_0 = 1``
    is known only when ``known_q0`` is set.
    """
    if isinstance(ei, WavePlant):
        ei = ei.ei
    if grid < 100:
        raise ValueError(f"grid must be >= 100, got {grid}")
    xi = np.linspace(0.0, 1.0, 2 * grid + 1)
    inv = 1.0 / np.asarray(ei(xi), dtype=float)
    if not np.all(np.isfinite(inv)) or np.any(inv <= 0):
        raise ValueError("EI must be positive on the propagation grid")
    deg = n + 2
    z1 = np.zeros(deg)
    z2 = np.zeros(deg)
    z1[0] = 1.0
    z2[1] = float(ei(0.0))
    h = 1.0 / grid

    def rhs(z1, z2, inv_ei):
        d1 = z2 * inv_ei
        d2 = np.zeros_like(z2)
        d2[2:] = z1[:-2]
        return d1, d2

    for j in range(grid):
        i0, im, i1 = inv[2 * j], inv[2 * j + 1], inv[2 * j + 2]
        a1, b1 = rhs(z1, z2, i0)
        a2, b2 = rhs(z1 + 0.5 * h * a1, z2 + 0.5 * h * b1, im)
        a3, b3 = rhs(z1 + 0.5 * h * a2, z2 + 0.5 * h * b2, im)
        a4, b4 = rhs(z1 + h * a3, z2 + h * b3, i1)
        z1 = z1 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        z2 = z2 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)

    q = z1[: n + 1].copy()
    p = np.zeros(n + 1)
    p[0] = 1.0
    mask = np.zeros(2 * n + 2, dtype=bool)
    mask[: n + 1] = True
    mask[n + 1] = known_q0
    return CoeffModel(n, p, q, mask)


# ---------------------------------------------------------------------------
# bounds


def bounds_for(plant: PlantSpec, box: dict) -> CoeffBounds:
    """Bound sequences ``p_u``, ``q_u`` valid for every plant in ``box``.

    ``box`` keys per plant type:

    * delay: ``K``, ``a``, ``b``, ``tau`` (magnitude caps)
    * heat: ``theta_min``, ``lam_max``
    * wave: ``ei0_max`` (cap on EI(0)), ``ei_min`` (floor on EI)
    """
    if isinstance(plant, DelayPlant):
        K, a, b, tau = (float(box[k]) for k in ("K", "a", "b", "tau"))
        if min(K, a, b, tau) < 0:
            raise ValueError("delay bounds must be nonnegative")
        q_u = {0: b, 1: a, 2: 1.0}
        log_tau = _log(tau)

        def log_p_u(k):
            if k == 0:
                return _log(K)
            return _log(K) + k * log_tau - math.lgamma(k + 1)

        def log_q_u(k):
            return _log(q_u.get(k, 0.0))

        c0 = max(K, a, b, 1.0)
        c = max(c0, tau, math.sqrt(2.0))
        return CoeffBounds(log_p_u, log_q_u, c0, c, label="delay")

    if isinstance(plant, HeatPlant):
        theta_min, lam_max = float(box["theta_min"]), float(box["lam_max"])
        if theta_min <= 0:
            raise ValueError(f"theta floor must be positive, got {theta_min}")
        if lam_max < 0:
            raise ValueError(f"lambda cap must be nonnegative, got {lam_max}")
        ratio = lam_max / theta_min
        q0 = _xsinhx(ratio)
        cache: dict[int, float] = {}

        def log_q_u(k):
            if k == 0:
                return _log(q0)
            if k not in cache:
                # series evaluated at scale 1 and the scale applied in logs,
                # so large k cannot overflow
                cache[k] = heat_log_series(k, ratio) + k * math.log(max(1.0 / theta_min, 1.0))
            return cache[k]

        def log_p_u(k):
            return 0.0 if k == 0 else -math.inf

        return CoeffBounds(log_p_u, log_q_u, math.exp(ratio), max(1.0 / theta_min, 1.0), label="heat")

    if isinstance(plant, WavePlant):
        ei0_max, ei_min = float(box["ei0_max"]), float(box["ei_min"])
        if ei_min <= 0 or ei0_max < ei_min:
            raise ValueError("wave bounds need 0 < ei_min <= ei0_max")
        log_inv = -math.log(ei_min)

        def log_q_u(k):
            if k == 0:
                return 0.0
            val = 0.5 * k * log_inv - math.lgamma(k + 1)
            if k % 2:
                val += math.log(ei0_max) - 0.5 * math.log(ei_min)
            return val

        def log_p_u(k):
            return 0.0 if k == 0 else -math.inf

        c = max(1.0, 1.0 / math.sqrt(ei_min))
        c0 = max(2.0, ei0_max, ei0_max / math.sqrt(ei_min))
        return CoeffBounds(log_p_u, log_q_u, c0, c, label="wave")

    raise TypeError(f"unsupported plant type {type(plant).__name__}")


# ---------------------------------------------------------------------------
# transfer functions


def closed_form_tf(plant: PlantSpec, omega, t: float = 0.0):
    """Exact ``G(j omega)`` for the delay and heat plants.

    Heat parameters are evaluated at time ``t``. The string plant has no
    closed form; use :func:`series_tf` with its Peano-Baker coefficients.
    """
    s = 1j * np.asarray(omega, dtype=float)
    if isinstance(plant, DelayPlant):
        return plant.K * np.exp(-plant.tau * s) / (s * s + plant.a * s + plant.b)
    if isinstance(plant, HeatPlant):
        theta, lam = plant.params_at(t)
        root = np.sqrt((s + lam) / theta)
        with np.errstate(invalid="ignore", divide="ignore"):
            return 1.0 / (root * np.sinh(root))
    if isinstance(plant, WavePlant):
        raise NotImplementedError("string plant has no closed-form transfer function; use series_tf")
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


def wave_tf(ei, s, grid: int = 2000) -> np.ndarray:
    """String plant ``G(s) = 1 / z_1(1; s)`` by RK4 across the span.

    Same transition as :func:`wave_coeffs_peano` but evaluated at complex
    ``s`` directly, so no truncation in ``s`` is involved.
    """
    if isinstance(ei, WavePlant):
        ei = ei.ei
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    xi = np.linspace(0.0, 1.0, 2 * grid + 1)
    inv = 1.0 / np.asarray(ei(xi), dtype=float)
    h = 1.0 / grid
    s2 = s * s
    z1 = np.ones_like(s)
    z2 = s * float(ei(0.0))
    for j in range(grid):
        i0, im, i1 = inv[2 * j], inv[2 * j + 1], inv[2 * j + 2]
        a1, b1 = z2 * i0, s2 * z1
        a2, b2 = (z2 + 0.5 * h * b1) * im, s2 * (z1 + 0.5 * h * a1)
        a3, b3 = (z2 + 0.5 * h * b2) * im, s2 * (z1 + 0.5 * h * a2)
        a4, b4 = (z2 + h * b3) * i1, s2 * (z1 + h * a3)
        z1 = z1 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        z2 = z2 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
    return 1.0 / z1


def series_tf(model: CoeffModel, s) -> np.ndarray:
    """Truncated ratio ``sum p_k s^k / sum q_k s^k``."""
    s = np.asarray(s, dtype=complex)
    num = np.polyval(model.p[::-1], s)
    den = np.polyval(model.q[::-1], s)
    return num / den
