"""Sliding-window gradient-flow estimator for the unknown coefficients.

The cost is ``J(t) = beta_hat^T M(t) beta_hat`` with the window Gram

    M(t) = int_{t - T}^{t} phi(s) phi(s)^T ds,     T = 2 pi / omega,

and the estimate follows ``alpha_hat' = -2 Gamma L M beta_hat`` where
``beta_hat`` is the full coefficient vector with the unknown entries taken
from ``alpha_hat`` and the known entries from the model.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .coeffs import CoeffModel

__all__ = ["EstimatorDivergence", "SlidingWindowEstimator", "residual_delta"]

DIVERGENCE_LIMIT = 1e6
RECOMPUTE_EVERY = 100_000
METHODS = ("exponential", "rk4")


class EstimatorDivergence(RuntimeError):
    def __init__(self, t: float, norm: float):
        self.t = t
        self.norm = norm
        super().__init__(f"estimate norm {norm:.3g} exceeded {DIVERGENCE_LIMIT:g} at t={t:.6g}")


@numba.njit(cache=True)
def _exp_update(M, idx, beta_known, alpha, gamma, dt):
    """Exact solution over ``dt`` of ``alpha' = -2 gamma (A alpha + c)``.

    ``A`` is the unknown block of ``M`` and ``c`` the unknown rows of
    ``M beta_known``; the ODE decouples in the eigenbasis of ``A``.
    """
    r = idx.shape[0]
    A = np.empty((r, r))
    c = np.zeros(r)
    for i in range(r):
        for j in range(r):
            A[i, j] = M[idx[i], idx[j]]
        for j in range(M.shape[0]):
            c[i] += M[idx[i], j] * beta_known[j]
    lam, V = np.linalg.eigh(A)
    y = V.T @ alpha
    d = V.T @ c
    for i in range(r):
        z = -2.0 * gamma * lam[i] * dt
        if abs(z) > 1e-8:
            phi1 = np.expm1(z) / z
        else:
            phi1 = 1.0 + 0.5 * z
        y[i] = y[i] * np.exp(z) - 2.0 * gamma * dt * phi1 * d[i]
    return V @ y


@numba.njit(cache=True)
def _push_update(S, M, old, new, first, dt):
    """Rank-one swap of the outer-product sum and the trapezoidal Gram."""
    m = S.shape[0]
    for i in range(m):
        for j in range(i, m):
            v = S[i, j] - old[i] * old[j] + new[i] * new[j]
            S[i, j] = v
            S[j, i] = v
            g = dt * (v - 0.5 * (first[i] * first[j] + new[i] * new[j]))
            M[i, j] = g
            M[j, i] = g


class SlidingWindowEstimator:
    """Estimator state: current ``alpha_hat``, regressor window and Gram.

    Parameters
    ----------
    model : CoeffModel
        Supplies the known coefficients and the unknown/known partition.
        Its unknown values are never read.
    omega : float
        Base frequency; the window length is ``2 pi / omega``.
    gamma : float
        Adaptation gain.
    alpha0 : array_like or float
        Initial estimate (a scalar fills every entry).
    dt : float
        Sample spacing of the regressor stream.
    method : {"exponential", "rk4"}
        How the update ODE is advanced over one step with ``M`` frozen.
        ``"exponential"`` integrates the frozen linear ODE exactly, which is
        unconditionally stable; ``"rk4"`` is the classical explicit scheme
        and needs ``2 Gamma lambda_max(M) dt < 2.78``.

    Notes
    -----
    The window holds ``ceil(T / dt) + 1`` samples, initialised to zero, so
    the regressor is treated as zero before ``t = 0``. The Gram is the
    trapezoidal rule over the buffer, maintained as a running sum of outer
    products and rebuilt from scratch every ``RECOMPUTE_EVERY`` steps.
    """

    def __init__(self, model: CoeffModel, omega: float, gamma: float, alpha0, dt: float,
                 method: str = "exponential"):
        if gamma <= 0:
            raise ValueError(f"adaptation gain must be positive, got {gamma}")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        self.model = model
        self.omega = float(omega)
        self.gamma = float(gamma)
        self.dt = float(dt)
        self.method = method
        self.window = 2.0 * math.pi / self.omega
        self.idx = model.unknown_index
        self.beta_known = model.known_part()
        r = model.r
        alpha0 = np.broadcast_to(np.asarray(alpha0, dtype=float), (r,)).copy()
        self.alpha = alpha0
        dim = 2 * model.n + 2
        self.size = int(math.ceil(self.window / self.dt - 1e-9)) + 1
        self._buf = np.zeros((self.size, dim))
        self._head = 0  # slot of the newest sample
        self._sum = np.zeros((dim, dim))
        self.steps = 0
        self.pushes = 0
        self.t = 0.0
        self.M = np.zeros((dim, dim))

    # -- window bookkeeping -------------------------------------------------

    @property
    def n_samples(self) -> int:
        return self.size

    def _newest(self):
        return self._buf[self._head]

    def _oldest(self):
        return self._buf[(self._head + 1) % self.size]

    def gram_from_scratch(self) -> np.ndarray:
        """Trapezoidal Gram recomputed directly from the buffer."""
        buf = self._buf
        M = buf.T @ buf
        first, last = self._oldest(), self._newest()
        M -= 0.5 * (np.outer(first, first) + np.outer(last, last))
        return self.dt * 0.5 * (M + M.T)

    def push(self, phi) -> None:
        """Append the regressor sample for the current time and update ``M``."""
        phi = np.asarray(phi, dtype=float)
        slot = (self._head + 1) % self.size
        old = self._buf[slot].copy()
        self._buf[slot] = phi
        self._head = slot
        self.pushes += 1
        if self.pushes % RECOMPUTE_EVERY == 0:
            self._sum = self._buf.T @ self._buf
            self.M = self.gram_from_scratch()
        else:
            _push_update(self._sum, self.M, old, phi, self._oldest(), self.dt)

    def history(self) -> np.ndarray:
        """Buffered samples ordered oldest to newest."""
        return np.roll(self._buf, -(self._head + 1), axis=0)

    # -- cost and update ----------------------------------------------------

    def beta_hat(self, alpha=None) -> np.ndarray:
        out = self.beta_known.copy()
        out[self.idx] = self.alpha if alpha is None else alpha
        return out

    def cost(self, alpha=None) -> float:
        b = self.beta_hat(alpha)
        return float(b @ self.M @ b)

    def gradient(self, alpha=None) -> np.ndarray:
        """``dJ/d alpha = 2 L M beta_hat``."""
        return 2.0 * (self.M @ self.beta_hat(alpha))[self.idx]

    def rate(self, alpha=None) -> np.ndarray:
        return -self.gamma * self.gradient(alpha)

    def advance(self) -> None:
        """Integrate the update law over one step with the current ``M``."""
        dt = self.dt
        if self.method == "rk4":
            a = self.alpha
            k1 = self.rate(a)
            k2 = self.rate(a + 0.5 * dt * k1)
            k3 = self.rate(a + 0.5 * dt * k2)
            k4 = self.rate(a + dt * k3)
            self.alpha = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            self.alpha = _exp_update(self.M, self.idx, self.beta_known, self.alpha, self.gamma, dt)
        self.steps += 1
        self.t = self.steps * dt
        norm = math.sqrt(float(self.alpha @ self.alpha))
        if not math.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            raise EstimatorDivergence(self.t, norm)

    def step(self, phi) -> None:
        """Push the sample at the current time, then advance to the next."""
        self.push(phi)
        self.advance()


def residual_delta(model: CoeffModel, phi) -> float:
    """``beta^T phi``: the truncation residual seen through the regressor."""
    return float(model.beta @ np.asarray(phi, dtype=float))
