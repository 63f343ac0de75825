"""Cascade realization of the regressor filter bank.

The bank has transfer matrix ``a^{n+1} [1, s, ..., s^n]^T / (s + a)^{n+1}``
with ``a = (n+1) * omega``. It is realized as ``n + 1`` identical
first-order lags in series; the output ``v`` and its first ``n``
derivatives are exact linear combinations of the lag states.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

__all__ = ["FilterBank", "E_gain", "derivative_matrix", "regressor"]


def E_gain(n: int, omega: float, s):
    """Scalar low-pass factor ``(a / (s + a))^{n+1}``, ``a = (n+1) omega``."""
    a = (n + 1) * omega
    return (a / (np.asarray(s) + a)) ** (n + 1)


def derivative_matrix(n: int, a: float) -> np.ndarray:
    """Rows map lag states ``x_1..x_{n+1}`` to ``v, v', ..., v^(n)``.

    ``v^(j) = a^j sum_i (-1)^i C(j, i) x_{n+1-j+i}``; only lags 2..n+1 are
    differentiated, so the input never enters.
    """
    D = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        for i in range(j + 1):
            D[j, n - j + i] = a**j * (-1) ** i * math.comb(j, i)
    return D


class FilterBank:
    """Chain of ``n + 1`` lags ``x_1' = a(u - x_1)``, ``x_k' = a(x_{k-1} - x_k)``."""

    def __init__(self, n: int, omega: float):
        a = (n + 1) * omega
        if a < 1.0 - 1e-12:
            raise ValueError(
                f"filter pole (n+1)*omega = {a:g} must be >= 1 for the excitation condition"
            )
        self.n = n
        self.omega = float(omega)
        self.a = a
        self.x = np.zeros(n + 1)
        self._D = derivative_matrix(n, a)
        self._map = None

    def _rhs(self, x, u):
        dx = np.empty_like(x)
        dx[0] = u - x[0]
        dx[1:] = x[:-1] - x[1:]
        return self.a * dx

    def _rk4(self, x, u0, um, u1, dt):
        k1 = self._rhs(x, u0)
        k2 = self._rhs(x + 0.5 * dt * k1, um)
        k3 = self._rhs(x + 0.5 * dt * k2, um)
        k4 = self._rhs(x + dt * k3, u1)
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _step_map(self, dt):
        """RK4 on a linear system is linear in (x, u0, umid, u1); tabulate it."""
        if self._map is None or self._map[0] != dt:
            m = self.n + 1
            cols = [self._rk4(e, 0.0, 0.0, 0.0, dt) for e in np.eye(m)]
            zero = np.zeros(m)
            B = np.column_stack([self._rk4(zero, *u, dt) for u in np.eye(3)])
            self._map = (dt, np.column_stack(cols), B)
        return self._map

    def step(self, u0: float, u1: float, dt: float, umid: Optional[float] = None) -> None:
        """Advance one classical RK4 step with input samples at ``t``, ``t+dt/2``, ``t+dt``.

        Without ``umid`` the midpoint sample is linearly interpolated. The
        step is applied through its tabulated linear map, which equals the
        RK4 stages up to rounding.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        if umid is None:
            umid = 0.5 * (u0 + u1)
        _, P, B = self._step_map(dt)
        self.x = P @ self.x + B @ np.array([u0, umid, u1])

    def derivatives(self) -> np.ndarray:
        """``[v, v', ..., v^(n)]`` at the current state."""
        return self._D @ self.x

    def gain(self, omega) -> np.ndarray:
        return E_gain(self.n, self.omega, 1j * np.asarray(omega, dtype=float))

    def reset(self) -> None:
        self.x[:] = 0.0


def regressor(u_bank: FilterBank, y_bank: FilterBank) -> np.ndarray:
    """``[v, ..., v^(n), -z, ..., -z^(n)]`` from the input and output banks."""
    if u_bank.n != y_bank.n or u_bank.omega != y_bank.omega:
        raise ValueError("input and output banks must share n and omega")
    return np.concatenate([u_bank.derivatives(), -y_bank.derivatives()])
