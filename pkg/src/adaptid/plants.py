"""Time-domain simulators for the delay, heat and string plants.

Every simulator starts from the zero initial condition, advances with a
fixed step ``dt`` and is driven by an analytic input signal (an object with
``value``, ``d1`` and ``d2`` methods, see :mod:`adaptid.signals`).
"""
from __future__ import annotations

import csv
import math
from typing import Optional

import numba
import numpy as np
from scipy.linalg import solve_banded

from .coeffs import (
    DelayPlant,
    HeatPlant,
    PlantSpec,
    WavePlant,
    closed_form_tf,
    series_tf,
    wave_coeffs_peano,
)
from .signals import Zero

__all__ = [
    "PlantInstability",
    "DelaySim",
    "HeatSim",
    "WaveSim",
    "make_plant",
    "steady_state_response",
    "wave_energy",
    "simulate",
    "write_trajectory",
]

DEFAULT_GRID = {HeatPlant: 200, WavePlant: 400}


class PlantInstability(RuntimeError):
    """Raised when a simulator produces a non-finite state."""

    def __init__(self, t: float, detail: str = ""):
        self.t = t
        super().__init__(f"non-finite plant state at t={t:.6g}" + (f": {detail}" if detail else ""))


class DelaySim:
    """``x1' = x2``, ``x2' = -b x1 - a x2 + u``, ``y(t) = K x1(t - tau)``.

    Past values of ``x1`` live in a ring buffer sampled every ``dt`` and the
    delayed sample is linearly interpolated.
    """

    def __init__(self, plant: DelayPlant, dt: float):
        self.plant = plant
        self.dt = float(dt)
        self.t = 0.0
        self.steps = 0
        self.x1 = 0.0
        self.x2 = 0.0
        lag = plant.tau / self.dt
        if abs(lag - round(lag)) < 1e-9:
            lag = float(round(lag))
        self._lag = lag
        self._buf = np.zeros(int(math.ceil(lag)) + 2)

    def _deriv(self, x1, x2, u):
        return x2, -self.plant.b * x1 - self.plant.a * x2 + u

    def _delayed_x1(self) -> float:
        pos = self.steps - self._lag
        if pos <= 0:
            return 0.0
        j = int(math.floor(pos))
        frac = pos - j
        L = len(self._buf)
        lo = self._buf[j % L]
        if frac == 0.0:
            return lo
        return (1.0 - frac) * lo + frac * self._buf[(j + 1) % L]

    def step(self, signal) -> float:
        dt, t = self.dt, self.t
        u0, um, u1 = signal.value(t), signal.value(t + 0.5 * dt), signal.value(t + dt)
        x1, x2 = self.x1, self.x2
        a1, b1 = self._deriv(x1, x2, u0)
        a2, b2 = self._deriv(x1 + 0.5 * dt * a1, x2 + 0.5 * dt * b1, um)
        a3, b3 = self._deriv(x1 + 0.5 * dt * a2, x2 + 0.5 * dt * b2, um)
        a4, b4 = self._deriv(x1 + dt * a3, x2 + dt * b3, u1)
        self.x1 = x1 + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        self.x2 = x2 + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        self.steps += 1
        self.t = self.steps * dt
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise PlantInstability(self.t)
        self._buf[self.steps % len(self._buf)] = self.x1
        return self.output()

    def output(self) -> float:
        return self.plant.K * self._delayed_x1()


class HeatSim:
    """Crank-Nicolson method of lines for the heat rod.

    Second-order central differences on ``N + 1`` uniform nodes with ghost
    nodes for both Neumann conditions. The tridiagonal system is rebuilt
    only when ``theta`` or ``lam`` moves by more than ``1e-12``.
    """

    def __init__(self, plant: HeatPlant, dt: float, grid_points: int = 200):
        if grid_points < 50:
            raise ValueError(f"heat grid needs >= 50 intervals, got {grid_points}")
        self.plant = plant
        self.dt = float(dt)
        self.N = grid_points
        self.h = 1.0 / grid_points
        self.T = np.zeros(grid_points + 1)
        self.t = 0.0
        self.steps = 0
        self._key: Optional[tuple[float, float]] = None
        self._ab = None
        self.rebuilds = 0

    def _operator_bands(self, theta, lam):
        """Diagonals of ``L`` (sub, main, super) for ``theta T_xx - lam T``."""
        N, c = self.N, theta / self.h**2
        sub = np.full(N, c)
        sup = np.full(N, c)
        main = np.full(N + 1, -2.0 * c - lam)
        sup[0] = 2.0 * c
        sub[-1] = 2.0 * c
        return sub, main, sup

    def _prepare(self, theta, lam):
        key = self._key
        if key is not None and abs(key[0] - theta) <= 1e-12 and abs(key[1] - lam) <= 1e-12:
            return
        sub, main, sup = self._operator_bands(theta, lam)
        half = 0.5 * self.dt
        ab = np.zeros((3, self.N + 1))
        ab[0, 1:] = -half * sup
        ab[1, :] = 1.0 - half * main
        ab[2, :-1] = -half * sub
        self._ab = ab
        self._bands = (sub, main, sup)
        self._key = (theta, lam)
        self.rebuilds += 1

    def step(self, signal) -> float:
        dt, t = self.dt, self.t
        theta, lam = self.plant.params_at(t + 0.5 * dt)
        self._prepare(theta, lam)
        sub, main, sup = self._bands
        T = self.T
        LT = main * T
        LT[:-1] += sup * T[1:]
        LT[1:] += sub * T[:-1]
        rhs = T + 0.5 * dt * LT
        # flux input enters through the right ghost node
        rhs[-1] += 0.5 * dt * (2.0 * theta / self.h) * (signal.value(t) + signal.value(t + dt))
        self.T = solve_banded((1, 1), self._ab, rhs, check_finite=False)
        self.steps += 1
        self.t = self.steps * dt
        if not np.all(np.isfinite(self.T)):
            raise PlantInstability(self.t)
        return self.output()

    def output(self) -> float:
        return float(self.T[0])


class WaveSim:
    """Explicit RK4 for the string in the shifted variable ``v = w - xi^2 u``.

    ``v_tt = (EI v_x)_x + 2 (EI xi)_x u - xi^2 u''`` with ``v(1) = 0`` and
    the absorbing-type condition ``v_x(0) = v_t(0)`` closed with a ghost
    node (half-cell balance at ``xi = 0``). Each outer step of length ``dt``
    is split into substeps that respect both the CFL limit
    ``0.5 h / sqrt(max EI)`` and the real-axis RK4 limit of the boundary
    damping.
    """

    def __init__(self, plant: WavePlant, dt: float, grid_points: int = 400, signal=None):
        if grid_points < 50:
            raise ValueError(f"wave grid needs >= 50 intervals, got {grid_points}")
        self.plant = plant
        self.dt = float(dt)
        self.N = N = grid_points
        self.h = h = 1.0 / N
        self.xi = np.linspace(0.0, 1.0, N + 1)
        ei = plant.ei
        self.ei_nodes = np.asarray(ei(self.xi), dtype=float)
        self.ei_half = np.asarray(ei(self.xi[:-1] + 0.5 * h), dtype=float)
        if np.any(self.ei_nodes <= 0) or np.any(self.ei_half <= 0):
            raise ValueError("EI must be positive on the grid")
        self.d_ei_xi = np.gradient(self.ei_nodes * self.xi, h, edge_order=2)
        self.xi2 = self.xi**2
        ei_max = float(max(self.ei_nodes.max(), self.ei_half.max()))
        dt_cfl = 0.5 * h / math.sqrt(ei_max)
        # |eig| <= damping + sqrt(stiffness) bound for the damped semi-discrete system
        radius = 2.0 * self.ei_nodes[0] / h + 2.0 * math.sqrt(ei_max) / h
        dt_max = min(dt_cfl, 2.5 / radius)
        self.substeps = max(1, int(math.ceil(self.dt / dt_max - 1e-12)))
        self.t = 0.0
        self.steps = 0
        signal = signal if signal is not None else Zero()
        self.v = -self.xi2 * signal.value(0.0)
        self.vt = -self.xi2 * signal.d1(0.0)
        self.v[-1] = 0.0
        self.vt[-1] = 0.0

    def _accel(self, v, vt, u, ddu):
        acc = np.empty_like(v)
        _accel_into(acc, v, vt, u, ddu, self.ei_half, self.ei_nodes[0], self.d_ei_xi, self.xi2, self.h)
        return acc

    def step(self, signal) -> float:
        hs = self.dt / self.substeps
        nodes = self.t + 0.5 * hs * np.arange(2 * self.substeps + 1)
        u = np.asarray(signal.value(nodes), dtype=float)
        ddu = np.asarray(signal.d2(nodes), dtype=float)
        _wave_rk4(self.v, self.vt, u, ddu, self.ei_half, self.ei_nodes[0], self.d_ei_xi, self.xi2, self.h, hs)
        self.steps += 1
        self.t = self.steps * self.dt
        # a single NaN/inf anywhere poisons the sum
        if not math.isfinite(float(self.v.sum() + self.vt.sum())):
            raise PlantInstability(self.t)
        return self.output()

    def output(self) -> float:
        return float(self.v[0])

    def displacement(self, signal) -> np.ndarray:
        """``w = v + xi^2 u`` at the current time (satisfies ``w(1) = u``)."""
        return self.v + self.xi2 * signal.value(self.t)

    def velocity(self, signal) -> np.ndarray:
        return self.vt + self.xi2 * signal.d1(self.t)


@numba.njit(cache=True)
def _accel_into(acc, v, vt, u, ddu, ei_half, ei0, d_ei_xi, xi2, h):
    n = v.shape[0]
    prev = ei_half[0] * (v[1] - v[0]) / h
    acc[0] = 2.0 / h * (prev - ei0 * vt[0]) + 2.0 * d_ei_xi[0] * u - xi2[0] * ddu
    for i in range(1, n - 1):
        nxt = ei_half[i] * (v[i + 1] - v[i]) / h
        acc[i] = (nxt - prev) / h + 2.0 * d_ei_xi[i] * u - xi2[i] * ddu
        prev = nxt
    acc[n - 1] = 0.0


@numba.njit(cache=True)
def _wave_rk4(v, vt, u, ddu, ei_half, ei0, d_ei_xi, xi2, h, hs):
    """In-place RK4 substeps; ``u``/``ddu`` hold samples every ``hs/2``."""
    n = v.shape[0]
    ka = np.empty((4, n))
    kv = np.empty((4, n))
    vs = np.empty(n)
    ws = np.empty(n)
    for j in range((u.shape[0] - 1) // 2):
        i0, im, i1 = 2 * j, 2 * j + 1, 2 * j + 2
        kv[0, :] = vt
        _accel_into(ka[0], v, vt, u[i0], ddu[i0], ei_half, ei0, d_ei_xi, xi2, h)
        for i in range(n):
            vs[i] = v[i] + 0.5 * hs * kv[0, i]
            ws[i] = vt[i] + 0.5 * hs * ka[0, i]
        kv[1, :] = ws
        _accel_into(ka[1], vs, ws, u[im], ddu[im], ei_half, ei0, d_ei_xi, xi2, h)
        for i in range(n):
            vs[i] = v[i] + 0.5 * hs * kv[1, i]
            ws[i] = vt[i] + 0.5 * hs * ka[1, i]
        kv[2, :] = ws
        _accel_into(ka[2], vs, ws, u[im], ddu[im], ei_half, ei0, d_ei_xi, xi2, h)
        for i in range(n):
            vs[i] = v[i] + hs * kv[2, i]
            ws[i] = vt[i] + hs * ka[2, i]
        kv[3, :] = ws
        _accel_into(ka[3], vs, ws, u[i1], ddu[i1], ei_half, ei0, d_ei_xi, xi2, h)
        for i in range(n):
            v[i] += hs / 6.0 * (kv[0, i] + 2.0 * kv[1, i] + 2.0 * kv[2, i] + kv[3, i])
            vt[i] += hs / 6.0 * (ka[0, i] + 2.0 * ka[1, i] + 2.0 * ka[2, i] + ka[3, i])


def make_plant(plant: PlantSpec, dt: float, grid_points: Optional[int] = None, signal=None):
    """Zero-state simulator for ``plant`` with step ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(plant, DelayPlant):
        return DelaySim(plant, dt)
    if isinstance(plant, HeatPlant):
        return HeatSim(plant, dt, grid_points or DEFAULT_GRID[HeatPlant])
    if isinstance(plant, WavePlant):
        return WaveSim(plant, dt, grid_points or DEFAULT_GRID[WavePlant], signal=signal)
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


def steady_state_response(plant: PlantSpec, omega, n_series: int = 24, t: float = 0.0):
    """``G(j omega)``: closed form for delay/heat, truncated series for the string."""
    if np.any(np.asarray(omega) < 0):
        raise ValueError("omega must be nonnegative")
    if isinstance(plant, WavePlant):
        if n_series < 4:
            raise ValueError("series evaluation needs n_series >= 4")
        model = wave_coeffs_peano(plant.ei, n_series)
        return series_tf(model, 1j * np.asarray(omega, dtype=float))
    return closed_form_tf(plant, omega, t=t)


def wave_energy(sim: WaveSim) -> float:
    """``0.5 * int (EI v_x^2 + v_t^2) dxi`` by the trapezoidal rule."""
    vx = np.gradient(sim.v, sim.h, edge_order=2)
    integrand = sim.ei_nodes * vx**2 + sim.vt**2
    return 0.5 * float(np.trapezoid(integrand, dx=sim.h))


def simulate(plant: PlantSpec, signal, t_end: float, dt: float, grid_points=None, decimation: int = 1):
    """Run ``plant`` from rest; return arrays ``t, u, y`` every ``decimation`` steps."""
    sim = make_plant(plant, dt, grid_points, signal=signal)
    n_steps = int(round(t_end / dt))
    ts, us, ys = [0.0], [signal.value(0.0)], [sim.output()]
    for k in range(1, n_steps + 1):
        y = sim.step(signal)
        if k % decimation == 0:
            ts.append(sim.t)
            us.append(signal.value(sim.t))
            ys.append(y)
    return np.array(ts), np.array(us), np.array(ys)


def write_trajectory(path, t, u, y) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "y"])
        for row in zip(t, u, y):
            w.writerow([repr(float(x)) for x in row])
