"""Plant plus filter-bank stepping shared by the identification and PE runs."""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .filters import FilterBank, regressor
from .plants import make_plant
from .signals import MultiSine

__all__ = ["RegressorStream"]


class RegressorStream:
    """Drives a plant with the multisine input and filters both channels.

    The plant runs at half the loop step so the output is available exactly
    at each step midpoint; both filter banks then use true midpoint samples
    in their RK4 stages.
    """

    def __init__(self, plant, n: int, omega: float, dt: float, grid_points: Optional[int] = None):
        self.n = n
        self.omega = float(omega)
        self.dt = float(dt)
        self.signal = MultiSine(self.omega, n + 1)
        self.sim = make_plant(plant, 0.5 * self.dt, grid_points=grid_points, signal=self.signal)
        self.u_bank = FilterBank(n, self.omega)
        self.y_bank = FilterBank(n, self.omega)
        self.k = 0
        self._y = self.sim.output()

    @property
    def t(self) -> float:
        return self.k * self.dt

    def phi(self) -> np.ndarray:
        return regressor(self.u_bank, self.y_bank)

    def advance(self) -> None:
        dt, t, sig = self.dt, self.t, self.signal
        u0, um, u1 = sig.value(t), sig.value(t + 0.5 * dt), sig.value(t + dt)
        ym = self.sim.step(sig)
        y1 = self.sim.step(sig)
        self.u_bank.step(u0, u1, dt, umid=um)
        self.y_bank.step(self._y, y1, dt, umid=ym)
        self._y = y1
        self.k += 1

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        """Yield ``(t, phi)`` forever, starting with the zero sample at ``t = 0``."""
        while True:
            yield self.t, self.phi()
            self.advance()
