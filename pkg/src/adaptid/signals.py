"""Analytic input signals with closed-form time derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MultiSine", "Sine", "Zero"]


@dataclass(frozen=True)
class MultiSine:
    """``u(t) = sum_{m=1}^{harmonics} sin(m * omega * t)``."""

    omega: float
    harmonics: int

    def __post_init__(self):
        freqs = self.omega * np.arange(1, self.harmonics + 1)
        freqs.setflags(write=False)
        object.__setattr__(self, "_freqs", freqs)

    def value(self, t):
        if isinstance(t, float):
            return float(np.sin(self._freqs * t).sum())
        return np.sin(np.multiply.outer(t, self._freqs)).sum(axis=-1)

    def d1(self, t):
        w = self._freqs
        if isinstance(t, float):
            return float((w * np.cos(w * t)).sum())
        return (w * np.cos(np.multiply.outer(t, w))).sum(axis=-1)

    def d2(self, t):
        w = self._freqs
        if isinstance(t, float):
            return float(-(w * w * np.sin(w * t)).sum())
        return -(w * w * np.sin(np.multiply.outer(t, w))).sum(axis=-1)

    @property
    def frequencies(self) -> np.ndarray:
        return self._freqs


@dataclass(frozen=True)
class Sine:
    """``u(t) = amplitude * sin(omega * t + phase)``."""

    omega: float
    amplitude: float = 1.0
    phase: float = 0.0

    def value(self, t: float) -> float:
        return self.amplitude * np.sin(self.omega * t + self.phase)

    def d1(self, t: float) -> float:
        return self.amplitude * self.omega * np.cos(self.omega * t + self.phase)

    def d2(self, t: float) -> float:
        return -self.amplitude * self.omega**2 * np.sin(self.omega * t + self.phase)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([self.omega])


class Zero:
    def value(self, t):
        return np.zeros(np.shape(t)) if np.ndim(t) else 0.0

    d1 = d2 = value

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([])
