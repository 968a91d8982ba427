"""Exact plane-wave solution refracted at a horizontal material interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SnellSolution", "snell_eval"]


@dataclass(frozen=True)
class SnellSolution:
    """Incident plus reflected wave above ``y = 0`` and a transmitted wave below.

    Above (speed squared ``b1``)::

        U = cos(x + y - c t) + k2 cos(x - y - c t)

    below (``b2``)::

        U = (1 + k2) cos(x + k1 y - c t)

    with ``c = sqrt(2 b1)``, ``k1 = sqrt(2 b1 / b2 - 1)`` and
    ``k2 = (b1 - k1 b2) / (b1 + k1 b2)``, so that ``U`` and ``b U_y`` are
    continuous across ``y = 0``. Requires ``b2 < 2 b1``. ``wavenumber``
    rescales ``x, y, t`` together, which keeps both properties.
    """

    b1: float = 1.0
    b2: float = 0.25
    wavenumber: float = 1.0

    def __post_init__(self):
        if not (self.b1 > 0 and 0 < self.b2 < 2 * self.b1):
            raise ValueError(f"need b1 > 0 and 0 < b2 < 2 b1, got b1={self.b1}, b2={self.b2}")

    @property
    def c(self) -> float:
        return float(np.sqrt(2.0 * self.b1))

    @property
    def k1(self) -> float:
        return float(np.sqrt(2.0 * self.b1 / self.b2 - 1.0))

    @property
    def k2(self) -> float:
        return (self.b1 - self.k1 * self.b2) / (self.b1 + self.k1 * self.b2)

    def upper(self, x, y, t, dt: int = 0):
        """``d^dt U / dt^dt`` above the interface (``dt`` in 0..2)."""
        c, k2, s = self.c, self.k2, self.wavenumber
        x, y, t = s * x, s * y, s * t
        return s**dt * (_dcos(x + y - c * t, -c, dt) + k2 * _dcos(x - y - c * t, -c, dt))

    def lower(self, x, y, t, dt: int = 0):
        c, k1, k2, s = self.c, self.k1, self.k2, self.wavenumber
        x, y, t = s * x, s * y, s * t
        return s**dt * (1.0 + k2) * _dcos(x + k1 * y - c * t, -c, dt)

    def __call__(self, x, y, t, dt: int = 0):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.where(y >= 0, self.upper(x, y, t, dt), self.lower(x, y, t, dt))


def _dcos(arg, a, k):
    """``d^k/dt^k cos(arg)`` where ``d arg / dt = a``."""
    return a**k * np.cos(arg + k * np.pi / 2)


def snell_eval(sol: SnellSolution, x, y, t) -> tuple[np.ndarray, np.ndarray]:
    """``(U, U_t)`` at the given points."""
    return sol(x, y, t), sol(x, y, t, dt=1)
