"""Fourth-order modified-equation time stepping for ``z_tt = Q z + g(t)``.

The two-step update is

    z^{n+1} = 2 z^n - z^{n-1} + dt^2 a + dt^4/12 (Q a + g_tt),   a = Q z^n + g

which for ``g = 0`` is leapfrog applied to ``Q + dt^2/12 Q^2``. For a mode
``Q v = -w^2 v`` it is stable while ``w dt <= sqrt(12)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "STABILITY_CONSTANT",
    "TimeIntegrator",
    "TimeStepError",
    "discrete_energy",
    "estimate_dt",
    "integrate",
    "spectral_radius",
    "startup",
    "step",
]

STABILITY_CONSTANT = float(np.sqrt(12.0))

Forcing = Callable[[float], np.ndarray] | None


class TimeStepError(RuntimeError):
    pass


def _Q(sys):
    return sys.Q if hasattr(sys, "Q") else sys


def _eval(g: Forcing, t: float, n: int) -> np.ndarray | float:
    if g is None:
        return 0.0
    out = np.asarray(g(t), dtype=float)
    if out.shape not in ((), (n,)):
        raise ValueError(f"forcing returned shape {out.shape}, expected ({n},)")
    return out


@dataclass
class TimeIntegrator:
    """Two-step history ``(z_prev, z)`` at time ``t`` and the step size.

    ``rho_estimate`` and ``cfl`` record how ``dt`` was chosen; they may be
    ``nan`` when ``dt`` was set by hand.
    """

    dt: float
    z_prev: np.ndarray
    z: np.ndarray
    t: float = 0.0
    cfl: float = float("nan")
    rho_estimate: float = float("nan")
    steps: int = field(default=0)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.z_prev = np.asarray(self.z_prev, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.z_prev.shape != self.z.shape:
            raise ValueError("history vectors differ in shape")


def step(sys, integ: TimeIntegrator, g: Forcing = None, g_tt: Forcing = None) -> TimeIntegrator:
    """Advance ``integ`` by one step in place; two products with ``Q``.

    ``g`` and ``g_tt`` are callables of time returning the forcing and its
    second time derivative, or ``None`` for zero.
    """
    Q = _Q(sys)
    dt, t, z = integ.dt, integ.t, integ.z
    a = Q @ z + _eval(g, t, z.size)
    corr = Q @ a + _eval(g_tt, t, z.size)
    z_new = 2.0 * z - integ.z_prev + dt**2 * a + dt**4 / 12.0 * corr
    if not np.all(np.isfinite(z_new)):
        raise TimeStepError(f"non-finite state after step {integ.steps + 1} at t={t + dt:.6g}")
    integ.z_prev, integ.z = z, z_new
    integ.t = t + dt
    integ.steps += 1
    return integ


def startup(
    sys,
    z0: np.ndarray,
    v0: np.ndarray,
    dt: float,
    g0=None,
    g_t0=None,
    g_tt0=None,
    order: int = 4,
) -> np.ndarray:
    """Taylor start ``z^1`` from displacement, velocity and forcing at ``t0``.

    ``g0, g_t0, g_tt0`` are vectors (or ``None``). ``order=2`` truncates after
    the ``dt^2`` term and exists to show that the global rate then drops.
    """
    Q = _Q(sys)
    z0 = np.asarray(z0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    z_tt = Q @ z0 + (0.0 if g0 is None else g0)
    z1 = z0 + dt * v0 + dt**2 / 2.0 * z_tt
    if order == 2:
        return z1
    if order != 4:
        raise ValueError(f"startup order must be 2 or 4, got {order}")
    z_ttt = Q @ v0 + (0.0 if g_t0 is None else g_t0)
    z_4 = Q @ z_tt + (0.0 if g_tt0 is None else g_tt0)
    return z1 + dt**3 / 6.0 * z_ttt + dt**4 / 24.0 * z_4


def spectral_radius(Q, Ht=None, tol: float = 1e-8, maxiter: int = 5000) -> float:
    """Largest ``|lambda|`` of ``Q``, with ``Ht Q`` symmetric when ``Ht`` is given.

    With ``Ht`` the generalized symmetric problem ``(-Ht Q) x = lambda Ht x``
    is solved by Lanczos; without it ``Q`` itself must be symmetric.
    """
    n = Q.shape[0]
    if n <= 40:
        A = Q.toarray() if sp.issparse(Q) else np.asarray(Q, dtype=float)
        return float(np.abs(np.linalg.eigvals(A)).max())
    # fixed start vector: repeated calls give bit-identical results
    v0 = np.random.default_rng(12345).standard_normal(n)
    try:
        if Ht is None:
            lam = spla.eigsh(Q, k=1, which="LM", tol=tol, maxiter=maxiter, v0=v0, return_eigenvectors=False)
        else:
            HQ = sp.csr_matrix(Ht @ Q)
            HQ = 0.5 * (HQ + HQ.T)
            lam = spla.eigsh(-HQ, k=1, M=sp.csc_matrix(Ht), which="LM", tol=tol, maxiter=maxiter,
                             v0=v0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise TimeStepError(f"spectral radius iteration did not converge: {exc}") from exc
    return float(abs(lam[0]))


def estimate_dt(sys, cfl: float = 0.9, Ht=None, tol: float = 1e-8) -> tuple[float, float]:
    """Return ``(dt, rho)`` with ``dt = cfl sqrt(12) / sqrt(rho)``.

    ``sys`` is either a matrix or an object with ``Q`` and ``Ht`` attributes.
    ``tol`` is the relative eigenvalue tolerance; the estimate is inflated by
    ``1 + tol`` so a loose tolerance never enlarges ``dt``.
    """
    if not cfl > 0:
        raise ValueError(f"cfl must be positive, got {cfl}")
    Q = _Q(sys)
    if Ht is None and hasattr(sys, "Ht"):
        Ht = sys.Ht
    rho = spectral_radius(Q, Ht, tol=tol) * (1.0 + tol)
    if not rho > 0:
        raise TimeStepError("spectral radius is zero; dt is unbounded")
    return cfl * STABILITY_CONSTANT / np.sqrt(rho), rho


def discrete_energy(sys, integ: TimeIntegrator, Ht) -> float:
    """Quantity conserved exactly by the unforced two-step scheme.

    ``v^T Ht v - z_prev^T Ht Qm z`` with ``v = (z - z_prev)/dt`` and
    ``Qm = Q + dt^2/12 Q^2``; it requires ``Ht Q`` symmetric.
    """
    Q = _Q(sys)
    dt = integ.dt
    v = (integ.z - integ.z_prev) / dt
    Qz = Q @ integ.z
    Qmz = Qz + dt**2 / 12.0 * (Q @ Qz)
    return float(v @ (Ht @ v) - integ.z_prev @ (Ht @ Qmz))


def integrate(
    sys,
    z0: np.ndarray,
    v0: np.ndarray,
    T: float,
    dt: float,
    g: Forcing = None,
    g_t: Forcing = None,
    g_tt: Forcing = None,
    callback: Callable[[TimeIntegrator], None] | None = None,
    start_order: int = 4,
) -> TimeIntegrator:
    """Run from ``t = 0`` to ``T`` with the step shrunk so it divides ``T``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    nsteps = max(1, int(np.ceil(T / dt - 1e-12)))
    dt = T / nsteps
    n = np.asarray(z0).size
    z1 = startup(
        sys, z0, v0, dt,
        None if g is None else _eval(g, 0.0, n),
        None if g_t is None else _eval(g_t, 0.0, n),
        None if g_tt is None else _eval(g_tt, 0.0, n),
        order=start_order,
    )
    integ = TimeIntegrator(dt=dt, z_prev=np.asarray(z0, dtype=float), z=z1, t=dt, steps=1)
    if callback is not None:
        callback(integ)
    for _ in range(nsteps - 1):
        step(sys, integ, g, g_tt)
        if callback is not None:
            callback(integ)
    return integ
