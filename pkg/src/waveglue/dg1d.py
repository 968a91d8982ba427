"""One-dimensional interior penalty DG on equispaced Lagrange nodes.

The symmetric interior penalty weak form for ``u_tt = u_xx`` on a uniform
partition with elements of length ``h`` reads

.. math::

    (u_{tt}, \\phi)_{I_j} = -(u_x, \\phi_x)_{I_j}
        + \\{u_x\\}[\\phi] + \\{\\phi_x\\}[u] - \\frac{\\tau}{h}[u][\\phi]

summed over the element faces. Written for the nodal coefficients of
element ``j`` it becomes a three-block stencil
``u_tt^(j) = D1 u^(j-1) + D2 u^(j) + D3 u^(j+1)`` with
``D_i = (M_loc)^{-1} A_i``. All blocks are formed in exact rational
arithmetic on the reference element and scaled afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy

__all__ = [
    "LagrangeBasis1D",
    "DgBlocks1D",
    "TruncationFit",
    "local_mass",
    "reference_blocks",
    "reference_data",
    "assemble_dg1d_blocks",
    "dg1d_truncation_probe",
    "fit_truncation",
    "shifted_sine",
    "formal_mass_weighting",
    "DEFAULT_TAU",
]

# penalty that reproduces the reference interior stencil for k = 3
DEFAULT_TAU = 25


class DgError(ValueError):
    pass


@lru_cache(maxsize=None)
def _reference(k: int):
    """Exact reference data on [0, 1]: mass, stiffness, end derivatives."""
    x = sympy.Symbol("x")
    nodes = [sympy.Rational(j, k) for j in range(k + 1)]
    L = []
    for i in range(k + 1):
        p = sympy.Integer(1)
        for j in range(k + 1):
            if j != i:
                p *= (x - nodes[j]) / (nodes[i] - nodes[j])
        L.append(sympy.expand(p))
    dL = [sympy.diff(p, x) for p in L]
    M = sympy.Matrix(k + 1, k + 1, lambda i, j: sympy.integrate(L[i] * L[j], (x, 0, 1)))
    K = sympy.Matrix(k + 1, k + 1, lambda i, j: sympy.integrate(dL[i] * dL[j], (x, 0, 1)))
    gL = sympy.Matrix([d.subs(x, 0) for d in dL])
    gR = sympy.Matrix([d.subs(x, 1) for d in dL])
    return nodes, M, K, gL, gR


def reference_data(k: int) -> dict:
    """Float copies of the reference mass ``M``, stiffness ``K`` and end derivatives ``gL``, ``gR``."""
    _, M, K, gL, gR = _reference(k)
    return {
        "M": np.array(M.tolist(), dtype=float),
        "K": np.array(K.tolist(), dtype=float),
        "gL": np.array(gL.tolist(), dtype=float).ravel(),
        "gR": np.array(gR.tolist(), dtype=float).ravel(),
    }


@dataclass(frozen=True)
class LagrangeBasis1D:
    """Equispaced Lagrange basis of degree ``k`` on the reference element [0, 1]."""

    degree: int = 3

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.degree + 1) / self.degree

    def eval(self, xi: np.ndarray) -> np.ndarray:
        """Values ``phi_j(xi_i)`` as an array of shape ``(len(xi), k+1)``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        r = self.nodes
        V = np.ones((xi.size, r.size))
        for j in range(r.size):
            for m in range(r.size):
                if m != j:
                    V[:, j] *= (xi - r[m]) / (r[j] - r[m])
        return V

    def deriv(self, xi: np.ndarray) -> np.ndarray:
        """Reference derivatives ``phi_j'(xi_i)``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        r = self.nodes
        n = r.size
        out = np.zeros((xi.size, n))
        for j in range(n):
            for l in range(n):
                if l == j:
                    continue
                term = np.full(xi.size, 1.0 / (r[j] - r[l]))
                for m in range(n):
                    if m != j and m != l:
                        term *= (xi - r[m]) / (r[j] - r[m])
                out[:, j] += term
        return out


def local_mass(k: int, h: float, exact: bool = False):
    """Mass matrix of the equispaced degree-``k`` Lagrange basis on an element of length ``h``.

    With ``exact=True`` and rational ``h`` a sympy matrix of rationals is
    returned instead of a float array.
    """
    if h <= 0:
        raise DgError(f"element length must be positive, got {h}")
    if k < 1:
        raise DgError(f"degree must be at least 1, got {k}")
    M = _reference(k)[1]
    if exact:
        return sympy.nsimplify(h) * M
    return h * np.array(M.tolist(), dtype=float)


@lru_cache(maxsize=None)
def reference_blocks(k: int, tau) -> tuple:
    """Exact ``(A1, A2, A3)`` for ``h = 1`` before applying the inverse mass."""
    _, _, K, gL, gR = _reference(k)
    n = k + 1
    tau = sympy.nsimplify(tau)
    half = sympy.Rational(1, 2)
    e1 = sympy.zeros(n, 1)
    e1[0] = 1
    en = sympy.zeros(n, 1)
    en[n - 1] = 1
    A1 = -half * e1 * gR.T + half * gL * en.T + tau * e1 * en.T
    A2 = (
        -K
        + half * en * gR.T + half * gR * en.T - tau * en * en.T
        - half * e1 * gL.T - half * gL * e1.T - tau * e1 * e1.T
    )
    A3 = half * en * gL.T - half * gR * e1.T + tau * en * e1.T
    return A1, A2, A3


@dataclass(frozen=True)
class DgBlocks1D:
    """Neighbour-coupling blocks of the 1D IPDG stencil.

    Attributes
    ----------
    k : int
        polynomial degree.
    h : float
        element length.
    tau : float
        interface penalty, entering as ``tau / h``.
    M_loc : ndarray
        local mass matrix.
    D1, D2, D3 : ndarray
        blocks acting on the left neighbour, the element and the right
        neighbour, already multiplied by the inverse mass.
    exact : tuple
        ``(D1, D2, D3)`` as sympy rational matrices for ``h = 1``.
    """

    k: int
    h: float
    tau: float
    M_loc: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    exact: tuple = field(repr=False, compare=False, default=())

    @property
    def stencil(self) -> np.ndarray:
        """The interior stencil ``[D1 D2 D3]`` of shape ``(k+1, 3(k+1))``."""
        return np.hstack([self.D1, self.D2, self.D3])

    @property
    def basis(self) -> LagrangeBasis1D:
        return LagrangeBasis1D(self.k)


def assemble_dg1d_blocks(k: int = 3, h: float = 1.0, tau=DEFAULT_TAU) -> DgBlocks1D:
    """Build the interior stencil blocks of the 1D IPDG discretization.

    Parameters
    ----------
    k : int
        polynomial degree.
    h : float
        element length.
    tau : float or rational
        dimensionless penalty; the face penalty is ``tau / h``.
    """
    if h <= 0:
        raise DgError(f"element length must be positive, got {h}")
    if float(tau) < 0:
        raise DgError(f"penalty must be nonnegative, got {tau}")
    Minv = _reference(k)[1].inv()
    exact = tuple(Minv * A for A in reference_blocks(k, tau))
    D = [np.array(B.tolist(), dtype=float) / h**2 for B in exact]
    return DgBlocks1D(
        k=k,
        h=float(h),
        tau=float(tau),
        M_loc=local_mass(k, h),
        D1=D[0],
        D2=D[1],
        D3=D[2],
        exact=exact,
    )


def shifted_sine(shift: float = 1.0) -> Callable[[np.ndarray, int], np.ndarray]:
    """Derivative oracle for ``sin(x + shift)``: ``f(x, m)`` is the m-th derivative."""

    def f(x, m=0):
        return np.sin(np.asarray(x, dtype=float) + shift + 0.5 * np.pi * m)

    return f


@dataclass(frozen=True)
class TruncationFit:
    """Leading truncation coefficients fitted over a refinement sweep.

    ``coeffs[j]`` multiplies ``h**powers[j]`` times the derivative of order
    ``derivs[j]`` sampled at each row's own node.
    """

    powers: tuple
    derivs: tuple
    coeffs: np.ndarray
    hs: np.ndarray
    rel_residual: float

    def coefficient(self, power: int) -> np.ndarray:
        return self.coeffs[self.powers.index(power)]


def fit_truncation(
    residual: Callable[[float], np.ndarray],
    points: Callable[[float], np.ndarray],
    f: Callable[[np.ndarray, int], np.ndarray],
    model: tuple,
    hs: np.ndarray,
    extra_powers: tuple = (),
    tol: float = 1e-3,
) -> TruncationFit:
    """Least-squares fit of ``residual(h)`` row by row.

    ``model`` lists ``(power, derivative order)`` pairs whose regressor is
    ``h**power * f^(derivative)(points(h))``; ``extra_powers`` add plain
    ``h**power`` nuisance columns that soak up the next orders.
    """
    hs = np.asarray(hs, dtype=float)
    R = np.array([residual(h) for h in hs])
    X = np.array([points(h) for h in hs])
    nrow = R.shape[1]
    coeffs = np.zeros((len(model), nrow))
    worst = 0.0
    for i in range(nrow):
        cols = [hs**p * f(X[:, i], m) for p, m in model]
        cols += [hs**p for p in extra_powers]
        G = np.array(cols).T
        # row scaling so that every level weighs alike
        w = hs ** (-float(model[0][0]))
        c, *_ = np.linalg.lstsq(G * w[:, None], R[:, i] * w, rcond=None)
        coeffs[:, i] = c[: len(model)]
        fit = G @ c
        scale = max(np.abs(R[:, i]).max(), 1e-300)
        worst = max(worst, np.abs(fit - R[:, i]).max() / scale)
    if worst > tol:
        raise DgError(f"truncation fit residual {worst:.2e} above {tol:.0e}; input not smooth enough?")
    return TruncationFit(
        powers=tuple(p for p, _ in model),
        derivs=tuple(m for _, m in model),
        coeffs=coeffs,
        hs=hs,
        rel_residual=worst,
    )


def dg1d_truncation_probe(
    blocks: DgBlocks1D,
    f: Callable[[np.ndarray, int], np.ndarray],
    x0: float = 0.0,
    mass_weighted: bool = False,
    hs: np.ndarray | None = None,
) -> TruncationFit:
    """Fit the leading truncation error of the interior DG stencil.

    The block is applied to nodal samples of ``f`` on three consecutive
    elements with the middle one starting at ``x0``, and ``f''`` at the four
    nodes is subtracted. The result is fitted as
    ``c2 * f''''(node) h^2 + c3 * f'''''(node) h^3``. With
    ``mass_weighted`` the residual is first multiplied by ``M_loc`` and the
    fit uses ``h^3`` and ``h^4``.
    """
    k = blocks.k
    ref = np.hstack([np.array(B.tolist(), dtype=float) for B in blocks.exact])
    Mref = local_mass(k, 1.0)
    r = np.arange(k + 1) / k
    if hs is None:
        # coarser levels drown the h^4 term in cancellation error below h = 1/64
        hs = 0.5 ** np.arange(1, 7)

    def points(h):
        return x0 + h * r

    def residual(h):
        xs = np.concatenate([x0 - h + h * r, x0 + h * r, x0 + h + h * r])
        res = ref @ f(xs, 0) / h**2 - f(points(h), 2)
        if mass_weighted:
            res = h * Mref @ res
        return res

    if mass_weighted:
        model = ((3, 4), (4, 5))
        extra = (5, 6)
    else:
        model = ((2, 4), (3, 5))
        extra = (4, 5)
    return fit_truncation(residual, points, f, model, hs, extra_powers=extra)


def formal_mass_weighting(fit: TruncationFit, k: int = 3) -> np.ndarray:
    """Multiply per-node truncation coefficient vectors by the reference mass.

    This is the product ``M_loc T`` taken term by term, treating each
    ``f^(m)(node)`` column as a common factor. It agrees with a refit of
    ``M_loc T`` at the leading order only; the next coefficient of a refit
    also picks up the node offsets inside each element.
    """
    return fit.coeffs @ local_mass(k, 1.0)
