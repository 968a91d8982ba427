"""Normal-mode analysis of the 1D FD-DG interface.

Laplace transforming the interior error equations with ``s~ = s h`` gives
modal solutions: on the FD side ``delta_j = kappa^(j-3)`` with ``kappa`` a root
of the fourth-order stencil's characteristic polynomial, on the DG side
``delta^(j) = alpha^(j-1) z`` with ``(D1 + (D2 - s~^2) alpha + D3 alpha^2) z = 0``
(``Di`` scaled by ``h^2``). Inserting the admissible modes into the eight
interface rows gives the boundary system ``C(s~) Z = h^2 T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dg1d import DgBlocks1D, assemble_dg1d_blocks
from .hybrid1d import Hybrid1D, assemble_hybrid1d, interface_moments, interface_stencil
from .sbp import build_sbp

__all__ = [
    "NMA_TAU",
    "NmaError",
    "FdRoots",
    "DgModes",
    "NormalModeData",
    "ColumnSpaceCheck",
    "fd_roots",
    "dg_roots",
    "boundary_system",
    "column_space_check",
    "perturbation_coefficients",
    "kappa_bound_ratio",
    "nma_system",
    "nma_report",
]

NMA_TAU = 10.0
"""Penalty at which the reference root set {0, 0, 0.1390, 1, 1, 7.1943} arises."""

# interior stencil of the fourth-order operator, times h^2
_STENCIL = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])
_ZERO = 1e-12


class NmaError(RuntimeError):
    pass


@dataclass(frozen=True)
class FdRoots:
    """Roots of ``sum_k c_k kappa^k = s~^2 kappa^2`` for the interior stencil.

    ``kappa`` holds the two admissible roots ordered as (the branch through
    1, the branch through ``7 - 4 sqrt 3``); ``roots`` all four.
    """

    s_tilde: complex
    kappa: np.ndarray
    roots: np.ndarray


@dataclass(frozen=True)
class DgModes:
    """Finite roots of the DG quadratic eigenproblem and the four modal vectors.

    ``alphas`` are the six finite roots sorted by modulus; ``admissible`` the
    two nonzero admissible ones (``alpha_1`` small, ``alpha_2`` through 1).
    Columns of ``z`` are ``z1, z2`` (last entry 1) and the two kernel vectors
    ``z3, z4`` of ``D1`` with unit pivots in entries 2 and 3.
    """

    s_tilde: complex
    alphas: np.ndarray
    admissible: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class NormalModeData:
    """Boundary system at one ``s~``; unknowns ``[sigma1, sigma2, d1, d2, c1..c4]``."""

    s_tilde: complex
    kappa: np.ndarray
    alphas: np.ndarray
    admissible: np.ndarray
    z_vectors: np.ndarray
    C: np.ndarray
    T_gamma_hat: np.ndarray


@dataclass(frozen=True)
class ColumnSpaceCheck:
    singular_values: np.ndarray
    null_count: int
    projections: np.ndarray
    relative_last: float
    passed: bool


def fd_roots(s_tilde: complex) -> FdRoots:
    """Admissible FD roots ``|kappa| < 1``; at ``s~ = 0`` the double root 1 is kept once."""
    s = complex(s_tilde)
    if s.real < -_ZERO:
        raise ValueError(f"need Re(s~) >= 0, got {s}")
    coeffs = _STENCIL.astype(complex)
    coeffs[2] -= s * s
    roots = np.roots(coeffs[::-1])
    if roots.size != 4 or not np.all(np.isfinite(roots)):
        raise NmaError(f"characteristic equation has {roots.size} finite roots at s~={s}")
    roots = roots[np.argsort(np.abs(roots))]
    if abs(s) < _ZERO:
        # continuation from Re(s~) > 0: one copy of the double root 1 is admissible
        kappa = np.array([1.0 + 0j, roots[0]])
    else:
        inside = roots[np.abs(roots) < 1.0]
        if inside.size != 2:
            raise NmaError(f"expected 2 admissible FD roots at s~={s}, found {inside.size}")
        kappa = inside[::-1]
    return FdRoots(s_tilde=s, kappa=kappa, roots=roots)


def _pencil(blocks: DgBlocks1D, s: complex):
    h2 = blocks.h**2
    D1, D2, D3 = blocks.D1 * h2, blocks.D2 * h2, blocks.D3 * h2
    n = D1.shape[0]
    I, Z = np.eye(n), np.zeros((n, n))
    A = np.block([[Z, I], [-D1, -(D2 - s * s * I)]])
    B = np.block([[I, Z], [Z, D3]])
    return (D1, D2, D3), A, B


def _null_vector(P: np.ndarray) -> np.ndarray:
    z = np.linalg.svd(P)[2][-1].conj()
    if abs(z[-1]) < 1e-8 * np.abs(z).max():
        raise NmaError("null vector has a vanishing last entry")
    return z / z[-1]


def _trailing_echelon(N: np.ndarray) -> np.ndarray:
    """Column basis of span(N) reduced from the bottom: unit pivots, zeros below."""
    M = N.T.astype(float).copy()
    n = M.shape[1]
    pivots = []
    row = 0
    for col in range(n - 1, -1, -1):
        if row == M.shape[0]:
            break
        p = row + np.argmax(np.abs(M[row:, col]))
        if abs(M[p, col]) < 1e-10 * np.abs(M).max():
            continue
        M[[row, p]] = M[[p, row]]
        M[row] /= M[row, col]
        for r in range(M.shape[0]):
            if r != row:
                M[r] -= M[r, col] * M[row]
        pivots.append(col)
        row += 1
    order = np.argsort(pivots)
    return M[order].T


def dg_roots(blocks: DgBlocks1D, s_tilde: complex) -> DgModes:
    """Roots of ``det(D1 + (D2 - s~^2) alpha + D3 alpha^2)`` and the modal vectors.

    The quadratic problem is linearized to an 8x8 pencil; infinite
    eigenvalues (singular ``D3``) are discarded and exactly six finite roots
    are required.
    """
    s = complex(s_tilde)
    if s.real < -_ZERO:
        raise ValueError(f"need Re(s~) >= 0, got {s}")
    (D1, D2, D3), A, B = _pencil(blocks, s)
    ab = sla.eig(A, B, right=False, homogeneous_eigvals=True)
    a, b = ab
    scale = np.maximum(np.abs(a), np.abs(b))
    finite = np.abs(b) > 1e-10 * scale
    alphas = a[finite] / b[finite]
    if alphas.size != 6:
        raise NmaError(f"determinant polynomial has {alphas.size} finite roots, expected 6")
    alphas = alphas[np.argsort(np.abs(alphas))]

    N = sla.null_space(D1, rcond=1e-10)
    if N.shape[1] != 2:
        raise NmaError(f"kernel of D1 has dimension {N.shape[1]}, expected 2")
    K = _trailing_echelon(N)

    nonzero = alphas[np.abs(alphas) > 1e-8]
    if abs(s) < _ZERO:
        inside = nonzero[np.abs(nonzero) < 1 - 1e-6]
        if inside.size != 1:
            raise NmaError(f"expected one root strictly inside the disk at s~=0, found {inside.size}")
        adm = np.array([inside[0], 1.0 + 0j])
    else:
        adm = nonzero[np.abs(nonzero) < 1.0]
        if adm.size != 2:
            raise NmaError(f"expected 2 admissible DG roots at s~={s}, found {adm.size}")
    I = np.eye(D1.shape[0])
    z = [_null_vector(D1 + (D2 - s * s * I) * al + D3 * al * al) for al in adm]
    Z = np.column_stack(z + [K[:, 0], K[:, 1]]).astype(complex)
    return DgModes(s_tilde=s, alphas=alphas, admissible=adm, z=Z)


def boundary_system(sys: Hybrid1D, s_tilde: complex) -> NormalModeData:
    """``C(s~)`` from the interface rows of ``sys`` and the admissible modes.

    Row ``i`` reads ``s~^2 delta_i - sum_c S_ic delta_c`` with ``S`` the
    interface rows of ``h^2 Q``, so ``C Z = h^2 T`` for the truncation error
    ``T = Q U - U_tt``. FD points are ``x1`` (interface) to ``x6``; columns
    of ``Z`` use ``kappa^(j-3)`` for ``j >= 3`` and unit vectors for the
    two FD points next to the interface.
    """
    s = complex(s_tilde)
    fr = fd_roots(s)
    dm = dg_roots(sys.dg, s)
    S = interface_stencil(sys)
    nb = sys.dg.k + 1
    if nb != 4:
        raise NmaError("boundary system is laid out for degree 3")

    def fd_value(j):
        v = np.zeros(8, dtype=complex)
        if j >= 3:
            v[0:2] = fr.kappa ** (j - 3)
        else:
            v[2 if j == 1 else 3] = 1.0
        return v

    V = np.zeros((14, 8), dtype=complex)
    for c, j in enumerate(range(6, 0, -1)):
        V[c] = fd_value(j)
    V[6:10, 4:8] = dm.z
    V[10:14, 4] = dm.admissible[0] * dm.z[:, 0]
    V[10:14, 5] = dm.admissible[1] * dm.z[:, 1]
    R = np.zeros((8, 8), dtype=complex)
    for r, j in enumerate(range(4, 0, -1)):
        R[r] = fd_value(j)
    R[4:8, 4:8] = dm.z
    C = s * s * R - S @ V
    return NormalModeData(
        s_tilde=s,
        kappa=fr.kappa,
        alphas=dm.alphas,
        admissible=dm.admissible,
        z_vectors=dm.z,
        C=C,
        T_gamma_hat=interface_moments(sys, 4),
    )


def column_space_check(data: NormalModeData, rel_tol: float = 1e-8) -> ColumnSpaceCheck:
    """Project ``T`` on the left singular vectors of ``C``.

    Passes when ``C`` has exactly one singular value below
    ``rel_tol * sigma_max`` and ``T`` has no component along its left null
    vector (relative to ``|T|``).
    """
    U, sv, _ = np.linalg.svd(data.C)
    null_count = int(np.sum(sv < rel_tol * sv[0]))
    proj = U.conj().T @ data.T_gamma_hat
    rel = float(abs(proj[-1]) / np.linalg.norm(data.T_gamma_hat))
    return ColumnSpaceCheck(
        singular_values=sv,
        null_count=null_count,
        projections=proj,
        relative_last=rel,
        passed=null_count == 1 and rel < rel_tol,
    )


def perturbation_coefficients(blocks: DgBlocks1D, eps: float = 1e-2) -> dict:
    """Leading small-``s~`` coefficients of the admissible modes.

    Richardson-extrapolated differences at ``eps`` and ``eps/2``: ``alpha_1``
    and ``z1`` vary with ``s~^2``, ``alpha_2``, ``z2`` and ``kappa_1`` with
    ``s~``, ``kappa_2`` with ``s~^2``.
    """
    m0 = dg_roots(blocks, 0.0)
    f0 = fd_roots(0.0)

    def diffs(e):
        m = dg_roots(blocks, e)
        f = fd_roots(e)
        return {
            "alpha1_s2": (m.admissible[0] - m0.admissible[0]) / e**2,
            "z1_s2": (m.z[:, 0] - m0.z[:, 0]) / e**2,
            "alpha2_s1": (m.admissible[1] - m0.admissible[1]) / e,
            "z2_s1": (m.z[:, 1] - m0.z[:, 1]) / e,
            "kappa1_s1": (f.kappa[0] - f0.kappa[0]) / e,
            "kappa2_s2": (f.kappa[1] - f0.kappa[1]) / e**2,
        }

    a, b = diffs(eps), diffs(eps / 2)
    # first-order terms carry an O(e) error, second-order ones O(e^2)
    out = {}
    for key in a:
        p = 1 if key.endswith("s1") else 2
        out[key] = np.real_if_close((2**p * b[key] - a[key]) / (2**p - 1), tol=1e6)
    return out


def kappa_bound_ratio(s_tilde: complex) -> float:
    """``(1/(1-|kappa_1|^2)) / (1/(2 Re s~))``; the geometric-series bound needs about 1."""
    s = complex(s_tilde)
    if s.real <= 0:
        raise ValueError("ratio needs Re(s~) > 0")
    k1 = fd_roots(s).kappa[0]
    return float(2 * s.real / (1 - abs(k1) ** 2))


def nma_system(tau: float = NMA_TAU, k: int = 3) -> Hybrid1D:
    """Small ``h = 1`` coupled system whose interface rows feed the analysis."""
    fd = build_sbp((4, 2), 12, 1.0)
    return assemble_hybrid1d(fd, assemble_dg1d_blocks(k, 1.0, tau), 3, tau=tau, allow_unstable=True)


def _cplx(v):
    v = np.asarray(v)
    if np.all(np.abs(v.imag) <= 1e-12 * max(1.0, np.abs(v).max())):
        return v.real.tolist()
    return [[float(x.real), float(x.imag)] for x in v.ravel()]


def nma_report(tau: float = NMA_TAU, s_values=(0.0, 0.1)) -> dict:
    """JSON-ready record of roots, vectors, singular values and the column-space check."""
    sys = nma_system(tau)
    data0 = boundary_system(sys, 0.0)
    chk = column_space_check(data0)
    pert = perturbation_coefficients(sys.dg)
    solves = {}
    for s in s_values:
        if abs(s) < _ZERO:
            continue
        d = boundary_system(sys, s)
        Z = np.linalg.solve(d.C, d.T_gamma_hat)
        solves[str(s)] = {
            "Z_norm": float(np.linalg.norm(Z)),
            "T_norm": float(np.linalg.norm(d.T_gamma_hat)),
            "cond": float(np.linalg.cond(d.C)),
        }
    return {
        "tau": float(tau),
        "fd_roots_s0": _cplx(fd_roots(0.0).roots),
        "kappa_s0": _cplx(data0.kappa),
        "dg_roots_s0": _cplx(data0.alphas),
        "admissible_s0": _cplx(data0.admissible),
        "z_vectors_s0": [_cplx(data0.z_vectors[:, i]) for i in range(4)],
        "perturbation": {k: _cplx(np.atleast_1d(v)) for k, v in pert.items()},
        "T_gamma_hat": data0.T_gamma_hat.tolist(),
        "singular_values_C0": chk.singular_values.tolist(),
        "UT_T": _cplx(chk.projections),
        "null_count": chk.null_count,
        "relative_last_component": chk.relative_last,
        "column_space_condition": bool(chk.passed),
        "solves": solves,
    }
