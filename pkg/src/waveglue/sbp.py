"""Diagonal-norm summation-by-parts second-derivative operators.

An operator of order ``(2p, p)`` is stored through the factors of

.. math::

    D = H^{-1} (-A + e_n d_n^T - e_1 d_1^T),

so that ``g^T H D f = -g^T A f + g_n (d_n^T f) - g_1 (d_1^T f)``. Two operators
are provided, ``(2, 1)`` and ``(4, 2)`` (Mattsson & Nordstrom, 2004). The
closure coefficients are only trusted through the invariants checked in the
test-suite: decomposition identity, exactness orders and definiteness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SbpOperator1D",
    "BorrowingResult",
    "build_sbp",
    "apply_D",
    "borrowing_capacity",
    "psd_threshold",
]


class SbpError(ValueError):
    pass


# rows of h^2 D at the left boundary, norm weights H/h and d_1 h
_CLOSURES = {
    (2, 1): dict(
        width=1,
        interior=np.array([1.0, -2.0, 1.0]),
        rows=np.array([[1.0, -2.0, 1.0]]),
        norm=np.array([0.5]),
        d1=np.array([-1.5, 2.0, -0.5]),
    ),
    (4, 2): dict(
        width=4,
        interior=np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12]),
        rows=np.array(
            [
                [2.0, -5.0, 4.0, -1.0, 0.0, 0.0],
                [1.0, -2.0, 1.0, 0.0, 0.0, 0.0],
                [-4.0 / 43, 59.0 / 43, -110.0 / 43, 59.0 / 43, -4.0 / 43, 0.0],
                [-1.0 / 49, 0.0, 59.0 / 49, -118.0 / 49, 64.0 / 49, -4.0 / 49],
            ]
        ),
        norm=np.array([17.0 / 48, 59.0 / 48, 43.0 / 48, 49.0 / 48]),
        d1=np.array([-11.0 / 6, 3.0, -3.0 / 2, 1.0 / 3]),
    ),
}


@dataclass(frozen=True)
class SbpOperator1D:
    """Second-derivative SBP operator on a uniform grid of ``n`` points.

    Attributes
    ----------
    n : int
        number of grid points.
    h : float
        grid spacing.
    hdiag : ndarray
        diagonal of the norm ``H``.
    A : scipy.sparse.csr_matrix
        symmetric positive semidefinite stiffness part.
    d1, dn : ndarray
        boundary first-derivative functionals at the left and right ends.
    interior_order, boundary_order : int
        ``2p`` and ``p``.
    """

    n: int
    h: float
    hdiag: np.ndarray
    A: sp.csr_matrix
    d1: np.ndarray
    dn: np.ndarray
    interior_order: int
    boundary_order: int
    Dmat: sp.csr_matrix | None = None
    """stencil-table ``D``; ``None`` means it is formed from the factors."""

    @property
    def order(self) -> tuple[int, int]:
        return (self.interior_order, self.boundary_order)

    @property
    def H(self) -> sp.dia_matrix:
        return sp.diags(self.hdiag)

    @property
    def e1(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[0] = 1.0
        return e

    @property
    def en(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e

    def boundary_matrix(self) -> sp.csr_matrix:
        """Return ``e_n d_n^T - e_1 d_1^T`` as a sparse matrix."""
        n = self.n
        rows = np.concatenate([np.full(n, n - 1), np.zeros(n, dtype=int)])
        cols = np.concatenate([np.arange(n), np.arange(n)])
        vals = np.concatenate([self.dn, -self.d1])
        B = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        B.eliminate_zeros()
        return B

    def D(self) -> sp.csr_matrix:
        """Sparse second-derivative matrix (the stencil table when available)."""
        if self.Dmat is not None:
            return self.Dmat
        return (sp.diags(1.0 / self.hdiag) @ (-self.A + self.boundary_matrix())).tocsr()

    def grid(self, x0: float = 0.0) -> np.ndarray:
        return x0 + self.h * np.arange(self.n)


@dataclass(frozen=True)
class BorrowingResult:
    beta: float
    n_used: int
    residual_eig: float


def psd_threshold(M: np.ndarray) -> float:
    """Tolerance ``1e-12 * ||M||_2`` used to call a symmetric matrix PSD."""
    return 1e-12 * np.abs(np.linalg.eigvalsh(M)).max()


def build_sbp(order: tuple[int, int], n: int, h: float) -> SbpOperator1D:
    """Construct the diagonal-norm SBP operator of the given order.

    Parameters
    ----------
    order : tuple
        ``(2, 1)`` or ``(4, 2)``.
    n : int
        number of grid points, at least ``2 * width + 1`` where ``width`` is
        the number of boundary-closure rows.
    h : float
        grid spacing.
    """
    order = tuple(order)
    if order not in _CLOSURES:
        raise SbpError(f"unsupported SBP order {order}; available: {sorted(_CLOSURES)}")
    if h <= 0:
        raise SbpError(f"grid spacing must be positive, got {h}")
    c = _CLOSURES[order]
    width = c["width"]
    n_min = 2 * width + 1
    if n < n_min:
        raise SbpError(f"order {order} needs n >= {n_min} grid points, got {n}")

    hdiag = np.ones(n)
    hdiag[:width] = c["norm"]
    hdiag[n - width:] = c["norm"][::-1]
    hdiag *= h

    st = c["interior"]
    half = len(st) // 2
    Dh2 = sp.lil_matrix((n, n))
    for i in range(width, n - width):
        lo = i - half
        Dh2[i, lo:lo + len(st)] = st
    rows = c["rows"]
    m = rows.shape[1]
    for i in range(width):
        Dh2[i, :m] = rows[i]
        Dh2[n - 1 - i, n - m:] = rows[i][::-1]
    D = Dh2.tocsr() / h**2

    d1 = np.zeros(n)
    d1[: len(c["d1"])] = c["d1"] / h
    dn = np.zeros(n)
    dn[n - len(c["d1"]):] = -c["d1"][::-1] / h

    # A = -H D + e_n d_n^T - e_1 d_1^T
    HD = sp.diags(hdiag) @ D
    B = sp.lil_matrix((n, n))
    B[n - 1, :] = dn
    B[0, :] = B[0, :].toarray() - d1
    A = (-HD + B.tocsr()).tocsr()
    A.eliminate_zeros()
    return SbpOperator1D(
        n=n,
        h=float(h),
        hdiag=hdiag,
        A=A,
        Dmat=D,
        d1=d1,
        dn=dn,
        interior_order=order[0],
        boundary_order=order[1],
    )


def apply_D(op: SbpOperator1D, f: np.ndarray) -> np.ndarray:
    """Apply ``H^{-1}(-A + e_n d_n^T - e_1 d_1^T)`` without forming ``D``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != op.n:
        raise SbpError(f"vector of length {f.shape[0]} does not match operator size {op.n}")
    r = -(op.A @ f)
    r[-1] += op.dn @ f
    r[0] -= op.d1 @ f
    return r / (op.hdiag if f.ndim == 1 else op.hdiag[:, None])


def _reduced_min_eig(op: SbpOperator1D, beta: float) -> tuple[float, float]:
    A = op.A.toarray()
    At = A - beta * op.h * (np.outer(op.d1, op.d1) + np.outer(op.dn, op.dn))
    lam = np.linalg.eigvalsh(At)
    return lam[0], 1e-12 * np.abs(lam).max()


def _bisect_capacity(op: SbpOperator1D, tol: float) -> BorrowingResult:
    def is_psd(beta):
        lam, eps = _reduced_min_eig(op, beta)
        return lam >= -eps

    if not is_psd(tol * 1e-3):
        raise SbpError("A - beta h (d1 d1^T + dn dn^T) is indefinite for beta -> 0+; not an SBP operator")
    lo, hi = 0.0, 1.0
    while is_psd(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise SbpError("borrowing capacity unbounded; boundary functionals vanish")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_psd(mid):
            lo = mid
        else:
            hi = mid
    lam, _ = _reduced_min_eig(op, lo)
    return BorrowingResult(beta=lo, n_used=op.n, residual_eig=lam)


def borrowing_capacity(op: SbpOperator1D, tol: float = 1e-8, verify: bool = True) -> BorrowingResult:
    """Largest ``beta`` with ``A - beta h (d1 d1^T + dn dn^T)`` positive semidefinite.

    Bisection on ``beta`` with a symmetric-eigenvalue PSD test. With
    ``verify`` the value is recomputed with ``2n`` points and with the spacing
    doubled; a discrepancy larger than ``tol`` raises, since the capacity must
    not depend on either.
    """
    if not 0 < tol <= 1e-3:
        raise SbpError(f"tolerance must lie in (0, 1e-3], got {tol}")
    res = _bisect_capacity(op, tol)
    if verify:
        order = op.order
        other_n = _bisect_capacity(build_sbp(order, 2 * op.n, op.h / 2), tol)
        other_h = _bisect_capacity(build_sbp(order, op.n, 2 * op.h), tol)
        for other, what in ((other_n, "2n"), (other_h, "2h")):
            if abs(other.beta - res.beta) > 2 * tol:
                raise SbpError(
                    f"borrowing capacity not converged: {res.beta} vs {other.beta} at {what}"
                )
    return res
