"""Coupled SBP finite difference / interior penalty DG scheme in one dimension.

The finite difference grid covers ``[-L, 0]`` with its last point on the
interface ``x = 0``; ``m`` DG elements of the same length ``h`` cover
``[0, L]``. The unknown vector is ``z = [w; u]`` and the semidiscretization
``z_tt = Q z + g(t)`` conserves ``E_h = z_t^T Ht z_t - z^T Ht Q z`` with
``Ht = diag(H, M)``.

Interface coupling on the FD side, with ``u`` and ``u_x`` the trace and
derivative of the first DG element at ``x = 0``::

    w_tt = D w - 1/2 H^-1 e_n (d_n^T w - u_x) + 1/2 H^-1 d_n (e_n^T w - u)
               - tau/h H^-1 e_n (e_n^T w - u)

and on the DG side the neighbour of element 1 is the FD solution, with
value ``e_n^T w`` and derivative ``d_n^T w``. Outer ends are Dirichlet:
symmetric SAT on the FD side, SIPG with penalty ``2 tau`` on the DG side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dg1d import DgBlocks1D, reference_data
from .sbp import SbpOperator1D, borrowing_capacity, build_sbp

__all__ = [
    "InverseConstant",
    "Hybrid1D",
    "inverse_constant",
    "assemble_hybrid1d",
    "energy",
    "interface_stencil",
    "truncation_interface",
    "interface_moments",
    "stencil_points",
    "stability_threshold",
]


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class InverseConstant:
    """Largest ``beta_inv`` with ``(u_x, u_x)_I >= beta_inv h (u_x(left)^2 + u_x(right)^2)``.

    ``extremal`` holds reference nodal values of a polynomial attaining
    equality.
    """

    beta_inv: float
    degree: int
    extremal: np.ndarray


def inverse_constant(k: int = 3, h: float = 1.0) -> InverseConstant:
    """Generalized eigenvalue problem between the element stiffness and the end-derivative form.

    The pencil is restricted to the orthogonal complement of the constants,
    where the stiffness is definite. The constant is returned after the
    ``h``-scaling, so that any ``h`` gives the same value.
    """
    if k < 1:
        raise ValueError(f"degree must be at least 1, got {k}")
    ref = reference_data(k)
    K = ref["K"] / h
    gL, gR = ref["gL"] / h, ref["gR"] / h
    B = np.outer(gL, gL) + np.outer(gR, gR)
    n = k + 1
    Z = sla.null_space(np.ones((1, n)))
    mu, V = sla.eigh(Z.T @ B @ Z, Z.T @ K @ Z)
    # (u_x,u_x) >= beta h B[u]  <=>  beta = 1 / (h * max B[u]/(u_x,u_x))
    beta_inv = 1.0 / (h * mu[-1])
    return InverseConstant(beta_inv=float(beta_inv), degree=k, extremal=Z @ V[:, -1])


@lru_cache(maxsize=None)
def _capacity(order: tuple) -> float:
    # h-independent; a moderate grid is enough for the bisection
    return borrowing_capacity(build_sbp(order, 40, 1.0), tol=1e-10, verify=False).beta


def stability_threshold(beta: float, beta_inv: float, rule: str = "min") -> float:
    """Smallest ``tau`` allowed by the energy estimate, ``1 / (2 beta_tilde)``.

    ``rule`` picks ``beta_tilde``: ``"min"`` is ``min(beta, beta_inv)`` and
    ``"max"`` is ``max(beta, beta_inv)``; only ``min`` covers both the
    interface and the DG inter-element faces (see the tests).
    """
    if rule == "min":
        bt = min(beta, beta_inv)
    elif rule == "max":
        bt = max(beta, beta_inv)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return 1.0 / (2.0 * bt)


@dataclass(frozen=True)
class Hybrid1D:
    """Assembled 1D coupled system.

    Attributes
    ----------
    fd : SbpOperator1D
        operator on the FD grid, ``n`` points, interface at index ``n-1``.
    dg : DgBlocks1D
        interior blocks of the DG side.
    m : int
        number of DG elements.
    tau, tau_fd_bc, tau_dg_bc : float
        interface/inter-element penalty and the two outer Dirichlet penalties.
    beta, beta_inv, beta_tilde : float
        borrowing capacity, inverse constant and the combined constant.
    Q : scipy.sparse.csr_matrix
        system matrix.
    M : scipy.sparse.csr_matrix
        block-diagonal DG mass; the property ``Ht`` is ``diag(H, M)``.
    bc_left, bc_right : ndarray
        forcing vectors multiplying the Dirichlet data at ``-L`` and ``L``.
    iface_rows : ndarray
        FD rows ``n-4..n-1`` and the four nodes of the first DG element.
    """

    fd: SbpOperator1D
    dg: DgBlocks1D
    m: int
    tau: float
    tau_fd_bc: float
    tau_dg_bc: float
    beta: float
    beta_inv: float
    beta_tilde: float
    Q: sp.csr_matrix
    M: sp.csr_matrix
    bc_left: np.ndarray
    bc_right: np.ndarray
    iface_rows: np.ndarray

    @property
    def n(self) -> int:
        return self.fd.n

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    @property
    def Ht(self) -> sp.csr_matrix:
        return sp.block_diag([self.fd.H, self.M]).tocsr()

    def coordinates(self) -> np.ndarray:
        """Positions of all unknowns: FD grid then DG Lagrange nodes."""
        h = self.fd.h
        xf = -h * np.arange(self.n - 1, -1, -1)
        r = np.arange(self.dg.k + 1) / self.dg.k
        xd = (h * (np.arange(self.m)[:, None] + r[None, :])).ravel()
        return np.concatenate([xf, xd])

    def forcing(self, g_left: float, g_right: float) -> np.ndarray:
        return self.bc_left * g_left + self.bc_right * g_right


def assemble_hybrid1d(
    fd: SbpOperator1D,
    dg: DgBlocks1D,
    m: int,
    tau: float | None = None,
    tau_fd_bc: float | None = None,
    allow_unstable: bool = False,
) -> Hybrid1D:
    """Assemble ``Q`` for the coupled FD-DG scheme with Dirichlet outer ends.

    Parameters
    ----------
    fd : SbpOperator1D
        FD operator; its spacing must equal the DG element length.
    dg : DgBlocks1D
        DG blocks; only ``k`` and ``h`` are used, ``tau`` is overridden by
        the ``tau`` argument when given.
    m : int
        number of DG elements, at least 2.
    tau : float, optional
        interface and inter-element penalty; default ``1.1 / (2 beta_tilde)``.
    tau_fd_bc : float, optional
        FD Dirichlet penalty; default ``1.1 / beta``.
    allow_unstable : bool
        permit penalties below the energy-stability bounds.
    """
    h = fd.h
    if not np.isclose(dg.h, h, rtol=1e-12):
        raise ValueError(f"FD spacing {h} and DG element length {dg.h} differ")
    if m < 2:
        raise ValueError(f"need at least 2 DG elements, got {m}")
    k = dg.k
    nb = k + 1
    beta = _capacity(fd.order)
    beta_inv = inverse_constant(k).beta_inv
    beta_tilde = min(beta, beta_inv)
    tmin = stability_threshold(beta, beta_inv)
    if tau is None:
        tau = 1.1 * tmin
    if tau_fd_bc is None:
        tau_fd_bc = 1.1 / beta
    if not allow_unstable:
        if tau < tmin * (1 - 1e-12):
            raise StabilityError(
                f"tau = {tau} is below the energy bound 1/(2 beta_tilde) = {tmin:.6g}"
            )
        if tau_fd_bc < (1.0 / beta) * (1 - 1e-12):
            raise StabilityError(f"FD boundary penalty {tau_fd_bc} below 1/beta = {1 / beta:.6g}")
    tau_dg_bc = 2.0 * tau

    n = fd.n
    N = n + m * nb
    ref = reference_data(k)
    Mr, K, gL, gR = ref["M"], ref["K"], ref["gL"], ref["gR"]
    Mrinv = np.linalg.inv(Mr)
    e1 = np.zeros(nb)
    e1[0] = 1.0
    ek = np.zeros(nb)
    ek[-1] = 1.0

    # H-weighted FD rows: -A + e_n d_n^T - e_1 d_1^T + SATs
    HQ_ff = (-fd.A + fd.boundary_matrix()).tolil()
    HQ_ff[:, 0] = HQ_ff[:, 0].toarray() - fd.d1[:, None]
    HQ_ff[0, 0] -= tau_fd_bc / h
    # interface: -1/2 e_n d_n^T + 1/2 d_n e_n^T - tau/h e_n e_n^T on w
    HQ_ff[n - 1, :] = HQ_ff[n - 1, :].toarray() - 0.5 * fd.dn
    HQ_ff[:, n - 1] = HQ_ff[:, n - 1].toarray() + 0.5 * fd.dn[:, None]
    HQ_ff[n - 1, n - 1] -= tau / h
    # coupling to u and u_x of element 1
    HQ_fd = np.zeros((n, nb))
    HQ_fd[n - 1, :] += 0.5 * gL / h + (tau / h) * e1
    HQ_fd -= 0.5 * np.outer(fd.dn, e1)

    Q = sp.lil_matrix((N, N))
    Hinv = 1.0 / fd.hdiag
    Q[:n, :n] = sp.diags(Hinv) @ HQ_ff.tocsr()
    Q[:n, n:n + nb] = Hinv[:, None] * HQ_fd

    A1 = -0.5 * np.outer(e1, gR) + 0.5 * np.outer(gL, ek) + tau * np.outer(e1, ek)
    A2 = (
        -K
        + 0.5 * np.outer(ek, gR) + 0.5 * np.outer(gR, ek) - tau * np.outer(ek, ek)
        - 0.5 * np.outer(e1, gL) - 0.5 * np.outer(gL, e1) - tau * np.outer(e1, e1)
    )
    A3 = 0.5 * np.outer(ek, gL) - 0.5 * np.outer(gR, e1) + tau * np.outer(ek, e1)
    # right Dirichlet face: full flux and penalty tau_dg_bc
    A2_last = A2 + 0.5 * np.outer(ek, gR) + 0.5 * np.outer(gR, ek) - (tau_dg_bc - tau) * np.outer(ek, ek)
    D1, D2, D3, D2_last = (Mrinv @ X / h**2 for X in (A1, A2, A3, A2_last))
    for e in range(m):
        r = n + e * nb
        Q[r:r + nb, r:r + nb] = D2_last if e == m - 1 else D2
        if e > 0:
            Q[r:r + nb, r - nb:r] = D1
        if e < m - 1:
            Q[r:r + nb, r + nb:r + 2 * nb] = D3
    # element 1 sees the FD solution as its left neighbour:
    # A1 u0 with gR.u0 -> h d_n^T w and u0[-1] -> e_n^T w
    r = n
    C = np.outer(-0.5 * e1, h * fd.dn)
    C[:, n - 1] += 0.5 * gL + tau * e1
    Q[r:r + nb, :n] = Mrinv @ C / h**2

    bc_left = np.zeros(N)
    bc_left[:n] = Hinv * (fd.d1 + (tau_fd_bc / h) * fd.e1)
    bc_right = np.zeros(N)
    bc_right[N - nb:] = Mrinv @ (-gR + tau_dg_bc * ek) / h**2

    Mblk = sp.block_diag([h * Mr] * m).tocsr()
    iface = np.concatenate([np.arange(n - 4, n), np.arange(n, n + nb)])
    return Hybrid1D(
        fd=fd,
        dg=dg,
        m=m,
        tau=float(tau),
        tau_fd_bc=float(tau_fd_bc),
        tau_dg_bc=float(tau_dg_bc),
        beta=beta,
        beta_inv=beta_inv,
        beta_tilde=beta_tilde,
        Q=Q.tocsr(),
        M=Mblk,
        bc_left=bc_left,
        bc_right=bc_right,
        iface_rows=iface,
    )


def energy(z: np.ndarray, zt: np.ndarray, sys: Hybrid1D) -> float:
    """Discrete energy written term by term.

    Kinetic part, FD stiffness ``w^T A w``, DG element stiffness, and the
    flux/penalty terms at the interface, between DG elements and at the two
    Dirichlet ends. For homogeneous data it equals
    ``zt^T Ht zt - z^T Ht Q z``.
    """
    z = np.asarray(z, dtype=float)
    zt = np.asarray(zt, dtype=float)
    if z.shape != (sys.size,) or zt.shape != (sys.size,):
        raise ValueError(f"state vectors must have length {sys.size}")
    fd, h, n, k = sys.fd, sys.fd.h, sys.n, sys.dg.k
    nb = k + 1
    ref = reference_data(k)
    w, u = z[:n], z[n:].reshape(sys.m, nb)
    E = float(zt @ (sys.Ht @ zt))
    E += float(w @ (fd.A @ w))
    E += float(np.einsum("ei,ij,ej->", u, ref["K"], u)) / h
    ux_l = u @ ref["gL"] / h
    ux_r = u @ ref["gR"] / h
    # interface: jump e_n w - u(0), average of derivatives
    jump = w[-1] - u[0, 0]
    E += -jump * (fd.dn @ w + ux_l[0]) + sys.tau / h * jump**2
    # inter-element faces
    jumps = u[:-1, -1] - u[1:, 0]
    E += float(np.sum(-jumps * (ux_r[:-1] + ux_l[1:]) + sys.tau / h * jumps**2))
    # Dirichlet ends with zero data
    E += 2.0 * w[0] * (fd.d1 @ w) + sys.tau_fd_bc / h * w[0] ** 2
    E += -2.0 * u[-1, -1] * ux_r[-1] + sys.tau_dg_bc / h * u[-1, -1] ** 2
    return E


def interface_stencil(sys: Hybrid1D) -> np.ndarray:
    """Rows of ``h^2 Q`` for FD points x4, x3, x2, x1 and the first DG element.

    Columns are FD points x6..x1 followed by the nodes of DG elements 1 and
    2, where x1 is the interface point and x_j lies ``j-1`` spacings away.
    """
    n, nb = sys.n, sys.dg.k + 1
    cols = np.concatenate([np.arange(n - 6, n), np.arange(n, n + 2 * nb)])
    return (sys.Q[sys.iface_rows][:, cols].toarray()) * sys.fd.h**2


def stencil_points(k: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit-spacing positions of the 14 stencil columns and the 8 interface rows."""
    r = np.arange(k + 1) / k
    cols = np.concatenate([-np.arange(5, -1, -1.0), r, 1.0 + r])
    rows = np.concatenate([-np.arange(3, -1, -1.0), r])
    return cols, rows


def interface_moments(sys: Hybrid1D, q: int = 4) -> np.ndarray:
    """Exact coefficient of ``h^(q-2) f^(q)(0)`` in the interface truncation error.

    Taylor expansion about the interface point: the stencil applied to
    ``x^q/q!`` minus the second derivative ``x^(q-2)/(q-2)!`` at the row points.
    """
    if q < 2:
        raise ValueError(f"q must be at least 2, got {q}")
    xc, xr = stencil_points(sys.dg.k)
    S = interface_stencil(sys)
    return S @ xc**q / math.factorial(q) - xr ** (q - 2) / math.factorial(q - 2)


def truncation_interface(sys: Hybrid1D, f, hs: np.ndarray | None = None):
    """Fit the ``h^2`` truncation coefficients of the eight interface rows.

    The interface rows of ``h^2 Q`` do not depend on ``h``; they are applied,
    rescaled by ``1/h^2``, to samples of ``f`` around ``x = 0`` over a
    refinement sweep. ``f(x, m)`` is the ``m``-th derivative. Returns a
    :class:`~waveglue.dg1d.TruncationFit` whose first coefficient row
    multiplies ``h^2`` times the fourth derivative at 0.
    """
    from .dg1d import fit_truncation

    S = interface_stencil(sys)
    x_ref, row_pts = stencil_points(sys.dg.k)
    if hs is None:
        hs = 0.5 ** np.arange(1, 7)

    def residual(h):
        return S @ f(h * x_ref, 0) / h**2 - f(h * row_pts, 2)

    def at_origin(h):
        return np.zeros(row_pts.size)

    return fit_truncation(residual, at_origin, f, ((2, 4), (3, 5)), hs, extra_powers=(4, 5))
