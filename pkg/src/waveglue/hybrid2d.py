"""Coupled 2D scheme: SBP finite differences above ``y = y_G``, SIPG below.

Unknowns are ``z = [w; u]`` with ``w`` on an ``n x n`` grid (index
``i * n + j``, ``x`` index ``i``, ``y`` index ``j`` fastest, ``j = 0`` on the
interface) and ``u`` the DG coefficients. Everything is assembled in
weighted form ``Ht Q`` with ``Ht = diag(H x H, M)``; ``Q = Ht^{-1} (Ht Q)``.

Interface terms, with ``J_w = w_G - Pg_u2w u_G`` and ``J_u = Pg_w2u w_G - u_G``::

    fd1 =  1/2 b1 d_G H J_w
    fd2 = -1/2 e_G H (b1 d_G^T w + b2 Pb_u2w u_Gn)
    fd3 = -(b1 tau_w / h1) e_G H J_w
    fd4 = -b2 sigma_w e_G H Pb_u2w D_{1/h} J_u
    dg1 = -1/2 b2 N^T M_G J_u
    dg2 =  1/2 E^T M_G (b2 N u - b1 Pb_w2u d_G^T w)
    dg3 =  b2 tau_u E^T M_h J_u
    dg4 =  (b1 sigma_u / h1) E^T M_G Pb_w2u J_w

``P*_u2w`` come from the DG -> FD operators and ``P*_w2u`` from the FD -> DG
ones; the good operators act on solution jumps and the bad ones on fluxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hybrid1d import StabilityError, _capacity
from .ipdg2d import DgOperator2D, DgSpace2D, assemble_ipdg
from .mesh2d import TriMesh
from .projection import ProjectionPair, build_projection_pair
from .sbp import SbpOperator1D, build_sbp

__all__ = [
    "SAT_GROUPS",
    "Hybrid2D",
    "assemble_hybrid2d",
    "build_hybrid2d",
    "energy2d",
    "sat_truncation_survey",
    "TruncationSurvey",
    "fd_edge_mask",
]

SAT_GROUPS = ("fd1", "fd2", "fd3", "fd4", "dg1", "dg2", "dg3", "dg4")


@dataclass(frozen=True)
class Hybrid2D:
    """Assembled coupled system ``z_tt = Q z + g(t)``.

    ``sats`` holds each interface term as a weighted matrix acting on ``z``;
    ``HQ`` is the full weighted matrix and ``Ht`` the weight.
    """

    fd: SbpOperator1D
    dg: DgOperator2D
    pair1: ProjectionPair = field(repr=False)
    pair2: ProjectionPair = field(repr=False)
    b1: float
    b2: float
    tau_w: float
    sigma_w: float
    tau_u: float
    sigma_u: float
    tau_bc: float
    beta: float
    x0: float
    y0: float
    Q: sp.csr_matrix = field(repr=False)
    HQ: sp.csr_matrix = field(repr=False)
    Ht: sp.csr_matrix = field(repr=False)
    sats: dict = field(repr=False)
    fd_bc: dict = field(repr=False)

    @property
    def n(self) -> int:
        return self.fd.n

    @property
    def nfd(self) -> int:
        return self.fd.n**2

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    @property
    def h1(self) -> float:
        return self.fd.h

    def fd_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.x0 + self.fd.grid()
        y = self.y0 + self.fd.grid()
        X, Y = np.meshgrid(x, y, indexing="ij")
        return X.ravel(), Y.ravel()

    def coordinates(self) -> np.ndarray:
        """Positions of all unknowns, FD points first."""
        X, Y = self.fd_coordinates()
        return np.vstack([np.column_stack([X, Y]), self.dg.node_coordinates()])

    def sample(self, f_fd, f_dg=None) -> np.ndarray:
        """Pointwise state from ``f_fd(x, y)`` above and ``f_dg`` (default same) below."""
        X, Y = self.fd_coordinates()
        w = np.asarray(f_fd(X, Y), dtype=float) * np.ones(X.size)
        u = self.dg.interpolate(f_dg or f_fd) * np.ones(self.dg.ndof)
        return np.concatenate([w, u])

    def forcing(self, g_fd, g_dg=None) -> np.ndarray:
        """Boundary forcing ``Ht^{-1} (...)`` for Dirichlet data on the outer boundary.

        ``g_fd(x, y)`` is sampled on the left, right and top FD edges and
        ``g_dg`` (default ``g_fd``) at the DG boundary quadrature points.
        """
        n, h = self.n, self.h1
        xs = self.x0 + self.fd.grid()
        ys = self.y0 + self.fd.grid()
        gl = np.asarray(g_fd(np.full(n, xs[0]), ys), dtype=float) * np.ones(n)
        gr = np.asarray(g_fd(np.full(n, xs[-1]), ys), dtype=float) * np.ones(n)
        gt = np.asarray(g_fd(xs, np.full(n, ys[-1])), dtype=float) * np.ones(n)
        B = self.fd_bc
        f = B["left"] @ gl + B["right"] @ gr + B["top"] @ gt
        u = self.dg.forcing(g_dg or g_fd)
        Hw = np.kron(self.fd.hdiag, self.fd.hdiag)
        return np.concatenate([f / Hw, self.dg.Minv @ u])

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        return z[: self.nfd], z[self.nfd:]


def _fd_block(fd: SbpOperator1D, b1: float, tau_bc: float):
    """Weighted FD operator with Dirichlet SATs on left, right and top; bottom untouched."""
    n, h = fd.n, fd.h
    H = sp.diags(fd.hdiag)
    e1, en, d1, dn = fd.e1, fd.en, fd.d1, fd.dn
    core = -fd.A + fd.boundary_matrix()
    Lx = (
        core
        - sp.csr_matrix(np.outer(d1, e1)) - (tau_bc / h) * sp.csr_matrix(np.outer(e1, e1))
        + sp.csr_matrix(np.outer(dn, en)) - (tau_bc / h) * sp.csr_matrix(np.outer(en, en))
    )
    Ly = core + sp.csr_matrix(np.outer(dn, en)) - (tau_bc / h) * sp.csr_matrix(np.outer(en, en))
    HQ = b1 * (sp.kron(Lx, H) + sp.kron(H, Ly))
    bc = {
        "left": b1 * sp.kron(sp.csr_matrix((d1 + tau_bc / h * e1)[:, None]), H).tocsr(),
        "right": b1 * sp.kron(sp.csr_matrix((tau_bc / h * en - dn)[:, None]), H).tocsr(),
        "top": b1 * sp.kron(H, sp.csr_matrix((tau_bc / h * en - dn)[:, None])).tocsr(),
    }
    return HQ.tocsr(), bc


def assemble_hybrid2d(
    fd: SbpOperator1D,
    dg: DgOperator2D,
    b1: float = 1.0,
    x0: float = 0.0,
    tau_w: float | None = None,
    tau_bc: float | None = None,
    allow_unstable: bool = False,
    swap_pairs: bool = False,
) -> Hybrid2D:
    """Couple an ``n x n`` SBP grid (lower-left corner ``(x0, y_G)``) to a DG operator.

    Parameters
    ----------
    fd : SbpOperator1D
        1D operator used in both directions.
    dg : DgOperator2D
        DG operator assembled with interface faces left open; its ``tau_u``
        is used as ``sigma_w``.
    tau_w : float, optional
        FD interface penalty, also ``sigma_u``; default ``1.1 / (4 beta)``.
    tau_bc : float, optional
        FD Dirichlet penalty; default ``1.1 / beta``.
    swap_pairs : bool
        use the bad operators on jumps and the good ones on fluxes.
    """
    if dg.iface is None:
        raise ValueError("DG operator has no open interface faces")
    b2 = dg.b2
    beta = _capacity(fd.order)
    h1 = fd.h
    if tau_w is None:
        tau_w = 1.1 / (4.0 * beta)
    if tau_bc is None:
        tau_bc = 1.1 / beta
    if not allow_unstable:
        if tau_w < (1.0 / (4.0 * beta)) * (1 - 1e-12):
            raise StabilityError(f"tau_w = {tau_w} is below the bound 1/(4 beta) = {1 / (4 * beta):.6g}")
        if tau_bc < (1.0 / beta) * (1 - 1e-12):
            raise StabilityError(f"FD boundary penalty {tau_bc} below 1/beta = {1 / beta:.6g}")
        if dg.tau_u < (1.0 / dg.C_tr) * (1 - 1e-12):
            raise StabilityError(f"tau_u = {dg.tau_u} is below the bound 1/C_tr = {1 / dg.C_tr:.6g}")
    sigma_u, sigma_w, tau_u = tau_w, dg.tau_u, dg.tau_u
    tr = dg.iface
    y0 = dg.mesh.y_interface
    xs = x0 + fd.grid()
    p1 = build_projection_pair(xs, tr.breakpoints, "pair1")
    p2 = build_projection_pair(xs, tr.breakpoints, "pair2")
    Pg_u2w, Pb_w2u = p1.P_d2f, p1.P_f2d
    Pg_w2u, Pb_u2w = p2.P_f2d, p2.P_d2f
    if swap_pairs:
        Pg_u2w, Pb_u2w = Pb_u2w, Pg_u2w
        Pg_w2u, Pb_w2u = Pb_w2u, Pg_w2u

    n = fd.n
    nf, nd = n * n, dg.ndof
    I = sp.identity(n, format="csr")
    Hx = sp.diags(fd.hdiag)
    eG = sp.kron(I, sp.csr_matrix(fd.e1[:, None])).tocsr()  # nf x n
    dG = -sp.kron(I, sp.csr_matrix(fd.d1[:, None])).tocsr()
    E, N, MG, Mh = tr.E, tr.N, tr.M, tr.M_h
    nb = E.shape[0] // tr.faces.size
    Dh = sp.diags(np.repeat(1.0 / tr.h, nb))

    Jw = sp.hstack([eG.T, -Pg_u2w @ E])
    Ju = sp.hstack([Pg_w2u @ eG.T, -E])
    rows_f = lambda B: sp.vstack([B, sp.csr_matrix((nd, nf + nd))])  # noqa: E731
    rows_d = lambda B: sp.vstack([sp.csr_matrix((nf, nf + nd)), B])  # noqa: E731
    sats = {
        "fd1": rows_f(0.5 * b1 * dG @ Hx @ Jw),
        "fd2": rows_f(-0.5 * eG @ Hx @ sp.hstack([b1 * dG.T, b2 * Pb_u2w @ N])),
        "fd3": rows_f(-(b1 * tau_w / h1) * eG @ Hx @ Jw),
        "fd4": rows_f(-b2 * sigma_w * eG @ Hx @ Pb_u2w @ Dh @ Ju),
        "dg1": rows_d(-0.5 * b2 * N.T @ MG @ Ju),
        "dg2": rows_d(0.5 * E.T @ MG @ sp.hstack([-b1 * Pb_w2u @ dG.T, b2 * N])),
        "dg3": rows_d(b2 * tau_u * E.T @ Mh @ Ju),
        "dg4": rows_d((b1 * sigma_u / h1) * E.T @ MG @ Pb_w2u @ Jw),
    }
    sats = {k: sp.csr_matrix(v) for k, v in sats.items()}

    HQf, bc = _fd_block(fd, b1, tau_bc)
    HQ = sp.block_diag([HQf, dg.K]).tocsr()
    for v in sats.values():
        HQ = HQ + v
    HQ = HQ.tocsr()
    HQ.eliminate_zeros()
    Hw = np.kron(fd.hdiag, fd.hdiag)
    Ht = sp.block_diag([sp.diags(Hw), dg.M]).tocsr()
    Htinv = sp.block_diag([sp.diags(1.0 / Hw), dg.Minv]).tocsr()
    Q = (Htinv @ HQ).tocsr()
    return Hybrid2D(
        fd=fd, dg=dg, pair1=p1, pair2=p2, b1=float(b1), b2=float(b2),
        tau_w=float(tau_w), sigma_w=float(sigma_w), tau_u=float(tau_u), sigma_u=float(sigma_u),
        tau_bc=float(tau_bc), beta=beta, x0=float(x0), y0=float(y0),
        Q=Q, HQ=HQ, Ht=Ht, sats=sats, fd_bc=bc,
    )


def build_hybrid2d(
    n: int,
    mesh: TriMesh,
    b1: float = 1.0,
    b2: float = 0.25,
    tau_w: float | None = None,
    tau_u: float | None = None,
    tau_bc: float | None = None,
    allow_unstable: bool = False,
    swap_pairs: bool = False,
    degree: int = 3,
) -> Hybrid2D:
    """Square FD block ``n x n`` sitting on the interface edge of ``mesh``."""
    x0, x1, _, _ = mesh.bounding_box()
    fd = build_sbp((4, 2), n, (x1 - x0) / (n - 1))
    dg = assemble_ipdg(DgSpace2D(degree), mesh, b2=b2, tau_u=tau_u, allow_unstable=allow_unstable)
    return assemble_hybrid2d(fd, dg, b1, x0, tau_w, tau_bc, allow_unstable, swap_pairs)


def energy2d(sys: Hybrid2D, z: np.ndarray, zt: np.ndarray) -> float:
    """Semidiscrete energy ``zt^T Ht zt - z^T (Ht Q) z`` (twice the physical one)."""
    return float(zt @ (sys.Ht @ zt) - z @ (sys.HQ @ z))


def fd_edge_mask(sys: Hybrid2D, width: int = 6) -> np.ndarray:
    """Interface FD columns touched by a projection closure."""
    i = np.arange(sys.n)
    return (i < width) | (i >= sys.n - width)


@dataclass(frozen=True)
class TruncationSurvey:
    """Max residual per group and row class over a sweep.

    ``order`` is the rate between the two finest levels and ``fit`` the
    least-squares slope over all levels.
    """

    h: np.ndarray
    residual: dict
    order: dict
    fit: dict

    def rows(self) -> list[tuple[str, str, float]]:
        return [(g, c, self.order[g][c]) for g in self.order for c in ("interior", "edge")]


def sat_truncation_survey(
    systems, U, t: float = 0.0, groups=("fd1", "fd2", "fd3", "fd4"), fd_width: int = 6, dg_width: float = 10.0
) -> TruncationSurvey:
    """Evaluate interface terms on exact data and measure their decay in ``h``.

    ``U(x, y, t)`` must satisfy both interface conditions. Each term is
    applied to the sampled exact state and scaled by ``Ht^{-1}``. FD rows are
    split by interface column into the ``fd_width`` columns at each end
    (``edge``) and the rest; DG rows by whether their node lies within
    ``dg_width * h1`` of an end. For ``dg2`` the consistency part
    ``b2 E^T M_G N u`` is removed so that only the flux mismatch remains.
    """
    hs, res = [], {g: {"interior": [], "edge": []} for g in groups}
    for sys in systems:
        z = sys.sample(lambda x, y: U(x, y, t))
        Hw = np.kron(sys.fd.hdiag, sys.fd.hdiag)
        edge = fd_edge_mask(sys, fd_width)
        X = sys.dg.node_coordinates()[:, 0]
        near = (X < sys.x0 + dg_width * sys.h1) | (X > sys.x0 + (sys.n - 1 - dg_width) * sys.h1)
        hs.append(sys.h1)
        for g in groups:
            r = sys.sats[g] @ z
            if g == "dg2":
                tr = sys.dg.iface
                r[sys.nfd:] -= sys.b2 * (tr.E.T @ (tr.M @ (tr.N @ z[sys.nfd:])))
            if g.startswith("fd"):
                v = np.abs(r[: sys.nfd] / Hw).reshape(sys.n, sys.n).max(axis=1)
                res[g]["interior"].append(v[~edge].max())
                res[g]["edge"].append(v[edge].max())
            else:
                v = np.abs(sys.dg.Minv @ r[sys.nfd:])
                touched = np.abs(sys.dg.Minv @ np.abs(sys.sats[g][sys.nfd:]).sum(axis=1).A1) > 0
                res[g]["interior"].append(v[touched & ~near].max())
                res[g]["edge"].append(v[touched & near].max())
    h = np.array(hs)
    order, fit = {}, {}
    for g in groups:
        order[g], fit[g] = {}, {}
        for c in ("interior", "edge"):
            y = np.log(np.array(res[g][c]))
            if h.size > 1:
                order[g][c] = float((y[-2] - y[-1]) / np.log(h[-2] / h[-1]))
                fit[g][c] = float(np.polyfit(np.log(h), y, 1)[0])
            else:
                order[g][c] = fit[g][c] = float("nan")
    return TruncationSurvey(h, res, order, fit)
