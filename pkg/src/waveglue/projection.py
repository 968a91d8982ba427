"""Norm-compatible transfer operators between FD grid values and DG traces.

Pointwise values on a uniform FD grid ``x_f`` are mapped to a discontinuous
cubic piecewise polynomial on the mesh ``T_p`` whose breakpoints are the FD
points (``P_f2p``). From there the function is moved without loss to the glue
mesh ``T_g`` (``P_p2g``) and onto the DG faces ``T_d`` by L2 projection
(``P_g2d``). The reverse chain ends with ``P_p2f = H^-1 (M_p P_f2p)^T``, so
every stage, and hence the composition, satisfies

.. math::

    H P_{d2f} = (M_d P_{f2d})^T.

Only the ``P_f2p`` stencils carry free coefficients. They are fixed by
polynomial exactness of both ``P_f2p`` and ``P_p2f``: a centred
translation-invariant interior stencil and one-sided closures at the two
ends. The closures of one pair cannot both be exact to degree ``p``; a *good*
operator reaches degree ``p`` at the edges and its partner degree ``p - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dg1d import LagrangeBasis1D, local_mass
from .sbp import _CLOSURES

__all__ = [
    "ProjectionError",
    "GlueMesh",
    "F2PPair",
    "ProjectionPair",
    "AccuracyReport",
    "build_glue_mesh",
    "piecewise_mass",
    "build_basis_transfer",
    "build_f2p_pair",
    "compose_fd_dg",
    "build_projection_pair",
    "verify_accuracy",
    "compatibility_residual",
    "FLAVORS",
]

# flavor -> (edge degree of P_f2p, edge degree of P_p2f) in units of p
FLAVORS = {
    "good_d2f": (-1, 0),
    "good_f2d": (0, -1),
    "good_both": (0, 0),
    "bad_both": (-1, -1),
}
PAIR_FLAVOR = {"pair1": "good_d2f", "pair2": "good_f2d"}

# interior stencil half-width (points e-s .. e+1+s feed element e) and
# closure size: CLOSURE_ELEMENTS elements per end, CLOSURE_COLUMNS grid points
STENCIL_HALF_WIDTH = 2
CLOSURE_ELEMENTS = 3
CLOSURE_COLUMNS = 6


class ProjectionError(ValueError):
    """Raised for inconsistent meshes or an infeasible accuracy system."""

    def __init__(self, msg, rank=None, residual=None):
        super().__init__(msg)
        self.rank = rank
        self.residual = residual


@dataclass(frozen=True)
class GlueMesh:
    """Breakpoints of a 1D mesh carrying discontinuous degree-``degree`` polynomials."""

    breakpoints: np.ndarray
    degree: int = 3

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise ProjectionError("a mesh needs at least two breakpoints")
        if np.any(np.diff(b) <= 0):
            raise ProjectionError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", b)

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def ndof(self) -> int:
        return self.n_elements * (self.degree + 1)

    def nodes(self) -> np.ndarray:
        """Lagrange node positions, element by element."""
        r = LagrangeBasis1D(self.degree).nodes
        return (self.breakpoints[:-1, None] + self.lengths[:, None] * r).ravel()

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.nodes()), dtype=float)

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Element index containing each point (right end belongs to the last element)."""
        e = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(e, 0, self.n_elements - 1)


def _merge_tol(points, merge_tol):
    if merge_tol is None:
        return 1e-12 * (points[-1] - points[0])
    return merge_tol


def build_glue_mesh(fd_points, dg_breaks, merge_tol=None, degree: int = 3) -> GlueMesh:
    """Sorted union of FD grid points and DG breakpoints.

    Points closer than ``merge_tol`` to an FD point are dropped in favour of
    the FD coordinate. The default tolerance is ``1e-12`` times the
    interface length.
    """
    f = np.sort(np.asarray(fd_points, dtype=float))
    d = np.sort(np.asarray(dg_breaks, dtype=float))
    tol = _merge_tol(f, merge_tol)
    if abs(f[0] - d[0]) > tol or abs(f[-1] - d[-1]) > tol:
        raise ProjectionError(
            f"interface endpoints differ: FD [{f[0]}, {f[-1]}] vs DG [{d[0]}, {d[-1]}]"
        )
    near = np.abs(d[:, None] - f[None, :]).min(axis=1) <= tol
    pts = np.sort(np.concatenate([f, d[~near]]))
    keep = np.concatenate([[True], np.diff(pts) > tol])
    return GlueMesh(pts[keep], degree)


def piecewise_mass(mesh: GlueMesh) -> sp.csr_matrix:
    """Block-diagonal mass matrix of the discontinuous Lagrange basis."""
    return sp.block_diag([local_mass(mesh.degree, h) for h in mesh.lengths], format="csr")


def _contains(fine: GlueMesh, coarse: GlueMesh, tol: float) -> bool:
    """True if every breakpoint of ``coarse`` is a breakpoint of ``fine``."""
    gap = np.abs(coarse.breakpoints[:, None] - fine.breakpoints[None, :]).min(axis=1)
    return bool(np.all(gap <= tol))


def _interpolation(src: GlueMesh, dst: GlueMesh) -> sp.csr_matrix:
    basis = LagrangeBasis1D(src.degree)
    x = dst.nodes()
    # evaluate each dst node in the src element containing its dst element
    mids = np.repeat(dst.breakpoints[:-1] + 0.5 * dst.lengths, dst.degree + 1)
    e = src.locate(mids)
    xi = (x - src.breakpoints[e]) / src.lengths[e]
    V = basis.eval(xi)
    k1 = src.degree + 1
    rows = np.repeat(np.arange(x.size), k1)
    cols = (e[:, None] * k1 + np.arange(k1)).ravel()
    P = sp.csr_matrix((V.ravel(), (rows, cols)), shape=(dst.ndof, src.ndof))
    P.eliminate_zeros()
    return P


def _mixed_mass(coarse: GlueMesh, fine: GlueMesh) -> sp.csr_matrix:
    """``int phi_coarse_j phi_fine_i`` over the fine elements, shape (coarse, fine)."""
    k1 = fine.degree + 1
    basis = LagrangeBasis1D(fine.degree)
    xg, wg = np.polynomial.legendre.leggauss(fine.degree + 2)
    xg = 0.5 * (xg + 1)
    wg = 0.5 * wg
    Vf = basis.eval(xg)
    mids = fine.breakpoints[:-1] + 0.5 * fine.lengths
    ec = coarse.locate(mids)
    rows, cols, vals = [], [], []
    for e in range(fine.n_elements):
        x = fine.breakpoints[e] + fine.lengths[e] * xg
        c = ec[e]
        Vc = basis.eval((x - coarse.breakpoints[c]) / coarse.lengths[c])
        block = fine.lengths[e] * (Vc.T * wg) @ Vf
        r, s = np.meshgrid(c * k1 + np.arange(k1), e * k1 + np.arange(k1), indexing="ij")
        rows.append(r.ravel())
        cols.append(s.ravel())
        vals.append(block.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.ndof, fine.ndof),
    )


def build_basis_transfer(src: GlueMesh, dst: GlueMesh, merge_tol=None) -> sp.csr_matrix:
    """Change of basis between two nested discontinuous polynomial spaces.

    If ``dst`` refines ``src`` the function is unchanged and the matrix
    evaluates it at the ``dst`` nodes. If ``src`` refines ``dst`` the result is
    the L2 projection ``M_dst^-1 B`` with ``B`` the mixed mass, so that
    ``M_dst P = (M_src P_reverse)^T`` holds by construction.
    """
    if src.degree != dst.degree:
        raise ProjectionError("source and destination degrees differ")
    tol = _merge_tol(src.breakpoints, merge_tol)
    if abs(src.breakpoints[0] - dst.breakpoints[0]) > tol or abs(
        src.breakpoints[-1] - dst.breakpoints[-1]
    ) > tol:
        raise ProjectionError("meshes cover different intervals")
    if _contains(dst, src, tol):
        return _interpolation(src, dst)
    if _contains(src, dst, tol):
        B = _mixed_mass(dst, src)
        blocks = [np.linalg.inv(local_mass(dst.degree, h)) for h in dst.lengths]
        return (sp.block_diag(blocks, format="csr") @ B).tocsr()
    raise ProjectionError("neither mesh refines the other")


# ---------------------------------------------------------------------------
# FD grid <-> T_p


@dataclass(frozen=True)
class F2PPair:
    """``P_f2p`` and ``P_p2f`` on a uniform grid of ``n`` points.

    ``edge_f2p`` and ``edge_p2f`` are boolean row masks of the closure rows.
    ``degrees`` holds the edge exactness degrees (f2p, p2f).
    """

    P_f2p: sp.csr_matrix
    P_p2f: sp.csr_matrix
    H: np.ndarray
    M_p: sp.csr_matrix
    mesh: GlueMesh
    flavor: str
    degrees: tuple
    edge_f2p: np.ndarray
    edge_p2f: np.ndarray
    interior: np.ndarray = field(repr=False)


def _sbp_norm(p: int) -> np.ndarray:
    try:
        return _CLOSURES[(2 * p, p)]["norm"]
    except KeyError:
        raise ProjectionError(f"no SBP norm for p={p}") from None


@lru_cache(maxsize=None)
def _solve_stencils(p: int, df: int, db: int, s: int, b: int, w: int):
    """Interior stencil and left closure on the unit grid.

    Unknowns are the symmetric interior stencil ``theta[k, j]`` (node ``k`` of
    element ``e`` from point ``e + j``, ``j = -s .. 1 + s``) and the closure
    block ``C`` (rows of the first ``b`` elements, first ``w`` points). The
    constraints are interior exactness to degree ``2p - 1`` for both
    directions, closure rows exact to ``df`` and ``P_p2f`` edge rows exact to
    ``db``. The minimum-norm solution is returned.
    """
    q = 3
    k1 = q + 1
    r = LagrangeBasis1D(q).nodes
    M = local_mass(q, 1.0)
    offs = np.arange(-s, s + 2)
    nth, ncl = k1 * offs.size, k1 * b * w
    nun = nth + ncl
    di = 2 * p - 1

    hn = np.ones(4 * w + 4 * s + 8)
    hn[: _sbp_norm(p).size] = _sbp_norm(p)

    def th(k, j):
        return k * offs.size + j + s

    rows, rhs = [], []

    def add(coef, y):
        a = np.zeros(nun)
        for idx, v in coef:
            a[idx] += v
        rows.append(a)
        rhs.append(y)

    # symmetry of the interior stencil under x -> 1 - x
    for k in range(k1):
        for j in offs:
            if (k, j) < (q - k, 1 - j):
                add([(th(k, j), 1.0), (th(q - k, 1 - j), -1.0)], 0.0)
    for k in range(k1):
        for m in range(di + 1):
            add([(th(k, j), float(j) ** m) for j in offs], r[k] ** m)
    # interior P_p2f rows: moments of the column of point 0
    for m in range(di + 1):
        coef = []
        for j in offs:
            e = -j
            mu = M @ ((e + r) ** m)
            coef += [(th(k, j), mu[k]) for k in range(k1)]
        add(coef, float(m == 0))
    # closure rows of P_f2p
    x = np.arange(hn.size, dtype=float)
    for e in range(b):
        for k in range(k1):
            row = nth + (e * k1 + k) * w
            for m in range(df + 1):
                add([(row + i, x[i] ** m) for i in range(w)], (e + r[k]) ** m)
    # P_p2f rows near the edge; elements beyond the closure use theta
    ncols = max(w, b + s + 1, 4) + 2 * s + 2
    for i in range(ncols):
        for m in range(db + 1):
            coef = []
            if i < w:
                for e in range(b):
                    mu = M @ ((e + r) ** m)
                    coef += [(nth + (e * k1 + k) * w + i, mu[k]) for k in range(k1)]
            for e in range(max(b, i - s - 1), i + s + 1):
                mu = M @ ((e + r) ** m)
                coef += [(th(k, i - e), mu[k]) for k in range(k1)]
            add(coef, hn[i] * x[i] ** m)
    A = np.array(rows)
    y = np.array(rhs)
    sol, _, rank, _ = sla.lstsq(A, y, lapack_driver="gelsd")
    res = np.abs(A @ sol - y).max()
    return sol[:nth].reshape(k1, offs.size), sol[nth:].reshape(k1 * b, w), res, rank, A.shape


def build_f2p_pair(
    n: int,
    p: int = 2,
    flavor: str = "good_d2f",
    h: float = 1.0,
    x0: float = 0.0,
    closure=(CLOSURE_ELEMENTS, CLOSURE_COLUMNS),
    half_width: int = STENCIL_HALF_WIDTH,
) -> F2PPair:
    """Norm-compatible ``(P_f2p, P_p2f)`` between ``n`` grid points and ``T_p``.

    Parameters
    ----------
    n : int
        FD points on the interface (spacing ``h``, first point ``x0``).
    p : int
        half the interior order of the SBP operator; only ``p = 2`` has
        cubic glue polynomials matching its interior order.
    flavor : str
        ``good_d2f`` (``P_p2f`` edge rows exact to degree ``p``, ``P_f2p`` to
        ``p - 1``), ``good_f2d`` (the reverse), or ``good_both`` / ``bad_both``.
    closure : (int, int)
        closure elements per end and grid points they may use.

    Raises
    ------
    ProjectionError
        if ``n`` is below the closure width or the accuracy system has no
        solution (the case for ``good_both``).
    """
    if p != 2:
        raise ProjectionError(f"only p = 2 is supported, got p={p}")
    if flavor not in FLAVORS:
        raise ProjectionError(f"unknown flavor {flavor!r}; expected one of {sorted(FLAVORS)}")
    b, w = closure
    s = half_width
    if b < s:
        raise ProjectionError(f"closure needs at least {s} elements for a stencil of half-width {s}")
    df, db = (p + d for d in FLAVORS[flavor])
    edge_cols = max(w, b + s + 1, 4)
    n_min = 2 * edge_cols
    if n < n_min:
        raise ProjectionError(f"n={n} is below the minimum closure width {n_min}")
    theta, C, res, rank, shape = _solve_stencils(p, df, db, s, b, w)
    if res > 1e-10:
        raise ProjectionError(
            f"accuracy system for flavor {flavor!r} (degrees f2p={df}, p2f={db}) is "
            f"infeasible: rank {rank} of {shape}, residual {res:.2e}",
            rank=rank,
            residual=res,
        )
    k1 = 4
    ne = n - 1
    P = np.zeros((k1 * ne, n))
    offs = np.arange(-s, s + 2)
    for e in range(b, ne - b):
        P[k1 * e : k1 * e + k1, e + offs] = theta
    P[: k1 * b, :w] = C
    # mirror image: node k of element e <-> node q-k of element ne-1-e
    P[k1 * (ne - b) :, n - w :] = C[::-1, ::-1]
    mesh = GlueMesh(x0 + h * np.arange(n), 3)
    M_p = piecewise_mass(mesh)
    H = np.ones(n)
    hb = _sbp_norm(p)
    H[: hb.size] = hb
    H[n - hb.size :] = hb[::-1]
    H *= h
    P_f2p = sp.csr_matrix(P)
    P_f2p.eliminate_zeros()
    P_p2f = (sp.diags(1.0 / H) @ (M_p @ P_f2p).T).tocsr()
    edge_f2p = np.zeros(k1 * ne, dtype=bool)
    edge_f2p[: k1 * b] = edge_f2p[k1 * (ne - b) :] = True
    edge_p2f = np.zeros(n, dtype=bool)
    edge_p2f[:edge_cols] = edge_p2f[n - edge_cols :] = True
    return F2PPair(P_f2p, P_p2f, H, M_p, mesh, flavor, (df, db), edge_f2p, edge_p2f, theta)


# ---------------------------------------------------------------------------
# composition


@dataclass(frozen=True)
class ProjectionPair:
    """Compatible FD -> DG and DG -> FD operators on one interface.

    ``acc_f2d`` / ``acc_d2f`` are ``(interior order, edge order)`` tags:
    ``(2p, p + 1)`` for a good operator and ``(2p, p)`` for a bad one.
    """

    flavor: str
    P_f2d: sp.csr_matrix
    P_d2f: sp.csr_matrix
    acc_f2d: tuple
    acc_d2f: tuple
    H: np.ndarray
    M_d: sp.csr_matrix
    stages: F2PPair = field(repr=False)
    glue: GlueMesh = field(repr=False)
    dg_mesh: GlueMesh = field(repr=False)


def compatibility_residual(H, P_back, M, P_fwd) -> float:
    """``max |H P_back - (M P_fwd)^T|`` relative to ``max |H P_back|``."""
    lhs = sp.diags(np.asarray(H)) @ P_back if np.ndim(H) == 1 else H @ P_back
    diff = sp.csr_matrix(lhs - (M @ P_fwd).T)
    scale = max(abs(sp.csr_matrix(lhs)).max(), 1e-300)
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


def compose_fd_dg(stages: F2PPair, dg_mesh: GlueMesh, merge_tol=None, pair: str | None = None) -> ProjectionPair:
    """Chain ``P_f2d = P_g2d P_p2g P_f2p`` and ``P_d2f = P_p2f P_g2p P_d2g``."""
    pm = stages.mesh
    if dg_mesh.degree != pm.degree:
        raise ProjectionError("FD glue polynomials and DG faces have different degrees")
    glue = build_glue_mesh(pm.breakpoints, dg_mesh.breakpoints, merge_tol, pm.degree)
    P_p2g = build_basis_transfer(pm, glue, merge_tol)
    P_g2p = build_basis_transfer(glue, pm, merge_tol)
    P_g2d = build_basis_transfer(glue, dg_mesh, merge_tol)
    P_d2g = build_basis_transfer(dg_mesh, glue, merge_tol)
    if P_p2g.shape[1] != stages.P_f2p.shape[0] or P_g2d.shape[0] != dg_mesh.ndof:
        raise ProjectionError("stage dimensions do not chain")
    P_f2d = (P_g2d @ P_p2g @ stages.P_f2p).tocsr()
    P_d2f = (stages.P_p2f @ P_g2p @ P_d2g).tocsr()
    p = 2
    df, db = stages.degrees
    tag = lambda d: (2 * p, d + 1)  # noqa: E731  exact to degree d -> order d + 1
    if pair is None:
        pair = {v: k for k, v in PAIR_FLAVOR.items()}.get(stages.flavor, stages.flavor)
    return ProjectionPair(
        pair, P_f2d, P_d2f, tag(df), tag(db), stages.H, piecewise_mass(dg_mesh), stages, glue, dg_mesh
    )


def build_projection_pair(fd_points, dg_breaks, pair: str = "pair1", merge_tol=None) -> ProjectionPair:
    """FD grid (uniform, sorted) and DG face breakpoints -> one projection pair.

    ``pair1`` has the good ``P_d2f`` and ``pair2`` the good ``P_f2d``.
    """
    if pair not in PAIR_FLAVOR:
        raise ProjectionError(f"pair must be one of {sorted(PAIR_FLAVOR)}")
    x = np.asarray(fd_points, dtype=float)
    h = (x[-1] - x[0]) / (x.size - 1)
    if np.abs(np.diff(x) - h).max() > 1e-10 * h:
        raise ProjectionError("FD interface points must be uniform")
    stages = build_f2p_pair(x.size, 2, PAIR_FLAVOR[pair], h=h, x0=x[0])
    return compose_fd_dg(stages, GlueMesh(np.asarray(dg_breaks, dtype=float), 3), merge_tol, pair)


# ---------------------------------------------------------------------------
# accuracy


@dataclass(frozen=True)
class AccuracyReport:
    """Largest degree reproduced on every row of each class, and the residuals."""

    degree: dict
    errors: dict


def verify_accuracy(P, src_nodes, dst_nodes, classes: dict, degrees=range(0, 7), tol: float = 1e-10) -> AccuracyReport:
    """Exactness of ``P`` on monomials, per row class.

    Each row is tested on ``((x - x_row) / h)^m`` with ``x_row`` its own
    destination node and ``h`` the mean source spacing, so the test is
    insensitive to the position of the interface. Residuals are relative to
    ``sum_j |P_ij t_ij|`` (at least 1). ``classes`` maps a class name to a
    boolean row mask.
    """
    P = sp.csr_matrix(P)
    src = np.asarray(src_nodes, dtype=float)
    dst = np.asarray(dst_nodes, dtype=float)
    h = (src.max() - src.min()) / max(src.size - 1, 1)
    coo = P.tocoo()
    errs = {name: [] for name in classes}
    for m in degrees:
        t = ((src[coo.col] - dst[coo.row]) / h) ** m
        val = np.bincount(coo.row, weights=coo.data * t, minlength=P.shape[0])
        size = np.bincount(coo.row, weights=np.abs(coo.data * t), minlength=P.shape[0])
        err = np.abs(val - float(m == 0)) / np.maximum(size, 1.0)
        for name, mask in classes.items():
            errs[name].append(float(err[np.asarray(mask)].max()) if np.any(mask) else 0.0)
    deg = {}
    for name, e in errs.items():
        d = -1
        for m, v in zip(degrees, e):
            if v > tol:
                break
            d = m
        deg[name] = d
    return AccuracyReport(deg, errs)
