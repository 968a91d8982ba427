"""Symmetric interior penalty DG on triangles with principal-lattice Lagrange elements.

The weak form assembled here is, for ``phi`` in the broken space,

.. math::

    (u_{tt}, \\phi) = -b_2 \\Big[ (\\nabla u, \\nabla \\phi)
        - \\langle \\{\\nabla u \\cdot n\\}, [\\phi] \\rangle
        - \\langle [u], \\{\\nabla \\phi \\cdot n\\} \\rangle
        + \\frac{\\tau_u}{h_F} \\langle [u], [\\phi] \\rangle \\Big] + \\text{data},

summed over interior faces and Dirichlet faces (one-sided, with the data
moved to the right-hand side). Faces on the FD interface get no terms here;
their traces are exposed through ``E`` (values at face nodes), ``N``
(normal derivative at face nodes) and the face masses, for the coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dg1d import local_mass
from .mesh2d import BOUNDARY, INTERFACE, INTERIOR, TriMesh

__all__ = [
    "DgError2D",
    "DgSpace2D",
    "DgOperator2D",
    "InterfaceTraces",
    "triangle_quadrature",
    "assemble_mass",
    "block_inverse",
    "assemble_ipdg",
    "trace_constant",
    "element_trace_constants",
    "penalty_threshold",
]

_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class DgError2D(ValueError):
    pass


def triangle_quadrature(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle, exact to degree ``2n - 2``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    xi = U.ravel()
    eta = (V * (1 - U)).ravel()
    wt = (WU * WV * (1 - U)).ravel()
    return np.column_stack([xi, eta]), wt


def _face_quadrature(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


@dataclass(frozen=True)
class DgSpace2D:
    """Nodal Lagrange basis of degree ``q`` on the principal lattice."""

    degree: int = 3

    @cached_property
    def exponents(self) -> np.ndarray:
        q = self.degree
        return np.array([(a, b) for b in range(q + 1) for a in range(q + 1 - b)])

    @cached_property
    def nodes(self) -> np.ndarray:
        """Reference nodes ``(i/q, j/q)``, ``i + j <= q``, ``i`` fastest."""
        return self.exponents / self.degree

    @property
    def nloc(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @cached_property
    def _coef(self) -> np.ndarray:
        return np.linalg.inv(self._monomials(self.nodes))

    def _monomials(self, pts):
        pts = np.atleast_2d(pts)
        a, b = self.exponents.T
        return pts[:, :1] ** a * pts[:, 1:2] ** b

    def eval(self, pts) -> np.ndarray:
        """Basis values, shape ``(len(pts), nloc)``."""
        return self._monomials(pts) @ self._coef

    def grad(self, pts) -> np.ndarray:
        """Reference gradients, shape ``(len(pts), nloc, 2)``."""
        pts = np.atleast_2d(pts)
        a, b = self.exponents.T
        x, y = pts[:, :1], pts[:, 1:2]
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y**b, 0.0)
            dy = np.where(b > 0, b * x**a * y ** np.maximum(b - 1, 0), 0.0)
        return np.stack([dx @ self._coef, dy @ self._coef], axis=2)

    @cached_property
    def face_nodes(self) -> np.ndarray:
        """Local node indices on face ``j`` (vertex ``j`` to ``j + 1``), in order."""
        q = self.degree
        out = np.zeros((3, q + 1), dtype=int)
        for j in range(3):
            a, b = _REF[j], _REF[(j + 1) % 3]
            for k in range(q + 1):
                p = a + (b - a) * k / q
                out[j, k] = int(np.argmin(np.abs(self.nodes - p).sum(axis=1)))
        return out

    @cached_property
    def quad_order(self) -> int:
        """Points per direction: volume rule exact to ``2q``, face rule to ``2q + 1``."""
        return self.degree + 2


def _geometry(mesh: TriMesh):
    P = mesh.vertices[mesh.triangles]
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise DgError2D("degenerate or clockwise triangle")
    Jinv = np.linalg.inv(J)
    return P[:, 0], J, Jinv, det


def _ref_mass(space: DgSpace2D, nq: int | None = None):
    pts, w = triangle_quadrature(nq or space.quad_order)
    V = space.eval(pts)
    return (V.T * w) @ V


def assemble_mass(space: DgSpace2D, mesh: TriMesh, nq: int | None = None) -> sp.csr_matrix:
    """Block-diagonal mass matrix, quadrature exact for degree ``2q``."""
    _, _, _, det = _geometry(mesh)
    Mr = _ref_mass(space, nq)
    return sp.block_diag([d * Mr for d in det], format="csr")


def block_inverse(M: sp.spmatrix, block: int) -> sp.csr_matrix:
    """Inverse of a block-diagonal matrix with square blocks of size ``block``."""
    n = M.shape[0]
    if n % block:
        raise DgError2D(f"size {n} is not a multiple of the block size {block}")
    D = M.toarray() if n <= block else None
    blocks = []
    Mc = sp.csr_matrix(M)
    for k in range(n // block):
        sl = slice(k * block, (k + 1) * block)
        blocks.append(np.linalg.inv((D[sl, sl] if D is not None else Mc[sl, sl].toarray())))
    return sp.block_diag(blocks, format="csr")


@dataclass(frozen=True)
class InterfaceTraces:
    """DG quantities on the interface faces, faces sorted by ``x``.

    ``E`` and ``N`` map DG coefficients to values and outward normal
    derivatives at the face nodes (``q + 1`` per face, increasing ``x``);
    ``M`` is the block-diagonal face mass and ``h`` the per-face penalty
    length. ``breakpoints`` are the face end points along the interface.
    """

    E: sp.csr_matrix
    N: sp.csr_matrix
    M: sp.csr_matrix
    h: np.ndarray
    breakpoints: np.ndarray
    faces: np.ndarray

    @property
    def M_h(self) -> sp.csr_matrix:
        """Face mass scaled by ``1/h_F`` on each face block."""
        nb = self.E.shape[0] // self.faces.size
        return (sp.diags(np.repeat(1.0 / self.h, nb)) @ self.M).tocsr()

    def nodes(self) -> np.ndarray:
        r = np.arange(self.E.shape[0] // self.faces.size) / (self.E.shape[0] // self.faces.size - 1)
        b = self.breakpoints
        return (b[:-1, None] + np.diff(b)[:, None] * r).ravel()


@dataclass(frozen=True)
class DgOperator2D:
    """Assembled DG operator: ``M u_tt = K u + G g + (interface terms)``.

    ``G`` maps Dirichlet data sampled at ``boundary_points`` to the right-hand
    side. ``K`` already contains ``b2``.
    """

    space: DgSpace2D
    mesh: TriMesh
    M: sp.csr_matrix
    K: sp.csr_matrix
    G: sp.csr_matrix
    boundary_points: np.ndarray
    iface: InterfaceTraces | None
    b2: float
    tau_u: float
    C_tr: float
    h_face: np.ndarray

    @property
    def ndof(self) -> int:
        return self.M.shape[0]

    @cached_property
    def Minv(self) -> sp.csr_matrix:
        return block_inverse(self.M, self.space.nloc)

    def node_coordinates(self) -> np.ndarray:
        x0, J, _, _ = _geometry(self.mesh)
        r = self.space.nodes
        pts = x0[:, None, :] + np.einsum("kij,nj->kni", J, r)
        return pts.reshape(-1, 2)

    def interpolate(self, f) -> np.ndarray:
        X = self.node_coordinates()
        return np.asarray(f(X[:, 0], X[:, 1]), dtype=float)

    def forcing(self, g) -> np.ndarray:
        """``G`` applied to ``g(x, y)`` at the boundary quadrature points."""
        if self.G.shape[1] == 0:
            return np.zeros(self.ndof)
        X = self.boundary_points
        return self.G @ np.asarray(g(X[:, 0], X[:, 1]), dtype=float)


def face_lengths_h(mesh: TriMesh) -> np.ndarray:
    """Penalty length per face: mean diameter of the adjacent triangles."""
    hK = mesh.h_K
    h = hK[mesh.face_owner].copy()
    two = mesh.face_neighbor >= 0
    h[two] = 0.5 * (hK[mesh.face_owner[two]] + hK[mesh.face_neighbor[two]])
    return h


def _face_data(space, mesh, geo, t, f, side):
    """Values and physical gradients of the basis of one side at face points."""
    x0, J, Jinv, _ = geo
    a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
    X = a + np.outer(t, b - a)
    K = mesh.face_owner[f] if side == 0 else mesh.face_neighbor[f]
    xi = (X - x0[K]) @ Jinv[K].T
    V = space.eval(xi)
    G = space.grad(xi) @ Jinv[K]  # (nq, nloc, 2)
    return K, V, G, X


def _normal(mesh, f):
    a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
    d = b - a
    L = np.hypot(*d)
    return np.array([d[1], -d[0]]) / L, L


def element_trace_constants(space: DgSpace2D, mesh: TriMesh, h_face=None) -> np.ndarray:
    """Largest ``c`` per element with ``c sum_F h_F |grad u . n|_F^2 <= |grad u|_K^2``."""
    geo = _geometry(mesh)
    x0, J, Jinv, det = geo
    if h_face is None:
        h_face = face_lengths_h(mesh)
    pts, w = triangle_quadrature(space.quad_order)
    Gr = space.grad(pts)
    t, wt = _face_quadrature(space.quad_order)
    n = space.nloc
    Z = sla.null_space(np.ones((1, n)))
    # faces per element
    fe = [[] for _ in range(mesh.n_triangles)]
    for f in range(mesh.faces.shape[0]):
        fe[mesh.face_owner[f]].append((f, 0))
        if mesh.face_neighbor[f] >= 0:
            fe[mesh.face_neighbor[f]].append((f, 1))
    out = np.zeros(mesh.n_triangles)
    for k in range(mesh.n_triangles):
        G = Gr @ Jinv[k]
        S = det[k] * np.einsum("q,qia,qja->ij", w, G, G)
        F = np.zeros((n, n))
        for f, side in fe[k]:
            _, V, Gf, _ = _face_data(space, mesh, geo, t, f, side)
            nrm, L = _normal(mesh, f)
            dn = Gf @ nrm
            F += h_face[f] * L * (dn.T * wt) @ dn
        lam = sla.eigh(Z.T @ F @ Z, Z.T @ S @ Z, eigvals_only=True)[-1]
        out[k] = 1.0 / lam
    return out


def trace_constant(space: DgSpace2D, mesh: TriMesh | None = None, h_face=None) -> float:
    """Trace constant ``C_tr``: smallest element constant over the mesh.

    Without a mesh the reference right triangle is used with ``h_F = h_K``.
    The value is invariant under uniform scaling of the mesh.
    """
    if mesh is None:
        from .mesh2d import from_arrays

        mesh = from_arrays(_REF, [[0, 1, 2]], y_interface=-1.0)
        h_face = np.full(3, np.sqrt(2.0))
    return float(element_trace_constants(space, mesh, h_face).min())


def penalty_threshold(C_tr: float) -> float:
    """Smallest ``tau_u`` keeping the SIPG form coercive: ``1 / C_tr``."""
    return 1.0 / C_tr


def assemble_ipdg(
    space: DgSpace2D,
    mesh: TriMesh,
    b2: float = 1.0,
    tau_u: float | None = None,
    bc_dirichlet: bool = True,
    interface_as_boundary: bool = False,
    allow_unstable: bool = False,
    nq: int | None = None,
) -> DgOperator2D:
    """Assemble mass, SIPG operator, Dirichlet data map and interface traces.

    Parameters
    ----------
    b2 : float
        squared wave speed.
    tau_u : float, optional
        penalty; default ``1.1 / C_tr``.
    bc_dirichlet : bool
        Dirichlet flux on outer boundary faces (otherwise they are left free).
    interface_as_boundary : bool
        treat interface faces as Dirichlet faces (stand-alone DG runs).
    """
    geo = _geometry(mesh)
    x0, J, Jinv, det = geo
    nq = nq or space.quad_order
    n = space.nloc
    ne = mesh.n_triangles
    hF = face_lengths_h(mesh)
    C_tr = float(element_trace_constants(space, mesh, hF).min())
    tmin = penalty_threshold(C_tr)
    if tau_u is None:
        tau_u = 1.1 * tmin
    if tau_u < tmin * (1 - 1e-12) and not allow_unstable:
        raise DgError2D(f"tau_u = {tau_u} is below the coercivity bound 1/C_tr = {tmin:.6g}")

    pts, w = triangle_quadrature(nq)
    Vr = space.eval(pts)
    Gr = space.grad(pts)
    Mr = (Vr.T * w) @ Vr
    M = sp.block_diag([d * Mr for d in det], format="csr")

    rows, cols, vals = [], [], []

    def put(ri, ci, block):
        R, C = np.meshgrid(ri, ci, indexing="ij")
        rows.append(R.ravel())
        cols.append(C.ravel())
        vals.append(block.ravel())

    for k in range(ne):
        G = Gr @ Jinv[k]
        S = det[k] * np.einsum("q,qia,qja->ij", w, G, G)
        idx = k * n + np.arange(n)
        put(idx, idx, -b2 * S)

    t, wt = _face_quadrature(nq)
    brows, bcols, bvals, bpts = [], [], [], []
    iface_faces = []
    for f in range(mesh.faces.shape[0]):
        kind = mesh.face_kind[f]
        nrm, L = _normal(mesh, f)
        W = wt * L
        pen = tau_u / hF[f]
        if kind == INTERIOR:
            kp, Vp, Gp, _ = _face_data(space, mesh, geo, t, f, 0)
            km, Vm, Gm, _ = _face_data(space, mesh, geo, t, f, 1)
            Jmp = np.hstack([Vp, -Vm])
            Avg = 0.5 * np.hstack([Gp @ nrm, Gm @ nrm])
            a = -(Jmp.T * W) @ Avg - (Avg.T * W) @ Jmp + pen * (Jmp.T * W) @ Jmp
            idx = np.concatenate([kp * n + np.arange(n), km * n + np.arange(n)])
            put(idx, idx, -b2 * a)
        elif kind == BOUNDARY and bc_dirichlet or kind == INTERFACE and interface_as_boundary:
            kp, V, Gf, X = _face_data(space, mesh, geo, t, f, 0)
            dn = Gf @ nrm
            a = -(V.T * W) @ dn - (dn.T * W) @ V + pen * (V.T * W) @ V
            idx = kp * n + np.arange(n)
            put(idx, idx, -b2 * a)
            g = b2 * (pen * V - dn).T * W  # (n, nq)
            base = sum(len(p) for p in bpts)
            R, C = np.meshgrid(idx, base + np.arange(t.size), indexing="ij")
            brows.append(R.ravel())
            bcols.append(C.ravel())
            bvals.append(g.ravel())
            bpts.append(X)
        elif kind == INTERFACE:
            iface_faces.append(f)
    N = ne * n
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    nb = sum(len(p) for p in bpts)
    if nb:
        Gm_ = sp.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))), shape=(N, nb))
        bp = np.vstack(bpts)
    else:
        Gm_ = sp.csr_matrix((N, 0))
        bp = np.zeros((0, 2))
    iface = _interface_traces(space, mesh, geo, np.array(iface_faces, dtype=int), hF) if iface_faces else None
    return DgOperator2D(space, mesh, M, K, Gm_, bp, iface, float(b2), float(tau_u), C_tr, hF)


def _interface_traces(space, mesh, geo, faces, hF) -> InterfaceTraces:
    """Value and normal-derivative extraction at interface face nodes."""
    x0, J, Jinv, det = geo
    q = space.degree
    n = space.nloc
    V = mesh.vertices
    # orient every face by increasing x and sort along the interface
    xa = V[mesh.faces[faces, 0], 0]
    xb = V[mesh.faces[faces, 1], 0]
    order = np.argsort(np.minimum(xa, xb))
    faces = faces[order]
    br = [min(V[mesh.faces[faces[0]], 0])]
    Er, Ec, Ev, Nr, Nc, Nv, masses, hs = [], [], [], [], [], [], [], []
    for i, f in enumerate(faces):
        k = mesh.face_owner[f]
        j = mesh.face_local[f]
        loc = space.face_nodes[j]
        a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
        if a[0] > b[0]:
            loc = loc[::-1]
            a, b = b, a
        if abs(a[0] - br[-1]) > 1e-9 * (1 + abs(a[0])):
            raise DgError2D("interface faces do not tile the interface")
        br.append(b[0])
        nrm, L = _normal(mesh, f)
        Gn = space.grad(space.nodes[loc]) @ Jinv[k] @ nrm  # (q+1, nloc)
        rws = i * (q + 1) + np.arange(q + 1)
        Er.append(rws)
        Ec.append(k * n + loc)
        Ev.append(np.ones(q + 1))
        R, C = np.meshgrid(rws, k * n + np.arange(n), indexing="ij")
        Nr.append(R.ravel())
        Nc.append(C.ravel())
        Nv.append(Gn.ravel())
        masses.append(local_mass(q, L))
        hs.append(hF[f])
    m = len(faces) * (q + 1)
    N = mesh.n_triangles * n
    E = sp.csr_matrix((np.concatenate(Ev), (np.concatenate(Er), np.concatenate(Ec))), shape=(m, N))
    Nm = sp.csr_matrix((np.concatenate(Nv), (np.concatenate(Nr), np.concatenate(Nc))), shape=(m, N))
    Nm.eliminate_zeros()
    return InterfaceTraces(E, Nm, sp.block_diag(masses, format="csr"), np.array(hs), np.array(br), faces)
