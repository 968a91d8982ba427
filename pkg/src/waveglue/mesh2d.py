"""Conforming triangulations of the DG subdomain.

Faces are classified against a horizontal interface line ``y = y_interface``:
interior faces (two owners), interface faces (one owner, on the line) and
outer boundary faces. Local face ``j`` of a triangle ``(v0, v1, v2)`` runs
from vertex ``j`` to vertex ``j + 1`` (mod 3).

Text format::

    N 2              M 3
    1 x y            1 v1 v2 v3
    ...              ...

with 1-based indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "TriMesh",
    "load_mesh",
    "save_mesh",
    "read_mesh_files",
    "write_mesh_files",
    "structured_interface_mesh",
    "from_arrays",
    "MESH_CONFIGS",
    "INTERIOR",
    "INTERFACE",
    "BOUNDARY",
]

INTERIOR, INTERFACE, BOUNDARY = 0, 1, 2
MESH_CONFIGS = ("every_point", "every_third")


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    """Validated triangulation with face connectivity.

    Attributes
    ----------
    vertices : (N, 2) array
    triangles : (M, 3) int array, counter-clockwise
    faces : (F, 2) int array of vertex pairs
    face_owner, face_local : (F,) int arrays; owner triangle and its local face
    face_neighbor, face_neighbor_local : (F,) int arrays, -1 on one-sided faces
    face_kind : (F,) int array of INTERIOR / INTERFACE / BOUNDARY
    y_interface : float
    """

    vertices: np.ndarray
    triangles: np.ndarray
    faces: np.ndarray
    face_owner: np.ndarray
    face_local: np.ndarray
    face_neighbor: np.ndarray
    face_neighbor_local: np.ndarray
    face_kind: np.ndarray
    y_interface: float
    flipped: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def face_sets(self) -> dict:
        return {
            "interior": np.where(self.face_kind == INTERIOR)[0],
            "interface": np.where(self.face_kind == INTERFACE)[0],
            "boundary": np.where(self.face_kind == BOUNDARY)[0],
        }

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def h_K(self) -> np.ndarray:
        """Triangle diameters (longest edge)."""
        P = self.vertices[self.triangles]
        e = np.linalg.norm(P - np.roll(P, -1, axis=1), axis=2)
        return e.max(axis=1)

    @property
    def face_lengths(self) -> np.ndarray:
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        return np.linalg.norm(d, axis=1)

    def inradius(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        per = np.linalg.norm(P - np.roll(P, -1, axis=1), axis=2).sum(axis=1)
        return 2 * self.areas / per

    def shape_regularity(self) -> float:
        """Largest ``h_K / inradius`` over the mesh."""
        return float((self.h_K / self.inradius()).max())

    def interface_breakpoints(self) -> np.ndarray:
        """Sorted x-coordinates of the vertices on the interface faces."""
        f = self.faces[self.face_kind == INTERFACE]
        return np.unique(self.vertices[f.ravel(), 0])

    def bounding_box(self) -> tuple:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return (lo[0], hi[0], lo[1], hi[1])


def _signed_areas(V, T):
    a, b, c = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def from_arrays(vertices, triangles, y_interface: float = 0.0, tol: float | None = None) -> TriMesh:
    """Validate, orient and classify a triangulation given as arrays."""
    V = np.asarray(vertices, dtype=float)
    T = np.array(triangles, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != 2 or T.ndim != 2 or T.shape[1] != 3:
        raise MeshError("vertices must be (N, 2) and triangles (M, 3)")
    if T.size and (T.min() < 0 or T.max() >= V.shape[0]):
        raise MeshError("triangle references a missing vertex")
    scale = float(np.ptp(V, axis=0).max()) if V.shape[0] else 1.0
    tol = 1e-12 * scale if tol is None else tol
    # duplicate vertices
    order = np.lexsort((V[:, 1], V[:, 0]))
    d = np.abs(np.diff(V[order], axis=0)).max(axis=1) if V.shape[0] > 1 else np.array([])
    close = np.where(d <= tol)[0]
    for i in close:
        a, b = order[i], order[i + 1]
        if np.abs(V[a] - V[b]).max() <= tol:
            raise MeshError(f"duplicate vertices {a + 1} and {b + 1} at {tuple(V[a])}")
    area = _signed_areas(V, T)
    if np.any(np.abs(area) <= tol * scale):
        k = int(np.argmin(np.abs(area)))
        raise MeshError(f"degenerate triangle {k + 1}")
    neg = area < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    # faces
    edges = {}
    for t, tri in enumerate(T):
        for j in range(3):
            a, b = int(tri[j]), int(tri[(j + 1) % 3])
            key = (min(a, b), max(a, b))
            edges.setdefault(key, []).append((t, j))
    nf = len(edges)
    faces = np.zeros((nf, 2), dtype=np.int64)
    owner = np.zeros(nf, dtype=np.int64)
    local = np.zeros(nf, dtype=np.int64)
    nb = np.full(nf, -1, dtype=np.int64)
    nb_local = np.full(nf, -1, dtype=np.int64)
    kind = np.zeros(nf, dtype=np.int64)
    for f, (key, users) in enumerate(sorted(edges.items())):
        if len(users) > 2:
            raise MeshError(f"nonconforming edge {tuple(V[key[0]])}-{tuple(V[key[1]])} shared by {len(users)} triangles")
        t, j = users[0]
        faces[f] = (T[t, j], T[t, (j + 1) % 3])
        owner[f], local[f] = t, j
        if len(users) == 2:
            nb[f], nb_local[f] = users[1]
            kind[f] = INTERIOR
        else:
            ys = V[list(key), 1]
            kind[f] = INTERFACE if np.all(np.abs(ys - y_interface) <= tol) else BOUNDARY
    _check_hanging(V, faces, kind, tol)
    return TriMesh(V, T, faces, owner, local, nb, nb_local, kind, float(y_interface), int(neg.sum()))


def _check_hanging(V, faces, kind, tol):
    """A vertex lying inside a one-sided face signals a hanging node."""
    one = np.where(kind != INTERIOR)[0]
    for f in one:
        a, b = V[faces[f, 0]], V[faces[f, 1]]
        d = b - a
        L2 = d @ d
        s = (V - a) @ d / L2
        dist = np.abs((V[:, 0] - a[0]) * d[1] - (V[:, 1] - a[1]) * d[0]) / np.sqrt(L2)
        inside = (s > 1e-9) & (s < 1 - 1e-9) & (dist <= tol)
        if np.any(inside):
            v = int(np.where(inside)[0][0])
            raise MeshError(f"nonconforming edge {tuple(a)}-{tuple(b)}: hanging vertex {v + 1} at {tuple(V[v])}")


def _parse_block(text: str, width: int, what: str) -> np.ndarray:
    lines = [ln.split("#")[0].split() for ln in text.strip().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MeshError(f"empty {what} file")
    head = lines[0]
    try:
        count = int(head[0])
    except (ValueError, IndexError):
        raise MeshError(f"bad {what} header {' '.join(head)!r}") from None
    if len(head) > 1 and int(head[1]) != width:
        raise MeshError(f"{what} header announces {head[1]} columns, expected {width}")
    body = lines[1:]
    if len(body) != count:
        raise MeshError(f"{what} file announces {count} records, found {len(body)}")
    rows = []
    for k, ln in enumerate(body):
        if len(ln) < width + 1:
            raise MeshError(f"{what} record {k + 1} is short: {' '.join(ln)!r}")
        rows.append(ln[: width + 1])
    return rows


def load_mesh(node_text: str, ele_text: str, y_interface: float = 0.0) -> TriMesh:
    """Parse node/element texts (1-based indices) into a validated mesh."""
    nodes = _parse_block(node_text, 2, "node")
    idx = np.array([int(r[0]) for r in nodes])
    V = np.array([[float(r[1]), float(r[2])] for r in nodes])
    pos = {int(i): k for k, i in enumerate(idx)}
    if len(pos) != idx.size:
        raise MeshError("repeated node index")
    eles = _parse_block(ele_text, 3, "element")
    try:
        T = np.array([[pos[int(v)] for v in r[1:4]] for r in eles], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"element references unknown node {exc.args[0]}") from None
    return from_arrays(V, T, y_interface)


def save_mesh(mesh: TriMesh) -> tuple[str, str]:
    """Node and element texts; floats are written with ``repr`` for exact reload."""
    nodes = [f"{mesh.vertices.shape[0]} 2"]
    nodes += [f"{i + 1} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    eles = [f"{mesh.n_triangles} 3"]
    eles += [f"{i + 1} {a + 1} {b + 1} {c + 1}" for i, (a, b, c) in enumerate(mesh.triangles.tolist())]
    return "\n".join(nodes) + "\n", "\n".join(eles) + "\n"


def read_mesh_files(node_path, ele_path, y_interface: float = 0.0) -> TriMesh:
    with open(node_path) as fn, open(ele_path) as fe:
        return load_mesh(fn.read(), fe.read(), y_interface)


def write_mesh_files(mesh: TriMesh, node_path, ele_path) -> None:
    nt, et = save_mesh(mesh)
    with open(node_path, "w") as fn:
        fn.write(nt)
    with open(ele_path, "w") as fe:
        fe.write(et)


def structured_interface_mesh(
    nx: int,
    config: str = "every_point",
    domain=(0.0, 10.0, -2.0, 0.0),
    ny: int | None = None,
    perturb: float = 0.0,
    seed: int = 0,
) -> TriMesh:
    """Right-triangle mesh of ``domain`` below an interface at its top edge.

    ``nx`` counts FD points along the interface. With ``every_point`` each FD
    point is a mesh vertex; with ``every_third`` only points ``1, 4, 7, ...``
    are, so that the degree-3 face nodes fall on the remaining FD points.
    ``perturb > 0`` moves interior vertices randomly by that fraction of the
    spacing (a deterministic unstructured variant); interface and boundary
    vertices stay put.
    """
    if config not in MESH_CONFIGS:
        raise MeshError(f"unknown config {config!r}; expected one of {MESH_CONFIGS}")
    if nx < 2:
        raise MeshError("nx must be at least 2")
    stride = 1 if config == "every_point" else 3
    if (nx - 1) % stride:
        raise MeshError(f"config {config} needs nx - 1 divisible by 3, got nx={nx}")
    x0, x1, y0, y1 = domain
    mx = (nx - 1) // stride + 1
    hx = (x1 - x0) / (mx - 1)
    if ny is None:
        ny = max(2, int(round((y1 - y0) / hx)) + 1)
    xs = np.linspace(x0, x1, mx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    if perturb > 0:
        rng = np.random.default_rng(seed)
        hy = (y1 - y0) / (ny - 1)
        inner = (
            (V[:, 0] > x0 + 1e-12) & (V[:, 0] < x1 - 1e-12) & (V[:, 1] > y0 + 1e-12) & (V[:, 1] < y1 - 1e-12)
        )
        V[inner] += rng.uniform(-perturb, perturb, (inner.sum(), 2)) * [hx, hy]
    T = []
    for j in range(ny - 1):
        for i in range(mx - 1):
            a = j * mx + i
            b, c, d = a + 1, a + mx + 1, a + mx
            if perturb > 0 and (i + j) % 2:
                T += [(a, b, d), (b, c, d)]
            else:
                T += [(a, b, c), (a, c, d)]
    mesh = from_arrays(V, np.array(T), y_interface=y1)
    mesh.meta.update(config=config, nx=nx, stride=stride)
    return mesh
