import numpy as np
import pytest

from waveglue.mesh2d import (
    BOUNDARY,
    INTERFACE,
    INTERIOR,
    MeshError,
    from_arrays,
    load_mesh,
    read_mesh_files,
    save_mesh,
    structured_interface_mesh,
    write_mesh_files,
)

SQUARE_NODES = """4 2
1 0.0 0.0
2 1.0 0.0
3 1.0 1.0
4 0.0 1.0
"""


def test_unit_square_two_triangles():
    m = load_mesh(SQUARE_NODES, "2 3\n1 1 2 3\n2 1 3 4\n", y_interface=1.0)
    sets = m.face_sets
    assert (len(sets["interface"]), len(sets["interior"]), len(sets["boundary"])) == (1, 1, 3)
    f = sets["interface"][0]
    np.testing.assert_allclose(m.vertices[m.faces[f], 1], [1.0, 1.0])


def test_flipped_triangle_is_reoriented():
    m = load_mesh(SQUARE_NODES, "2 3\n1 1 3 2\n2 1 3 4\n", y_interface=1.0)
    assert m.flipped == 1
    assert np.all(m.areas > 0)
    np.testing.assert_allclose(m.areas.sum(), 1.0)


def test_two_by_two_grid_hand_count():
    # 3x3 vertices, 4 squares split in two: 8 triangles, 16 edges
    # (12 grid edges + 4 diagonals); interior = 4 grid + 4 diagonals
    m = structured_interface_mesh(3, "every_point", domain=(0, 2, -2, 0), ny=3)
    assert m.n_triangles == 8
    assert m.faces.shape[0] == 16
    counts = np.bincount(m.face_kind, minlength=3)
    assert counts[INTERIOR] == 8 and counts[INTERFACE] == 2 and counts[BOUNDARY] == 6


@pytest.mark.parametrize("nx, config, nverts", [(4, "every_point", 4), (4, "every_third", 2), (31, "every_third", 11)])
def test_interface_vertices(nx, config, nverts):
    m = structured_interface_mesh(nx, config, domain=(0, 3, -1, 0))
    br = m.interface_breakpoints()
    assert br.size == nverts
    fd = np.linspace(0, 3, nx)
    # every mesh vertex on the interface is an FD point
    assert np.abs(br[:, None] - fd[None, :]).min(axis=1).max() < 1e-12
    if config == "every_third":
        # cubic face nodes at thirds of each face fill in the remaining FD points
        nodes = np.concatenate([a + (b - a) * np.arange(4) / 3 for a, b in zip(br[:-1], br[1:])])
        np.testing.assert_allclose(np.unique(np.round(nodes, 12)), fd, atol=1e-12)


@pytest.mark.parametrize("nx, ny", [(5, 3), (7, 4), (13, 3)])
def test_triangle_count(nx, ny):
    m = structured_interface_mesh(nx, "every_point", ny=ny)
    assert m.n_triangles == 2 * (nx - 1) * (ny - 1)


def test_every_third_divisibility():
    with pytest.raises(MeshError, match="divisible"):
        structured_interface_mesh(5, "every_third")
    with pytest.raises(MeshError):
        structured_interface_mesh(5, "every_other")


def test_interface_faces_on_line():
    m = structured_interface_mesh(13, "every_point")
    f = m.face_sets["interface"]
    assert np.abs(m.vertices[m.faces[f].ravel(), 1] - m.y_interface).max() < 1e-12 * 10
    # face sets partition all faces
    allf = np.sort(np.concatenate(list(m.face_sets.values())))
    np.testing.assert_array_equal(allf, np.arange(m.faces.shape[0]))


@pytest.mark.parametrize("perturb", [0.0, 0.2])
def test_shape_regularity(perturb):
    m = structured_interface_mesh(31, "every_third", perturb=perturb, seed=4)
    assert np.all(m.areas > 0)
    assert np.isfinite(m.shape_regularity())
    if perturb == 0.0:
        assert m.shape_regularity() <= 5


def test_save_reload_bit_exact(tmp_path):
    m = structured_interface_mesh(13, "every_point", perturb=0.15, seed=1)
    nt, et = save_mesh(m)
    m2 = load_mesh(nt, et, m.y_interface)
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.triangles, m2.triangles)
    write_mesh_files(m, tmp_path / "a.node", tmp_path / "a.ele")
    m3 = read_mesh_files(tmp_path / "a.node", tmp_path / "a.ele", m.y_interface)
    assert np.array_equal(m.vertices, m3.vertices)
    assert np.array_equal(m.face_kind, m3.face_kind)


def test_duplicate_vertex_rejected():
    nodes = SQUARE_NODES.replace("4 2", "5 2") + "5 1.0 1.0\n"
    with pytest.raises(MeshError, match="duplicate"):
        load_mesh(nodes, "2 3\n1 1 2 3\n2 1 5 4\n")


def test_hanging_node_rejected():
    V = [[0, 0], [2, 0], [2, 1], [0, 1], [1, 0]]
    # big triangle on the bottom edge 0-1 while vertex 4 sits on it
    T = [[0, 1, 2], [0, 2, 3], [0, 4, 3]]
    with pytest.raises(MeshError, match="nonconforming"):
        from_arrays(V, T)


def test_bad_files():
    with pytest.raises(MeshError, match="announces"):
        load_mesh("3 2\n1 0 0\n2 1 0\n", "1 3\n1 1 2 3\n")
    with pytest.raises(MeshError, match="unknown node"):
        load_mesh(SQUARE_NODES, "1 3\n1 1 2 9\n")
