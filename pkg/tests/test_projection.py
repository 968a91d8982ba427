import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from waveglue.projection import (
    GlueMesh,
    ProjectionError,
    _solve_stencils,
    build_basis_transfer,
    build_f2p_pair,
    build_glue_mesh,
    build_projection_pair,
    compatibility_residual,
    compose_fd_dg,
    piecewise_mass,
    verify_accuracy,
)

P = 2


def smooth(x):
    return np.sin(0.7 * x + 0.3)


@pytest.fixture(scope="module", params=["good_d2f", "good_f2d"])
def f2p(request):
    return build_f2p_pair(31, P, request.param, h=0.25, x0=-1.0)


def _classes(mask):
    return {"interior": ~mask, "edge": mask}


# glue mesh ----------------------------------------------------------------


@pytest.mark.parametrize(
    "fd, dg, want",
    [
        ([0, 1, 2], [0, 2], [0, 1, 2]),
        ([0, 1, 2, 3], [0, 1.5, 3], [0, 1, 1.5, 2, 3]),
    ],
)
def test_glue_examples(fd, dg, want):
    np.testing.assert_array_equal(build_glue_mesh(fd, dg).breakpoints, want)


def test_glue_every_third_point_is_fd_grid():
    x = np.linspace(0, 10, 31)
    np.testing.assert_array_equal(build_glue_mesh(x, x[::3]).breakpoints, x)


def test_glue_merges_close_points_keeping_fd():
    g = build_glue_mesh([0, 1, 2], [0, 1 + 1e-14, 2])
    np.testing.assert_array_equal(g.breakpoints, [0, 1, 2])


def test_glue_endpoint_mismatch():
    with pytest.raises(ProjectionError, match="endpoints"):
        build_glue_mesh([0, 1, 2], [0, 2.1])


def test_mesh_validation():
    with pytest.raises(ProjectionError):
        GlueMesh(np.array([0.0, 1.0, 1.0]))


# basis transfers ------------------------------------------------------------


def test_transfer_identity():
    m = GlueMesh(np.array([0, 0.5, 2.0]))
    I = build_basis_transfer(m, m)
    np.testing.assert_allclose(I.toarray(), np.eye(m.ndof), atol=1e-14)


def test_refine_then_coarsen_is_identity():
    coarse = GlueMesh(np.array([0, 1.0, 2.5, 3.0]))
    fine = GlueMesh(np.array([0, 0.4, 1.0, 1.7, 2.5, 3.0]))
    up = build_basis_transfer(coarse, fine)
    down = build_basis_transfer(fine, coarse)
    np.testing.assert_allclose((down @ up).toarray(), np.eye(coarse.ndof), atol=1e-13)
    # refinement keeps the function: piecewise cubic values at fine nodes
    c = np.random.default_rng(0).standard_normal(coarse.ndof)
    x = fine.nodes()
    e = coarse.locate(np.repeat(fine.breakpoints[:-1] + 0.5 * fine.lengths, 4))
    xi = (x - coarse.breakpoints[e]) / coarse.lengths[e]
    r = np.arange(4) / 3
    ref = np.zeros(x.size)
    for j in range(4):
        L = np.ones(x.size)
        for m in range(4):
            if m != j:
                L *= (xi - r[m]) / (r[j] - r[m])
        ref += c[4 * e + j] * L
    np.testing.assert_allclose(up @ c, ref, atol=1e-12)


def test_transfer_compatibility():
    coarse = GlueMesh(np.array([0, 1.0, 2.5, 3.0]))
    fine = GlueMesh(np.array([0, 0.4, 1.0, 1.7, 2.5, 3.0]))
    up = build_basis_transfer(coarse, fine)
    down = build_basis_transfer(fine, coarse)
    lhs = piecewise_mass(coarse) @ down
    rhs = (piecewise_mass(fine) @ up).T
    assert abs(lhs - rhs).max() < 1e-13


def test_transfer_requires_nesting():
    a = GlueMesh(np.array([0, 1.0, 3.0]))
    b = GlueMesh(np.array([0, 2.0, 3.0]))
    with pytest.raises(ProjectionError, match="neither"):
        build_basis_transfer(a, b)
    with pytest.raises(ProjectionError, match="degree"):
        build_basis_transfer(a, GlueMesh(a.breakpoints, 2))


# FD grid <-> T_p ------------------------------------------------------------


def test_constants_round_trip(f2p):
    one_f = np.ones(31)
    one_p = np.ones(f2p.mesh.ndof)
    np.testing.assert_allclose(f2p.P_f2p @ one_f, one_p, atol=1e-13)
    np.testing.assert_allclose(f2p.P_p2f @ one_p, one_f, atol=1e-13)


def test_norm_compatibility(f2p):
    assert compatibility_residual(f2p.H, f2p.P_p2f, f2p.M_p, f2p.P_f2p) < 1e-13


def test_interior_p2f_exact_on_random_cubics(f2p):
    rng = np.random.default_rng(3)
    x, xp = f2p.mesh.breakpoints, f2p.mesh.nodes()
    inner = ~f2p.edge_p2f
    for _ in range(5):
        c = rng.standard_normal(4)
        got = f2p.P_p2f @ np.polyval(c, xp)
        assert np.abs(got[inner] - np.polyval(c, x)[inner]).max() < 1e-12


def test_accuracy_classes_strict(f2p):
    x, xp = f2p.mesh.breakpoints, f2p.mesh.nodes()
    fwd = verify_accuracy(f2p.P_f2p, x, xp, _classes(f2p.edge_f2p))
    back = verify_accuracy(f2p.P_p2f, xp, x, _classes(f2p.edge_p2f))
    good, bad = (back, fwd) if f2p.flavor == "good_d2f" else (fwd, back)
    assert fwd.degree["interior"] == back.degree["interior"] == 2 * P - 1
    # order (2p, p + 1): edges exact through degree p; (2p, p): through p - 1
    assert good.degree["edge"] == P
    assert bad.degree["edge"] == P - 1


def test_accuracy_by_absolute_monomials(f2p):
    # second route: unshifted monomials on a grid starting at the origin
    pr = build_f2p_pair(31, P, f2p.flavor)
    x, xp = pr.mesh.breakpoints, pr.mesh.nodes()
    df, db = pr.degrees
    for m in range(df + 1):
        assert np.abs(pr.P_f2p @ x**m - xp**m).max() < 1e-9 * 30.0**m
    for m in range(db + 1):
        assert np.abs(pr.P_p2f @ xp**m - x**m).max() < 1e-9 * 30.0**m
    assert np.abs(pr.P_f2p @ x ** (df + 1) - xp ** (df + 1)).max() > 1e-6


def test_interior_translation_invariant(f2p):
    A = f2p.P_f2p.toarray()
    rows = np.where(~f2p.edge_f2p)[0].reshape(-1, 4)
    first = A[rows[0]]
    e0 = rows[0][0] // 4
    for blk in rows[1:]:
        e = blk[0] // 4
        np.testing.assert_allclose(A[blk], np.roll(first, e - e0, axis=1), atol=1e-14)
    B = f2p.P_p2f.toarray()
    inner = np.where(~f2p.edge_p2f)[0]
    for i in inner[1:]:
        np.testing.assert_allclose(B[i], np.roll(B[inner[0]], 4 * (i - inner[0])), atol=1e-13)


def test_interior_stencil_symmetric(f2p):
    th = f2p.interior
    np.testing.assert_allclose(th, th[::-1, ::-1], atol=1e-13)


def test_both_good_is_infeasible():
    with pytest.raises(ProjectionError, match="infeasible") as exc:
        build_f2p_pair(31, P, "good_both")
    assert exc.value.rank is not None and exc.value.residual > 1e-6


@pytest.mark.parametrize("closure", [(3, 6), (3, 7), (4, 8), (5, 10)])
def test_both_good_infeasible_for_wider_closures(closure):
    res = _solve_stencils(P, P, P, 2, *closure)[2]
    assert res > 1e-6


@pytest.mark.parametrize("degrees", [(P + 1, P), (P, P + 1)])
def test_shifted_degree_reading_infeasible(degrees):
    # edges exact through p + 1 (good) and p (bad) admit no solution
    assert _solve_stencils(P, *degrees, 2, 4, 8)[2] > 1e-6


def test_bad_both_is_feasible():
    pr = build_f2p_pair(31, P, "bad_both")
    assert pr.degrees == (P - 1, P - 1)


def test_minimum_width_reported():
    with pytest.raises(ProjectionError, match="minimum closure width 12"):
        build_f2p_pair(11, P)
    build_f2p_pair(12, P)


def test_rejects_unsupported():
    with pytest.raises(ProjectionError):
        build_f2p_pair(31, 3)
    with pytest.raises(ProjectionError):
        build_f2p_pair(31, P, "excellent")


# composition ----------------------------------------------------------------


@pytest.mark.parametrize("pair", ["pair1", "pair2"])
def test_compose_coincident_nodes(pair):
    x = np.linspace(0, 10, 31)
    pp = build_projection_pair(x, x[::3], pair)
    assert compatibility_residual(pp.H, pp.P_d2f, pp.M_d, pp.P_f2d) < 1e-12
    np.testing.assert_array_equal(pp.glue.breakpoints, x)
    one = np.ones(31)
    np.testing.assert_allclose(pp.P_d2f @ (pp.P_f2d @ one), one, atol=1e-13)
    # round trip is not the identity
    R = (pp.P_d2f @ pp.P_f2d).toarray()
    assert np.abs(R - np.eye(31)).max() > 1e-3
    # linears survive the round trip; quadratics do not at the edges
    assert np.abs(R @ x - x).max() < 1e-12
    assert np.abs(R @ x**2 - x**2).max() > 1e-4
    if pair == "pair1":
        assert pp.acc_d2f == (4, 3) and pp.acc_f2d == (4, 2)
    else:
        assert pp.acc_d2f == (4, 2) and pp.acc_f2d == (4, 3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 12))
def test_compose_random_nonconforming(seed, m):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 2.0, 25)
    inner = np.sort(rng.uniform(-1.0, 2.0, m - 1))
    br = np.concatenate([[-1.0], inner, [2.0]])
    br = br[np.concatenate([[True], np.diff(br) > 1e-3])]
    br[-1] = 2.0
    pp = build_projection_pair(x, br, "pair1" if seed % 2 else "pair2")
    assert compatibility_residual(pp.H, pp.P_d2f, pp.M_d, pp.P_f2d) < 1e-12
    # constants reach the DG side exactly
    np.testing.assert_allclose(pp.P_f2d @ np.ones(25), np.ones(pp.M_d.shape[0]), atol=1e-12)


def test_compose_dimension_mismatch():
    st_ = build_f2p_pair(13, P)
    with pytest.raises(ProjectionError):
        compose_fd_dg(st_, GlueMesh(np.array([0.0, 12.0]), 2))


@pytest.mark.parametrize("pair, good_side", [("pair1", "d2f"), ("pair2", "f2d")])
def test_refinement_rates(pair, good_side):
    e_f2d, e_d2f = [], []
    for n in (31, 61, 121, 241):
        x = np.linspace(0, 10, n)
        pp = build_projection_pair(x, x[::3], pair)
        e_f2d.append(np.abs(pp.P_f2d @ smooth(x) - smooth(pp.dg_mesh.nodes())).max())
        e_d2f.append(np.abs(pp.P_d2f @ smooth(pp.dg_mesh.nodes()) - smooth(x)).max())
    rate = lambda e: np.log2(e[-2] / e[-1])  # noqa: E731
    good, bad = (e_d2f, e_f2d) if good_side == "d2f" else (e_f2d, e_d2f)
    assert rate(good) >= P + 1 - 0.1
    assert abs(rate(bad) - P) < 0.1


def test_verify_accuracy_degree_zero_always():
    A = sp.csr_matrix(np.array([[0.5, 0.5], [0.2, 0.8]]))
    rep = verify_accuracy(A, [0.0, 1.0], [0.5, 0.8], {"all": np.ones(2, bool)})
    assert rep.degree["all"] >= 1
    rep = verify_accuracy(A, [0.0, 1.0], [0.4, 0.8], {"all": np.ones(2, bool)})
    assert rep.degree["all"] == 0
