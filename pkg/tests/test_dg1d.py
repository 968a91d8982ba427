import numpy as np
import pytest
import sympy

from waveglue.dg1d import (
    DEFAULT_TAU,
    DgError,
    LagrangeBasis1D,
    assemble_dg1d_blocks,
    dg1d_truncation_probe,
    formal_mass_weighting,
    local_mass,
    shifted_sine,
)

R = sympy.Rational
REFERENCE_MASS = [
    [R(8, 105), R(33, 560), R(-3, 140), R(19, 1680)],
    [R(33, 560), R(27, 70), R(-27, 560), R(-3, 140)],
    [R(-3, 140), R(-27, 560), R(27, 70), R(33, 560)],
    [R(19, 1680), R(-3, 140), R(33, 560), R(8, 105)],
]

REFERENCE_BLOCK = [
    [8, -36, 72, 296, -368, 36, -18, 80, -59, -18, 9, -2],
    ["-34/27", "17/3", "-34/3", "-943/27", "1576/27", -32, 20, "-622/27", "412/27", "16/3", "-8/3", "16/27"],
    ["16/27", "-8/3", "16/3", "412/27", "-622/27", 20, -32, "1576/27", "-943/27", "-34/3", "17/3", "-34/27"],
    [-2, 9, -18, -59, 80, -18, 36, -368, 296, 72, -36, 8],
]


def _gauss_blocks(k, tau):
    """Independent float assembly of the weak form with Gauss quadrature."""
    b = LagrangeBasis1D(k)
    xg, wg = np.polynomial.legendre.leggauss(k + 2)
    xg = 0.5 * (xg + 1)
    wg = 0.5 * wg
    V, dV = b.eval(xg), b.deriv(xg)
    M = V.T @ (wg[:, None] * V)
    K = dV.T @ (wg[:, None] * dV)
    gL, gR = b.deriv(0.0)[0], b.deriv(1.0)[0]
    vL, vR = b.eval(0.0)[0], b.eval(1.0)[0]
    # face at the right end of element j: u- from j, u+ from j+1
    # {u_x}[phi] + {phi_x}[u] - tau [u][phi] with [v] = v- - v+, and the
    # element's own boundary term u_x phi |_R - u_x phi |_L
    A2 = -K
    A2 += np.outer(vR, gR) - 0.5 * np.outer(vR, gR) + 0.5 * np.outer(gR, vR) - tau * np.outer(vR, vR)
    A2 += -np.outer(vL, gL) + 0.5 * np.outer(vL, gL) - 0.5 * np.outer(gL, vL) - tau * np.outer(vL, vL)
    A3 = 0.5 * np.outer(vR, gL) - 0.5 * np.outer(gR, vL) + tau * np.outer(vR, vL)
    A1 = -0.5 * np.outer(vL, gR) + 0.5 * np.outer(gL, vR) + tau * np.outer(vL, vR)
    Mi = np.linalg.inv(M)
    return M, Mi @ A1, Mi @ A2, Mi @ A3


def test_local_mass_exact():
    assert local_mass(3, 1, exact=True) == sympy.Matrix(REFERENCE_MASS)
    assert local_mass(3, R(1, 3), exact=True) == sympy.Matrix(REFERENCE_MASS) / 3


@pytest.mark.parametrize("h", [1.0, 0.25, 3.0])
def test_local_mass_float(h):
    M = local_mass(3, h)
    assert abs(M.sum() - h) < 1e-14 * h
    np.testing.assert_allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0
    Mq = _gauss_blocks(3, 0.0)[0] * h
    np.testing.assert_allclose(M, Mq, rtol=1e-14, atol=1e-16)
    I = M @ np.linalg.inv(M)
    assert np.abs(I - np.eye(4)).max() < 1e-13


def test_local_mass_rejects():
    with pytest.raises(DgError):
        local_mass(3, 0.0)


def test_basis_kronecker():
    b = LagrangeBasis1D(3)
    np.testing.assert_allclose(b.eval(b.nodes), np.eye(4), atol=1e-15)
    np.testing.assert_allclose(b.nodes, [0, 1 / 3, 2 / 3, 1])


def test_reference_block_exact():
    blocks = assemble_dg1d_blocks(3, 1.0, DEFAULT_TAU)
    S = sympy.Matrix.hstack(*blocks.exact)
    P = sympy.Matrix([[sympy.Rational(str(v)) for v in row] for row in REFERENCE_BLOCK])
    assert S == P


def test_reference_tau_is_unique():
    tau = sympy.Symbol("tau")
    from waveglue.dg1d import _reference, reference_blocks

    Minv = _reference(3)[1].inv()
    S = sympy.Matrix.hstack(*(Minv * A for A in reference_blocks(3, tau)))
    P = sympy.Matrix([[sympy.Rational(str(v)) for v in row] for row in REFERENCE_BLOCK])
    sols = sympy.solve(list(S - P), tau, dict=True)
    assert sols == [{tau: 25}]


@pytest.mark.parametrize("tau", [0.0, 3.0, 25.0])
@pytest.mark.parametrize("h", [1.0, 0.1])
def test_blocks_match_quadrature_oracle(tau, h):
    blocks = assemble_dg1d_blocks(3, h, tau)
    _, D1, D2, D3 = _gauss_blocks(3, tau)
    np.testing.assert_allclose(blocks.D1 * h**2, D1, atol=1e-11)
    np.testing.assert_allclose(blocks.D2 * h**2, D2, atol=1e-11)
    np.testing.assert_allclose(blocks.D3 * h**2, D3, atol=1e-11)


def test_row_sums_vanish():
    blocks = assemble_dg1d_blocks(3, 0.2, 25)
    S = sympy.Matrix.hstack(*blocks.exact)
    assert all(sum(S.row(i)) == 0 for i in range(4))
    assert np.abs(blocks.stencil.sum(axis=1)).max() < 1e-12 / 0.2**2


@pytest.mark.parametrize("x0", [0.0, 1.3, -2.0])
def test_quadratic_and_cubic_reproduced(x0):
    h = 0.3
    blocks = assemble_dg1d_blocks(3, h, 25)
    r = np.arange(4) / 3
    xs = np.concatenate([x0 - h + h * r, x0 + h * r, x0 + h + h * r])
    np.testing.assert_allclose(blocks.stencil @ xs**2, 2.0, atol=1e-10)
    np.testing.assert_allclose(blocks.stencil @ xs**3, 6 * (x0 + h * r), atol=1e-9)


def test_truncation_leading_terms():
    blocks = assemble_dg1d_blocks(3, 1.0, 25)
    fit = dg1d_truncation_probe(blocks, shifted_sine(1.0))
    c2 = np.array([1 / 108, -1 / 324, -1 / 324, 1 / 108])
    c3 = np.array([-2 / 27, 11 / 729, -11 / 729, 2 / 27])
    np.testing.assert_allclose(fit.coefficient(2), c2, rtol=0.02)
    np.testing.assert_allclose(fit.coefficient(3), c3, rtol=0.05)


def test_truncation_cubic_zero():
    h = 0.1
    blocks = assemble_dg1d_blocks(3, h, 25)
    r = np.arange(4) / 3
    xs = np.concatenate([-h + h * r, h * r, h + h * r])
    f = 2 - xs + 0.5 * xs**2 - 3 * xs**3
    res = blocks.stencil @ f - (1 - 18 * h * r)
    assert np.abs(res).max() < 1e-9


def test_mass_weighted_truncation():
    blocks = assemble_dg1d_blocks(3, 1.0, 25)
    f = shifted_sine(0.7)
    # formal product of the mass with the per-node coefficient vectors
    formal = formal_mass_weighting(dg1d_truncation_probe(blocks, f))
    np.testing.assert_allclose(formal[0] * 1440, [1, -1, -1, 1], rtol=0.02)
    np.testing.assert_allclose(
        formal[1], [-163 / 45360, 1 / 1680, -1 / 1680, 163 / 45360], rtol=0.05
    )
    # refit of M_loc times the residual, every term about its own node
    refit = dg1d_truncation_probe(blocks, f, mass_weighted=True)
    np.testing.assert_allclose(refit.coefficient(3) * 1440, [1, -1, -1, 1], rtol=0.02)
    np.testing.assert_allclose(
        refit.coefficient(4), [-53 / 15120, 1 / 3024, -1 / 3024, 53 / 15120], rtol=0.05
    )
    # both next-order vectors sum to zero, which is what the cancellation needs
    for v in (formal[1], refit.coefficient(4)):
        assert abs(v.sum()) < 0.01 * np.abs(v).max()


def test_exact_next_order_rational():
    """The refit oracle: re-expanding M (a f''''(nodes)) about each node."""
    M = local_mass(3, 1, exact=True)
    a = sympy.Matrix([R(1, 108), R(-1, 324), R(-1, 324), R(1, 108)])
    b = sympy.Matrix([R(-2, 27), R(11, 729), R(-11, 729), R(2, 27)])
    r = [R(i, 3) for i in range(4)]
    out = [sum(M[i, j] * a[j] * (r[j] - r[i]) for j in range(4)) + (M * b)[i] for i in range(4)]
    assert out == [R(-53, 15120), R(1, 3024), R(-1, 3024), R(53, 15120)]
    assert list(M * b) == [R(-163, 45360), R(1, 1680), R(-1, 1680), R(163, 45360)]
    assert sum(out) == 0 and sum(M * b) == 0
