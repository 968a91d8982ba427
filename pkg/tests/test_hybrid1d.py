from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from waveglue.dg1d import LagrangeBasis1D, assemble_dg1d_blocks, shifted_sine
from waveglue.hybrid1d import (
    StabilityError,
    assemble_hybrid1d,
    energy,
    interface_stencil,
    inverse_constant,
    stability_threshold,
    truncation_interface,
)
from waveglue.sbp import build_sbp
from waveglue.timestepper import estimate_dt, integrate

F = Fraction
REFERENCE_STENCIL = [
    [F(-4, 49), F(64, 49), F(-118, 49), F(59, 49), 0, F(-9, 49), F(8, 49), 0, 0, 0, 0, 0, 0, 0],
    [0, F(-4, 43), F(59, 43), F(-110, 43), F(59, 43), F(32, 43), F(-36, 43), 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, -2, F(-13, 59), F(72, 59), 0, 0, 0, 0, 0, 0, 0],
    [0, 0, F(-9, 17), F(32, 17), F(-13, 17), F(-1166, 17), F(1024, 17), F(216, 17), F(-108, 17),
     F(24, 17), 0, 0, 0, 0],
    [0, 0, F(8, 3), -12, 24, F(976, 3), -368, 36, -18, 80, -59, -18, 9, -2],
    [0, 0, F(-34, 81), F(17, 9), F(-34, 9), F(-3203, 81), F(1576, 27), -32, 20, F(-622, 27),
     F(412, 27), F(16, 3), F(-8, 3), F(16, 27)],
    [0, 0, F(16, 81), F(-8, 9), F(16, 9), F(1412, 81), F(-622, 27), 20, -32, F(1576, 27),
     F(-943, 27), F(-34, 3), F(17, 3), F(-34, 27)],
    [0, 0, F(-2, 3), 3, -6, F(-199, 3), 80, -18, 36, -368, 296, 72, -36, 8],
]
REFERENCE_TGAMMA = [-11 / 588, -5 / 516, 1 / 12, -337 / 612, 209 / 108, -893 / 2916, 407 / 2916, -17 / 36]


def desk(tau=None, n=30, m=10, **kw):
    h = 1.0 / (n - 1)
    return assemble_hybrid1d(build_sbp((4, 2), n, h), assemble_dg1d_blocks(3, h, 25), m, tau=tau, **kw)


def sym_max_eig(sys):
    HQ = (sys.Ht @ sys.Q).toarray()
    return np.linalg.eigvalsh(0.5 * (HQ + HQ.T)).max() / np.abs(HQ).max()


def monomial_inverse_constant(k):
    """Oracle: u_x ranges over P^{k-1} in the monomial basis on [0, 1]."""
    i = np.arange(k)
    G = 1.0 / (i[:, None] + i[None, :] + 1)
    v0 = (i == 0).astype(float)
    v1 = np.ones(k)
    B = np.outer(v0, v0) + np.outer(v1, v1)
    return 1.0 / sla.eigh(B, G, eigvals_only=True).max()


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_inverse_constant_oracle(k):
    assert abs(inverse_constant(k).beta_inv - monomial_inverse_constant(k)) < 1e-10


def test_inverse_constant_values():
    assert abs(inverse_constant(1).beta_inv - 0.5) < 1e-12
    assert abs(inverse_constant(3).beta_inv - 1 / 12) < 1e-10
    assert abs(inverse_constant(3, h=1.0).beta_inv - inverse_constant(3, h=0.5).beta_inv) < 1e-10
    with pytest.raises(ValueError):
        inverse_constant(0)


def _forms(u, h, k=3):
    b = LagrangeBasis1D(k)
    xg, wg = np.polynomial.legendre.leggauss(k + 1)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg
    ux = b.deriv(xg) @ u / h
    vol = h * np.sum(wg * ux**2)
    ends = (b.deriv(0.0)[0] @ u / h) ** 2 + (b.deriv(1.0)[0] @ u / h) ** 2
    return vol, ends


@pytest.mark.parametrize("h", [1.0, 0.5, 0.01])
def test_inverse_constant_sharp(h):
    ic = inverse_constant(3, h)
    vol, ends = _forms(ic.extremal, h)
    assert abs(vol - ic.beta_inv * h * ends) < 1e-10 * vol


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), h=st.floats(0.01, 2.0))
def test_inverse_inequality_random(seed, h):
    u = np.random.default_rng(seed).standard_normal(4)
    vol, ends = _forms(u, h)
    assert vol >= inverse_constant(3).beta_inv * h * ends * (1 - 1e-10)


def test_desk_instance_stable():
    sys = desk()
    H = sys.Ht.toarray()
    assert np.linalg.eigvalsh(H).min() > 0
    HQ = (sys.Ht @ sys.Q).toarray()
    assert np.abs(HQ - HQ.T).max() < 1e-11 * np.abs(HQ).max()
    assert sym_max_eig(sys) <= 1e-8
    assert abs(sys.beta_tilde - min(sys.beta, sys.beta_inv)) == 0
    assert abs(sys.tau - 1.1 / (2 * sys.beta_tilde)) < 1e-12


def test_threshold_rule_min_is_stable_max_is_not():
    sys = desk()
    t_min = stability_threshold(sys.beta, sys.beta_inv, "min")
    t_max = stability_threshold(sys.beta, sys.beta_inv, "max")
    assert t_min == pytest.approx(6.0)
    assert sym_max_eig(desk(tau=t_min)) <= 1e-8
    assert sym_max_eig(desk(tau=t_max, allow_unstable=True)) > 0.1
    with pytest.raises(ValueError):
        stability_threshold(1.0, 1.0, "mean")


def test_zero_penalty_detectably_unstable():
    assert sym_max_eig(desk(tau=0.0, allow_unstable=True)) > 1e-3


def test_below_bound_raises():
    with pytest.raises(StabilityError, match="1/\\(2 beta_tilde\\)"):
        desk(tau=1.0)
    with pytest.raises(StabilityError):
        desk(tau_fd_bc=1.0)
    with pytest.raises(ValueError):
        desk(m=1)


def test_mismatched_spacing_rejected():
    with pytest.raises(ValueError, match="differ"):
        assemble_hybrid1d(build_sbp((4, 2), 30, 0.1), assemble_dg1d_blocks(3, 0.2, 25), 5)


def test_reference_interface_stencil():
    S = interface_stencil(desk(tau=25))
    assert S.shape == (8, 14)
    got = [[F(v).limit_denominator(10000) for v in row] for row in S]
    assert got == [[F(v) for v in row] for row in REFERENCE_STENCIL]
    assert np.abs(S - np.array(REFERENCE_STENCIL, dtype=float)).max() < 1e-9


def test_constants_annihilated_at_interface():
    sys = desk()
    r = sys.Q @ np.ones(sys.size)
    assert np.abs(r[sys.iface_rows]).max() < 1e-9 / sys.fd.h**2


def test_energy_formula():
    sys = desk()
    rng = np.random.default_rng(5)
    assert energy(np.zeros(sys.size), np.zeros(sys.size), sys) == 0.0
    for _ in range(5):
        z, zt = rng.standard_normal((2, sys.size))
        E = energy(z, zt, sys)
        ref = zt @ (sys.Ht @ zt) - z @ (sys.Ht @ (sys.Q @ z))
        assert abs(E - ref) < 1e-10 * abs(ref)
    with pytest.raises(ValueError):
        energy(np.zeros(3), np.zeros(3), sys)


def test_energy_nonnegative_at_threshold():
    sys = desk(tau=stability_threshold(0.2508560248534195, 1 / 12))
    rng = np.random.default_rng(11)
    scale = np.abs((sys.Ht @ sys.Q).toarray()).max()
    for z in rng.standard_normal((50, sys.size)):
        assert energy(z, np.zeros(sys.size), sys) >= -1e-10 * scale * (z @ z)


def test_continuous_state_penalty_free():
    a, b = desk(tau=7.0), desk(tau=40.0)
    x = a.coordinates()
    # continuous across the interface and element faces; zero at both ends
    z = (x - x[0]) * (x[-1] - x) * np.cos(3 * x)
    assert abs(energy(z, z, a) - energy(z, z, b)) < 1e-10 * abs(energy(z, z, a))


def test_energy_rate_vanishes():
    sys = desk()
    rng = np.random.default_rng(2)
    z, zt = rng.standard_normal((2, sys.size))
    ztt = sys.Q @ z
    HQ = sys.Ht @ sys.Q
    dE = 2 * zt @ (sys.Ht @ ztt) - zt @ (HQ @ z) - z @ (HQ @ zt)
    assert abs(dE) < 1e-11 * np.abs(HQ).max() * np.abs(z).sum() * np.abs(zt).sum()


def test_truncation_interface_reference():
    fit = truncation_interface(desk(tau=25), shifted_sine(1.0))
    np.testing.assert_allclose(fit.coefficient(2), REFERENCE_TGAMMA, rtol=0.02)


def test_truncation_interface_cubic_exact():
    S = interface_stencil(desk(tau=25))
    h = 0.1
    xc = np.concatenate([-np.arange(5, -1, -1.0), np.r_[0, 1, 2, 3, 3, 4, 5, 6] / 3]) * h
    xr = np.concatenate([-np.arange(3, -1, -1.0), np.arange(4) / 3]) * h
    p = 1 - 2 * xc + 3 * xc**2 - 0.7 * xc**3
    res = S @ p / h**2 - (6 - 4.2 * xr)
    assert np.abs(res).max() < 1e-9


def test_truncation_interface_remainder_decay():
    f = shifted_sine(0.4)
    fit = truncation_interface(desk(tau=25), f)
    S = interface_stencil(desk(tau=25))
    xc = np.concatenate([-np.arange(5, -1, -1.0), np.r_[0, 1, 2, 3, 3, 4, 5, 6] / 3])
    xr = np.concatenate([-np.arange(3, -1, -1.0), np.arange(4) / 3])
    rem = []
    for h in (0.1, 0.05, 0.025):
        r = S @ f(h * xc, 0) / h**2 - f(h * xr, 2) - h**2 * fit.coefficient(2) * f(0.0, 4)
        rem.append(np.abs(r).max())
    assert np.all(np.log2(np.array(rem[:-1]) / rem[1:]) >= 3 - 0.1)


def _run(n, L, T, U, Ut, Utt_bc=None, bc=None):
    h = L / (n - 1)
    sys = assemble_hybrid1d(build_sbp((4, 2), n, h), assemble_dg1d_blocks(3, h, 25), n - 1)
    x = sys.coordinates()
    dt, _ = estimate_dt(sys, 0.5)
    Ht = sys.Ht
    worst = [0.0]

    def track(it):
        e = it.z - U(x, it.t)
        worst[0] = max(worst[0], np.sqrt(e @ (Ht @ e)))

    g = g_t = g_tt = None
    if bc is not None:
        g = lambda t: sys.forcing(*bc(t, 0))
        g_t = lambda t: sys.forcing(*bc(t, 1))
        g_tt = lambda t: sys.forcing(*bc(t, 2))
    integrate(sys, U(x, 0.0), Ut(x, 0.0), T, dt, g, g_t, g_tt, callback=track)
    return worst[0]


def test_convergence_cosine_dirichlet():
    L = 2.0

    def bc(t, d):
        # d-th time derivative of cos(x - t) at x = -L and x = L
        return tuple(np.real((-1j) ** d * np.exp(1j * (x - t))) for x in (-L, L))

    errs = [_run(n, L, 2.0, lambda x, t: np.cos(x - t), lambda x, t: np.sin(x - t), bc=bc)
            for n in (21, 41, 81, 161)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 4.0) <= 0.25), rates


def test_convergence_pulse_through_interface():
    """A pulse crossing the interface without reaching the outer ends."""
    sig = 0.3
    U = lambda x, t: np.exp(-(((x + 1 - t) / sig) ** 2))
    Ut = lambda x, t: 2 * (x + 1 - t) / sig**2 * U(x, t)
    errs = [_run(n, 3.0, 2.0, U, Ut) for n in (31, 61, 121, 241)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert abs(rates[-1] - 4.0) <= 0.25, rates
    assert np.all(rates > 3.75), rates
