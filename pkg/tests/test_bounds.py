import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intertwine.bounds import (audit_certificate, bl_envelope, cauchy_closed_form, golden_section,
                               inf_rho_bound, integrated_bound, optimize_epsilon, quartic_bound,
                               subbotin_closed_form)
from intertwine.discretize import gap
from intertwine.errors import (BoundsUnverified, CertificateViolation, NonPositiveBound,
                               ParameterOutOfRange)
from intertwine.grid import GridSpec
from intertwine.measure import build_measure
from intertwine.potential import make_coupled_quartic, make_gaussian, make_gen_cauchy, make_subbotin
from intertwine.weights import identity_weight, make_epsilon_weight, make_quartic_z_weight, m_field


def _min_eps_oracle(gamma, n=2_000_001):
    eps = np.linspace(0, 1 / gamma, n)
    vals = np.minimum(1 - gamma * eps, eps * (1 - eps))
    k = int(np.argmax(vals))
    # refine the crossing on the fine grid
    return golden_section(lambda e: min(1 - gamma * e, e * (1 - e)),
                          eps[max(k - 1, 0)], eps[min(k + 1, n - 1)], 1e-14, maximize=True)[1]


def test_inf_rho_gaussian_identity():
    p = make_gaussian(2)
    rep = inf_rho_bound(m_field(p, identity_weight(2)), GridSpec.cube(6, 41, 2))
    assert rep.value == pytest.approx(1.0, abs=1e-14)
    assert rep.kind == "InfRho"


def test_inf_rho_cauchy_identity_fails():
    p = make_gen_cauchy(2, 4.0)
    with pytest.raises(NonPositiveBound):
        inf_rho_bound(m_field(p, identity_weight(2)), GridSpec.cube(5, 51, 2))


def test_inf_rho_quartic_z_weight():
    p = make_coupled_quartic(0.1)
    m = m_field(p, make_quartic_z_weight(p, 0.25, math.sqrt(1.49)))
    grid = GridSpec.cube(4, 201, 2)
    rep = inf_rho_bound(m, grid)
    assert rep.value >= math.sqrt(1.49) - 1.1
    nodes = grid.nodes()
    assert np.all(m.rho(nodes) >= rep.value)


def test_audit_catches_false_claim():
    p = make_gaussian(2)
    m = m_field(p, make_epsilon_weight(p, 0.1))
    grid = GridSpec.cube(3, 11, 2)
    rep = inf_rho_bound(m, grid)
    from dataclasses import replace
    with pytest.raises(CertificateViolation):
        audit_certificate(replace(rep, value=rep.value + 0.05), m.rho, grid)


def test_integrated_bound_examples():
    g1 = make_gaussian(1)
    mu = build_measure(g1, 64)
    rep = integrated_bound(m_field(g1, identity_weight(1)), mu, 1.0, 1.0)
    assert rep.value == pytest.approx(1.0, rel=1e-12)
    # S = exp(0.2 V) is not bounded by [1, 1]
    g2 = make_gaussian(2)
    m = m_field(g2, make_epsilon_weight(g2, 0.1))
    with pytest.raises(BoundsUnverified):
        integrated_bound(m, build_measure(g2, 32), 1.0, 1.0, GridSpec.cube(2, 21, 2))


def test_integrated_bound_identity_corollary():
    # a = I, V = x^2/2 + x^4/4: value = 1 / int dmu / (1 + 3x^2), above inf rho = 1
    from intertwine.potential import from_function
    p = from_function(lambda x: x[..., 0] ** 2 / 2 + x[..., 0] ** 4 / 4, 1,
                      gradient=lambda x: x + x**3, hessian=lambda x: (1 + 3 * x**2)[..., None])
    mu = build_measure(p, 96)
    m = m_field(p, identity_weight(1))
    rep = integrated_bound(m, mu, 1.0, 1.0, GridSpec(mu.box, 201))
    expected = 1 / mu.expect(1 / (1 + 3 * mu.points[:, 0] ** 2))
    assert rep.value == pytest.approx(expected, rel=1e-12)
    assert rep.value > inf_rho_bound(m, GridSpec(mu.box, 201)).value
    assert rep.value <= gap(p, mu.box, 2001).lambda1 + 1e-3


def test_integrated_bound_corollary():
    p = make_subbotin(2, 4.0)
    mu = build_measure(p, 64)
    m = m_field(p, identity_weight(2))
    with pytest.raises(NonPositiveBound):
        # rho vanishes at the origin, so the inf over a grid through it is 0
        integrated_bound(m, mu, 1.0, 1.0, GridSpec.cube(3, 21, 2))


def test_subbotin_closed_form_examples():
    eps, pref = subbotin_closed_form(2.0, 2)
    assert pref == pytest.approx(math.sqrt(5) - 2, abs=1e-15)
    assert eps == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-15)
    _, big = subbotin_closed_form(2.0, 10_000)
    assert big * 10_000 == pytest.approx(1.0, rel=1e-2)
    with pytest.raises(ParameterOutOfRange):
        subbotin_closed_form(1.0, 2)


@pytest.mark.parametrize("gamma", [2, 3, 5, 10, 100])
def test_subbotin_prefactor_matches_grid_oracle(gamma):
    # alpha = 2, d = gamma gives that gamma
    _, pref = subbotin_closed_form(2.0, gamma)
    assert pref == pytest.approx(_min_eps_oracle(gamma), abs=1e-6)


def test_cauchy_closed_form():
    rep = cauchy_closed_form(4.0, 2)
    assert rep.value == 4.0 and rep.parameters["epsilon"] == 0.25
    with pytest.raises(ParameterOutOfRange):
        cauchy_closed_form(2.0, 2)
    beta, d = 4.0, 2
    eps = np.linspace(1e-6, 0.5 - 1e-6, 500_001)
    vals = np.minimum(1 - eps * d, -1 - eps * d + 2 * eps + 2 * beta * eps * (1 - eps))
    assert vals.max() >= 2 * (beta - d) / (2 * beta) - 1e-6


def test_quartic_bound_examples():
    assert quartic_bound(0.1).value == pytest.approx(0.120656, abs=1e-6)
    assert quartic_bound(0.0).value == pytest.approx(math.sqrt(1.5) - 1, abs=1e-12)
    with pytest.raises(ParameterOutOfRange):
        quartic_bound(0.3)


def test_quartic_decoupled_gap_oracle():
    # beta = 0: product of two 1D quartic measures, gap = 1D gap
    from intertwine.potential import from_function
    one_d = from_function(lambda x: x[..., 0] ** 4 / 4, 1, gradient=lambda x: x**3,
                          hessian=lambda x: 3 * x[..., None] ** 2)
    lam = gap(one_d, [(-5, 5)], 2001).lambda1
    assert lam >= quartic_bound(0.0).value


def test_optimize_epsilon_gaussian():
    p = make_gaussian(2)
    rep = optimize_epsilon(p, GridSpec.cube(12, 121, 2), envelope=bl_envelope(p))
    assert rep.value == pytest.approx(math.sqrt(5) - 2, abs=1e-6)
    assert rep.parameters["epsilon"] == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-4)
    # without an envelope the certified gap bound is still below the true gap 1
    plain = optimize_epsilon(p, GridSpec.cube(5, 41, 2))
    assert 0 < plain.value <= 1 + 1e-12


def test_optimize_epsilon_cauchy():
    p = make_gen_cauchy(2, 4.0)
    rep = optimize_epsilon(p, GridSpec.cube(30, 121, 2), envelope=bl_envelope(p))
    assert rep.value == pytest.approx(4.0, abs=1e-6)
    thin = make_gen_cauchy(2, 1.01)
    try:
        optimize_epsilon(thin, GridSpec.cube(30, 61, 2), envelope=bl_envelope(thin))
    except NonPositiveBound:
        pass


def test_bounds_below_fd_gap():
    p = make_coupled_quartic(0.1)
    lam = gap(p, [(-4, 4)] * 2, 201).lambda1
    m = m_field(p, make_quartic_z_weight(p, 0.25, math.sqrt(1.49)))
    assert inf_rho_bound(m, GridSpec.cube(4, 101, 2)).value <= lam + 1e-3
    assert quartic_bound(0.1).value <= lam + 1e-3
    g = make_gaussian(1)
    lam_g = gap(g, [(-8, 8)], 801).lambda1
    mu = build_measure(g, 64)
    m_g = m_field(g, make_epsilon_weight(g, 0.1))
    grid = GridSpec.cube(mu.box[0][1], 201, 1)
    lo, hi = np.exp(2 * 0.1 * g.value(grid.nodes())).min(), np.exp(2 * 0.1 * g.value(grid.nodes())).max()
    rep = integrated_bound(m_g, mu, lo, hi * (1 + 1e-9), grid)
    assert rep.value <= lam_g + 1e-3


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.49), st.integers(0, 1000))
def test_certificate_soundness_property(eps, seed):
    p = make_gaussian(2)
    rep = inf_rho_bound(m_field(p, make_epsilon_weight(p, eps)), GridSpec.cube(3, 31, 2),
                        seed=seed)
    pts = GridSpec.cube(3, 31, 2).uniform(2000, seed + 1)
    assert np.all(m_field(p, make_epsilon_weight(p, eps)).rho(pts) >= rep.value - 1e-9)
