import math

import numpy as np
import pytest

from intertwine.errors import (ConfigInvalid, NonExplosionUnverified, ParameterOutOfRange,
                               PathDiverged)
from intertwine.inequalities import constant, linear, squared_norm
from intertwine.potential import from_function, make_coupled_quartic, make_gaussian
from intertwine.sde import (PathConfig, crn_gradient_estimate, envelope_check, evolve_Y,
                            fk_scalar_estimate, fk_vector_estimate, simulate_paths,
                            sub_intertwining)
from intertwine.weights import (identity_weight, make_epsilon_weight, make_quartic_z_weight,
                                m_field)

G2 = make_gaussian(2)
X1 = linear([1.0, 0.0], "x1")


def cfg(n=20_000, dt=1e-3, t=0.5, seed=11, **kw):
    return PathConfig(t, dt, n, seed, **kw)


def within(est, target, k=3.0, extra=0.0):
    return np.all(np.abs(np.asarray(est.mean) - target) <= k * np.asarray(est.std_error) + extra)


def test_path_config_validation():
    with pytest.raises(ConfigInvalid):
        PathConfig(0.5, 0.3)
    with pytest.raises(ConfigInvalid):
        PathConfig(0.5, -1e-3)
    with pytest.raises(ConfigInvalid):
        PathConfig(0.5, 1e-3, 0)
    assert PathConfig(0.5, 1e-3).n_steps == 500


def test_determinism():
    a = simulate_paths(G2, None, [0.3, 0.1], cfg(3000, chunk=1000))
    b = simulate_paths(G2, None, [0.3, 0.1], cfg(3000, chunk=1000))
    np.testing.assert_array_equal(a.final, b.final)
    c = simulate_paths(G2, None, [0.3, 0.1], cfg(3000, seed=12, chunk=1000))
    assert not np.array_equal(a.final, c.final)


def test_ou_means():
    ens = simulate_paths(G2, None, [0.0, 0.0], cfg())
    se = ens.final.std(0, ddof=1) / math.sqrt(len(ens.final))
    assert np.all(np.abs(ens.final.mean(0)) <= 3 * se)
    x = np.array([1.0, -0.5])
    ens = simulate_paths(G2, None, x, cfg())
    se = ens.final.std(0, ddof=1) / math.sqrt(len(ens.final))
    assert np.all(np.abs(ens.final.mean(0) - math.exp(-0.5) * x) <= 3 * se)
    ens = simulate_paths(G2, make_epsilon_weight(G2, 0.1), x, cfg())
    se = ens.final.std(0, ddof=1) / math.sqrt(len(ens.final))
    assert np.all(np.abs(ens.final.mean(0) - math.exp(-0.8 * 0.5) * x) <= 3 * se)


def test_recorded_paths_match_final():
    ens = simulate_paths(G2, None, [0.2, 0.2], cfg(50), record=True)
    assert ens.paths.shape == (501, 50, 2)
    np.testing.assert_array_equal(ens.paths[-1], ens.final)


def test_evolve_y_constant_field():
    c = 1.7
    p = from_function(lambda x: c * np.sum(x**2, -1) / 2, 2, gradient=lambda x: c * x,
                      hessian=lambda x: c * np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)))
    m = m_field(p, identity_weight(2))
    conf = cfg(1)
    y = evolve_Y(m, np.zeros((conf.n_steps + 1, 2)), conf)
    np.testing.assert_allclose(y[-1], math.exp(-c * 0.5) * np.eye(2), atol=conf.dt**2)
    # Gaussian: Y = e^{-t} I along any path
    path = simulate_paths(G2, None, [1.0, 1.0], cfg(1), record=True).paths[:, 0]
    y = evolve_Y(m_field(G2, identity_weight(2)), path, conf)
    np.testing.assert_allclose(y[-1], math.exp(-0.5) * np.eye(2), atol=conf.dt**2)


def test_fk_identity_matches_ou():
    conf = cfg()
    est = fk_vector_estimate(G2, None, X1, [0.0, 0.0], conf)
    # the identity-weight estimator is deterministic: allow the O(dt^2) scheme error
    assert within(est, [math.exp(-0.5), 0.0], extra=conf.dt**2)


def test_fk_at_time_zero():
    w = make_epsilon_weight(G2, 0.2)
    x0 = np.array([0.4, -1.0])
    f = squared_norm()
    est = fk_vector_estimate(G2, w, f, x0, PathConfig(0.0, 1e-3, 50))
    np.testing.assert_allclose(est.mean, w.scalar_a(x0) * f.grad(x0), rtol=1e-15)
    np.testing.assert_array_equal(est.std_error, 0)


def test_crn_examples():
    conf = cfg(5000)
    est = crn_gradient_estimate(G2, constant(), [0.3, 0.0], 1e-3, conf)
    np.testing.assert_array_equal(est.mean, 0.0)
    est = crn_gradient_estimate(G2, X1, [0.3, 0.0], 1e-3, conf)
    # OU: exact up to the Euler factor (1 - dt)^n
    assert within(est, [math.exp(-0.5), 0.0], extra=conf.dt**2 + 2e-4)
    with pytest.raises(ParameterOutOfRange):
        crn_gradient_estimate(G2, X1, [0.0, 0.0], 0.1, conf)


def test_intertwining_epsilon_weight():
    conf = cfg(20_000)
    w = make_epsilon_weight(G2, 0.1)
    x0 = np.array([0.5, -0.3])
    fk = fk_vector_estimate(G2, w, X1, x0, conf)
    crn = crn_gradient_estimate(G2, X1, x0, 1e-3, conf)
    a0 = w.scalar_a(x0)
    se = np.sqrt(fk.std_error**2 + (a0 * crn.std_error) ** 2)
    assert np.all(np.abs(fk.mean - a0 * crn.mean) <= 3 * se + conf.dt**2)


def test_intertwining_quartic():
    q = make_coupled_quartic(0.1)
    f = linear([1.0, 1.0], "x1+x2")
    conf = cfg(20_000, seed=5)
    x0 = np.array([0.3, 0.8])
    w = make_epsilon_weight(q, 0.1)
    fk = fk_vector_estimate(q, w, f, x0, conf)
    crn = crn_gradient_estimate(q, f, x0, 1e-3, conf)
    a0 = w.scalar_a(x0)
    se = np.sqrt(fk.std_error**2 + (a0 * crn.std_error) ** 2)
    assert np.all(np.abs(fk.mean - a0 * crn.mean) <= 3 * se)


def test_fk_scalar_examples():
    conf = cfg(5000)
    x0 = np.array([0.7, 0.0])
    plain = fk_scalar_estimate(G2, None, lambda x: 0.0, lambda x: x[:, 0], x0, conf)
    ens = simulate_paths(G2, None, x0, conf)
    assert plain.mean == pytest.approx(ens.final[:, 0].mean(), rel=1e-12)
    disc = fk_scalar_estimate(G2, None, lambda x: 1.3, lambda x: np.ones(len(x)), x0, conf)
    assert abs(disc.mean - math.exp(-1.3 * 0.5)) <= 3 * disc.std_error + conf.dt


def test_sub_intertwining_holds():
    for p in (G2, make_coupled_quartic(0.1)):
        res = sub_intertwining(p, make_epsilon_weight(p, 0.1), linear([1.0, 1.0]), [0.4, 0.2],
                               cfg(5000))
        assert res["holds"]


def test_envelope_on_every_path():
    for p in (G2, make_coupled_quartic(0.1)):
        rep = envelope_check(p, make_epsilon_weight(p, 0.1), [0.5, -0.5], cfg(1000))
        assert rep.passed and rep.n_paths == 1000


def test_time_consistency():
    w = make_epsilon_weight(G2, 0.1)
    x0 = [0.5, 0.2]
    coarse = fk_vector_estimate(G2, w, X1, x0, cfg(10_000, dt=2e-3, coupling=2))
    fine = fk_vector_estimate(G2, w, X1, x0, cfg(10_000, dt=1e-3))
    se = np.sqrt(coarse.std_error**2 + fine.std_error**2)
    assert np.all(np.abs(coarse.mean - fine.mean) <= se)


def test_non_explosion_gate():
    user = from_function(lambda x: np.sum(x**2, -1) / 2, 2, gradient=lambda x: np.asarray(x))
    with pytest.raises(NonExplosionUnverified):
        simulate_paths(user, None, [0.0, 0.0], cfg(10))
    simulate_paths(user, None, [0.0, 0.0], cfg(10), lyapunov=True)


def test_path_diverged():
    bad = from_function(lambda x: -np.sum(x**4, -1), 1, gradient=lambda x: -4 * np.asarray(x) ** 3)
    with pytest.raises(PathDiverged):
        simulate_paths(bad, None, [5.0], PathConfig(1.0, 1e-2, 10), lyapunov=True)


def test_diagonal_weight_rejected():
    q = make_coupled_quartic(0.1)
    with pytest.raises(ParameterOutOfRange):
        fk_vector_estimate(q, make_quartic_z_weight(q, 0.25, 1.2), X1, [0.0, 0.0], cfg(10))
