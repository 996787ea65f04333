import math

import numpy as np
import pytest

from intertwine.discretize import assemble, gap, lambda1, lanczos_smallest_nonzero
from intertwine.errors import DimensionTooLarge, NoConvergence
from intertwine.grid import GridSpec
from intertwine.potential import from_function, make_coupled_quartic, make_gaussian


def test_ou_1d():
    res = gap(make_gaussian(1), [(-8, 8)], 2001)
    assert res.lambda1 == pytest.approx(1.0, abs=1e-3)
    assert res.residual < 1e-8
    assert res.smallest_ritz >= -1e-9


def test_uniform_neumann():
    flat = from_function(lambda x: np.zeros(np.shape(x)[:-1]), 1)
    res = gap(flat, [(0, 1)], 501)
    assert res.lambda1 == pytest.approx(math.pi**2, rel=1e-3)


def test_ou_2d_product():
    assert gap(make_gaussian(2), [(-8, 8)] * 2, 201).lambda1 == pytest.approx(1.0, abs=2e-3)


def test_operator_invariants():
    op = assemble(make_coupled_quartic(0.1), GridSpec.cube(3, 41, 2))
    k = op.matrix
    assert abs(k - k.T).max() <= 1e-12
    assert np.linalg.norm(k @ op.sqrt_mass) <= 1e-8 * np.linalg.norm(op.sqrt_mass)
    assert op.quadratic_form(np.ones(op.n)) == pytest.approx(0.0, abs=1e-10)
    f = np.random.default_rng(0).normal(size=op.n)
    assert op.quadratic_form(f) > 0


def test_quartic_gap_convergence():
    a = gap(make_coupled_quartic(0.1), [(-4, 4)] * 2, 201).lambda1
    b = gap(make_coupled_quartic(0.1), [(-4, 4)] * 2, 401).lambda1
    c = gap(make_coupled_quartic(0.1), [(-5, 5)] * 2, 251).lambda1
    assert abs(a - b) < 5e-3 * b
    assert abs(c - a) < 1e-3 * a


def test_dimension_too_large():
    with pytest.raises(DimensionTooLarge):
        assemble(make_gaussian(3), GridSpec.cube(3, 5, 3))


def test_no_convergence_reports_residual():
    op = assemble(make_gaussian(1), GridSpec.cube(8, 401, 1))
    with pytest.raises(NoConvergence) as err:
        lambda1(op, tol=1e-30, max_iter=3)
    assert err.value.residual is not None


def test_lanczos_dense_oracle():
    r = np.random.default_rng(2)
    q, _ = np.linalg.qr(r.normal(size=(60, 60)))
    ev = np.r_[0.0, np.linspace(0.3, 5, 59)]
    mat = (q * ev) @ q.T
    import scipy.sparse as sp
    lam, vec, resid, _ = lanczos_smallest_nonzero(sp.csr_matrix(mat), q[:, 0])
    assert lam == pytest.approx(0.3, rel=1e-8)
