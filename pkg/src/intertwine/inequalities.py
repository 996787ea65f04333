"""Both sides of the variance, covariance and Gamma_2 inequalities, evaluated by quadrature.

Every check returns a :class:`MarginReport` with ``margin = rhs - lhs``; the
claimed inequality is ``lhs <= rhs`` and it passes when ``margin >= -tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveRho, SingularPoint
from .grid import GridSpec
from .measure import Measure, covariance, energy, variance
from .potential import Potential, fd_gradient
from .weights import MField, identity_weight, m_field

REL_TOL = 1e-8
SUP_DENSITY = 64  # dense sup grid has this many times the quadrature node count
SUP_CHUNK = 200_000


@dataclass(frozen=True)
class TestFunction:
    __test__ = False  # keep pytest from collecting it

    name: str
    f: Callable
    grad: Callable
    lap: Optional[Callable] = None
    family: str = "custom"

    def generator(self, p: Potential, x):
        """L f = lap f - grad V . grad f."""
        if self.lap is None:
            raise ValueError(f"{self.name} has no Laplacian")
        return self.lap(x) - np.einsum("...i,...i->...", p.gradient(x), self.grad(x))

    def gradient_error(self, points, h=1e-5):
        """Max abs difference between grad and central differences of f."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return float(np.max(np.abs(fd_gradient(self.f, pts, h) - self.grad(pts))))


@dataclass(frozen=True)
class MarginReport:
    inequality: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    tolerance: float
    inputs: dict = field(default_factory=dict)

    def as_dict(self):
        return {"inequality": self.inequality, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "pass": self.passed, "tolerance": self.tolerance,
                "inputs": self.inputs}


def _report(name, lhs, rhs, inputs):
    lhs, rhs = float(lhs), float(rhs)
    tol = REL_TOL * (1 + abs(rhs))
    margin = rhs - lhs
    return MarginReport(name, lhs, rhs, margin, bool(margin >= -tol), tol, inputs)


def _axis(i, x):
    return np.asarray(x, dtype=float)[..., i]


def _unit(i, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[..., i] = 1.0
    return out


def _zeros(x):
    return np.zeros(np.asarray(x).shape[:-1])


def linear(coeffs, name=None) -> TestFunction:
    c = np.asarray(coeffs, dtype=float)
    return TestFunction(name or f"linear{c.tolist()}",
                        lambda x: np.asarray(x, dtype=float) @ c,
                        lambda x: np.broadcast_to(c, np.shape(x)).copy(),
                        _zeros, "linear")


def product_x1x2() -> TestFunction:
    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0], out[..., 1] = x[..., 1], x[..., 0]
        return out

    return TestFunction("x1*x2", lambda x: _axis(0, x) * _axis(1, x), grad, _zeros, "quadratic")


def squared_norm() -> TestFunction:
    return TestFunction("|x|^2", lambda x: np.einsum("...i,...i->...", x, x),
                        lambda x: 2 * np.asarray(x, dtype=float),
                        lambda x: np.full(np.shape(x)[:-1], 2.0 * np.shape(x)[-1]), "radial")


def sin_x1() -> TestFunction:
    return TestFunction("sin(x1)", lambda x: np.sin(_axis(0, x)),
                        lambda x: np.cos(_axis(0, x))[..., None] * _unit(0, x),
                        lambda x: -np.sin(_axis(0, x)), "oscillatory")


def alpha_grad_v(p: Potential, alpha=None) -> TestFunction:
    """f = alpha . grad V, the extremal family of the classical BL inequality."""
    a = np.ones(p.dim) if alpha is None else np.asarray(alpha, dtype=float)

    def lap(x):
        if p.laplacian_gradient is None:
            raise ValueError(f"{p.name} has no grad(lap V)")
        return p.laplacian_gradient(x) @ a

    return TestFunction("alpha.gradV", lambda x: p.gradient(x) @ a,
                        lambda x: p.hessian(x) @ a, lap, "custom")


def constant(c=1.0) -> TestFunction:
    return TestFunction("const", lambda x: np.full(np.shape(x)[:-1], float(c)),
                        lambda x: np.zeros(np.shape(x)), _zeros, "custom")


def default_family(p: Potential) -> list:
    """x1, x1+x2, x1 x2, |x|^2, sin(x1), alpha.gradV (two-coordinate members need d >= 2)."""
    d = p.dim
    fam = [linear(np.eye(d)[0], "x1")]
    if d >= 2:
        fam += [linear(np.r_[1.0, 1.0, np.zeros(d - 2)], "x1+x2"), product_x1x2()]
    fam += [squared_norm(), sin_x1(), alpha_grad_v(p)]
    return fam


def _kernel(m):
    return m.eval if isinstance(m, MField) else m


def check_generalized_bl(mu: Measure, m, f: TestFunction) -> MarginReport:
    """Var(f) <= int grad f^T K^{-1} grad f dmu, K the twisted field or any kernel."""
    rhs = energy(mu, f.grad, _kernel(m))
    inputs = {"f": f.name}
    if isinstance(m, MField):
        inputs.update(m.describe())
    return _report("gbl", variance(mu, f.f), rhs, inputs)


def check_classical_bl(mu: Measure, p: Potential, f: TestFunction) -> MarginReport:
    """Var(f) <= int grad f^T (hess V)^{-1} grad f dmu."""
    return replace(check_generalized_bl(mu, m_field(p, identity_weight(p.dim)), f),
                   inequality="cbl")


def check_weighted_bl(mu: Measure, c: float, k: Callable, f: TestFunction) -> MarginReport:
    """c Var(f) <= int k(x) |grad f|^2 dmu for a positive scalar profile k."""
    g = f.grad(mu.points)
    rhs = mu.expect(k(mu.points) * np.einsum("ni,ni->n", g, g))
    return _report("weighted_bl", c * variance(mu, f.f), rhs, {"f": f.name, "constant": c})


def _dense_grid(mu: Measure, factor_total=SUP_DENSITY) -> GridSpec:
    per_axis = math.ceil(factor_total ** (1 / mu.dim) - 1e-9)
    return GridSpec(mu.box, [n * per_axis for n in mu.resolution])


def _chunks(points, size=SUP_CHUNK):
    for i in range(0, len(points), size):
        yield points[i:i + size]


def grid_sup(m: MField, g: TestFunction, mu: Measure):
    """max of |a grad g| / rho_a over quadrature nodes and a 64x denser uniform grid."""
    a = m.weight.scalar_a
    dense = _dense_grid(mu)
    best = 0.0
    for pts in [mu.points, *_chunks(dense.nodes())]:
        try:
            rho = m.rho(pts)
        except SingularPoint:
            pts = pts[np.any(pts != 0, axis=-1)]
            rho = m.rho(pts)
        low = rho <= 0
        if np.any(low):
            raise NonPositiveRho(f"rho_a <= 0 at {int(low.sum())} sup-grid points",
                                 nodes=pts[low])
        num = a(pts) * np.linalg.norm(g.grad(pts), axis=-1)
        best = max(best, float(np.max(num / rho)))
    return best, dense.describe()


def check_asymmetric_bl(mu: Measure, m: MField, f: TestFunction, g: TestFunction) -> MarginReport:
    """|Cov(f, g)| <= ||a grad g / rho_a||_sup * int |grad f| / a dmu (sup over a grid)."""
    a = m.weight.scalar_a
    rho_nodes = m.rho(mu.points)
    if np.any(rho_nodes <= 0):
        raise NonPositiveRho("rho_a <= 0 at quadrature nodes",
                             nodes=mu.points[rho_nodes <= 0])
    sup, grid = grid_sup(m, g, mu)
    l1 = mu.expect(np.linalg.norm(f.grad(mu.points), axis=-1) / a(mu.points))
    lhs = abs(covariance(mu, f.f, g.f))
    return _report("abl", lhs, sup * l1, {"f": f.name, "g": g.name, "sup": "grid-sup",
                                          "sup_grid": grid, **m.describe()})


def check_poincare(mu: Measure, lambda_cand: float, f: TestFunction) -> MarginReport:
    """lambda Var(f) <= int |grad f|^2 dmu."""
    rhs = energy(mu, f.grad)
    return _report("poincare", lambda_cand * variance(mu, f.f), rhs,
                   {"f": f.name, "lambda": lambda_cand})


def check_gamma2(mu: Measure, m: MField, f: TestFunction) -> MarginReport:
    """int grad f^T (A^{-1} M_A A) grad f dmu <= int (L f)^2 dmu; no sign condition on M."""
    x = mu.points
    g = f.grad(x)
    lhs = mu.expect(np.einsum("ni,nij,nj->n", g, m.eval(x), g))
    rhs = mu.expect(f.generator(m.potential, x) ** 2)
    return _report("gamma2", lhs, rhs, {"f": f.name, **m.describe()})
