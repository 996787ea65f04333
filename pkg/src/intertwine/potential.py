"""Smooth potentials V on R^d with closed-form derivatives.

Every evaluator is vectorised: it accepts a point of shape ``(d,)`` or a
batch of shape ``(..., d)`` and returns arrays with the trailing dimensions
``()``, ``(d,)`` or ``(d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterOutOfRange, SingularPoint

Array = np.ndarray

INVALID_BOUND = -np.inf


@dataclass(frozen=True)
class RadialProfile:
    """Profile U of a radial potential V(x) = U(|x|)."""

    u: Callable[[Array], Array]
    du: Callable[[Array], Array]
    ddu: Callable[[Array], Array]

    def hessian_eigenvalues(self, r, dim):
        """All d eigenvalues: U''(r), then U'(r)/r repeated d - 1 times."""
        r = np.asarray(r, dtype=float)
        tangential = self.du(r) / r
        return np.stack([self.ddu(r)] + [tangential] * (dim - 1), axis=-1)


@dataclass(frozen=True)
class Potential:
    dim: int
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]
    hessian: Callable[[Array], Array]
    laplacian: Callable[[Array], Array]
    hessian_lower_bound: float = INVALID_BOUND
    name: str = "custom"
    params: dict = field(default_factory=dict)
    radial: Optional[RadialProfile] = None
    # gradient of the Laplacian, used for L f when f = alpha . grad V
    laplacian_gradient: Optional[Callable[[Array], Array]] = None

    @property
    def has_valid_lower_bound(self) -> bool:
        return bool(np.isfinite(self.hessian_lower_bound))

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, **self.params}


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


def _sq(x):
    return np.einsum("...i,...i->...", x, x)


def _outer(x):
    return x[..., :, None] * x[..., None, :]


def make_gaussian(d: int) -> Potential:
    """V(x) = |x|^2 / 2 (Ornstein-Uhlenbeck)."""
    if d < 1:
        raise ParameterOutOfRange("dimension must be >= 1")

    def value(x):
        return 0.5 * _sq(_points(x, d))

    def gradient(x):
        return np.array(_points(x, d), dtype=float, copy=True)

    def hessian(x):
        x = _points(x, d)
        return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()

    def laplacian(x):
        x = _points(x, d)
        return np.full(x.shape[:-1], float(d))

    def laplacian_gradient(x):
        return np.zeros_like(_points(x, d))

    profile = RadialProfile(
        u=lambda r: 0.5 * np.asarray(r) ** 2,
        du=lambda r: np.asarray(r, dtype=float),
        ddu=lambda r: np.ones_like(np.asarray(r, dtype=float)),
    )
    return Potential(d, value, gradient, hessian, laplacian, 1.0, "gaussian",
                     {}, profile, laplacian_gradient)


def make_subbotin(d: int, alpha: float) -> Potential:
    """Exponential power potential V(x) = |x|^alpha / alpha.

    At the origin the Hessian and Laplacian are returned as their limits
    when finite (alpha >= 2); for alpha < 2 they diverge and
    :class:`SingularPoint` is raised.
    """
    if d < 1:
        raise ParameterOutOfRange("dimension must be >= 1")
    if not alpha > 1:
        raise ParameterOutOfRange(f"Subbotin requires alpha > 1, got {alpha}")
    a = float(alpha)

    def _radial_factor(s):
        # U'(r)/r = r^(alpha-2), written in s = r^2
        at_origin = s == 0
        if a < 2 and np.any(at_origin):
            raise SingularPoint(f"Subbotin alpha={a} Hessian diverges at the origin")
        with np.errstate(divide="ignore"):
            return s ** ((a - 2) / 2)

    def value(x):
        return _sq(_points(x, d)) ** (a / 2) / a

    def gradient(x):
        x = _points(x, d)
        s = _sq(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = s ** ((a - 2) / 2)
        q = np.where(s == 0, 0.0, q)
        return q[..., None] * x

    def hessian(x):
        x = _points(x, d)
        s = _sq(x)
        q = _radial_factor(s)
        eye = np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (a - 2) * s ** ((a - 4) / 2)
        c = np.where(s == 0, 0.0, c)
        return q[..., None, None] * eye + c[..., None, None] * _outer(x)

    def laplacian(x):
        s = _sq(_points(x, d))
        return (a + d - 2) * _radial_factor(s)

    def laplacian_gradient(x):
        x = _points(x, d)
        s = _sq(x)
        if a < 4 and np.any(s == 0):
            raise SingularPoint(f"Subbotin alpha={a}: grad of Laplacian diverges at 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (a + d - 2) * (a - 2) * s ** ((a - 4) / 2)
        c = np.where(s == 0, 0.0, c)
        return c[..., None] * x

    profile = RadialProfile(
        u=lambda r: np.asarray(r, dtype=float) ** a / a,
        du=lambda r: np.asarray(r, dtype=float) ** (a - 1),
        ddu=lambda r: (a - 1) * np.asarray(r, dtype=float) ** (a - 2),
    )
    return Potential(d, value, gradient, hessian, laplacian, 0.0, "subbotin",
                     {"alpha": a}, profile, laplacian_gradient)


def make_gen_cauchy(d: int, beta: float) -> Potential:
    """Heavy-tailed potential V(x) = beta log(1 + |x|^2), beta > d/2."""
    if d < 1:
        raise ParameterOutOfRange("dimension must be >= 1")
    if not beta > d / 2:
        raise ParameterOutOfRange(f"generalized Cauchy needs beta > d/2 = {d / 2}, got {beta}")
    b = float(beta)

    def value(x):
        return b * np.log1p(_sq(_points(x, d)))

    def gradient(x):
        x = _points(x, d)
        return (2 * b / (1 + _sq(x)))[..., None] * x

    def hessian(x):
        x = _points(x, d)
        t = 1 + _sq(x)
        eye = np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d))
        return (2 * b / t)[..., None, None] * eye - (4 * b / t**2)[..., None, None] * _outer(x)

    def laplacian(x):
        s = _sq(_points(x, d))
        t = 1 + s
        return 2 * b * d / t - 4 * b * s / t**2

    def laplacian_gradient(x):
        x = _points(x, d)
        s = _sq(x)
        t = 1 + s
        dlap_ds = -2 * b * d / t**2 - 4 * b * (1 - s) / t**3
        return (2 * dlap_ds)[..., None] * x

    profile = RadialProfile(
        u=lambda r: b * np.log1p(np.asarray(r, dtype=float) ** 2),
        du=lambda r: 2 * b * np.asarray(r) / (1 + np.asarray(r, dtype=float) ** 2),
        ddu=lambda r: 2 * b * (1 - np.asarray(r) ** 2) / (1 + np.asarray(r, dtype=float) ** 2) ** 2,
    )
    return Potential(d, value, gradient, hessian, laplacian, -b / 4, "gen_cauchy",
                     {"beta": b}, profile, laplacian_gradient)


def make_coupled_quartic(beta: float) -> Potential:
    """V(x, y) = x^4/4 + y^4/4 - beta x y on R^2."""
    if beta < 0:
        raise ParameterOutOfRange("coupled quartic needs beta >= 0")
    b = float(beta)

    def value(p):
        p = _points(p, 2)
        x, y = p[..., 0], p[..., 1]
        return x**4 / 4 + y**4 / 4 - b * x * y

    def gradient(p):
        p = _points(p, 2)
        x, y = p[..., 0], p[..., 1]
        return np.stack([x**3 - b * y, y**3 - b * x], axis=-1)

    def hessian(p):
        p = _points(p, 2)
        x, y = p[..., 0], p[..., 1]
        h = np.empty(p.shape[:-1] + (2, 2))
        h[..., 0, 0] = 3 * x**2
        h[..., 1, 1] = 3 * y**2
        h[..., 0, 1] = h[..., 1, 0] = -b
        return h

    def laplacian(p):
        p = _points(p, 2)
        return 3 * p[..., 0] ** 2 + 3 * p[..., 1] ** 2

    def laplacian_gradient(p):
        return 6 * _points(p, 2)

    return Potential(2, value, gradient, hessian, laplacian, -b, "coupled_quartic",
                     {"beta": b}, None, laplacian_gradient)


def fd_step(x, base=1e-5):
    """Per-point central-difference step ``base * max(1, |x|)``."""
    return base * np.maximum(1.0, np.sqrt(_sq(x)))


def fd_gradient(func, x, h=None):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = fd_step(x) if h is None else np.broadcast_to(np.asarray(h, dtype=float), x.shape[:-1])
    out = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        step = h[..., None] * e
        out.append((func(x + step) - func(x - step)) / (2 * h))
    return np.stack(out, axis=-1)


def fd_jacobian(func, x, h=None):
    """Central-difference Jacobian of a vector field; symmetrised."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    h = fd_step(x) if h is None else np.broadcast_to(np.asarray(h, dtype=float), x.shape[:-1])
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        step = h[..., None] * e
        cols.append((func(x + step) - func(x - step)) / (2 * h)[..., None])
    jac = np.stack(cols, axis=-1)
    return 0.5 * (jac + np.swapaxes(jac, -1, -2))


def from_function(value, dim, gradient=None, hessian=None, name="custom",
                  hessian_lower_bound=INVALID_BOUND, params=None) -> Potential:
    """Wrap a user potential, filling missing derivatives by central differences."""
    if gradient is None:
        gradient = lambda x: fd_gradient(value, x)  # noqa: E731
        hess_base = 1e-4
    else:
        hess_base = 1e-5
    if hessian is None:
        hessian = lambda x: fd_jacobian(gradient, x, fd_step(np.asarray(x, float), hess_base))  # noqa: E731

    def laplacian(x):
        return np.trace(hessian(x), axis1=-2, axis2=-1)

    return Potential(dim, value, gradient, hessian, laplacian, hessian_lower_bound,
                     name, dict(params or {}))


@dataclass(frozen=True)
class ValidationReport:
    gradient_error: float
    hessian_error: float
    laplacian_error: float
    tolerance: float
    n_points: int

    @property
    def passed(self) -> bool:
        return max(self.gradient_error, self.hessian_error, self.laplacian_error) <= self.tolerance


def _rel_err(approx, exact):
    scale = np.maximum(1.0, np.abs(exact).reshape(exact.shape[0], -1).max(axis=1))
    diff = np.abs(approx - exact).reshape(exact.shape[0], -1).max(axis=1)
    return float(np.max(diff / scale))


def validate_derivatives(p: Potential, points, h: float = 1e-4) -> ValidationReport:
    """Compare derivative handles with central differences at ``points``.

    Passes iff every max relative error is at most ``100 h^2``.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    grad = p.gradient(pts)
    hess = p.hessian(pts)
    lap = p.laplacian(pts)
    hh = np.full(pts.shape[0], h)
    g_fd = fd_gradient(p.value, pts, hh)
    h_fd = fd_jacobian(p.gradient, pts, hh)
    lap_err = _rel_err(lap[:, None], np.trace(hess, axis1=-2, axis2=-1)[:, None])
    return ValidationReport(
        gradient_error=_rel_err(g_fd, grad),
        hessian_error=_rel_err(h_fd, hess),
        laplacian_error=lap_err,
        tolerance=100 * h**2,
        n_points=pts.shape[0],
    )


BUILTINS = {
    "gaussian": lambda dim=2, **_: make_gaussian(int(dim)),
    "subbotin": lambda dim=2, alpha=None, **_: make_subbotin(int(dim), alpha),
    "gen_cauchy": lambda dim=2, beta=None, **_: make_gen_cauchy(int(dim), beta),
    "coupled_quartic": lambda dim=2, beta=None, **_: make_coupled_quartic(beta),
}


def from_config(block: dict) -> Potential:
    """Build a built-in potential from ``{name, dim, alpha?, beta?}``."""
    name = block.get("name")
    if name not in BUILTINS:
        raise ParameterOutOfRange(f"unknown potential {name!r}")
    if name in ("subbotin",) and block.get("alpha") is None:
        raise ParameterOutOfRange("subbotin requires alpha")
    if name in ("gen_cauchy", "coupled_quartic") and block.get("beta") is None:
        raise ParameterOutOfRange(f"{name} requires beta")
    if name == "coupled_quartic" and block.get("dim", 2) != 2:
        raise ParameterOutOfRange("coupled_quartic is two-dimensional")
    return BUILTINS[name](**{k: v for k, v in block.items() if k != "name"})
