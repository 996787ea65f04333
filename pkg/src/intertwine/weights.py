"""Diagonal weights A = diag(a_i), a_i = exp(-W_i), and the twisted Hessian field.

For a diagonal weight the matrix A^{-1} M_A A equals
``hess V - diag(a_i L a_i^{-1})`` and is symmetric. With a = exp(-W),

    a L a^{-1} = lap W + |grad W|^2 - grad V . grad W,

which only needs first and second derivatives of W.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterOutOfRange
from .linalg import smallest_eigenvalue
from .potential import Potential, fd_gradient, fd_jacobian, fd_step

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class WeightComponent:
    """One log-weight W with its gradient and Laplacian."""

    w: Callable
    grad: Callable
    lap: Callable


@dataclass(frozen=True)
class Weight:
    kind: str  # "scalar" or "diagonal"
    dim: int
    components: tuple
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # closed-form twisted field x -> (..., d, d) when one is known
    closed_form: Optional[Callable] = None
    is_identity: bool = False

    def _per_axis(self, values):
        if self.kind == "scalar":
            return np.repeat(values[0][..., None], self.dim, axis=-1)
        return np.stack(values, axis=-1)

    def log_weight(self, x):
        """W_i(x), shape (..., d)."""
        return self._per_axis([c.w(x) for c in self.components])

    def a(self, x):
        return np.exp(-self.log_weight(x))

    def scalar_a(self, x):
        if self.kind != "scalar":
            raise ValueError("weight is not scalar")
        return np.exp(-self.components[0].w(x))

    def a_L_ainv(self, p: Potential, x):
        """a_i L a_i^{-1} for every axis, shape (..., d)."""
        grad_v = p.gradient(x)
        out = []
        for c in self.components:
            gw = c.grad(x)
            out.append(c.lap(x) + np.einsum("...i,...i->...", gw, gw)
                       - np.einsum("...i,...i->...", grad_v, gw))
        return self._per_axis(out)

    def describe(self) -> dict:
        return {"kind": self.name, **self.params}


def _zero(x):
    return np.zeros(np.asarray(x).shape[:-1])


def identity_weight(d: int) -> Weight:
    comp = WeightComponent(_zero, lambda x: np.zeros_like(np.asarray(x, dtype=float)), _zero)
    return Weight("scalar", d, (comp,), "identity", {}, None, True)


def scalar_weight(dim, w, grad, lap, name="scalar_expr", params=None) -> Weight:
    return Weight("scalar", dim, (WeightComponent(w, grad, lap),), name, dict(params or {}))


def expression_weight(dim: int, expr: str) -> Weight:
    """Scalar weight with W given as a numpy expression in x1..xd (and r2 = |x|^2).

    Derivatives come from central differences, so fields built on it carry
    FD-level accuracy (about 1e-6 relative for smooth W).
    """
    code = compile(expr, "<weight expr>", "eval")

    def w(x):
        x = np.asarray(x, dtype=float)
        env = {"np": np, "r2": np.einsum("...i,...i->...", x, x)}
        env.update({f"x{i + 1}": x[..., i] for i in range(dim)})
        return np.broadcast_to(eval(code, {"__builtins__": {}}, env), x.shape[:-1])

    def grad(x):
        return fd_gradient(w, x)

    def lap(x):
        x = np.asarray(x, dtype=float)
        return np.trace(fd_jacobian(grad, x, fd_step(x, 1e-4)), axis1=-2, axis2=-1)

    return scalar_weight(dim, w, grad, lap, "scalar_expr", {"expr": expr})


def diagonal_weight(components, name="diagonal", params=None) -> Weight:
    comps = tuple(components)
    return Weight("diagonal", len(comps), comps, name, dict(params or {}))


def make_epsilon_weight(p: Potential, epsilon: float) -> Weight:
    """Scalar weight a = exp(-epsilon V) for 0 < epsilon < 1/2.

    Its twisted field has the closed form
    ``hess V + (-eps lap V + eps (1 - eps) |grad V|^2) I``.
    """
    eps = float(epsilon)
    if not 0 < eps < 0.5:
        raise ParameterOutOfRange(f"epsilon must lie in (0, 1/2), got {epsilon}")
    comp = WeightComponent(
        w=lambda x: eps * p.value(x),
        grad=lambda x: eps * p.gradient(x),
        lap=lambda x: eps * p.laplacian(x),
    )

    def closed_form(x):
        g = p.gradient(x)
        shift = -eps * p.laplacian(x) + eps * (1 - eps) * np.einsum("...i,...i->...", g, g)
        return p.hessian(x) + shift[..., None, None] * np.eye(p.dim)

    return Weight("scalar", p.dim, (comp,), "epsilon", {"epsilon": eps}, closed_form)


def make_quartic_z_weight(p: Potential, b: float, c: float) -> Weight:
    """Two-coordinate weight for the coupled quartic.

    a_1 = exp(Z_1 - V/2) with Z_1 = b y^4/4 + c x^2/2 and a_2(x, y) = a_1(y, x),
    which makes the (0, 0) entry of the twisted field equal to
    ``3x^2 + lap Z - |grad Z|^2 - lap V / 2 + |grad V|^2 / 4``.
    """
    if p.dim != 2:
        raise ParameterOutOfRange("the Z-weight is two-dimensional")
    b, c = float(b), float(c)

    def make(i):
        j = 1 - i

        def z(x):
            x = np.asarray(x, dtype=float)
            return b * x[..., j] ** 4 / 4 + c * x[..., i] ** 2 / 2

        def grad_z(x):
            x = np.asarray(x, dtype=float)
            g = np.empty_like(x)
            g[..., i] = c * x[..., i]
            g[..., j] = b * x[..., j] ** 3
            return g

        def lap_z(x):
            x = np.asarray(x, dtype=float)
            return c + 3 * b * x[..., j] ** 2

        # log-weight W = V/2 - Z so that a = exp(-W) = exp(Z - V/2)
        return WeightComponent(
            w=lambda x: 0.5 * p.value(x) - z(x),
            grad=lambda x: 0.5 * p.gradient(x) - grad_z(x),
            lap=lambda x: 0.5 * p.laplacian(x) - lap_z(x),
        )

    return diagonal_weight([make(0), make(1)], "diagonal_quartic_Z", {"b": b, "c": c})


@dataclass(frozen=True)
class MField:
    """x -> A^{-1} M_A A(x) and its smallest-eigenvalue field."""

    potential: Potential
    weight: Weight
    evaluator: Callable

    def eval(self, x):
        m = self.evaluator(x)
        asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
        if asym > SYMMETRY_TOL * scale:
            raise ArithmeticError(f"twisted field not symmetric (deviation {asym:.3e})")
        return m

    def rho(self, x):
        return smallest_eigenvalue(self.eval(x))

    def describe(self) -> dict:
        return {"potential": self.potential.describe(), "weight": self.weight.describe()}


def m_field(p: Potential, w: Weight, generic: bool = False) -> MField:
    """Build the twisted Hessian field of ``p`` under weight ``w``.

    Uses the weight's closed form when it has one unless ``generic`` is set.
    """
    if p.dim != w.dim:
        raise ValueError(f"dimension mismatch: potential {p.dim}, weight {w.dim}")
    if w.is_identity:
        return MField(p, w, p.hessian)
    if w.closed_form is not None and not generic:
        return MField(p, w, w.closed_form)

    def evaluator(x):
        corr = w.a_L_ainv(p, x)
        return p.hessian(x) - corr[..., None, :] * np.eye(p.dim)

    return MField(p, w, evaluator)


def rho_min(m: MField, x):
    """Smallest eigenvalue of the twisted field at ``x``."""
    return m.rho(x)


def metric_S(w: Weight, x):
    """S = (A A^T)^{-1} = diag(a_i^{-2})."""
    inv_sq = np.exp(2 * w.log_weight(x))
    return inv_sq[..., :, None] * np.eye(w.dim)


def from_config(p: Potential, block: dict) -> Weight:
    kind = block.get("kind", "identity")
    if kind == "identity":
        return identity_weight(p.dim)
    if kind == "epsilon":
        if block.get("epsilon") is None:
            raise ParameterOutOfRange("epsilon weight requires epsilon")
        return make_epsilon_weight(p, block["epsilon"])
    if kind == "diagonal_quartic_Z":
        beta = p.params.get("beta", 0.0)
        c = block.get("c")
        if c is None:
            c = np.sqrt(1.5 - beta**2)
        return make_quartic_z_weight(p, block.get("b", 0.25), c)
    if kind == "scalar_expr":
        if not block.get("expr"):
            raise ParameterOutOfRange("scalar_expr weight requires expr")
        return expression_weight(p.dim, block["expr"])
    raise ParameterOutOfRange(f"unknown weight kind {kind!r}")
