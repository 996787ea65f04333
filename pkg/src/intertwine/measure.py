"""Quadrature representation of mu proportional to exp(-V) on a truncated box.

Nodes are a tensor product of per-axis Gauss-Legendre rules. Heavy-tailed
potentials get very wide boxes, so on those axes the rule is applied in the
coordinate u with x = center + scale * sinh(u); the integrand then decays
exponentially in u and the rule keeps its spectral accuracy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import roots_legendre

from .errors import DimensionTooLarge, KernelSingular, MassNotCaptured
from .linalg import smallest_eigenvalue
from .potential import Potential

TRUNCATION_GAP = 46.0  # exp(-46) ~ 1e-20
BOX_INFLATION = 1.5
MASS_TOL = 1e-10
RHO_FLOOR = 1e-8
SINH_RATIO = 20.0


@dataclass(frozen=True)
class Measure:
    potential: Potential
    box: tuple  # ((lo, hi), ...) per axis
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # quadrature weights, (N,)
    prob: np.ndarray  # normalised masses w * exp(-V) / Z, (N,)
    log_norm: float  # log of Z = integral of exp(-V) over the box
    resolution: tuple
    mapping: tuple = ()
    approximate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.points.shape[1]

    def expect(self, values):
        return float(np.dot(self.prob, np.asarray(values, dtype=float)))

    def integrate(self, func):
        return self.expect(func(self.points))

    def describe(self) -> dict:
        return {"box": [list(b) for b in self.box], "resolution": list(self.resolution),
                "mapping": list(self.mapping), "approximate": self.approximate}


def _find_minimizer(p: Potential):
    d = p.dim
    axis = np.linspace(-10, 10, 41 if d <= 2 else 21)
    grid = np.array(list(itertools.product(axis, repeat=d)))
    vals = p.value(grid)
    start = grid[np.argmin(vals)]
    res = optimize.minimize(lambda x: float(p.value(x)), start,
                            jac=lambda x: p.gradient(x), method="BFGS",
                            options={"gtol": 1e-12})
    x = res.x if res.fun <= vals.min() else start
    return np.asarray(x, dtype=float), float(p.value(x))


def _axis_reach(p: Potential, center, vmin, axis, sign, gap):
    """Distance along ``sign * e_axis`` from ``center`` where V - vmin first reaches ``gap``."""
    e = np.zeros(p.dim)
    e[axis] = sign

    def excess(t):
        return float(p.value(center + t * e)) - vmin - gap

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
        if hi > 1e12:
            raise MassNotCaptured(f"potential does not reach V - min V = {gap} along axis {axis}")
    return optimize.brentq(excess, 0.0, hi, xtol=1e-12)


def auto_box(p: Potential):
    """Per-axis box where V - min V >= 46 along the axes, inflated x1.5.

    Also returns the minimiser and per-axis length scales (distance to V - min V = 1).
    """
    center, vmin = _find_minimizer(p)
    box, scales = [], []
    for i in range(p.dim):
        lo = _axis_reach(p, center, vmin, i, -1, TRUNCATION_GAP)
        hi = _axis_reach(p, center, vmin, i, +1, TRUNCATION_GAP)
        box.append((center[i] - BOX_INFLATION * lo, center[i] + BOX_INFLATION * hi))
        scales.append(min(_axis_reach(p, center, vmin, i, -1, 1.0),
                          _axis_reach(p, center, vmin, i, +1, 1.0)))
    return tuple(box), center, np.array(scales)


def axis_rule(lo, hi, n, mapping="linear", center=0.0, scale=1.0):
    """Gauss-Legendre nodes and weights for one axis."""
    t, w = roots_legendre(n)
    if mapping == "linear":
        half = 0.5 * (hi - lo)
        return 0.5 * (hi + lo) + half * t, half * w
    if mapping == "sinh":
        ulo, uhi = np.arcsinh((lo - center) / scale), np.arcsinh((hi - center) / scale)
        half = 0.5 * (uhi - ulo)
        u = 0.5 * (uhi + ulo) + half * t
        return center + scale * np.sinh(u), half * w * scale * np.cosh(u)
    raise ValueError(f"unknown mapping {mapping!r}")


def _tensor(rules):
    pts = np.array(list(itertools.product(*[r[0] for r in rules])))
    wts = np.prod(np.array(list(itertools.product(*[r[1] for r in rules]))), axis=1)
    return pts, wts


def _log_mass(p, rules, shift):
    pts, wts = _tensor(rules)
    v = p.value(pts) - shift
    return pts, wts, v, np.log(np.sum(wts * np.exp(-v)))


def build_measure(p: Potential, resolution, box=None, mapping="auto",
                  check_mass: bool = True) -> Measure:
    """Normalised tensor quadrature for mu on ``box`` (auto-selected if absent).

    ``resolution`` is a per-axis node count (int or sequence). ``mapping`` is
    ``"linear"``, ``"sinh"`` or ``"auto"`` (sinh on axes whose half-width
    exceeds 20 natural length scales).
    """
    d = p.dim
    if d > 3:
        raise DimensionTooLarge("tensor quadrature supports d <= 3; use sample_measure")
    res = tuple([int(resolution)] * d) if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if len(res) != d or min(res) < 16:
        raise ValueError("need at least 16 nodes on every axis")

    auto, center, scales = auto_box(p)
    box = auto if box is None else tuple((float(lo), float(hi)) for lo, hi in box)
    if mapping == "auto":
        maps = tuple("sinh" if 0.5 * (hi - lo) > SINH_RATIO * s else "linear"
                     for (lo, hi), s in zip(box, scales))
    else:
        maps = tuple([mapping] * d)

    def rules(bx, counts):
        return [axis_rule(lo, hi, n, m, c, s)
                for (lo, hi), n, m, c, s in zip(bx, counts, maps, center, scales)]

    vmin = float(p.value(center))
    pts, wts, v, log_z = _log_mass(p, rules(box, res), vmin)
    prob = wts * np.exp(-v - log_z)

    meta = {}
    if check_mass:
        n_chk = [max(n, 96) for n in res]
        mid = [0.5 * (lo + hi) for lo, hi in box]
        big = tuple((m - 1.25 * (m - lo), m + 1.25 * (hi - m)) for m, (lo, hi) in zip(mid, box))
        *_, lz_box = _log_mass(p, rules(box, n_chk), vmin)
        *_, lz_big = _log_mass(p, rules(big, [int(np.ceil(1.25 * n)) for n in n_chk]), vmin)
        change = abs(np.expm1(lz_big - lz_box))
        meta["inflation_change"] = float(change)
        if change >= MASS_TOL:
            raise MassNotCaptured(f"mass changes by {change:.2e} when the box is inflated by 25%")

    return Measure(p, box, pts, wts, prob, float(log_z - vmin), res, maps, False, meta)


def sample_measure(p: Potential, n_samples: int, seed: int = 0, step: float = 0.5,
                   burn: int = 2000, thin: int = 10) -> Measure:
    """Random-walk Metropolis samples of mu as an equal-weight Measure.

    Lower accuracy than the tensor rule; intended only for d > 3 exploration.
    """
    rng = np.random.default_rng(seed)
    center, _ = optimize.minimize(lambda x: float(p.value(x)), np.zeros(p.dim)).x, None
    x = np.array(center, dtype=float)
    vx = float(p.value(x))
    out = []
    for k in range(burn + n_samples * thin):
        y = x + step * rng.standard_normal(p.dim)
        vy = float(p.value(y))
        if np.log(rng.uniform()) < vx - vy:
            x, vx = y, vy
        if k >= burn and (k - burn) % thin == 0:
            out.append(x.copy())
    pts = np.array(out[:n_samples])
    box = tuple((float(lo), float(hi)) for lo, hi in zip(pts.min(0), pts.max(0)))
    w = np.full(len(pts), 1.0 / len(pts))
    return Measure(p, box, pts, w, w, float("nan"), (len(pts),), ("mcmc",), True)


def variance(m: Measure, f) -> float:
    """Var_mu(f) = mu(f^2) - mu(f)^2, evaluated in centred form."""
    vals = np.asarray(f(m.points), dtype=float)
    mean = m.expect(vals)
    return m.expect((vals - mean) ** 2)


def covariance(m: Measure, f, g) -> float:
    fv = np.asarray(f(m.points), dtype=float)
    gv = np.asarray(g(m.points), dtype=float)
    return m.expect((fv - m.expect(fv)) * (gv - m.expect(gv)))


def _energy_terms(m: Measure, grad_f, kernel, rho_floor):
    g = np.asarray(grad_f(m.points), dtype=float)
    k = np.asarray(kernel(m.points), dtype=float)
    low = smallest_eigenvalue(k) <= rho_floor
    return g, k, low


def energy(m: Measure, grad_f, kernel=None, rho_floor: float = RHO_FLOOR) -> float:
    """Quadrature of grad_f^T kernel^{-1} grad_f against mu.

    ``kernel=None`` means the identity (Dirichlet energy). Raises
    :class:`KernelSingular` if the kernel's smallest eigenvalue is at or below
    ``rho_floor`` at any node.
    """
    if kernel is None:
        g = np.asarray(grad_f(m.points), dtype=float)
        return m.expect(np.einsum("ni,ni->n", g, g))
    g, k, low = _energy_terms(m, grad_f, kernel, rho_floor)
    if np.any(low):
        raise KernelSingular(f"kernel below rho_floor at {int(low.sum())} nodes",
                             nodes=m.points[low], excluded_mass=float(m.prob[low].sum()))
    sol = np.linalg.solve(k, g[..., None])[..., 0]
    return m.expect(np.einsum("ni,ni->n", g, sol))


def energy_excluding(m: Measure, grad_f, kernel, rho_floor: float = RHO_FLOOR):
    """Like :func:`energy` but drops nodes below ``rho_floor``.

    Returns ``(value, excluded_mass)``; the value is not a claim about the
    integral over the excluded region.
    """
    g, k, low = _energy_terms(m, grad_f, kernel, rho_floor)
    keep = ~low
    sol = np.linalg.solve(k[keep], g[keep][..., None])[..., 0]
    value = float(np.dot(m.prob[keep], np.einsum("ni,ni->n", g[keep], sol)))
    return value, float(m.prob[low].sum())


def from_config(p: Potential, block: dict) -> Measure:
    return build_measure(p, block.get("resolution", 128), block.get("box"))
