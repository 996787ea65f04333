"""Certified lower bounds on the spectral gap lambda_1(-L, mu).

An ``InfRho`` report is the minimum of rho_A (optionally divided by an
envelope profile) over an explicit evidence grid, refined locally around the
minimising node and then audited against fresh random points. The grid and
minimiser are recorded so the claim can be re-checked.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import (BoundsUnverified, CertificateViolation, NonPositiveBound,
                     ParameterOutOfRange, SingularPoint)
from .grid import GridSpec
from .measure import Measure
from .potential import Potential
from .weights import MField, m_field, make_epsilon_weight, make_quartic_z_weight, metric_S

AUDIT_POINTS = 10_000
AUDIT_SLACK = 1e-9
INV_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class BoundReport:
    kind: str  # "InfRho", "Integrated" or "ClosedForm"
    value: float
    grid: Optional[dict] = None
    min_node: Optional[list] = None
    min_value: Optional[float] = None
    parameters: dict = field(default_factory=dict)
    potential: dict = field(default_factory=dict)
    weight: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def golden_section(f, a, b, tol=1e-8, maximize=False):
    """Golden-section search on [a, b]; returns the best point evaluated."""
    sign = -1.0 if maximize else 1.0
    c = b - INV_GOLDEN * (b - a)
    d = a + INV_GOLDEN * (b - a)
    fc, fd = sign * f(c), sign * f(d)
    best = min((fc, c), (fd, d))
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_GOLDEN * (b - a)
            fc = sign * f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + INV_GOLDEN * (b - a)
            fd = sign * f(d)
            best = min(best, (fd, d))
    return best[1], sign * best[0]


def _field(m: MField, envelope: Optional[Callable]):
    if envelope is None:
        return m.rho

    def ratio(x):
        return m.rho(x) / envelope(x)

    return ratio


def _usable(x, envelope):
    """Drop the origin (possible singularity) and nodes where the envelope vanishes."""
    keep = np.any(x != 0, axis=-1)
    if envelope is not None:
        with np.errstate(all="ignore"):
            env = envelope(x)
        keep &= np.isfinite(env) & (env > 0)
    return x[keep]


def _evaluate(func, x, envelope):
    try:
        vals = func(x)
        if np.all(np.isfinite(vals)):
            return x, vals
    except SingularPoint:
        pass
    x = _usable(x, envelope)
    return x, func(x)


def _refine(func, x0, grid: GridSpec, rounds: int):
    """Coordinate golden-section searches in the neighbouring cells, then a simplex polish."""
    lo = np.array([b[0] for b in grid.box])
    hi = np.array([b[1] for b in grid.box])
    h = np.array(grid.spacing)

    def at(x):
        x = np.clip(x, lo, hi)
        try:
            val = func(x[None, :])[0]
        except SingularPoint:
            return np.inf
        return val if np.isfinite(val) else np.inf

    x = np.array(x0, dtype=float)
    best = at(x)
    for _ in range(rounds):
        for i in range(len(x)):
            a, b = max(lo[i], x[i] - h[i]), min(hi[i], x[i] + h[i])

            def along(t, i=i):
                y = x.copy()
                y[i] = t
                return at(y)

            t, val = golden_section(along, a, b, tol=1e-10 * max(1.0, h[i]))
            if val < best:
                best, x[i] = val, t
    res = optimize.minimize(at, x, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000})
    if res.fun < best:
        best, x = float(res.fun), np.clip(res.x, lo, hi)
    return x, float(best)


def audit_certificate(report: BoundReport, func, grid: GridSpec, n_points=AUDIT_POINTS,
                      seed=0, envelope=None):
    """Re-evaluate the field at fresh uniform points; raise on any value below the bound."""
    pts = grid.uniform(n_points, seed)
    pts, vals = _evaluate(func, pts, envelope)
    worst = float(np.min(vals))
    if worst < report.value - AUDIT_SLACK:
        raise CertificateViolation(
            f"field value {worst!r} at random point falls below bound {report.value!r}")
    return worst


def inf_rho_bound(m: MField, grid: GridSpec, envelope: Optional[Callable] = None,
                  rounds: int = 3, audit: bool = True, seed: int = 0,
                  parameters: Optional[dict] = None) -> BoundReport:
    """Certified inf of rho_A (or of rho_A / envelope) over ``grid``.

    Without an envelope the value is a lower bound on lambda_1 (valid as a
    global claim only as far as the grid covers where the infimum lives).
    """
    func = _field(m, envelope)
    nodes, vals = _evaluate(func, grid.nodes(), envelope)
    k = int(np.argmin(vals))
    x_ref, v_ref = _refine(func, nodes[k], grid, rounds)
    value = min(float(vals[k]), v_ref)
    node = x_ref if v_ref < vals[k] else nodes[k]
    if not value > 0:
        raise NonPositiveBound(f"inf of the field over the grid is {value:.6g} <= 0 "
                               f"at {np.round(node, 6).tolist()}")
    params = dict(parameters or {})
    if envelope is not None:
        params.setdefault("envelope", getattr(envelope, "label", "custom"))
    report = BoundReport("InfRho", value, grid.describe(), [float(v) for v in node],
                         float(vals[k]), params, m.potential.describe(), m.weight.describe())
    if audit:
        audit_certificate(report, func, grid, seed=seed, envelope=envelope)
    return report


def integrated_bound(m: MField, mu: Measure, alpha_S: float, beta_S: float,
                     grid: Optional[GridSpec] = None) -> BoundReport:
    """1 / (int dmu / rho_A + (1 - alpha/beta) / inf rho_A).

    ``alpha_S``/``beta_S`` are the caller's uniform bounds on S = (A A^T)^{-1};
    they are spot-checked on the evidence grid.
    """
    if not 0 < alpha_S <= beta_S:
        raise ParameterOutOfRange("need 0 < alpha_S <= beta_S")
    if grid is None:
        grid = GridSpec(mu.box, 201)
    inf_report = inf_rho_bound(m, grid)
    s_diag = np.diagonal(metric_S(m.weight, grid.nodes()), axis1=-2, axis2=-1)
    slack = 1e-12
    if s_diag.min() < alpha_S * (1 - slack) or s_diag.max() > beta_S * (1 + slack):
        raise BoundsUnverified(
            f"S ranges over [{s_diag.min():.6g}, {s_diag.max():.6g}] on the grid, "
            f"outside [{alpha_S}, {beta_S}]")
    rho = m.rho(mu.points)
    if np.any(rho <= 0):
        raise NonPositiveBound("rho_A is not positive at every quadrature node")
    inv_integral = float(np.dot(mu.prob, 1 / rho))
    value = 1 / (inv_integral + (1 - alpha_S / beta_S) / inf_report.value)
    params = {"alpha_S": alpha_S, "beta_S": beta_S, "inv_rho_integral": inv_integral,
              "inf_rho": inf_report.value, "measure": mu.describe()}
    return BoundReport("Integrated", value, inf_report.grid, inf_report.min_node,
                       inf_report.min_value, params, m.potential.describe(),
                       m.weight.describe())


def subbotin_gamma(alpha: float, d: int) -> float:
    return (alpha + d - 2) / min(1.0, alpha - 1)


def subbotin_closed_form(alpha: float, d: int):
    """Optimal epsilon and prefactor of the Subbotin epsilon-weight estimate.

    The prefactor is max over epsilon of min(1 - gamma eps, eps (1 - eps)),
    attained at the root of eps^2 - (1 + gamma) eps + 1 = 0 in (0, 1/gamma).
    """
    if not alpha > 1:
        raise ParameterOutOfRange("alpha must exceed 1")
    gamma = subbotin_gamma(alpha, d)
    if gamma < 2:
        raise ParameterOutOfRange(f"gamma = {gamma} < 2")
    eps = ((1 + gamma) - math.sqrt((1 + gamma) ** 2 - 4)) / 2
    g1 = math.sqrt(gamma - 1)
    prefactor = 8 * g1 / (g1 + math.sqrt(gamma + 3)) ** 3
    return eps, prefactor


def cauchy_closed_form(beta: float, d: int) -> BoundReport:
    """Constant 2(beta - d) in 2(beta-d) Var(f) <= int (1+|x|^2) |grad f|^2 dmu."""
    if not beta > d:
        raise ParameterOutOfRange(f"need beta > d, got beta={beta}, d={d}")
    return BoundReport("ClosedForm", 2.0 * (beta - d),
                       parameters={"epsilon": 1.0 / beta, "beta": beta, "d": d,
                                   "kernel": "(1+|x|^2) I"},
                       potential={"name": "gen_cauchy", "dim": d, "beta": beta},
                       weight={"kind": "epsilon", "epsilon": 1.0 / beta})


def quartic_constant(beta: float) -> float:
    return math.sqrt(1.5 - beta**2) - 1 - beta


def quartic_bound(beta: float, grid: Optional[GridSpec] = None) -> BoundReport:
    """Closed-form gap bound sqrt(3/2 - beta^2) - 1 - beta for the coupled quartic.

    Uses the Z-weight with b = 1/4, c = sqrt(3/2 - beta^2) and checks the
    pointwise certificate X - beta >= value (and the mirrored Y) on ``grid``.
    """
    from .potential import make_coupled_quartic

    if beta < 0 or beta**2 >= 1.5 or quartic_constant(beta) <= 0:
        raise ParameterOutOfRange(f"sqrt(3/2 - beta^2) - 1 - beta <= 0 for beta={beta}")
    value = quartic_constant(beta)
    c = math.sqrt(1.5 - beta**2)
    p = make_coupled_quartic(beta)
    m = m_field(p, make_quartic_z_weight(p, 0.25, c))
    grid = grid or GridSpec.cube(4.0, 401, 2)
    nodes = grid.nodes()
    mat = m.eval(nodes)
    slack = np.minimum(mat[:, 0, 0], mat[:, 1, 1]) - beta
    k = int(np.argmin(slack))
    if slack[k] < value - AUDIT_SLACK:
        raise CertificateViolation(f"X - beta = {slack[k]!r} < {value!r} at {nodes[k].tolist()}")
    params = {"lambda": 0.5, "b": 0.25, "c": c, "beta": beta}
    return BoundReport("ClosedForm", value, grid.describe(), nodes[k].tolist(),
                       float(slack[k]), params, p.describe(), m.weight.describe())


class Envelope:
    """Named positive profile k(x) so that rho_a / k is bounded below."""

    def __init__(self, func, label):
        self.func = func
        self.label = label

    def __call__(self, x):
        return self.func(x)


def bl_envelope(p: Potential) -> Envelope:
    """Radial profile for the weighted BL constants of the radial built-ins."""
    if p.name in ("gaussian", "subbotin"):
        alpha = p.params.get("alpha", 2.0)
        lo = min(1.0, alpha - 1)

        def env(x):
            s = np.einsum("...i,...i->...", x, x)
            with np.errstate(divide="ignore"):
                return lo * s ** ((alpha - 2) / 2) + s ** (alpha - 1)

        first = "1" if alpha == 2 else f"{lo:g}|x|^{alpha - 2:g}"
        return Envelope(env, f"{first} + |x|^{2 * (alpha - 1):g}")
    if p.name == "gen_cauchy":
        return Envelope(lambda x: 1 / (1 + np.einsum("...i,...i->...", x, x)), "1/(1+|x|^2)")
    raise ParameterOutOfRange(f"no BL envelope known for {p.name}")


def _grid_min(func, nodes, envelope):
    _, vals = _evaluate(func, nodes, envelope)
    return float(np.min(vals))


def optimize_epsilon(p: Potential, grid: GridSpec, eps_range=(1e-4, 0.5 - 1e-4),
                     envelope: Optional[Callable] = None, tol: float = 1e-8,
                     n_scan: int = 41, audit: bool = True) -> BoundReport:
    """Best epsilon-weight bound: maximise the grid inf of rho_a (/ envelope) over epsilon.

    A coarse scan over ``eps_range`` brackets the maximiser, then golden
    section refines it to ``tol``. The scan also reports whether the scanned
    objective looked unimodal.
    """
    lo, hi = eps_range
    if not 0 < lo < hi < 0.5:
        raise ParameterOutOfRange("eps_range must lie inside (0, 1/2)")
    nodes = grid.nodes()

    def objective(eps):
        return _grid_min(_field(m_field(p, make_epsilon_weight(p, eps)), envelope), nodes, envelope)

    scan = np.linspace(lo, hi, n_scan)
    vals = np.array([objective(e) for e in scan])
    k = int(np.argmax(vals))
    diffs = np.sign(np.diff(vals))
    diffs = diffs[diffs != 0]
    unimodal = bool(np.all(np.diff(diffs) <= 0))
    a, b = scan[max(k - 1, 0)], scan[min(k + 1, n_scan - 1)]
    eps_star, best = golden_section(objective, a, b, tol=tol, maximize=True)
    if vals[k] > best:
        eps_star, best = scan[k], vals[k]
    if not best > 0:
        raise NonPositiveBound(f"no epsilon in {eps_range} gives a positive infimum")
    m = m_field(p, make_epsilon_weight(p, eps_star))
    return inf_rho_bound(m, grid, envelope, audit=audit,
                         parameters={"epsilon": float(eps_star), "eps_range": list(eps_range),
                                     "unimodal_scan": unimodal})
