"""Euler-Maruyama simulation of X and X_a, the matrix process Y, and Feynman-Kac estimates.

With a scalar weight a = exp(-W) the process X_a has drift
-grad V_a = -grad V + 2 grad W (V_a = V + log a^2), and Y solves
dY/dt = -Y M_a(X_a), Y_0 = I. Then a(x) grad P_t f(x) = E[Y_t a(X_t) grad f(X_t)].

Paths are processed in fixed-size chunks. Chunk ``k`` draws its Brownian
increments from a Philox stream keyed by ``(seed, k)``, so results depend only
on the config, and walks started from different points can share increments.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigInvalid, NonExplosionUnverified, ParameterOutOfRange, PathDiverged
from .potential import Potential
from .weights import MField, Weight, identity_weight, m_field

DIVERGENCE_RADIUS = 1e6


@dataclass(frozen=True)
class PathConfig:
    t_final: float = 0.5
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    scheme: str = "euler_maruyama"
    chunk: int = 10_000
    # each step sums this many unit normals, so (dt, coupling=2) and
    # (dt/2, coupling=1) see the same Brownian path
    coupling: int = 1

    def __post_init__(self):
        if not self.dt > 0 or self.t_final < 0:
            raise ConfigInvalid("need dt > 0 and t_final >= 0")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, steps):
            raise ConfigInvalid(f"t_final / dt = {steps!r} is not an integer")
        if self.n_paths < 1 or self.chunk < 1 or self.coupling < 1:
            raise ConfigInvalid("n_paths, chunk and coupling must be positive")
        if self.scheme != "euler_maruyama":
            raise ConfigInvalid(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def chunks(self):
        for k, start in enumerate(range(0, self.n_paths, self.chunk)):
            yield k, min(self.chunk, self.n_paths - start)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class FKEstimate:
    mean: np.ndarray
    std_error: np.ndarray
    n_paths: int
    config: dict

    def as_dict(self):
        return {"mean": np.atleast_1d(self.mean).tolist(),
                "se": np.atleast_1d(self.std_error).tolist(),
                "n_paths": self.n_paths}


@dataclass(frozen=True)
class PathEnsemble:
    final: np.ndarray  # (n_paths, d)
    paths: Optional[np.ndarray]  # (n_steps + 1, n_paths, d) when recorded
    config: PathConfig


@dataclass(frozen=True)
class EnvelopeReport:
    n_paths: int
    violations: int
    max_ratio: float  # max over paths of |Y|_op / envelope

    @property
    def passed(self):
        return self.violations == 0


def _gate(p: Potential, lyapunov: bool):
    if not p.has_valid_lower_bound and not lyapunov:
        raise NonExplosionUnverified(
            f"{p.name}: no valid Hessian lower bound; pass lyapunov=True to acknowledge "
            "a Lyapunov condition instead")


def _weight(p: Potential, w: Optional[Weight]) -> Weight:
    w = identity_weight(p.dim) if w is None else w
    if w.kind != "scalar":
        raise ParameterOutOfRange("stochastic representation is only available for scalar weights")
    return w


def drift(p: Potential, w: Optional[Weight] = None) -> Callable:
    """-grad V_a = -grad V + 2 grad W."""
    w = _weight(p, w)
    if w.is_identity:
        return lambda x: -p.gradient(x)
    grad_w = w.components[0].grad
    return lambda x: -p.gradient(x) + 2 * grad_w(x)


def _generator(cfg: PathConfig, chunk: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, chunk])))


def _walk(b: Callable, starts, cfg: PathConfig, size: int, chunk: int, visit):
    """Run Euler-Maruyama from each start point with shared increments.

    ``visit(k, xs)`` sees the states at step k = 0..n_steps before each update.
    """
    rng = _generator(cfg, chunk)
    d = len(starts[0])
    xs = [np.tile(np.asarray(s, dtype=float), (size, 1)) for s in starts]
    scale = np.sqrt(2 * cfg.dt)
    for k in range(cfg.n_steps):
        visit(k, xs)
        if cfg.coupling == 1:
            dw = scale * rng.standard_normal((size, d))
        else:
            z = [rng.standard_normal((size, d)) for _ in range(cfg.coupling)]
            dw = scale * np.sum(z, axis=0) / np.sqrt(cfg.coupling)
        xs = [x + cfg.dt * b(x) + dw for x in xs]
        if any(np.max(np.abs(x)) > DIVERGENCE_RADIUS for x in xs):
            raise PathDiverged(f"|X| exceeded {DIVERGENCE_RADIUS:g} at step {k + 1}")
    visit(cfg.n_steps, xs)
    return xs


def simulate_paths(p: Potential, w: Optional[Weight], x0, cfg: PathConfig,
                   lyapunov: bool = False, record: bool = False) -> PathEnsemble:
    """Euler-Maruyama paths of X_a started at ``x0``."""
    _gate(p, lyapunov)
    b = drift(p, w)
    finals, records = [], []
    for chunk, size in cfg.chunks():
        rec = []
        visit = (lambda k, xs: rec.append(xs[0].copy())) if record else (lambda k, xs: None)
        finals.append(_walk(b, [x0], cfg, size, chunk, visit)[0])
        if record:
            records.append(np.stack(rec))
    paths = np.concatenate(records, axis=1) if record else None
    return PathEnsemble(np.concatenate(finals), paths, cfg)


def y_factor(m, dt):
    """I - dt M + dt^2 M^2 / 2, batched."""
    eye = np.eye(m.shape[-1])
    return eye - dt * m + 0.5 * dt**2 * (m @ m)


def evolve_Y(m: MField, path, cfg: PathConfig):
    """Y along a path array of shape (n_steps + 1, ..., d); returns (n_steps + 1, ..., d, d)."""
    path = np.asarray(path, dtype=float)
    d = path.shape[-1]
    y = np.broadcast_to(np.eye(d), path.shape[1:-1] + (d, d)).copy()
    out = [y]
    for k in range(path.shape[0] - 1):
        y = y @ y_factor(m.eval(path[k]), cfg.dt)
        out.append(y)
    return np.stack(out)


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    # identical samples: report exactly zero rather than rounding noise
    return mean, np.where(np.ptp(values, axis=0) == 0, 0.0, se)


def _split(f):
    if isinstance(f, tuple):
        return f
    return f.f, f.grad


def _weighted_run(p, w, f, x0, cfg, lyapunov, with_rho=False):
    """Per-path Y a grad f at time t, plus exp(-int rho_a) |a grad f| if requested."""
    _gate(p, lyapunov)
    w = _weight(p, w)
    m = m_field(p, w)
    b = drift(p, w)
    _, grad = _split(f)
    vec, scal = [], []
    for chunk, size in cfg.chunks():
        state = {"y": np.broadcast_to(np.eye(p.dim), (size, p.dim, p.dim)).copy(),
                 "int": np.zeros(size), "prev": None}

        def visit(k, xs):
            x = xs[0]
            mat = m.eval(x)
            if with_rho:
                r = m.rho(x)
                if state["prev"] is not None:
                    state["int"] += 0.5 * cfg.dt * (state["prev"] + r)
                state["prev"] = r
            if k < cfg.n_steps:
                state["y"] = state["y"] @ y_factor(mat, cfg.dt)

        x = _walk(b, [x0], cfg, size, chunk, visit)[0]
        v = w.scalar_a(x)[:, None] * grad(x)
        vec.append(np.einsum("nij,nj->ni", state["y"], v))
        if with_rho:
            scal.append(np.exp(-state["int"]) * np.linalg.norm(v, axis=-1))
    vec = np.concatenate(vec)
    return vec, (np.concatenate(scal) if with_rho else None)


def fk_vector_estimate(p: Potential, w: Optional[Weight], f, x0, cfg: PathConfig,
                       lyapunov: bool = False) -> FKEstimate:
    """Monte Carlo estimate of a(x0) grad P_t f(x0) = E[Y_t a(X_t) grad f(X_t)].

    ``f`` is a TestFunction-like object (``.f``, ``.grad``) or a ``(f, grad)`` pair.
    """
    vec, _ = _weighted_run(p, w, f, np.asarray(x0, dtype=float), cfg, lyapunov)
    mean, se = _mean_se(vec)
    return FKEstimate(mean, se, cfg.n_paths, cfg.as_dict())


def crn_gradient_estimate(p: Potential, f, x0, h: float, cfg: PathConfig,
                          lyapunov: bool = False) -> FKEstimate:
    """Central differences of P_t f at x0 +- h e_i with common Brownian increments."""
    if not 1e-4 <= h <= 1e-2:
        raise ParameterOutOfRange("bump h must lie in [1e-4, 1e-2]")
    _gate(p, lyapunov)
    value, _ = _split(f)
    x0 = np.asarray(x0, dtype=float)
    d = p.dim
    starts = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        starts += [x0 + e, x0 - e]
    b = drift(p, None)
    diffs = []
    for chunk, size in cfg.chunks():
        xs = _walk(b, starts, cfg, size, chunk, lambda k, xs: None)
        diffs.append(np.stack([(value(xs[2 * i]) - value(xs[2 * i + 1])) / (2 * h)
                               for i in range(d)], axis=-1))
    mean, se = _mean_se(np.concatenate(diffs))
    return FKEstimate(mean, se, cfg.n_paths, {**cfg.as_dict(), "h": h})


def fk_scalar_estimate(p: Potential, w: Optional[Weight], rho: Callable, g: Callable, x0,
                       cfg: PathConfig, lyapunov: bool = False) -> FKEstimate:
    """E[g(X_t) exp(-int_0^t rho(X_s) ds)] along X_a, trapezoid rule in time."""
    _gate(p, lyapunov)
    b = drift(p, w)
    vals = []
    for chunk, size in cfg.chunks():
        state = {"int": np.zeros(size), "prev": None}

        def visit(k, xs):
            r = np.broadcast_to(rho(xs[0]), (size,))
            if state["prev"] is not None:
                state["int"] += 0.5 * cfg.dt * (state["prev"] + r)
            state["prev"] = r

        x = _walk(b, [np.asarray(x0, dtype=float)], cfg, size, chunk, visit)[0]
        vals.append(np.broadcast_to(g(x), (size,)) * np.exp(-state["int"]))
    mean, se = _mean_se(np.concatenate(vals))
    return FKEstimate(mean, se, cfg.n_paths, cfg.as_dict())


def sub_intertwining(p: Potential, w: Optional[Weight], f, x0, cfg: PathConfig,
                     lyapunov: bool = False) -> dict:
    """|E[Y a grad f]| against E[exp(-int rho_a) |a grad f|] on the same paths."""
    vec, scal = _weighted_run(p, w, f, np.asarray(x0, dtype=float), cfg, lyapunov,
                              with_rho=True)
    vmean, vse = _mean_se(vec)
    smean, sse = _mean_se(scal)
    lhs = float(np.linalg.norm(vmean))
    se = float(np.sqrt(np.sum(vse**2) + sse**2))
    return {"lhs": lhs, "rhs": float(smean), "se": se, "holds": bool(lhs <= smean + 3 * se)}


def envelope_check(p: Potential, w: Optional[Weight], x0, cfg: PathConfig,
                   lyapunov: bool = False) -> EnvelopeReport:
    """Pathwise |Y_t|_op <= exp(-sum dt rho_a(X_s)) (1 + 10 dt t max|M|)."""
    _gate(p, lyapunov)
    w = _weight(p, w)
    m = m_field(p, w)
    b = drift(p, w)
    worst, bad = 0.0, 0
    for chunk, size in cfg.chunks():
        state = {"y": np.broadcast_to(np.eye(p.dim), (size, p.dim, p.dim)).copy(),
                 "sum": np.zeros(size), "mmax": np.zeros(size)}

        def visit(k, xs):
            if k == cfg.n_steps:
                return
            mat = m.eval(xs[0])
            ev = np.linalg.eigvalsh(mat)
            state["sum"] += cfg.dt * ev[:, 0]
            state["mmax"] = np.maximum(state["mmax"], np.abs(ev).max(axis=-1))
            state["y"] = state["y"] @ y_factor(mat, cfg.dt)

        _walk(b, [np.asarray(x0, dtype=float)], cfg, size, chunk, visit)
        norm = np.linalg.norm(state["y"], ord=2, axis=(-2, -1))
        env = np.exp(-state["sum"]) * (1 + 10 * cfg.dt * cfg.t_final * state["mmax"])
        ratio = norm / env
        worst = max(worst, float(ratio.max()))
        bad += int(np.sum(norm > env))
    return EnvelopeReport(cfg.n_paths, bad, worst)
