"""Command-line front end: bound, verify, gap, simulate and report.

Flags build a run config; ``--config file.json`` overlays it (config values
win). The merged config is validated before anything is computed, so a bad
config exits with status 2 and writes nothing. Computation errors exit 1, as
does ``verify`` when any check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds, discretize, inequalities, measure, sde
from . import potential as potential_mod
from . import weights as weights_mod
from .errors import ConfigInvalid, IntertwineError
from .grid import GridSpec

COMMANDS = ("bound", "verify", "gap", "simulate", "report")
INEQUALITIES = ("gbl", "cbl", "abl", "poincare", "gamma2")

SCHEMA = {
    "potential": {"name", "dim", "alpha", "beta"},
    "weight": {"kind", "epsilon", "b", "c", "expr"},
    "grid": {"resolution", "box"},
    "sde": {"t", "dt", "paths", "seed", "x0", "f", "h", "lyapunov"},
    "output": {"path", "format"},
}
TOP_LEVEL = {"command", "seed", "inequality", "family", "lambda", "optimize", "envelope",
             "closed_form", "integrated", "alpha_S", "beta_S", "eps_range", "inputs"} | set(SCHEMA)


@dataclass
class RunConfig:
    command: str
    potential: dict = field(default_factory=dict)
    weight: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    sde: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------- serialisation

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    return json.dumps(obj)


def dumps(obj, indent=2) -> str:
    """JSON with every float written to 17 significant digits (round-trip exact)."""
    return _encode(_plain(obj), indent, 0) + "\n"


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        out[prefix[:-1]] = json.dumps(_plain(obj))
    elif isinstance(obj, list):
        out[prefix[:-1]] = " ".join(_encode(v, 0, 0) for v in _plain(obj))
    else:
        v = _plain(obj)
        out[prefix[:-1]] = format(v, ".17g") if isinstance(v, float) else v
    return out


def to_csv(rows) -> str:
    flat = [_flatten(r) for r in rows]
    cols = []
    for r in flat:
        cols += [c for c in r if c not in cols]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat)
    return buf.getvalue()


# ---------------------------------------------------------------- config

def _fail(msg):
    raise ConfigInvalid(msg)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _number(v, name, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"{name} must be a finite number")
    if positive and v <= 0:
        _fail(f"{name} must be positive")
    return float(v)


def validate(raw: dict) -> RunConfig:
    """Schema-check a merged config dict; unknown keys are rejected."""
    if not isinstance(raw, dict):
        _fail("config must be a JSON object")
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        _fail(f"unknown config keys: {sorted(unknown)}")
    cmd = raw.get("command")
    if cmd not in COMMANDS:
        _fail(f"command must be one of {COMMANDS}")
    blocks = {}
    for name, keys in SCHEMA.items():
        block = raw.get(name) or {}
        if not isinstance(block, dict):
            _fail(f"{name} must be an object")
        bad = set(block) - keys
        if bad:
            _fail(f"unknown keys in {name}: {sorted(bad)}")
        blocks[name] = {k: v for k, v in block.items() if v is not None}

    pot = blocks["potential"]
    if cmd != "report":
        if pot.get("name") not in potential_mod.BUILTINS:
            _fail(f"potential.name must be one of {sorted(potential_mod.BUILTINS)}")
        if "dim" in pot and (not isinstance(pot["dim"], int) or isinstance(pot["dim"], bool)
                             or pot["dim"] < 1):
            _fail("potential.dim must be a positive integer")
        for k in ("alpha", "beta"):
            if k in pot:
                _number(pot[k], f"potential.{k}")
    wt = blocks["weight"]
    if wt.get("kind", "identity") not in ("identity", "epsilon", "scalar_expr",
                                          "diagonal_quartic_Z"):
        _fail(f"unknown weight kind {wt.get('kind')!r}")
    for k in ("epsilon", "b", "c"):
        if k in wt:
            _number(wt[k], f"weight.{k}")
    grid = blocks["grid"]
    if "resolution" in grid and (not isinstance(grid["resolution"], int) or grid["resolution"] < 2):
        _fail("grid.resolution must be an integer >= 2")
    if "box" in grid:
        box = grid["box"]
        if isinstance(box, (int, float)) and not isinstance(box, bool):
            _number(box, "grid.box", positive=True)
        elif not (isinstance(box, list) and all(isinstance(b, list) and len(b) == 2 for b in box)):
            _fail("grid.box must be a half-width or [[lo, hi], ...]")
    s = blocks["sde"]
    for k in ("t", "dt", "h"):
        if k in s:
            _number(s[k], f"sde.{k}", positive=(k != "t"))
    if "paths" in s and (not isinstance(s["paths"], int) or s["paths"] < 1):
        _fail("sde.paths must be a positive integer")
    out = blocks["output"]
    if out.get("format", "json") not in ("json", "csv"):
        _fail("output.format must be json or csv")
    opts = {k: raw[k] for k in TOP_LEVEL - set(SCHEMA) - {"command", "seed"} if raw.get(k) is not None}
    if cmd == "verify":
        if opts.get("inequality", "gbl") not in INEQUALITIES:
            _fail(f"inequality must be one of {INEQUALITIES}")
        if opts.get("inequality") == "poincare" and "lambda" not in opts:
            _fail("poincare needs lambda")
    if cmd == "simulate" and wt.get("kind") == "diagonal_quartic_Z":
        _fail("simulation supports scalar weights only")
    if cmd == "report" and not opts.get("inputs"):
        _fail("report needs input files")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail("seed must be a non-negative integer")
    return RunConfig(cmd, pot, wt, grid, s, out, seed, opts)


def _build_objects(cfg: RunConfig, need_weight=True):
    """Potential and weight; parameter errors here count as config errors."""
    try:
        p = potential_mod.from_config(cfg.potential)
        if need_weight and cfg.weight:
            w = weights_mod.from_config(p, cfg.weight)
        else:
            w = weights_mod.identity_weight(p.dim)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    return p, w


def _box(cfg: RunConfig, dim: int, default=None):
    box = cfg.grid.get("box")
    if box is None:
        return default
    if isinstance(box, (int, float)):
        return ((-float(box), float(box)),) * dim
    if len(box) != dim:
        raise ConfigInvalid("grid.box dimension does not match the potential")
    return tuple((float(lo), float(hi)) for lo, hi in box)


# ---------------------------------------------------------------- commands

def _family_member(p, name):
    fam = {f.name: f for f in inequalities.default_family(p)}
    if name not in fam:
        raise ConfigInvalid(f"unknown test function {name!r}; choose from {sorted(fam)}")
    return fam[name]


def _family(cfg, p):
    names = cfg.options.get("family")
    fam = inequalities.default_family(p)
    if not names or names == "default":
        return fam
    names = names.split(",") if isinstance(names, str) else names
    return [_family_member(p, n) for n in names]


def cmd_bound(cfg: RunConfig):
    opts = cfg.options
    free = bool(opts.get("closed_form") or opts.get("optimize"))
    p, w = _build_objects(cfg, need_weight=not free)
    if opts.get("closed_form"):
        if p.name in ("subbotin", "gaussian"):
            alpha = p.params.get("alpha", 2.0)
            eps, pref = bounds.subbotin_closed_form(alpha, p.dim)
            rep = bounds.BoundReport("ClosedForm", pref, parameters={
                "epsilon": eps, "gamma": bounds.subbotin_gamma(alpha, p.dim),
                "envelope": bounds.bl_envelope(p).label}, potential=p.describe(),
                weight={"kind": "epsilon", "epsilon": eps})
        elif p.name == "gen_cauchy":
            rep = bounds.cauchy_closed_form(p.params["beta"], p.dim)
        else:
            box = _box(cfg, 2)
            grid = GridSpec(box, cfg.grid.get("resolution", 401)) if box else None
            rep = bounds.quartic_bound(p.params["beta"], grid)
        return rep.as_dict(), True

    if w.name == "diagonal_quartic_Z" and p.name == "coupled_quartic":
        default_box = ((-4.0, 4.0),) * 2
    else:
        default_box = measure.auto_box(p)[0]
    grid = GridSpec(_box(cfg, p.dim, default_box), cfg.grid.get("resolution", 201))
    env_opt = opts.get("envelope")
    if opts.get("optimize"):
        if cfg.weight.get("kind") not in (None, "epsilon"):
            raise ConfigInvalid("--optimize searches the epsilon-weight family")
        envelope = bounds.bl_envelope(p) if env_opt in (None, "auto") else None
        rep = bounds.optimize_epsilon(p, grid, tuple(opts.get("eps_range", (1e-4, 0.5 - 1e-4))),
                                      envelope=envelope)
        return rep.as_dict(), True
    envelope = bounds.bl_envelope(p) if env_opt == "auto" else None
    m = weights_mod.m_field(p, w)
    if opts.get("integrated"):
        mu = measure.build_measure(p, 192)
        rep = bounds.integrated_bound(m, mu, opts.get("alpha_S", 1.0), opts.get("beta_S", 1.0), grid)
    else:
        rep = bounds.inf_rho_bound(m, grid, envelope, seed=cfg.seed)
    return rep.as_dict(), True


def cmd_verify(cfg: RunConfig):
    p, w = _build_objects(cfg)
    mu = measure.build_measure(p, cfg.grid.get("resolution", 192), _box(cfg, p.dim))
    m = weights_mod.m_field(p, w)
    fam = _family(cfg, p)
    which = cfg.options.get("inequality", "gbl")
    reports = []
    for f in fam:
        if which == "gbl":
            reports.append(inequalities.check_generalized_bl(mu, m, f))
        elif which == "cbl":
            reports.append(inequalities.check_classical_bl(mu, p, f))
        elif which == "poincare":
            reports.append(inequalities.check_poincare(mu, float(cfg.options["lambda"]), f))
        elif which == "gamma2":
            reports.append(inequalities.check_gamma2(mu, m, f))
        else:
            for g in fam:
                reports.append(inequalities.check_asymmetric_bl(mu, m, f, g))
    out = [r.as_dict() for r in reports]
    return out, all(r.passed for r in reports)


def cmd_gap(cfg: RunConfig):
    p, _ = _build_objects(cfg)
    if p.name == "coupled_quartic":
        default = ((-4.0, 4.0),) * 2
    else:
        default = measure.auto_box(p)[0]
    box = _box(cfg, p.dim, default)
    res = cfg.grid.get("resolution", 2001 if p.dim == 1 else 401)
    result = discretize.gap(p, box, res)
    return {**result.as_dict(), "potential": p.describe()}, True


def cmd_simulate(cfg: RunConfig):
    p, w = _build_objects(cfg)
    s = cfg.sde
    x0 = np.asarray(s.get("x0", [0.0] * p.dim), dtype=float)
    if x0.shape != (p.dim,):
        raise ConfigInvalid("sde.x0 must have one entry per dimension")
    f = _family_member(p, s.get("f", "x1"))
    pc = sde.PathConfig(s.get("t", 0.5), s.get("dt", 1e-3), s.get("paths", 10_000),
                        s.get("seed", cfg.seed))
    lyap = bool(s.get("lyapunov", False))
    fk = sde.fk_vector_estimate(p, w, f, x0, pc, lyapunov=lyap)
    crn = sde.crn_gradient_estimate(p, f, x0, s.get("h", 1e-3), pc, lyapunov=lyap)
    sub = sde.sub_intertwining(p, w, f, x0, pc, lyapunov=lyap)
    a0 = float(w.scalar_a(x0))
    se = np.sqrt(fk.std_error**2 + (a0 * crn.std_error) ** 2)
    gap_ = np.abs(fk.mean - a0 * crn.mean)
    agree = bool(np.all(gap_ <= 3 * se + pc.dt**2))
    out = {"fk": fk.as_dict(), "crn": crn.as_dict(), "a_x0": a0,
           "intertwining": {"difference": gap_.tolist(), "combined_se": se.tolist(),
                            "agree": agree},
           "sub_intertwining": sub, "config": pc.as_dict(), "potential": p.describe(),
           "weight": w.describe()}
    return out, agree and sub["holds"]


def _key(pot: dict) -> str:
    return json.dumps(_plain(pot), sort_keys=True)


def cmd_report(cfg: RunConfig):
    """Join bound and gap outputs by potential into one table."""
    rows = {}
    for path in cfg.options["inputs"]:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read {path}: {exc}") from exc
        items = data if isinstance(data, list) else [data]
        for item in items:
            if not isinstance(item, dict) or "potential" not in item:
                continue
            row = rows.setdefault(_key(item["potential"]), {
                "potential": item["potential"].get("name"),
                "params": _key({k: v for k, v in item["potential"].items() if k != "name"}),
                "weight": "", "kind": "", "certified_bound": None, "lambda1": None})
            if "value" in item and "kind" in item:
                row["weight"] = _key(item.get("weight", {}))
                row["kind"] = item["kind"]
                row["certified_bound"] = item["value"]
            elif "lambda1" in item:
                row["lambda1"] = item["lambda1"]
    table = [rows[k] for k in sorted(rows)]
    for r in table:
        b, l1 = r["certified_bound"], r["lambda1"]
        r["bound_below_lambda1"] = None if b is None or l1 is None else bool(b <= l1 + 1e-3)
    return table, all(r["bound_below_lambda1"] is not False for r in table)


DISPATCH = {"bound": cmd_bound, "verify": cmd_verify, "gap": cmd_gap,
            "simulate": cmd_simulate, "report": cmd_report}


def run(cfg: RunConfig):
    """Execute a validated config; returns (payload, all_checks_passed)."""
    return DISPATCH[cfg.command](cfg)


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--potential", choices=sorted(potential_mod.BUILTINS))
    common.add_argument("--dim", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--weight", choices=["identity", "epsilon", "scalar_expr", "diagonal_quartic_Z"])
    common.add_argument("--epsilon", type=float)
    common.add_argument("--expr", help="W as a numpy expression in x1..xd and r2")
    common.add_argument("--resolution", type=int)
    common.add_argument("--box", type=float, help="half-width of a cube box")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--config", help="JSON run config; its values override flags")

    parser = argparse.ArgumentParser(prog="intertwine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", parents=[common], help="certified spectral-gap lower bound")
    b.add_argument("--optimize", action="store_true", help="search the epsilon-weight family")
    b.add_argument("--envelope", choices=["auto", "none"])
    b.add_argument("--closed-form", action="store_true")
    b.add_argument("--integrated", action="store_true")
    b.add_argument("--alpha-s", type=float, dest="alpha_S")
    b.add_argument("--beta-s", type=float, dest="beta_S")

    v = sub.add_parser("verify", parents=[common], help="check an inequality on a test family")
    v.add_argument("--inequality", choices=INEQUALITIES)
    v.add_argument("--family", help="comma-separated test function names or 'default'")
    v.add_argument("--lambda", type=float, dest="lambda_")

    sub.add_parser("gap", parents=[common], help="finite-difference spectral gap")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo intertwining check")
    s.add_argument("--t", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--paths", type=int)
    s.add_argument("--x0", help="comma-separated start point")
    s.add_argument("--f", help="test function name")
    s.add_argument("--h", type=float, help="CRN bump")
    s.add_argument("--lyapunov", action="store_true",
                   help="acknowledge a Lyapunov condition for potentials without a Hessian bound")

    r = sub.add_parser("report", parents=[common], help="aggregate JSON outputs into a table")
    r.add_argument("inputs", nargs="*")
    return parser


def _flags_to_raw(ns) -> dict:
    g = vars(ns)
    raw = {"command": ns.command,
           "potential": {"name": g.get("potential"), "dim": g.get("dim"),
                         "alpha": g.get("alpha"), "beta": g.get("beta")},
           "weight": {"kind": g.get("weight"), "epsilon": g.get("epsilon"), "expr": g.get("expr")},
           "grid": {"resolution": g.get("resolution"), "box": g.get("box")},
           "output": {"path": g.get("out"), "format": g.get("format")}}
    if g.get("seed") is not None:
        raw["seed"] = g["seed"]
    if ns.command == "simulate":
        x0 = g.get("x0")
        try:
            x0 = [float(v) for v in x0.split(",")] if x0 else None
        except ValueError:
            x0 = x0
        raw["sde"] = {"t": g.get("t"), "dt": g.get("dt"), "paths": g.get("paths"),
                      "x0": x0, "f": g.get("f"), "h": g.get("h"),
                      "lyapunov": g.get("lyapunov") or None}
    for key in ("optimize", "envelope", "closed_form", "integrated", "alpha_S", "beta_S",
                "inequality", "family", "inputs"):
        if g.get(key):
            raw[key] = g[key]
    if g.get("lambda_") is not None:
        raw["lambda"] = g["lambda_"]
    # drop unset weight kind so the identity default applies
    raw["weight"] = {k: v for k, v in raw["weight"].items() if v is not None}
    if raw["weight"] and "kind" not in raw["weight"]:
        raw["weight"]["kind"] = "epsilon" if "epsilon" in raw["weight"] else "identity"
    return raw


def _write(text: str, path, meta: dict):
    if path is None:
        sys.stdout.write(text)
        return
    out = Path(path)
    out.write_text(text)
    out.with_name(out.name + ".meta.json").write_text(dumps(meta))


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        raw = _flags_to_raw(ns)
        if ns.config:
            try:
                file_cfg = json.loads(Path(ns.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigInvalid(f"cannot read config: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigInvalid("config must be a JSON object")
            raw = _merge(raw, file_cfg)
        cfg = validate(raw)
        payload, ok = run(cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IntertwineError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        ok = None
    fmt = cfg.output.get("format", "json") if "cfg" in locals() else "json"
    rows = payload if isinstance(payload, list) else [payload]
    text = to_csv(rows) if fmt == "csv" else dumps(payload)
    meta = {"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__,
            "command": raw.get("command"), "argv": list(argv if argv is not None else sys.argv[1:])}
    _write(text, cfg.output.get("path"), meta)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
