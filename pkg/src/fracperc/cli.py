"""Experiment runner: argument parsing, dispatch, and result persistence.

Every experiment resolves to a flat parameter dict, runs deterministically
from a master seed, and is persisted as a ResultRecord: the echoed spec, a
build identifier, wall time, and a payload.  The payload is a pure function
of (spec, seed) regardless of worker count; wall time lives outside it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import bounds as bounds_mod
from . import estimate
from .core import (
    EnumerationCapError,
    SiteConfig,
    counts_to_prob,
    crossing,
    duality_check,
    exact_crossing_counts,
)
from .bounds import DomainError
from .enhance import Boundary
from .estimate import RuleTarget, ThetaTarget
from .fractal import BudgetError, FractalParams, sample, level_crossing
from .lattice import Adjacency, BoxShape

OUT_DIR_ENV = "FRACPERC_OUT"

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


@dataclass(frozen=True)
class ParamDef:
    name: str
    kind: str  # int | float | str | ints | flag
    default: object = None
    required: bool = False
    choices: Optional[tuple] = None
    help: str = ""


@dataclass(frozen=True)
class Experiment:
    name: str
    help: str
    params: tuple
    run: Callable[[dict, int], tuple]


def _parse_scalar(pd, text):
    if pd.kind == "int":
        return int(text)
    if pd.kind == "float":
        return float(text)
    if pd.kind == "ints":
        vals = [int(t) for t in text.split(",") if t.strip() != ""]
        if not vals:
            raise ValueError(f"--{pd.name}: empty list")
        return vals
    return text


def _expand_range(pd, text):
    """Grid for a ranged token, or None if the token is a plain scalar.

    Accepted forms for int/float parameters: "a,b,c" lists, "lo:hi:n"
    arithmetic progressions, and "lo:hi:ng" geometric progressions.
    """
    if pd.kind not in ("int", "float"):
        return None
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"--{pd.name}: range must be lo:hi:n or lo:hi:ng")
        lo_s, hi_s, n_s = parts
        geometric = n_s.endswith("g")
        if geometric:
            n_s = n_s[:-1]
        n = int(n_s)
        if n <= 0:
            raise ValueError(f"--{pd.name}: empty range")
        lo, hi = float(lo_s), float(hi_s)
        if n == 1:
            vals = [lo]
        elif geometric:
            if lo <= 0 or hi <= 0:
                raise ValueError(f"--{pd.name}: geometric range needs positive endpoints")
            ratio = (hi / lo) ** (1.0 / (n - 1))
            vals = [lo * ratio ** i for i in range(n)]
        else:
            step = (hi - lo) / (n - 1)
            vals = [lo + step * i for i in range(n)]
        if pd.kind == "int":
            out = []
            for v in vals:
                iv = int(round(v))
                if not out or out[-1] != iv:
                    out.append(iv)
            return out
        return vals
    if "," in text:
        toks = [t for t in text.split(",") if t.strip() != ""]
        if not toks:
            raise ValueError(f"--{pd.name}: empty range")
        conv = int if pd.kind == "int" else float
        return [conv(t) for t in toks]
    return None


def _mc_json(est):
    return {
        "trials": est.trials,
        "successes": est.successes,
        "p_hat": est.p_hat,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
    }


def _mc_cells(est):
    return [est.trials, est.successes, repr(est.p_hat), repr(est.ci_low), repr(est.ci_high)]


# ---------------------------------------------------------------- theta/sheet


def _run_theta(spec, threads, kind):
    params = FractalParams(N=spec["N"], d=spec["d"], p=spec["p"], k_max=spec["k"])
    lse = estimate.theta_estimate(
        params, trials=spec["trials"], seed=spec["seed"], threads=threads, kind=kind
    )
    payload = {
        "N": spec["N"],
        "d": spec["d"],
        "p": spec["p"],
        "kind": kind,
        "levels": [
            {"level": k, **_mc_json(e)} for k, e in zip(lse.levels, lse.estimates)
        ],
    }
    header = ["N", "d", "p", "level", "trials", "successes", "p_hat", "ci_low", "ci_high"]
    rows = [
        [spec["N"], spec["d"], repr(spec["p"]), k] + _mc_cells(e)
        for k, e in zip(lse.levels, lse.estimates)
    ]
    return payload, header, rows


THETA_PARAMS = (
    ParamDef("N", "int", required=True, help="subdivision factor per level"),
    ParamDef("d", "int", default=2, help="dimension"),
    ParamDef("p", "float", required=True, help="retention probability"),
    ParamDef("k", "int", default=4, help="number of construction levels"),
    ParamDef("trials", "int", default=1000),
    ParamDef("seed", "int", default=1),
)

SHEET_PARAMS = tuple(
    ParamDef(pd.name, pd.kind, 3, pd.required, pd.choices, pd.help)
    if pd.name == "d" else pd
    for pd in THETA_PARAMS
)


# ---------------------------------------------------------------- rules


def _run_rule(spec, threads, rule, s_from_spec):
    s = spec["s"] if s_from_spec else 0.0
    boundary = spec.get("boundary", "default")
    est = estimate.rule_estimate(
        rule,
        spec["p"],
        s,
        spec["side"],
        d=spec["d"],
        boundary=boundary,
        trials=spec["trials"],
        seed=spec["seed"],
        threads=threads,
    )
    payload = {
        "side": spec["side"],
        "d": spec["d"],
        "p": spec["p"],
        "s": s,
        "boundary": boundary,
        "rule": rule,
        **_mc_json(est),
    }
    header = [
        "side", "d", "p", "s", "boundary",
        "trials", "successes", "p_hat", "ci_low", "ci_high",
    ]
    rows = [
        [spec["side"], spec["d"], repr(spec["p"]), repr(s), boundary] + _mc_cells(est)
    ]
    return payload, header, rows


PLAIN_RULE_PARAMS = (
    ParamDef("side", "int", required=True, help="box side length"),
    ParamDef("d", "int", default=2),
    ParamDef("p", "float", required=True),
    ParamDef("trials", "int", default=1000),
    ParamDef("seed", "int", default=1),
)

MOD_RULE_PARAMS = PLAIN_RULE_PARAMS + (
    ParamDef("s", "float", required=True, help="activation probability of the rule"),
    ParamDef(
        "boundary",
        "str",
        default="default",
        choices=tuple(b.value for b in Boundary),
        help="treatment of neighbors outside the box",
    ),
)


# ---------------------------------------------------------------- pc


def _run_pc(spec, threads):
    kind = spec["target"]
    if kind == "theta":
        if spec.get("N") is None:
            raise ValueError("pc --target theta requires --N")
        target = ThetaTarget(N=spec["N"], d=spec["d"], level=spec["k"])
    else:
        if spec.get("side") is None:
            raise ValueError(f"pc --target {kind} requires --side")
        rule = "diminish" if kind == "phi" else "enhance"
        target = RuleTarget(rule=rule, side=spec["side"], d=spec["d"], s=0.0)
    ce = estimate.critical_point(
        target,
        seed=spec["seed"],
        tau=spec["tau"],
        p_tol=spec["p_tol"],
        trials_start=spec["trials_start"],
        trials_cap=spec["trials_cap"],
        threads=threads,
    )
    payload = {
        "target": ce.target,
        "tau": ce.tau,
        "p_low": ce.p_low,
        "p_high": ce.p_high,
        "p_mid": ce.p_mid,
        "flag": ce.flag,
        "steps": [{"p": p, **_mc_json(e)} for p, e in ce.steps],
    }
    header = ["target", "N", "side", "d", "level", "tau", "p_low", "p_high", "p_mid", "flag"]
    rows = [[
        kind,
        spec.get("N") if kind == "theta" else "",
        spec.get("side") if kind != "theta" else "",
        spec["d"],
        spec["k"] if kind == "theta" else "",
        repr(spec["tau"]),
        repr(ce.p_low),
        repr(ce.p_high),
        repr(ce.p_mid),
        ce.flag,
    ]]
    return payload, header, rows


PC_PARAMS = (
    ParamDef("target", "str", default="theta", choices=("theta", "phi", "psi")),
    ParamDef("N", "int", help="subdivision factor (theta target)"),
    ParamDef("side", "int", help="box side (phi/psi targets)"),
    ParamDef("d", "int", default=2),
    ParamDef("k", "int", default=2, help="level probed by the theta target"),
    ParamDef("tau", "float", default=0.5, help="crossing level defining the threshold"),
    ParamDef("p_tol", "float", default=1.0 / 256),
    ParamDef("trials_start", "int", default=256),
    ParamDef("trials_cap", "int", default=8192),
    ParamDef("seed", "int", default=1),
)


# ---------------------------------------------------------------- corrlen


def _run_corrlen(spec, threads):
    res = estimate.correlation_length(
        spec["p"],
        spec["delta"],
        d=spec["d"],
        seed=spec["seed"],
        trials_start=spec["trials_start"],
        trials_cap=spec["trials_cap"],
        threads=threads,
        side_cap=spec["side_cap"],
    )
    payload = {
        "p": res.p,
        "delta": res.delta,
        "side": res.side,
        "flag": res.flag,
        "probes": [
            {"side": n, "verdict": v, **_mc_json(e)} for n, e, v in res.probes
        ],
    }
    header = ["p", "delta", "d", "side", "flag"]
    rows = [[repr(spec["p"]), repr(spec["delta"]), spec["d"],
             res.side if res.side is not None else "", res.flag]]
    return payload, header, rows


CORRLEN_PARAMS = (
    ParamDef("p", "float", required=True),
    ParamDef("delta", "float", required=True, help="crossing defect target"),
    ParamDef("d", "int", default=2),
    ParamDef("side_cap", "int", default=4096),
    ParamDef("trials_start", "int", default=256),
    ParamDef("trials_cap", "int", default=8192),
    ParamDef("seed", "int", default=1),
)


# ---------------------------------------------------------------- scaling


def _run_scaling(spec, threads):
    fit = estimate.scaling_experiment(
        spec["n_list"],
        level=spec["level"],
        d=2,
        seed=spec["seed"],
        reference_side=spec["reference_side"],
        side_floor=spec.get("side_floor"),
        p_tol=spec["p_tol"],
        trials_start=spec["trials_start"],
        trials_cap=spec["trials_cap"],
        threads=threads,
    )
    payload = {
        "slope": fit.slope,
        "stderr": fit.stderr,
        "intercept": fit.intercept,
        "flag": fit.flag,
        "reference": fit.reference,
        "points": list(fit.points),
    }
    header = ["N", "level", "p_mid", "gap", "sigma", "flag"]
    rows = [
        [pt["N"], pt["level"], repr(pt["p_mid"]), repr(pt["gap"]),
         repr(pt["sigma"]), pt["flag"]]
        for pt in fit.points
    ]
    return payload, header, rows


SCALING_PARAMS = (
    ParamDef("n_list", "ints", default=[2, 3, 4, 6, 8, 12, 16]),
    ParamDef("level", "int", default=2),
    ParamDef("side_floor", "int",
             help="deepen each N's level until N^level reaches this side"),
    ParamDef("reference_side", "int", default=256),
    ParamDef("p_tol", "float", default=1.0 / 512),
    ParamDef("trials_start", "int", default=256),
    ParamDef("trials_cap", "int", default=8192),
    ParamDef("seed", "int", default=1),
)


# ---------------------------------------------------------------- bounds


def _run_bounds(spec, threads):
    kw = dict(
        N=spec["N"],
        m=spec["m"],
        c3=spec["c3"],
        c4=spec["c4"],
        g=spec["g"],
        D=spec["D"],
        c2_delta0=spec["c2_delta0"],
    )
    if spec.get("y0") is not None:
        kw["y0"] = spec["y0"]
    if spec.get("delta1") is not None:
        bp = bounds_mod.BoundParams(delta1=spec["delta1"], **kw)
    elif spec.get("y0") is not None:
        bp = bounds_mod.BoundParams(delta1=spec["y0"] / 2.0, **kw)
    else:
        raise ValueError("bounds requires --delta1 or --y0")
    row = bounds_mod.bound_table_row(bp)
    payload = {
        "N": row.N,
        "m": row.m,
        "delta1": row.delta1,
        "delta_star": row.delta_star,
        "y1": row.y1,
        "y2": row.y2,
        "bound": row.bound,
        "flag": row.flag,
        "constants": {
            "c3": bp.c3, "c4": bp.c4, "c5": bp.c5, "g": bp.g,
            "y0": bp.y0, "D": bp.D, "c2_delta0": bp.c2_delta0,
        },
    }
    header = ["N", "m", "delta1", "delta_star", "y1", "y2", "bound"]

    def cell(v):
        return "" if v is None else repr(v)

    rows = [[row.N, row.m, repr(row.delta1), cell(row.delta_star), cell(row.y1),
             cell(row.y2), cell(row.bound)]]
    return payload, header, rows


BOUNDS_PARAMS = (
    ParamDef("N", "int", required=True),
    ParamDef("m", "int", required=True),
    ParamDef("delta1", "float", help="initial defect; defaults to y0/2 when --y0 given"),
    ParamDef("y0", "float", help="domain anchor; derives c5 = c3/(1 - g*y0^(1/4))"),
    ParamDef("c3", "float", default=1.0),
    ParamDef("c4", "float", default=1.0),
    ParamDef("g", "float", default=3.0),
    ParamDef("D", "float", default=1.0),
    ParamDef("c2_delta0", "float", default=1.0),
    ParamDef("seed", "int", default=1),
)


# ---------------------------------------------------------------- couple


def _run_couple(spec, threads):
    ck = estimate.coupling_inequality_check(
        spec["p"],
        spec["N"],
        spec["k"],
        d=spec["d"],
        trials=spec["trials"],
        seed=spec["seed"],
        threads=threads,
        sheet=bool(spec["sheet"]),
    )
    payload = {
        "kind": ck.kind,
        "N": spec["N"],
        "d": spec["d"],
        "k": spec["k"],
        "p": spec["p"],
        "lhs": _mc_json(ck.lhs),
        "rhs_low": ck.rhs_low,
        "rhs_high": ck.rhs_high,
        "s_plug": ck.s_plug,
        "satisfied": ck.satisfied,
        "detail": {k: _mc_json(v) for k, v in ck.detail.items()},
    }
    header = [
        "kind", "N", "d", "k", "p", "s_plug",
        "lhs_p_hat", "lhs_ci_low", "lhs_ci_high", "rhs_low", "rhs_high", "satisfied",
    ]
    rows = [[
        ck.kind, spec["N"], spec["d"], spec["k"], repr(spec["p"]), repr(ck.s_plug),
        repr(ck.lhs.p_hat), repr(ck.lhs.ci_low), repr(ck.lhs.ci_high),
        repr(ck.rhs_low), repr(ck.rhs_high), int(ck.satisfied),
    ]]
    return payload, header, rows


COUPLE_PARAMS = (
    ParamDef("p", "float", required=True),
    ParamDef("N", "int", required=True),
    ParamDef("k", "int", default=2),
    ParamDef("d", "int", default=2),
    ParamDef("sheet", "flag", default=False, help="check the sheet variant (d >= 3)"),
    ParamDef("trials", "int", default=2048),
    ParamDef("seed", "int", default=1),
)


# ---------------------------------------------------------------- validate


def _all_configs(shape):
    cells = shape.cells
    for cfg in range(1 << cells):
        bits = (cfg >> np.arange(cells)) & 1
        yield SiteConfig(shape, bits.astype(bool).reshape(shape.sides))


def _check_duality():
    for sides in ((2, 2), (3, 3), (2, 3), (3, 2)):
        shape = BoxShape(sides=sides)
        for config in _all_configs(shape):
            if not duality_check(config):
                return False, f"duality violated on {sides}"
    return True, "all configurations on sides up to 3"


def _check_enumeration_vs_label():
    for sides, adjacency in (((2, 2), Adjacency.EDGE), ((3, 3), Adjacency.EDGE),
                             ((3, 3), Adjacency.CORNER), ((2, 2, 2), Adjacency.EDGE)):
        shape = BoxShape(sides=sides)
        counts = exact_crossing_counts(shape, adjacency=adjacency, axis=0)
        ref = np.zeros(shape.cells + 1, dtype=np.int64)
        for config in _all_configs(shape):
            if crossing(config, axis=0, adjacency=adjacency).crossed:
                ref[int(config.open_mask.sum())] += 1
        if not np.array_equal(counts, ref):
            return False, f"count mismatch on {sides} {adjacency.name}"
    return True, "bitboard enumeration matches label route"


def _check_mc_vs_exact(seed):
    shape = BoxShape(sides=(2, 2))
    exact = counts_to_prob(exact_crossing_counts(shape), 0.5)
    trials = 20000
    inds = RuleTarget(rule="diminish", side=2, d=2).indicators(0.5, seed, 0, trials)
    p_hat = inds.sum() / trials
    se = (exact * (1 - exact) / trials) ** 0.5
    ok = abs(p_hat - exact) < 4 * se
    return ok, f"p_hat={p_hat:.4f} exact={exact:.4f}"


def _check_level_monotone(seed):
    params = FractalParams(N=3, d=2, p=0.75, k_max=3)
    for trial in range(300):
        real = sample(params, seed=seed, trial=trial)
        prev = True
        for k in (1, 2, 3):
            cur = level_crossing(real, k)
            if cur and not prev:
                return False, f"indicator increased at trial {trial} level {k}"
            prev = cur
    return True, "level indicator non-increasing on 300 realizations"


def _check_p_coupling(seed):
    params_lo = FractalParams(N=3, d=2, p=0.6, k_max=2)
    params_hi = FractalParams(N=3, d=2, p=0.8, k_max=2)
    for trial in range(300):
        lo = sample(params_lo, seed=seed, trial=trial)
        hi = sample(params_hi, seed=seed, trial=trial)
        for k in (1, 2):
            if np.any(lo.mask(k) & ~hi.mask(k)):
                return False, f"retention not nested at trial {trial}"
        if level_crossing(lo, 2) and not level_crossing(hi, 2):
            return False, f"crossing not monotone at trial {trial}"
    return True, "retention sets and indicators nested on 300 realizations"


def _check_rule_symmetry():
    shape = BoxShape(sides=(3, 3))
    f_counts = exact_crossing_counts(shape, adjacency=Adjacency.EDGE, axis=0)
    c_counts = exact_crossing_counts(shape, adjacency=Adjacency.CORNER, axis=1)
    for p in (0.2, 0.5, 0.8):
        lhs = counts_to_prob(f_counts, p)
        rhs = 1.0 - counts_to_prob(c_counts, 1.0 - p)
        if abs(lhs - rhs) > 1e-12:
            return False, f"identity off at p={p}"
    return True, "edge/corner complement identity exact on side 3"


def _run_validate(spec, threads):
    seed = spec["seed"]
    checks = [
        ("duality_exhaustive", _check_duality()),
        ("enumeration_vs_label", _check_enumeration_vs_label()),
        ("mc_vs_exact", _check_mc_vs_exact(seed)),
        ("level_monotone", _check_level_monotone(seed)),
        ("p_coupling", _check_p_coupling(seed)),
        ("edge_corner_complement", _check_rule_symmetry()),
    ]
    results = [
        {"check": name, "passed": bool(ok), "detail": detail}
        for name, (ok, detail) in checks
    ]
    n_pass = sum(r["passed"] for r in results)
    payload = {
        "checks": results,
        "passed": n_pass,
        "failed": len(results) - n_pass,
    }
    header = ["check", "passed"]
    rows = [[r["check"], int(r["passed"])] for r in results]
    return payload, header, rows


VALIDATE_PARAMS = (ParamDef("seed", "int", default=1),)


EXPERIMENTS = {
    exp.name: exp
    for exp in (
        Experiment("theta", "iterated-construction path crossing estimate",
                   THETA_PARAMS, lambda s, t: _run_theta(s, t, "path")),
        Experiment("sheet", "iterated-construction sheet crossing estimate (d >= 3)",
                   SHEET_PARAMS, lambda s, t: _run_theta(s, t, "sheet")),
        Experiment("phi", "plain edge-adjacency crossing probability",
                   PLAIN_RULE_PARAMS, lambda s, t: _run_rule(s, t, "diminish", False)),
        Experiment("psi", "plain corner-adjacency crossing probability",
                   PLAIN_RULE_PARAMS, lambda s, t: _run_rule(s, t, "enhance", False)),
        Experiment("enhance", "crossing probability after the opening rule",
                   MOD_RULE_PARAMS, lambda s, t: _run_rule(s, t, "enhance", True)),
        Experiment("diminish", "crossing probability after the closing rule",
                   MOD_RULE_PARAMS, lambda s, t: _run_rule(s, t, "diminish", True)),
        Experiment("pc", "critical density by stochastic bisection",
                   PC_PARAMS, _run_pc),
        Experiment("corrlen", "smallest side reaching a crossing probability target",
                   CORRLEN_PARAMS, _run_corrlen),
        Experiment("scaling", "decay fit of the level threshold toward the lattice one",
                   SCALING_PARAMS, _run_scaling),
        Experiment("bounds", "deterministic lower-bound table",
                   BOUNDS_PARAMS, _run_bounds),
        Experiment("couple", "one-box domination inequality check",
                   COUPLE_PARAMS, _run_couple),
        Experiment("validate", "exhaustive small-instance self checks",
                   VALIDATE_PARAMS, _run_validate),
    )
}


def _build_id():
    ident = f"fracperc {__version__}"
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0:
            ident += f" {rev.stdout.strip()}"
    except OSError:
        pass
    return ident


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracperc",
        description="Monte Carlo lab for iterated random subdivision and site crossings.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")

    def add_io(sp):
        sp.add_argument("--format", choices=("csv", "json", "both"), default="json")
        sp.add_argument("--out", default=None,
                        help="output path prefix (writes PREFIX.json / PREFIX.csv)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: all cores)")

    for exp in EXPERIMENTS.values():
        sp = sub.add_parser(exp.name, help=exp.help)
        for pd in exp.params:
            kw = {"help": pd.help}
            if pd.kind == "flag":
                sp.add_argument(f"--{pd.name.replace('_', '-')}",
                                action="store_true", default=pd.default, dest=pd.name,
                                help=pd.help)
                continue
            if pd.choices:
                kw["choices"] = pd.choices
            sp.add_argument(f"--{pd.name.replace('_', '-')}", default=None,
                            dest=pd.name, **kw)
        add_io(sp)

    sp = sub.add_parser("sweep", help="run one experiment over a parameter grid")
    sp.add_argument("target", choices=sorted(k for k in EXPERIMENTS))
    sp.add_argument("rest", nargs=argparse.REMAINDER,
                    help="experiment flags; exactly one may be ranged "
                         "(a,b,c or lo:hi:n or lo:hi:ng)")
    return parser


def _resolve_specs(exp, ns, parser, sweep):
    base = {}
    ranged = []
    for pd in exp.params:
        raw = getattr(ns, pd.name, None)
        if raw is None:
            if pd.default is not None or pd.kind == "flag":
                base[pd.name] = pd.default
            elif pd.required:
                parser.error(f"{exp.name}: --{pd.name.replace('_', '-')} is required")
            else:
                base[pd.name] = None
            continue
        if isinstance(raw, str):
            try:
                grid = _expand_range(pd, raw)
                if grid is not None:
                    if not sweep:
                        parser.error(
                            f"{exp.name}: ranged --{pd.name} is only valid under sweep"
                        )
                    ranged.append((pd.name, grid))
                else:
                    base[pd.name] = _parse_scalar(pd, raw)
            except ValueError as exc:
                parser.error(str(exc))
        else:
            base[pd.name] = raw
    if sweep:
        if len(ranged) != 1:
            parser.error(
                f"sweep requires exactly one ranged parameter, got {len(ranged)}"
            )
        name, grid = ranged[0]
        return [dict(base, **{name: v}) for v in grid]
    if ranged:
        parser.error("ranged parameters are only valid under sweep")
    return [base]


def _run_record(exp, spec, threads):
    t0 = time.perf_counter()
    payload, header, rows = exp.run(spec, threads)
    wall = time.perf_counter() - t0
    record = {
        "experiment": exp.name,
        "spec": dict(spec, threads=threads),
        "build": _build_id(),
        "wall_time_s": round(wall, 6),
        "payload": payload,
    }
    return record, header, rows


def _out_prefix(ns, exp_name, seed):
    out_dir = os.environ.get(OUT_DIR_ENV, ".")
    if ns.out is not None:
        if os.path.dirname(ns.out):
            return ns.out
        return os.path.join(out_dir, ns.out)
    return os.path.join(out_dir, f"{exp_name}-seed{seed}")


def _persist(ns, exp_name, seed, doc, header, rows):
    json_text = json.dumps(doc, sort_keys=True, indent=2)
    prefix = _out_prefix(ns, exp_name, seed)
    written = []
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    if ns.format in ("json", "both"):
        path = prefix + ".json"
        with open(path, "w") as fp:
            fp.write(json_text + "\n")
        written.append(path)
    if ns.format in ("csv", "both"):
        path = prefix + ".csv"
        with open(path, "w", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)
    print(json_text)
    for path in written:
        print(f"wrote {path}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    threads = ns.threads if getattr(ns, "threads", None) else (os.cpu_count() or 1)

    if ns.experiment == "sweep":
        exp = EXPERIMENTS[ns.target]
        sub = argparse.ArgumentParser(prog=f"fracperc sweep {ns.target}")
        for pd in exp.params:
            if pd.kind == "flag":
                sub.add_argument(f"--{pd.name.replace('_', '-')}",
                                 action="store_true", default=pd.default, dest=pd.name)
            else:
                kw = {"choices": pd.choices} if pd.choices else {}
                sub.add_argument(f"--{pd.name.replace('_', '-')}", default=None,
                                 dest=pd.name, **kw)
        sub.add_argument("--format", choices=("csv", "json", "both"), default="json")
        sub.add_argument("--out", default=None)
        sub.add_argument("--threads", type=int, default=None)
        ns2 = sub.parse_args(ns.rest)
        threads = ns2.threads if ns2.threads else (os.cpu_count() or 1)
        specs = _resolve_specs(exp, ns2, sub, sweep=True)
        records = []
        header = None
        all_rows = []
        try:
            for spec in specs:
                record, header, rows = _run_record(exp, spec, threads)
                records.append(record)
                all_rows.extend(rows)
        except (BudgetError, EnumerationCapError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        except (DomainError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        seed = specs[0].get("seed", 0)
        _persist(ns2, f"sweep-{ns.target}", seed, records, header, all_rows)
        return EXIT_OK

    exp = EXPERIMENTS[ns.experiment]
    spec = _resolve_specs(exp, ns, parser, sweep=False)[0]
    try:
        record, header, rows = _run_record(exp, spec, threads)
    except (BudgetError, EnumerationCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _persist(ns, exp.name, spec.get("seed", 0), record, header, rows)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
