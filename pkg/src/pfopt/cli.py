"""Config-driven experiment runner.

Subcommands:

* ``run``      - execute a JSON-configured experiment grid cell by cell,
                 writing one trace CSV per algorithm plus a JSON summary.
* ``compare``  - tabulate two or more traces of the same problem.
* ``selftest`` - run the built-in invariant suite and report per-property
                 pass/fail lines.

Exit codes: 0 success, 1 test or constraint failure, 2 configuration
error, 3 I/O or data-format error. Trace CSVs are byte-identical across
reruns of the same config and seed; wall-clock numbers live only in the
summary JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import data_io, diagnostics, feasible_sets, objectives, solvers
from .core import FactoredMatrix, rng_from_seed
from .data_io import MalformedLine, NonBinaryLabels, SchemaMismatch

SCHEMA_VERSION = 1

VECTOR_DEFAULT_ITERS = 10_000
MATCOMP_DEFAULT_ITERS = 300

_ALGORITHMS = ("fw", "afw", "agm", "agm_sc", "pgd")


class ConfigError(Exception):
    def __init__(self, fieldpath: str, why: str):
        super().__init__(f"config field {fieldpath!r}: {why}")
        self.fieldpath = fieldpath


class MetadataMismatch(Exception):
    """Traces describe different problems and cannot be compared."""


# ---------------------------------------------------------------------------
# config handling

def _require_keys(obj, allowed, required, path):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")


def validate_config(cfg: dict) -> dict:
    """Check an experiment config and fill documented defaults."""
    _require_keys(cfg, {"problem", "constraint", "algorithms", "iters", "seed",
                        "output_dir", "diagnostics", "fstar_policy"},
                  {"problem", "constraint", "algorithms", "seed"}, "")
    problem = cfg["problem"]
    _require_keys(problem, {"kind", "dim", "center_norm", "path"}, {"kind"},
                  "problem")
    kind = problem["kind"]
    if kind == "quadratic":
        _require_keys(problem, {"kind", "dim", "center_norm"},
                      {"kind", "dim", "center_norm"}, "problem")
        if int(problem["dim"]) < 1:
            raise ConfigError("problem.dim", "must be a positive integer")
    elif kind in ("logistic", "matcomp"):
        _require_keys(problem, {"kind", "path"}, {"kind", "path"}, "problem")
    else:
        raise ConfigError("problem.kind", f"unknown problem kind {kind!r}")

    constraint = cfg["constraint"]
    _require_keys(constraint, {"kind", "radius", "p"}, {"kind"}, "constraint")
    ckind = constraint["kind"]
    if ckind not in ("l2", "l1", "lp", "nuclear"):
        raise ConfigError("constraint.kind", f"unknown constraint kind {ckind!r}")
    if "radius" not in constraint:
        raise ConfigError("constraint.radius", "missing")
    if not float(constraint["radius"]) > 0:
        raise ConfigError("constraint.radius", "must be positive")
    if ckind == "lp":
        if "p" not in constraint:
            raise ConfigError("constraint.p", "missing")
        if not 1.0 < float(constraint["p"]) < np.inf:
            raise ConfigError("constraint.p", "must lie in (1, inf)")
    if ckind == "nuclear" and kind != "matcomp":
        raise ConfigError("constraint.kind", "nuclear constraints need a matcomp problem")
    if kind == "matcomp" and ckind != "nuclear":
        raise ConfigError("constraint.kind", "matcomp problems need a nuclear constraint")

    algs = cfg["algorithms"]
    if not isinstance(algs, list) or not algs:
        raise ConfigError("algorithms", "need a non-empty list")
    for a in algs:
        if a not in _ALGORITHMS:
            raise ConfigError("algorithms", f"unknown algorithm {a!r}")

    out = dict(cfg)
    out.setdefault("iters",
                   MATCOMP_DEFAULT_ITERS if kind == "matcomp" else VECTOR_DEFAULT_ITERS)
    if int(out["iters"]) < 1:
        raise ConfigError("iters", "must be at least 1")
    out.setdefault("diagnostics", False)
    out.setdefault("output_dir", "pfopt_out")
    policy = out.setdefault("fstar_policy",
                            {"kind": "analytic"} if kind == "quadratic"
                            else {"kind": "reference_run",
                                  "iters": 5 * int(out["iters"])})
    _require_keys(policy, {"kind", "iters"}, {"kind"}, "fstar_policy")
    if policy["kind"] == "reference_run":
        _require_keys(policy, {"kind", "iters"}, {"kind", "iters"}, "fstar_policy")
        if int(policy["iters"]) < 1:
            raise ConfigError("fstar_policy.iters", "must be at least 1")
    elif policy["kind"] != "analytic":
        raise ConfigError("fstar_policy.kind", f"unknown policy {policy['kind']!r}")
    return out


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# experiment assembly

def _make_constraint(constraint, problem_data=None):
    kind = constraint["kind"]
    radius = float(constraint["radius"])
    if kind == "l2":
        return feasible_sets.l2_ball(radius)
    if kind == "l1":
        return feasible_sets.l1_ball(radius)
    if kind == "lp":
        return feasible_sets.lp_ball(radius, float(constraint["p"]))
    obs = problem_data.observed
    return feasible_sets.nuclear_ball(radius, obs.shape, obs.rows, obs.cols)


def _sample_in_ball(rng, dim, constraint):
    z = rng.standard_normal(dim)
    radius = float(constraint["radius"])
    shrink = rng.uniform(0.0, 1.0) ** (1.0 / dim)
    kind = constraint["kind"]
    if kind == "l2":
        norm = np.linalg.norm(z)
    elif kind == "l1":
        norm = np.abs(z).sum()
    else:
        p = float(constraint["p"])
        norm = np.sum(np.abs(z) ** p) ** (1.0 / p)
    return z * (radius * shrink / norm)


def _analytic_optimum(center, scale, constraint):
    """(x_star, f_star) when the constrained optimum is in closed form."""
    radius = float(constraint["radius"])
    kind = constraint["kind"]
    if kind == "l2":
        norm = np.linalg.norm(center)
        if norm <= radius:
            return center.copy(), 0.0
        x_star = center * (radius / norm)
        return x_star, float(scale * (norm - radius) ** 2)
    if kind == "l1":
        x_star = feasible_sets.project_l1(center, radius)
        d = x_star - center
        return x_star, float(scale * (d @ d))
    return None


def build_experiment(cfg: dict) -> dict:
    """Materialize objective, feasible set, start point, and references."""
    rng = rng_from_seed(cfg["seed"])
    problem = cfg["problem"]
    constraint = cfg["constraint"]
    kind = problem["kind"]
    exp = {"config": cfg}
    if kind == "quadratic":
        dim = int(problem["dim"])
        direction = rng.standard_normal(dim)
        center = direction * (float(problem["center_norm"]) / np.linalg.norm(direction))
        exp["objective"] = objectives.quadratic_objective(center, 1.0)
        exp["set"] = _make_constraint(constraint)
        exp["x0"] = _sample_in_ball(rng, dim, constraint)
        analytic = _analytic_optimum(center, 1.0, constraint)
        exp["x_star"], exp["f_star_analytic"] = analytic if analytic else (None, None)
        exp["center"] = center
    elif kind == "logistic":
        data = data_io.parse_libsvm(problem["path"])
        exp["objective"] = objectives.logistic_objective(
            objectives.LogisticProblem(data.features, data.labels),
            smoothness_seed=int(cfg["seed"]))
        exp["set"] = _make_constraint(constraint)
        exp["x0"] = np.zeros(data.features.n_cols)
        exp["x_star"], exp["f_star_analytic"] = None, None
    else:
        ratings = data_io.parse_movielens(problem["path"])
        mc = objectives.MatCompProblem(ratings.ratings)
        exp["objective"] = objectives.matcomp_objective(mc)
        exp["set"] = _make_constraint(constraint, mc)
        exp["x0"] = objectives.matcomp_initial_point(
            mc, float(constraint["radius"]), seed=int(cfg["seed"]))
        exp["x_star"], exp["f_star_analytic"] = None, None
    return exp


def _geometric_ks(limit: int):
    ks, base = [], 1
    while base <= limit:
        for mult in (1, 2, 5):
            k = base * mult
            if k <= limit:
                ks.append(k)
        base *= 10
    return sorted(set(ks))


def _resolve_f_star(cfg, exp, quiet):
    policy = cfg["fstar_policy"]
    if policy["kind"] == "analytic":
        if exp["f_star_analytic"] is None:
            raise ConfigError("fstar_policy.kind",
                              "no analytic optimum for this problem/constraint")
        return exp["f_star_analytic"], "analytic"
    iters = int(policy["iters"])
    stop = solvers.StoppingRule(max_iters=iters)
    if not quiet:
        print(f"[pfopt] reference run for f* ({iters} iterations)")
    fs = exp["set"]
    if fs.project is not None and not isinstance(exp["x0"], FactoredMatrix):
        ref = solvers.run_agm(exp["objective"], exp["x0"], stop, feasible_set=fs)
    else:
        ref = solvers.run_afw(exp["objective"], fs, exp["x0"], stop=stop)
    # documented safety margin so later gaps stay positive
    return float(np.min(ref.f_value)) - 1e-10, f"reference_run({iters})"


def _run_algorithm(name, cfg, exp):
    obj, fs, x0 = exp["objective"], exp["set"], exp["x0"]
    stop = solvers.StoppingRule(max_iters=int(cfg["iters"]))
    seed = int(cfg["seed"])
    rank_log = []
    on_iterate = None
    if cfg["problem"]["kind"] == "matcomp" and name in ("fw", "afw"):
        log_points = set(_geometric_ks(int(cfg["iters"])))

        def on_iterate(state):
            if state.k in log_points:
                consolidated = state.x.consolidated()
                rank_log.append({"k": int(state.k),
                                 "rank": int(consolidated.numerical_rank()),
                                 "atoms": int(consolidated.n_atoms)})
    if name == "fw":
        trace = solvers.run_fw(obj, fs, x0, stop=stop, seed=seed,
                               on_iterate=on_iterate)
    elif name == "afw":
        trace = solvers.run_afw(obj, fs, x0, stop=stop,
                                diagnostics_on=bool(cfg["diagnostics"]),
                                seed=seed, on_iterate=on_iterate)
    elif name == "agm":
        trace = solvers.run_agm(obj, x0, stop, feasible_set=fs,
                                x_star=exp["x_star"], seed=seed)
    elif name == "agm_sc":
        trace = solvers.run_agm_sc(obj, x0, stop, seed=seed)
    elif name == "pgd":
        trace = solvers.run_projected_gd(obj, fs, x0, stop, seed=seed)
    else:  # pragma: no cover - guarded by validate_config
        raise ConfigError("algorithms", f"unknown algorithm {name!r}")
    return trace, rank_log


def _normalized_copy(trace):
    """Zero the wall-clock column so written CSVs are reproducible."""
    return solvers.SolverTrace(
        k=trace.k, f_value=trace.f_value, fw_gap=trace.fw_gap,
        step_delta=trace.step_delta,
        wall_time_ns=np.zeros_like(trace.wall_time_ns),
        extras=trace.extras, metadata=trace.metadata)


def cmd_run(cfg: dict, output_dir=None, quiet=False) -> int:
    cfg = validate_config(cfg)
    out_dir = output_dir or cfg["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    exp = build_experiment(cfg)
    f_star, f_star_source = _resolve_f_star(cfg, exp, quiet)
    summary = {"schema_version": SCHEMA_VERSION,
               "config": cfg,
               "f_star": f_star,
               "f_star_source": f_star_source,
               "algorithms": {}}
    for name in cfg["algorithms"]:
        t0 = time.perf_counter()
        trace, rank_log = _run_algorithm(name, cfg, exp)
        wall = time.perf_counter() - t0
        trace.metadata["f_star"] = f_star
        trace.metadata["f_star_source"] = f_star_source
        csv_path = os.path.join(out_dir, f"trace_{name}.csv")
        data_io.write_trace(_normalized_copy(trace), csv_path)
        final_gap = float(trace.f_value[-1] - f_star)
        entry = {"trace_csv": csv_path,
                 "iterations": int(trace.metadata["iterations"]),
                 "stop_reason": trace.metadata["stop_reason"],
                 "final_f": float(trace.f_value[-1]),
                 "final_gap": final_gap,
                 "wall_clock_s": wall,
                 "zigzag_dispersion": diagnostics.zigzag_dispersion(trace),
                 "rate": None}
        try:
            entry["rate"] = diagnostics.estimate_rate(trace, f_star).to_json_dict()
        except (diagnostics.EmptyWindow, ValueError):
            pass
        if rank_log:
            entry["rank_log"] = rank_log
        summary["algorithms"][name] = entry
        if not quiet:
            rate = entry["rate"]
            slope = f"{rate['slope']:+.3f}" if rate else "n/a"
            print(f"[pfopt] {name}: {entry['iterations']} iters, "
                  f"final gap {final_gap:.3e}, slope {slope}, {wall:.2f}s")
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print(f"[pfopt] summary written to {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# compare

def _iterations_to_tol(trace, f_star, tol):
    gaps = trace.f_value - f_star
    hit = np.nonzero(gaps <= tol)[0]
    return int(trace.k[hit[0]]) if hit.size else None

def cmd_compare(trace_paths, f_star=None, json_path=None, quiet=False) -> int:
    if len(trace_paths) < 2:
        raise MetadataMismatch("need at least two traces to compare")
    traces = [data_io.read_trace(p) for p in trace_paths]
    ref_meta = traces[0].metadata
    for t in traces[1:]:
        for key in ("problem", "set"):
            if t.metadata.get(key) != ref_meta.get(key):
                raise MetadataMismatch(
                    f"trace {key} metadata differs: "
                    f"{t.metadata.get(key)!r} vs {ref_meta.get(key)!r}")
    if f_star is None:
        f_star = min(float(np.min(t.f_value)) for t in traces) - 1e-10
    names = [t.metadata.get("algorithm", f"trace{i}") for i, t in enumerate(traces)]
    last_common = min(int(t.k[-1]) for t in traces)
    grid = [k for k in _geometric_ks(last_common)]
    report = {"schema_version": SCHEMA_VERSION, "f_star": f_star,
              "traces": [str(p) for p in trace_paths], "algorithms": names,
              "gap_at_k": {}, "iterations_to_tol": {}, "rate_slopes": {},
              "iterations_to_tol_ratio": {}}
    lines = []
    header = f"{'k':>8} " + " ".join(f"{n:>12}" for n in names)
    lines.append("gap at iteration k")
    lines.append(header)
    for k in grid:
        row = []
        for t in traces:
            idx = np.searchsorted(t.k, k)
            row.append(float(t.f_value[idx] - f_star))
        report["gap_at_k"][str(k)] = row
        lines.append(f"{k:>8} " + " ".join(f"{g:>12.4e}" for g in row))
    lines.append("")
    lines.append("iterations to reach gap <= tol")
    lines.append(f"{'tol':>8} " + " ".join(f"{n:>12}" for n in names))
    for tol in (1e-1, 1e-2, 1e-3, 1e-4):
        its = [_iterations_to_tol(t, f_star, tol) for t in traces]
        report["iterations_to_tol"][f"{tol:.0e}"] = its
        ratios = [(it / its[0]) if (it is not None and its[0]) else
                  (1.0 if it == its[0] else None) for it in its]
        report["iterations_to_tol_ratio"][f"{tol:.0e}"] = ratios
        cells = " ".join(f"{'-' if it is None else it:>12}" for it in its)
        lines.append(f"{tol:>8.0e} {cells}")
    lines.append("")
    slopes = []
    for t in traces:
        try:
            slopes.append(diagnostics.estimate_rate(t, f_star).slope)
        except (diagnostics.EmptyWindow, ValueError):
            slopes.append(None)
    report["rate_slopes"] = dict(zip(names, slopes))
    slope_cells = " ".join(
        f"{'-' if s is None else format(s, '+.3f'):>12}" for s in slopes)
    lines.append("log-log rate slope")
    lines.append(f"{'':>8} " + slope_cells)
    text = "\n".join(lines)
    if not quiet:
        print(text)
    if json_path:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# selftest

def _selftest_checks():
    from . import selftest_checks
    return selftest_checks.all_checks()


def cmd_selftest(quiet=False) -> int:
    failures = 0
    for name, fn in _selftest_checks():
        try:
            fn()
            if not quiet:
                print(f"PASS {name}")
        except Exception as exc:  # report, never throw
            failures += 1
            print(f"FAIL {name}: {exc}")
    if not quiet:
        print(f"[pfopt] selftest: {'all passed' if failures == 0 else f'{failures} failed'}")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# entry point

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pfopt", description="projection-free optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--output", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--quiet", action="store_true")

    p_cmp = sub.add_parser("compare", help="compare trace CSVs")
    p_cmp.add_argument("traces", nargs="+", help="trace CSV paths")
    p_cmp.add_argument("--f-star", type=float, default=None,
                       help="optimal value reference; defaults to the best "
                            "observed value minus a small margin")
    p_cmp.add_argument("--json", default=None, help="also write a JSON report")
    p_cmp.add_argument("--quiet", action="store_true")

    p_self = sub.add_parser("selftest", help="run the invariant suite")
    p_self.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg["seed"] = args.seed
            return cmd_run(cfg, output_dir=args.output, quiet=args.quiet)
        if args.command == "compare":
            return cmd_compare(args.traces, f_star=args.f_star,
                               json_path=args.json, quiet=args.quiet)
        return cmd_selftest(quiet=args.quiet)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, MalformedLine, NonBinaryLabels, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
