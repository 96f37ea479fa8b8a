"""Command-line interface.

Subcommands:
  solve   load a problem directory/manifest and run the interior-point solver
  gen     generate a random standard-form instance and save it
  svm     read a LIBSVM file, build the l1-SVM LP, solve, extract (w, b)
  phase1  compute a strictly positive primal point on Ax = b
  bench   run several solver configurations and tabulate iteration counts

Exit codes: 0 converged/success, 1 usage error, 2 numerical failure,
3 I/O or parse error. The environment variable SKIPM_THREADS caps the
threads used by dense linear algebra.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from .errors import EmptyDataset, InvalidZeta, ParseError, SkipmError
from .ipm_core import IpmParams, SolveReport, phase1_point, solve
from .lp_model import (
    extract_svm_solution,
    load_libsvm,
    load_matrix_market,
    random_lp,
    random_feasible_lp,
    save_matrix_market,
    svm_to_lp,
)
from .oracle_bench import (
    BENCH_COLUMNS,
    run_comparison,
    synthetic_suite,
    write_csv,
    write_json,
)
from .sketching import auto_sketch_dims

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

_NUMBER = {"type": ["number", "null"]}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "problem", "m", "n", "mode", "solver", "params", "converged", "outer",
        "sum_inner", "max_inner", "mu0", "mu_final", "epsilon", "objective",
        "dual_objective", "gap", "r0_norm", "r_final_norm", "mu_trace",
        "v_norm_trace", "inner_iterations", "wall_seconds",
        "v_bound_failures", "gamma_effective", "steps",
    ],
    "properties": {
        "problem": {"type": "string"},
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["feasible", "infeasible"]},
        "solver": {"enum": ["pcg", "chebyshev", "direct", "unpreconditioned"]},
        "params": {"type": "object"},
        "converged": {"type": "boolean"},
        "outer": {"type": "integer", "minimum": 0},
        "sum_inner": {"type": "integer", "minimum": 0},
        "max_inner": {"type": "integer", "minimum": 0},
        "mu0": {"type": "number", "exclusiveMinimum": 0},
        "mu_final": {"type": "number"},
        "epsilon": {"type": "number"},
        "objective": {"type": "number"},
        "dual_objective": {"type": "number"},
        "gap": {"type": "number"},
        "r0_norm": _NUMBER,
        "r_final_norm": {"type": "number"},
        "mu_trace": {"type": "array", "items": {"type": "number"}},
        "v_norm_trace": {"type": "array", "items": {"type": "number"}},
        "inner_iterations": {"type": "array", "items": {"type": "integer"}},
        "wall_seconds": {"type": "number", "minimum": 0},
        "v_bound_failures": {"type": "integer", "minimum": 0},
        "gamma_effective": _NUMBER,
        "steps": {"type": "array", "items": {"type": "object"}},
        "w_auto": {"type": "integer"},
        "s_auto": {"type": "integer"},
        "timestamp": {"type": "string"},
        "x": {"type": "array", "items": {"type": "number"}},
        "y": {"type": "array", "items": {"type": "number"}},
        "s": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": True,
}

PHASE1_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["problem", "m", "n", "residual_rel", "min_x", "aux_outer",
                 "aux_mu_final", "x0"],
    "properties": {
        "problem": {"type": "string"},
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "residual_rel": {"type": "number", "minimum": 0},
        "min_x": {"type": "number", "exclusiveMinimum": 0},
        "aux_outer": {"type": "integer", "minimum": 0},
        "aux_mu_final": {"type": "number", "minimum": 0},
        "x0": {"type": "array", "items": {"type": "number"}},
    },
    "additionalProperties": True,
}

SVM_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["n_samples", "n_features", "objective", "w_l1", "w", "b",
                 "min_margin", "solve"],
    "properties": {
        "n_samples": {"type": "integer", "minimum": 1},
        "n_features": {"type": "integer", "minimum": 1},
        "objective": {"type": "number"},
        "w_l1": {"type": "number", "minimum": 0},
        "w": {"type": "array", "items": {"type": "number"}},
        "b": {"type": "number"},
        "min_margin": {"type": "number"},
        "solve": REPORT_SCHEMA,
    },
    "additionalProperties": True,
}

BENCH_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "array",
    "items": {
        "type": "object",
        "required": list(BENCH_COLUMNS),
        "properties": {
            "problem": {"type": "string"},
            "m": {"type": "integer", "minimum": 1},
            "n": {"type": "integer", "minimum": 1},
            "w": {"type": "integer", "minimum": 0},
            "max_inner": {"type": "integer", "minimum": 0},
            "sum_inner": {"type": "integer", "minimum": 0},
            "outer": {"type": "integer", "minimum": 0},
            "kappa_sk": _NUMBER,
            "kappa_stan": _NUMBER,
            "rel_err": _NUMBER,
            "gap": _NUMBER,
            "seconds": _NUMBER,
        },
        "additionalProperties": False,
    },
}


class UsageError(Exception):
    """Bad flags, flag combinations, or parameter ranges."""


class _IoFailure(Exception):
    """File missing, unreadable, or malformed; carries the original message."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route to exit code 1
        raise UsageError(message)


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=["feasible", "infeasible"],
                        default="infeasible", help="iterate feasibility regime")
    parser.add_argument("--solver", choices=["pcg", "chebyshev", "cg", "direct"],
                        default="pcg",
                        help="inner solver for the normal equations; cg is "
                             "unpreconditioned, pcg/chebyshev are sketched")
    parser.add_argument("--gamma", type=float, default=0.5,
                        help="neighborhood width in (0, 1)")
    parser.add_argument("--sigma", type=float, default=0.5,
                        help="centering parameter in (0, 4/5)")
    parser.add_argument("--zeta", type=float, default=0.5,
                        help="inner-solver contraction target in (0, 1)")
    parser.add_argument("--sketch", choices=["sparse", "gaussian"], default=None,
                        help="sketch family (default sparse)")
    parser.add_argument("--w", default=None, metavar="W",
                        help="sketch width, or 'auto' (default)")
    parser.add_argument("--s", type=int, default=None, metavar="S",
                        help="nonzeros per sketch row (sparse sketch only)")
    parser.add_argument("--tol-cg", type=float, default=1e-5,
                        help="inner residual tolerance")
    parser.add_argument("--tol-outer", type=float, default=1e-9,
                        help="outer tolerance: stop at mu <= tol * max(1, mu0)")
    parser.add_argument("--seed", type=int, default=0, help="RNG stream seed")
    parser.add_argument("--max-outer", type=int, default=200,
                        help="outer iteration budget")
    parser.add_argument("--no-correction", action="store_true",
                        help="skip the exact residual correction vector")
    parser.add_argument("--diag-cond", action="store_true",
                        help="record per-iteration condition numbers (dense, slow)")


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="report file path")
    parser.add_argument("--format", choices=["json", "csv"], default="json",
                        help="report format (csv emits per-iteration rows)")
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp and zero wall-time fields so "
                             "identical runs produce identical bytes")


def _params_from_args(args: argparse.Namespace) -> IpmParams:
    solver = {"cg": "unpreconditioned"}.get(args.solver, args.solver)
    if solver in ("unpreconditioned", "direct"):
        given = [flag for flag, val in
                 (("--sketch", args.sketch), ("--w", args.w), ("--s", args.s))
                 if val is not None]
        if given:
            raise UsageError(f"--solver {args.solver} uses no sketch; "
                             f"drop {', '.join(given)}")
    if args.w in (None, "auto"):
        w = None
    else:
        try:
            w = int(args.w)
        except ValueError as exc:
            raise UsageError(f"--w must be an integer or 'auto', got {args.w!r}") from exc
    params = IpmParams(
        mode=args.mode,
        solver=solver,
        gamma=args.gamma,
        sigma=args.sigma,
        zeta=args.zeta,
        sketch=args.sketch or "sparse",
        w=w,
        s=args.s,
        tol_cg=args.tol_cg,
        tol_outer=args.tol_outer,
        seed=args.seed,
        max_outer=args.max_outer,
        correction=not args.no_correction,
        diag_cond=args.diag_cond,
    )
    try:
        params.validate()
    except (ValueError, InvalidZeta) as exc:
        raise UsageError(str(exc)) from exc
    return params


def _load_problem(path: str):
    try:
        return load_matrix_market(path)
    except (OSError, ParseError, SkipmError, ValueError) as exc:
        raise _IoFailure(f"cannot load problem from {path!r}: {exc}") from exc


def _load_dataset(path: str):
    try:
        return load_libsvm(path)
    except (OSError, ParseError, EmptyDataset, ValueError) as exc:
        raise _IoFailure(f"cannot load dataset from {path!r}: {exc}") from exc


def _jsonify(obj):
    """Make a structure strictly JSON-serializable: numpy scalars/arrays to
    Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _validate_schema(payload, schema) -> None:
    import jsonschema

    jsonschema.validate(payload, schema)


def _dump_json(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


_STEP_CSV_COLUMNS = (
    "k", "mu", "mu_after", "alpha_tilde", "alpha_bar", "inner_iterations",
    "inner_iterations_total", "f_norm0", "f_norm", "v_norm", "v_invariant_rel",
    "v_norm_slack", "v_ok", "v_retries", "rank_retries", "sketch_w",
    "residual_ratio", "mu_identity_error", "clip_count",
    "spectrum_lo", "spectrum_hi", "kappa_sk", "kappa_stan",
)


def _write_step_csv(report: SolveReport, out: str | None) -> None:
    fh = sys.stdout if out is None else open(out, "w", newline="")
    try:
        writer = csv.writer(fh)
        writer.writerow(_STEP_CSV_COLUMNS)
        for rec in report.steps:
            row = rec.to_dict()
            values = []
            for col in _STEP_CSV_COLUMNS:
                val = row.get(col)
                if val is None or (isinstance(val, float) and not math.isfinite(val)):
                    values.append("")
                elif isinstance(val, float):
                    values.append(repr(val))
                else:
                    values.append(str(val))
            writer.writerow(values)
    finally:
        if out is not None:
            fh.close()


def _solve_payload(report: SolveReport, args: argparse.Namespace) -> dict:
    payload = report.to_dict(include_vectors=True)
    w_auto, s_auto = auto_sketch_dims(report.m, report.n, 0.1 / args.max_outer)
    payload["w_auto"] = w_auto
    payload["s_auto"] = s_auto
    if args.no_timestamp:
        payload["wall_seconds"] = 0.0
    else:
        payload["timestamp"] = datetime.now(timezone.utc).isoformat()
    return _jsonify(payload)


def _emit_solve_report(report: SolveReport, args: argparse.Namespace) -> None:
    if args.format == "csv":
        _write_step_csv(report, args.out)
        return
    payload = _solve_payload(report, args)
    _validate_schema(payload, REPORT_SCHEMA)
    _dump_json(payload, args.out)
    if args.out is not None:
        print(f"{report.problem}: {report.mode}/{report.solver} "
              f"outer={report.outer} mu={report.mu_final:.3e} "
              f"objective={report.objective:.12g} -> {args.out}")


def _cmd_solve(args: argparse.Namespace) -> int:
    params = _params_from_args(args)
    lp = _load_problem(args.problem)
    report = solve(lp, params=params)
    _emit_solve_report(report, args)
    return EXIT_OK if report.converged else EXIT_NUMERIC


def _cmd_gen(args: argparse.Namespace) -> int:
    if args.m < 1 or args.n < args.m:
        raise UsageError(f"need 1 <= m <= n, got m={args.m}, n={args.n}")
    if not 0.0 < args.density <= 1.0:
        raise UsageError(f"--density must lie in (0, 1], got {args.density}")
    gen = random_feasible_lp if args.feasible else random_lp
    lp = gen(args.m, args.n, args.density, args.seed)
    try:
        manifest = save_matrix_market(lp, args.out)
    except OSError as exc:
        raise _IoFailure(f"cannot write problem to {args.out!r}: {exc}") from exc
    print(manifest)
    return EXIT_OK


def _cmd_phase1(args: argparse.Namespace) -> int:
    params = _params_from_args(args)
    lp = _load_problem(args.problem)
    x0, aux_report = phase1_point(lp, params)
    residual = float(np.linalg.norm(lp.A @ x0 - lp.b))
    payload = _jsonify({
        "problem": lp.name,
        "m": lp.m,
        "n": lp.n,
        "residual_rel": residual / (1.0 + float(np.linalg.norm(lp.b))),
        "min_x": float(np.min(x0)),
        "aux_outer": aux_report.outer,
        "aux_mu_final": aux_report.mu_final,
        "x0": x0,
    })
    _validate_schema(payload, PHASE1_SCHEMA)
    _dump_json(payload, args.out)
    return EXIT_OK


def _cmd_svm(args: argparse.Namespace) -> int:
    params = _params_from_args(args)
    ds = _load_dataset(args.dataset)
    lp, mapping = svm_to_lp(ds)
    report = solve(lp, params=params)
    w, b = extract_svm_solution(mapping, report.x)
    margins = ds.y * (ds.X @ w + b)
    payload = {
        "n_samples": mapping.m_samples,
        "n_features": mapping.n_features,
        "objective": report.objective,
        "w_l1": float(np.abs(w).sum()),
        "w": w,
        "b": b,
        "min_margin": float(margins.min()),
        "solve": _solve_payload(report, args),
    }
    payload = _jsonify(payload)
    _validate_schema(payload, SVM_SCHEMA)
    _dump_json(payload, args.out)
    return EXIT_OK if report.converged else EXIT_NUMERIC


def _bench_configs(base: IpmParams) -> list[IpmParams]:
    return [
        replace(base, solver="pcg"),
        replace(base, solver="chebyshev"),
        replace(base, solver="unpreconditioned", w=None, s=None),
        replace(base, solver="direct", w=None, s=None),
    ]


def _cmd_bench(args: argparse.Namespace) -> int:
    params = _params_from_args(args)
    if args.problem is not None:
        problems = [_load_problem(args.problem)]
    else:
        problems = synthetic_suite()
    rows = []
    for lp in problems:
        rows.extend(run_comparison(lp, _bench_configs(params), seed=args.seed,
                                   workers=args.workers))
    if args.no_timestamp:
        rows = [replace(row, seconds=0.0) for row in rows]
    header = " ".join(f"{c:>10}" for c in BENCH_COLUMNS)
    print(header)
    for row in rows:
        rec = row.to_dict()
        print(" ".join(
            f"{rec[c]:>10.3g}" if isinstance(rec[c], float) else f"{str(rec[c])[:10]:>10}"
            for c in BENCH_COLUMNS))
    if args.out is not None:
        if args.format == "csv":
            write_csv(rows, args.out)
        else:
            write_json(rows, args.out)
            with open(args.out) as fh:
                _validate_schema(json.load(fh), BENCH_SCHEMA)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skipm", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a saved problem")
    p_solve.add_argument("problem", help="problem directory or manifest path")
    _add_solver_flags(p_solve)
    _add_output_flags(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_gen = sub.add_parser("gen", help="generate a random instance")
    p_gen.add_argument("--m", type=int, required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--density", type=float, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--feasible", action="store_true",
                       help="construct a strictly feasible/bounded instance")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=_cmd_gen)

    p_svm = sub.add_parser("svm", help="solve the l1-SVM LP for a LIBSVM file")
    p_svm.add_argument("dataset", help="LIBSVM-format file")
    _add_solver_flags(p_svm)
    _add_output_flags(p_svm)
    p_svm.set_defaults(func=_cmd_svm)

    p_ph1 = sub.add_parser("phase1", help="find x > 0 with Ax = b")
    p_ph1.add_argument("problem", help="problem directory or manifest path")
    _add_solver_flags(p_ph1)
    _add_output_flags(p_ph1)
    p_ph1.set_defaults(func=_cmd_phase1)

    p_bench = sub.add_parser("bench", help="compare solver configurations")
    p_bench.add_argument("problem", nargs="?", default=None,
                         help="problem path (default: built-in synthetic suite)")
    _add_solver_flags(p_bench)
    _add_output_flags(p_bench)
    p_bench.add_argument("--workers", type=int, default=1,
                         help="parallel benchmark workers")
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        limit = os.environ.get("SKIPM_THREADS")
        if limit is not None:
            try:
                limit_n = int(limit)
            except ValueError as exc:
                raise UsageError(f"SKIPM_THREADS must be an integer, got {limit!r}") from exc
            from threadpoolctl import threadpool_limits
            ctx = threadpool_limits(limits=limit_n)
        else:
            ctx = nullcontext()
        with ctx:
            args = build_parser().parse_args(argv)
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SkipmError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return EXIT_OK if code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
