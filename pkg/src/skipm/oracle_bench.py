"""Reference oracles and the benchmark harness.

reference_simplex is a small dense two-phase simplex (Bland's rule) used as
an independent check on interior-point results. condition_number computes
sigma_max/sigma_min of a dense symmetric matrix. run_comparison runs several
solver configurations on one problem with identical starts and tabulates
inner/outer iteration counts, condition numbers, and accuracy against the
simplex reference.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    Infeasible,
    MaxIterations,
    Singular,
    TooLarge,
    Unbounded,
)
from .ipm_core import IpmParams, SolveReport, solve
from .lp_model import LinearProgram, random_feasible_lp

# reference_simplex is a dense tableau method; refuse sizes where the O(m n)
# per-pivot cost and pivot-count growth stop being a trustworthy oracle.
SIMPLEX_MAX_M = 50
SIMPLEX_MAX_N = 500
CONDITION_MAX_DIM = 2048

_PIVOT_TOL = 1e-9
_MAX_PIVOTS = 200_000

BENCH_COLUMNS = ("problem", "m", "n", "w", "max_inner", "sum_inner", "outer",
                 "kappa_sk", "kappa_stan", "rel_err", "gap", "seconds")


@dataclass
class BenchRow:
    """One benchmark result line (one solver configuration on one problem).

    seconds is excluded from equality: two runs of the same configuration
    and seed produce equal rows even though wall time differs.
    """

    problem: str
    m: int
    n: int
    w: int
    max_inner: int
    sum_inner: int
    outer: int
    kappa_sk: float
    kappa_stan: float
    rel_err: float
    gap: float
    seconds: float = field(compare=False)

    def __post_init__(self) -> None:
        for name in ("m", "n", "w", "max_inner", "sum_inner", "outer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("kappa_sk", "kappa_stan"):
            val = getattr(self, name)
            if not math.isnan(val) and val < 1.0:
                raise ValueError(f"{name} = {val} below 1")

    def to_dict(self) -> dict:
        return {col: getattr(self, col) for col in BENCH_COLUMNS}


def _bland(T: np.ndarray, basis: list[int], cost: np.ndarray, n_enter: int) -> str:
    """Primal simplex pivoting on tableau T = B^{-1}[A | b] in place.

    Entering column: the lowest index among columns [0, n_enter) with
    negative reduced cost; leaving row: among the minimum-ratio rows, the one
    whose basic variable has the lowest index (Bland's rule, anti-cycling).
    Returns "optimal" or "unbounded".
    """
    cost_scale = 1.0 + float(np.max(np.abs(cost[:n_enter]), initial=0.0))
    for _ in range(_MAX_PIVOTS):
        reduced = cost[:n_enter] - cost[basis] @ T[:, :n_enter]
        entering = np.where(reduced < -_PIVOT_TOL * cost_scale)[0]
        if entering.size == 0:
            return "optimal"
        j = int(entering[0])
        col = T[:, j]
        rows = np.where(col > _PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        r_min = float(ratios.min())
        ties = rows[ratios <= r_min + _PIVOT_TOL * (1.0 + abs(r_min))]
        r = int(min(ties, key=lambda i: basis[i]))
        pivot_row = T[r] / T[r, j]
        T -= np.outer(T[:, j], pivot_row)
        T[r] = pivot_row
        basis[r] = j
    raise MaxIterations(f"simplex exceeded {_MAX_PIVOTS} pivots")


def reference_simplex(lp: LinearProgram) -> tuple[np.ndarray, float]:
    """Dense two-phase primal simplex with Bland's rule.

    Returns an optimal basic solution (x_star, c'x_star). Intended as an
    independent reference for small problems; raises TooLarge beyond
    m <= 50, n <= 500, Infeasible when phase 1 cannot zero the artificials,
    and Unbounded when phase 2 finds a descent ray.
    """
    m, n = lp.m, lp.n
    if m > SIMPLEX_MAX_M or n > SIMPLEX_MAX_N:
        raise TooLarge(f"reference simplex capped at {SIMPLEX_MAX_M}x{SIMPLEX_MAX_N},"
                       f" got {m}x{n}")
    A = lp.A.toarray().astype(float, copy=True)
    b = lp.b.astype(float, copy=True)
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Phase 1: minimize the sum of artificial variables z in [A I][x; z] = b.
    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    _bland(T, basis, cost1, n + m)
    artificial_mass = float(cost1[basis] @ T[:, -1])
    if artificial_mass > 1e-8 * (1.0 + float(np.abs(b).sum())):
        raise Infeasible(f"phase-1 optimum {artificial_mass:.3e} is positive")

    # Drive leftover (degenerate, value-zero) artificials out of the basis;
    # a row with no eligible original pivot is redundant and is dropped.
    drop: list[int] = []
    for i in range(len(basis)):
        if basis[i] < n:
            continue
        row = T[i, :n]
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) <= _PIVOT_TOL:
            drop.append(i)
            continue
        pivot_row = T[i] / T[i, j]
        T -= np.outer(T[:, j], pivot_row)
        T[i] = pivot_row
        basis[i] = j
    if drop:
        keep = [i for i in range(len(basis)) if i not in set(drop)]
        T = T[keep]
        basis = [basis[i] for i in keep]

    # Phase 2 over the original columns only (the artificials are nonbasic
    # at zero and barred from entering).
    cost2 = np.concatenate([lp.c, np.zeros(m)])
    status = _bland(T, basis, cost2, n)
    if status == "unbounded":
        raise Unbounded("phase 2 found a ray of unbounded descent")
    x_full = np.zeros(n + m)
    x_full[basis] = T[:, -1]
    x_star = x_full[:n]
    return x_star, float(lp.c @ x_star)


def condition_number(M: np.ndarray, cap: int = CONDITION_MAX_DIM) -> float:
    """sigma_max/sigma_min of a dense symmetric matrix via full SVD.

    Raises TooLarge beyond `cap` rows, Singular when sigma_min is numerically
    zero (below sigma_max times machine precision scaled by the dimension).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"square matrix required, got {M.shape}")
    if M.shape[0] > cap:
        raise TooLarge(f"dense condition number capped at {cap}, got {M.shape[0]}")
    if not np.allclose(M, M.T, rtol=1e-8, atol=1e-8 * (1.0 + float(np.abs(M).max()))):
        raise ValueError("matrix must be symmetric")
    svals = np.linalg.svd(M, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] <= svals[0] * np.finfo(float).eps * M.shape[0]:
        raise Singular("smallest singular value is numerically zero")
    return float(svals[0] / svals[-1])


def _nanmax(values: list[float]) -> float:
    finite = [v for v in values if v is not None and not math.isnan(v)]
    return max(finite) if finite else float("nan")


def bench_row_from_report(report: SolveReport, x_star: np.ndarray | None = None
                          ) -> BenchRow:
    """Condense a solve report (plus an optional reference solution) into a
    benchmark row: peak inner-iteration count, peak condition numbers across
    outer iterations, and relative error ||x_hat - x_star|| / ||x_star||."""
    rel_err = float("nan")
    if x_star is not None:
        denom = float(np.linalg.norm(x_star))
        rel_err = float(np.linalg.norm(report.x - x_star)) / max(denom, 1e-300)
    return BenchRow(
        problem=report.problem,
        m=report.m,
        n=report.n,
        w=max((rec.sketch_w for rec in report.steps), default=0),
        max_inner=report.max_inner,
        sum_inner=report.sum_inner,
        outer=report.outer,
        kappa_sk=_nanmax([rec.kappa_sk for rec in report.steps]),
        kappa_stan=_nanmax([rec.kappa_stan for rec in report.steps]),
        rel_err=rel_err,
        gap=report.gap,
        seconds=report.wall_seconds,
    )


def run_comparison(lp: LinearProgram, configs: list[IpmParams], seed: int = 0,
                   workers: int = 1) -> list[BenchRow]:
    """Run each configuration on `lp` with its seed pinned to `seed` (so all
    runs share the same start and RNG stream) and return one BenchRow per
    configuration, ordered by config index regardless of completion order.

    Relative error is measured against reference_simplex when the problem is
    within the dense-oracle size cap. Configurations may run in parallel
    (workers > 1); each run owns its RNG stream.
    """
    x_star = None
    if lp.m <= SIMPLEX_MAX_M and lp.n <= SIMPLEX_MAX_N:
        x_star, _ = reference_simplex(lp)

    def run_one(conf: IpmParams) -> BenchRow:
        report = solve(lp, params=replace(conf, seed=seed))
        return bench_row_from_report(report, x_star)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_one, configs))
    return [run_one(conf) for conf in configs]


def synthetic_suite() -> list[LinearProgram]:
    """Five random strictly-feasible instances of increasing size used by the
    correction-on/off and solver-agreement benchmarks."""
    shapes = [
        (10, 60, 0.40, 101),
        (12, 80, 0.40, 102),
        (15, 120, 0.35, 103),
        (20, 200, 0.30, 104),
        (25, 300, 0.30, 105),
    ]
    return [random_feasible_lp(m, n, density, seed) for m, n, density, seed in shapes]


def _csv_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: list[BenchRow], path: str) -> None:
    """Write benchmark rows as CSV with the fixed column set."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for row in rows:
            record = row.to_dict()
            writer.writerow([_csv_value(record[col]) for col in BENCH_COLUMNS])


def write_json(rows: list[BenchRow], path: str) -> None:
    """Write benchmark rows as a JSON array (NaN encoded as null)."""
    payload = []
    for row in rows:
        record = row.to_dict()
        for key, val in record.items():
            if isinstance(val, float) and math.isnan(val):
                record[key] = None
        payload.append(record)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
