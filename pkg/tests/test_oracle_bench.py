"""Reference oracles and the benchmark harness."""

import csv
import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from skipm.errors import (
    DimensionMismatch,
    Infeasible,
    Singular,
    TooLarge,
    Unbounded,
)
from skipm.ipm_core import IpmParams, solve
from skipm.lp_model import (
    SvmDataset,
    make_lp,
    random_feasible_lp,
    random_lp,
    svm_to_lp,
)
from skipm.oracle_bench import (
    BENCH_COLUMNS,
    BenchRow,
    bench_row_from_report,
    condition_number,
    reference_simplex,
    run_comparison,
    synthetic_suite,
    write_csv,
    write_json,
)
from skipm.preconditioning import build_preconditioner
from skipm.sketching import (
    apply_sketch,
    auto_sketch_dims,
    build_sparse_embedding,
    embedding_quality,
)


def assert_rows_match(got, want):
    # Dataclass equality is False whenever a kappa field is NaN, so compare
    # field by field treating NaN == NaN (and still ignoring seconds).
    assert len(got) == len(want)
    for a, b in zip(got, want):
        da, db = a.to_dict(), b.to_dict()
        for key in BENCH_COLUMNS:
            if key == "seconds":
                continue
            va, vb = da[key], db[key]
            if isinstance(va, float) and math.isnan(va):
                assert isinstance(vb, float) and math.isnan(vb), key
            else:
                assert va == vb, key


def make_row(**overrides):
    base = dict(problem="p", m=2, n=4, w=4, max_inner=3, sum_inner=9, outer=3,
                kappa_sk=1.2, kappa_stan=10.0, rel_err=1e-8, gap=1e-10,
                seconds=0.5)
    base.update(overrides)
    return BenchRow(**base)


class TestReferenceSimplex:
    def test_unit_problem(self):
        lp = make_lp(sp.csr_matrix(np.array([[1.0]])), np.array([1.0]),
                     np.array([2.5]), name="unit")
        x_star, obj = reference_simplex(lp)
        assert np.allclose(x_star, [1.0], atol=1e-12)
        assert abs(obj - 2.5) <= 1e-12

    def test_two_point_svm_objective(self):
        ds = SvmDataset(X=np.array([[1.0], [-1.0]]), y=np.array([1.0, -1.0]))
        lp, _ = svm_to_lp(ds)
        _, obj = reference_simplex(lp)
        assert abs(obj - 1.0) <= 1e-9

    def test_redundant_row_handled(self):
        A = sp.csr_matrix(np.array([[1.0, 1.0], [2.0, 2.0]]))
        lp = make_lp(A, np.array([2.0, 4.0]), np.array([1.0, 2.0]), name="red")
        x_star, obj = reference_simplex(lp)
        assert abs(obj - 2.0) <= 1e-9
        assert np.allclose(lp.A @ x_star, lp.b, atol=1e-9)

    def test_infeasible(self):
        lp = random_lp(5, 20, 0.3, 7)
        with pytest.raises(Infeasible):
            reference_simplex(lp)

    def test_unbounded(self):
        lp = make_lp(sp.csr_matrix(np.array([[1.0, -1.0]])), np.array([1.0]),
                     np.array([-1.0, 0.0]), name="ray")
        with pytest.raises(Unbounded):
            reference_simplex(lp)

    def test_too_large(self):
        lp = random_lp(5, 501, 0.1, 0)
        with pytest.raises(TooLarge):
            reference_simplex(lp)

    def test_matches_external_solver(self):
        # Independent validation of the oracle itself against HiGHS.
        for seed in (1, 2, 3):
            lp = random_feasible_lp(8, 40, 0.4, seed)
            _, obj = reference_simplex(lp)
            res = linprog(lp.c, A_eq=lp.A.toarray(), b_eq=lp.b,
                          bounds=(0, None), method="highs")
            assert res.status == 0
            assert abs(obj - res.fun) <= 1e-9 * max(1.0, abs(res.fun))

    def test_agrees_with_ipm_on_twenty_lps(self):
        for i in range(20):
            lp = random_feasible_lp(6 + (i % 5), 30 + 4 * i, 0.4, 400 + i)
            rep = solve(lp, params=IpmParams(seed=0))
            _, obj = reference_simplex(lp)
            assert rep.converged
            assert abs(rep.objective - obj) <= 1e-6 * max(1.0, abs(obj))


class TestConditionNumber:
    def test_identity(self):
        assert abs(condition_number(np.eye(3)) - 1.0) <= 1e-12

    def test_diagonal(self):
        assert abs(condition_number(np.diag([4.0, 1.0])) - 4.0) <= 1e-12

    def test_not_square(self):
        with pytest.raises(DimensionMismatch):
            condition_number(np.ones((2, 3)))

    def test_not_symmetric(self):
        with pytest.raises(ValueError):
            condition_number(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_singular(self):
        with pytest.raises(Singular):
            condition_number(np.diag([1.0, 0.0]))

    def test_too_large(self):
        with pytest.raises(TooLarge):
            condition_number(np.eye(5), cap=4)

    def test_certified_preconditioned_matrix_within_band(self):
        # Under a passing quality event at zeta=1/2, the preconditioned
        # normal matrix has condition number at most 5/3 (+5% slack).
        m, n = 8, 1200
        w, s = auto_sketch_dims(m, n, 0.1 / 200)
        checked = 0
        for trial in range(10):
            lp = random_lp(m, n, 0.3, 800 + trial)
            rng = np.random.Generator(np.random.Philox(810 + trial))
            d = 10.0 ** rng.uniform(-4, 0, size=n)
            W = build_sparse_embedding(n, w, s, seed=820 + trial)
            if embedding_quality(lp.A, d, W) > 0.25:
                continue
            f = build_preconditioner(apply_sketch(lp.A, d, W), sketch_tag=W.tag)
            inv_sqrt = f.U @ np.diag(1.0 / f.sigma_sqrt) @ f.U.T
            AD = lp.A.toarray() * d[None, :]
            M = inv_sqrt @ (AD @ AD.T) @ inv_sqrt
            M = 0.5 * (M + M.T)
            assert condition_number(M) <= (5.0 / 3.0) * 1.05
            checked += 1
        assert checked >= 8


class TestBenchRow:
    def test_equality_ignores_seconds(self):
        assert make_row(seconds=0.1) == make_row(seconds=99.0)

    def test_inequality_on_counts(self):
        assert make_row(outer=3) != make_row(outer=4)

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            make_row(sum_inner=-1)

    def test_kappa_below_one_rejected(self):
        with pytest.raises(ValueError):
            make_row(kappa_sk=0.5)

    def test_nan_kappa_allowed(self):
        row = make_row(kappa_sk=float("nan"), kappa_stan=float("nan"))
        assert math.isnan(row.kappa_sk)

    def test_to_dict_column_order(self):
        assert tuple(make_row().to_dict().keys()) == BENCH_COLUMNS


class TestBenchRowFromReport:
    def test_aggregates_and_rel_err(self):
        lp = random_feasible_lp(5, 30, 0.4, 2)
        rep = solve(lp, params=IpmParams(seed=0, diag_cond=True))
        x_star, _ = reference_simplex(lp)
        row = bench_row_from_report(rep, x_star)
        assert (row.m, row.n) == (5, 30)
        assert row.outer == rep.outer and row.sum_inner == rep.sum_inner
        assert row.max_inner == max(r.inner_iterations for r in rep.steps)
        assert row.w == max(r.sketch_w for r in rep.steps)
        assert row.rel_err <= 1e-5
        assert row.kappa_sk >= 1.0 and row.kappa_stan >= 1.0

    def test_without_reference(self):
        lp = random_feasible_lp(5, 30, 0.4, 2)
        rep = solve(lp, params=IpmParams(seed=0))
        row = bench_row_from_report(rep)
        assert math.isnan(row.rel_err)
        assert math.isnan(row.kappa_sk)  # diagnostics were off


class TestRunComparison:
    def test_deterministic_rows(self):
        lp = random_feasible_lp(5, 30, 0.4, 2)
        a = run_comparison(lp, [IpmParams(), IpmParams(solver="direct")], seed=1)
        b = run_comparison(lp, [IpmParams(), IpmParams(solver="direct")], seed=1)
        assert_rows_match(a, b)

    def test_ordering_by_config_index(self):
        lp = random_feasible_lp(5, 30, 0.4, 2)
        wide = lp.n + 7
        rows = run_comparison(lp, [IpmParams(), IpmParams(w=wide)], seed=0)
        assert rows[1].w == wide and rows[0].w != wide

    def test_workers_match_serial(self):
        lp = random_feasible_lp(5, 30, 0.4, 2)
        configs = [IpmParams(), IpmParams(solver="chebyshev"), IpmParams(solver="direct")]
        serial = run_comparison(lp, configs, seed=0, workers=1)
        parallel = run_comparison(lp, configs, seed=0, workers=3)
        assert_rows_match(serial, parallel)

    def test_sketched_pcg_beats_unpreconditioned_when_ill_conditioned(self):
        # Row scaling spanning two decades keeps the LP feasible but makes
        # the unscaled normal equations grind for plain CG.
        base = random_feasible_lp(25, 300, 0.3, 21)
        r = 100.0 ** (-np.arange(25) / 24)
        lp = make_lp(sp.csr_matrix(sp.diags(r) @ base.A), r * base.b, base.c,
                     name="ill")
        rows = run_comparison(
            lp, [IpmParams(solver="pcg"), IpmParams(solver="unpreconditioned")],
            seed=0)
        assert rows[0].max_inner * 5 <= rows[1].max_inner
        assert rows[0].rel_err <= 1e-6 and rows[1].rel_err <= 1e-6


class TestSolverAgreementAndCorrection:
    def test_sketched_vs_direct_objective(self):
        lp = synthetic_suite()[0]
        pcg_rep = solve(lp, params=IpmParams(solver="pcg", seed=0))
        direct_rep = solve(lp, params=IpmParams(solver="direct", seed=0))
        scale = max(1.0, abs(direct_rep.objective))
        assert abs(pcg_rep.objective - direct_rep.objective) <= 1e-6 * scale

    def test_correction_toggle_outer_counts_close(self):
        for lp in synthetic_suite()[:2]:
            on = solve(lp, params=IpmParams(seed=0))
            off = solve(lp, params=IpmParams(seed=0, correction=False))
            assert on.converged and off.converged
            assert abs(on.outer - off.outer) <= 2


class TestSyntheticSuite:
    def test_shapes_and_determinism(self):
        suite = synthetic_suite()
        assert [(lp.m, lp.n) for lp in suite] == \
            [(10, 60), (12, 80), (15, 120), (20, 200), (25, 300)]
        again = synthetic_suite()
        for a, b in zip(suite, again):
            assert (a.A != b.A).nnz == 0
            assert np.array_equal(a.b, b.b) and np.array_equal(a.c, b.c)


class TestWriters:
    def _rows(self):
        return [make_row(), make_row(problem="q", kappa_sk=float("nan"),
                                     kappa_stan=float("nan"), rel_err=float("nan"))]

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = self._rows()
        write_csv(rows, str(path))
        with open(path, newline="") as fh:
            got = list(csv.reader(fh))
        assert got[0] == list(BENCH_COLUMNS)
        assert len(got) == 3
        # Floats are written via repr, so they round-trip exactly.
        assert float(got[1][BENCH_COLUMNS.index("gap")]) == rows[0].gap

    def test_json_nan_becomes_null(self, tmp_path):
        path = tmp_path / "rows.json"
        write_json(self._rows(), str(path))
        payload = json.loads(path.read_text())
        assert len(payload) == 2
        assert payload[0]["problem"] == "p"
        assert payload[1]["kappa_sk"] is None
        assert payload[0]["outer"] == 3
