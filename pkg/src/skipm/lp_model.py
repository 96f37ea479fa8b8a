"""Standard-form LP containers, generators, and problem IO.

A problem is min c'x subject to Ax = b, x >= 0 with A stored as CSR
(m-by-n, n >= m, full row rank assumed downstream). All randomness is
drawn from numpy's counter-based Philox generator keyed by an explicit
integer seed, so every generator below is bit-reproducible across
platforms given the same seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import (
    DegenerateRow,
    DimensionMismatch,
    EmptyDataset,
    InvalidDensity,
    ParseError,
    ZeroRow,
)


def _philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class LinearProgram:
    """min c'x s.t. Ax = b, x >= 0 with A in CSR form."""

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    name: str = "lp"

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


@dataclass
class SvmDataset:
    """Binary classification data: X is m-by-n, y has entries in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray


@dataclass
class SvmLpMapping:
    """Column layout of the LP produced by svm_to_lp.

    Variables are ordered [w+ (n), w- (n), b+, b-, xi (m)], all nonnegative;
    the hyperplane is w = w+ - w-, offset b = b+ - b-.
    """

    n_features: int
    m_samples: int

    @property
    def n_lp(self) -> int:
        return 2 * self.n_features + 2 + self.m_samples


def make_lp(A, b, c, name: str = "lp") -> LinearProgram:
    """Build a LinearProgram with canonical CSR storage and validate it."""
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sort_indices()
    lp = LinearProgram(A, np.asarray(b, dtype=np.float64),
                       np.asarray(c, dtype=np.float64), name)
    validate(lp)
    return lp


def validate(lp: LinearProgram) -> None:
    """Check shapes, wideness (n >= m), finiteness, and absence of zero rows."""
    m, n = lp.A.shape
    if m < 1:
        raise DimensionMismatch("m must be at least 1")
    if n < m:
        raise DimensionMismatch(f"wide problem required: n={n} < m={m}")
    if lp.b.shape != (m,):
        raise DimensionMismatch(f"b has shape {lp.b.shape}, expected ({m},)")
    if lp.c.shape != (n,):
        raise DimensionMismatch(f"c has shape {lp.c.shape}, expected ({n},)")
    if not (np.all(np.isfinite(lp.b)) and np.all(np.isfinite(lp.c))
            and np.all(np.isfinite(lp.A.data))):
        raise ValueError("problem data contains nonfinite entries")
    # Rows with only explicit zeros count as zero rows.
    row_max = np.zeros(m)
    if lp.A.nnz:
        np.maximum.at(row_max, _csr_row_index(lp.A), np.abs(lp.A.data))
    zero = np.where(row_max == 0.0)[0]
    if zero.size:
        raise ZeroRow(int(zero[0]))


def _csr_row_index(A: sp.csr_matrix) -> np.ndarray:
    counts = np.diff(A.indptr)
    return np.repeat(np.arange(A.shape[0]), counts)


def random_lp(m: int, n: int, density: float, seed: int) -> LinearProgram:
    """Random instance: a_ij ~ U(0,1) kept with probability `density`,
    an extra U(0,1) added on the main diagonal, b = A x0 + 0.1 z with
    x0, z ~ N(0,1), and c ~ N(0,1).

    Draw order (fixed for reproducibility): fill mask, fill values,
    diagonal boost, x0, z, c.
    """
    if not 0.0 < density <= 1.0:
        raise InvalidDensity(f"density {density} outside (0, 1]")
    if n < m:
        raise DimensionMismatch(f"wide problem required: n={n} < m={m}")
    rng = _philox(seed)
    mask = rng.random((m, n)) < density
    vals = rng.random((m, n))
    A = np.where(mask, vals, 0.0)
    k = min(m, n)
    A[np.arange(k), np.arange(k)] += rng.random(k)
    x0 = rng.standard_normal(n)
    z = rng.standard_normal(m)
    b = A @ x0 + 0.1 * z
    c = rng.standard_normal(n)
    return make_lp(A, b, c, name=f"random_lp_{m}x{n}_d{density}_s{seed}")


def random_feasible_lp(m: int, n: int, density: float, seed: int) -> LinearProgram:
    """Random instance with strictly feasible primal and dual by construction.

    A follows the random_lp recipe; b = A x_feas with x_feas in [0.5, 1.5],
    and c = A'y0 + u with u in [0.1, 1.1], so x_feas is strictly primal
    feasible and (y0, u) strictly dual feasible. Such instances are solvable
    with a finite optimum, unlike raw random_lp draws whose sign-indefinite
    b makes them infeasible against A >= 0 almost surely.
    """
    if not 0.0 < density <= 1.0:
        raise InvalidDensity(f"density {density} outside (0, 1]")
    rng = _philox(seed)
    mask = rng.random((m, n)) < density
    vals = rng.random((m, n))
    A = np.where(mask, vals, 0.0)
    k = min(m, n)
    A[np.arange(k), np.arange(k)] += rng.random(k)
    x_feas = rng.random(n) + 0.5
    b = A @ x_feas
    y0 = rng.standard_normal(m)
    c = A.T @ y0 + rng.random(n) + 0.1
    return make_lp(A, b, c, name=f"random_feasible_lp_{m}x{n}_d{density}_s{seed}")


def svm_to_lp(ds: SvmDataset) -> tuple[LinearProgram, SvmLpMapping]:
    """Standard-form LP for the hard-margin l1-SVM.

    min ||w||_1 s.t. y_i (w'x_i + b) >= 1 becomes, with w = w+ - w-,
    b = b+ - b-, and surplus variables xi >= 0::

        min 1'(w+ + w-)
        s.t. y_i x_i'(w+ - w-) + y_i (b+ - b-) - xi_i = 1

    giving an m-by-(2n + 2 + m) constraint matrix.
    """
    X = np.asarray(ds.X, dtype=np.float64)
    y = np.asarray(ds.y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyDataset(f"X has shape {X.shape}")
    m, n = X.shape
    if y.shape != (m,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({m},)")
    if not np.all(np.abs(y) == 1.0):
        raise ParseError("labels must be -1 or +1")
    YX = y[:, None] * X
    A = sp.hstack(
        [sp.csr_matrix(YX), sp.csr_matrix(-YX),
         sp.csr_matrix(y[:, None]), sp.csr_matrix(-y[:, None]),
         -sp.identity(m, format="csr")],
        format="csr",
    )
    b = np.ones(m)
    c = np.concatenate([np.ones(2 * n), np.zeros(2 + m)])
    lp = make_lp(A, b, c, name=f"svm_{m}x{n}")
    return lp, SvmLpMapping(n_features=n, m_samples=m)


def extract_svm_solution(mapping: SvmLpMapping, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Recover (w, b) from an LP solution vector laid out per SvmLpMapping."""
    n = mapping.n_features
    if x.shape != (mapping.n_lp,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({mapping.n_lp},)")
    w = x[:n] - x[n:2 * n]
    b = float(x[2 * n] - x[2 * n + 1])
    return w, b


def phase1_lp(lp: LinearProgram):
    """Phase-1 auxiliary problem min 1'z s.t. Ax + Iz = b, x, z >= 0.

    Rows with b_i < 0 are sign-flipped first so b > 0 throughout; a row with
    b_i == 0 leaves no room for an interior slack and is rejected. The primal
    start is x = eps*1, z = b - eps*A1 with eps = min_i b_i / (2 max_i (A1)_i)
    halved until z > 0. The returned dual start (y = 0, s = c_aux + 1 floored
    at 1) is strictly positive but not dual feasible in general, so the aux
    problem is meant for the infeasible-start solver.
    """
    from .ipm_core import make_iterate

    sign = np.where(lp.b < 0, -1.0, 1.0)
    b = sign * lp.b
    zero = np.where(b == 0.0)[0]
    if zero.size:
        raise DegenerateRow(int(zero[0]))
    A_f = sp.csr_matrix(sp.diags(sign) @ lp.A)
    m, n = A_f.shape
    A_aux = sp.hstack([A_f, sp.identity(m, format="csr")], format="csr")
    c_aux = np.concatenate([np.zeros(n), np.ones(m)])
    aux = make_lp(A_aux, b, c_aux, name=lp.name + "_phase1")

    row_sums = np.asarray(A_f @ np.ones(n))
    top = row_sums.max()
    eps = float(b.min() / (2.0 * top)) if top > 0 else 1.0
    z = b - eps * row_sums
    while not np.all(z > 0):
        eps *= 0.5
        z = b - eps * row_sums
    x = np.concatenate([np.full(n, eps), z])
    y = np.zeros(m)
    s = np.maximum(c_aux + 1.0, 1.0)
    return aux, make_iterate(aux, x, y, s)


def save_matrix_market(lp: LinearProgram, directory: str) -> str:
    """Write A.mtx, b.txt, c.txt and a problem.json manifest; returns the
    manifest path. Values round-trip bit-identically through load_matrix_market.
    """
    os.makedirs(directory, exist_ok=True)
    scipy.io.mmwrite(os.path.join(directory, "A.mtx"), lp.A, precision=17)
    for stem, vec in (("b", lp.b), ("c", lp.c)):
        with open(os.path.join(directory, stem + ".txt"), "w") as fh:
            fh.write("\n".join(repr(float(v)) for v in vec))
            fh.write("\n")
    manifest = {
        "name": lp.name,
        "A": "A.mtx",
        "b": "b.txt",
        "c": "c.txt",
        "m": lp.m,
        "n": lp.n,
    }
    path = os.path.join(directory, "problem.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_matrix_market(path: str) -> LinearProgram:
    """Load a problem from a problem.json manifest (or its directory)."""
    if os.path.isdir(path):
        path = os.path.join(path, "problem.json")
    with open(path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad manifest {path}: {exc}") from exc
    base = os.path.dirname(path)
    try:
        A = scipy.io.mmread(os.path.join(base, manifest["A"]))
        b = _read_vector(os.path.join(base, manifest["b"]))
        c = _read_vector(os.path.join(base, manifest["c"]))
        name = manifest.get("name", "lp")
    except KeyError as exc:
        raise ParseError(f"manifest {path} missing key {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"bad matrix file referenced by {path}: {exc}") from exc
    return make_lp(A, b, c, name=name)


def _read_vector(path: str) -> np.ndarray:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        return np.array([float(ln) for ln in lines])
    except ValueError as exc:
        raise ParseError(f"bad vector file {path}: {exc}") from exc


def load_libsvm(path: str) -> SvmDataset:
    """Parse LIBSVM-format lines "label idx:val ..." with 1-based indices.

    Labels must be -1 or +1; feature count is the largest index seen.
    """
    labels: list[float] = []
    rows: list[dict[int, float]] = []
    n = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                lab = float(parts[0])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad label {parts[0]!r}") from exc
            if lab not in (-1.0, 1.0):
                raise ParseError(f"{path}:{lineno}: label must be -1 or +1, got {lab}")
            feats: dict[int, float] = {}
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad feature {tok!r}") from exc
                if idx < 1:
                    raise ParseError(f"{path}:{lineno}: index {idx} not 1-based")
                feats[idx - 1] = val
                n = max(n, idx)
            labels.append(lab)
            rows.append(feats)
    if not rows or n == 0:
        raise EmptyDataset(f"{path} holds no samples with features")
    X = np.zeros((len(rows), n))
    for i, feats in enumerate(rows):
        for j, v in feats.items():
            X[i, j] = v
    return SvmDataset(X=X, y=np.array(labels))
