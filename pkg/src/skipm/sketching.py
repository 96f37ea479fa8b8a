"""Randomized sketch operators W used to precondition the IPM normal equations.

Two constructions are provided. The sparse sign embedding places s nonzeros
valued +-1/sqrt(s) in each of the n rows, at s distinct columns drawn
uniformly without replacement. The Gaussian sketch draws N(0,1) entries and
stores them scaled by 1/sqrt(w) so that W W' ~ I in expectation; without the
scaling the fixed spectral band used downstream would not apply.

All draws come from numpy's counter-based Philox generator keyed by the
supplied integer seed, so operators are reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    InvalidDims,
    NonpositiveScaling,
    TooLargeForDiagnostic,
)

DENSE_DIAG_CAP = 1 << 26


@dataclass
class SketchOperator:
    """An n-by-w sketch. For kind "sparse_sign", cols/vals hold the s column
    indices and values of each row; for kind "gaussian", dense holds the
    scaled matrix."""

    kind: str
    n: int
    w: int
    s: int
    seed: int
    cols: np.ndarray | None = None
    vals: np.ndarray | None = None
    dense: np.ndarray | None = None
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def tag(self) -> tuple:
        """Identity of this operator, recorded on preconditioner factors so a
        factor built from a different sketch is detected as stale."""
        return (self.kind, self.n, self.w, self.s, self.seed)

    def as_sparse(self) -> sp.csr_matrix:
        if self.kind == "identity":
            if self._csr is None:
                self._csr = sp.identity(self.n, format="csr")
            return self._csr
        if self.kind != "sparse_sign":
            raise DimensionMismatch("as_sparse only applies to sparse_sign sketches")
        if self._csr is None:
            indptr = np.arange(0, self.n * self.s + 1, self.s)
            # Copies: sort_indices() permutes in place, and the constructor
            # would otherwise alias (and corrupt) the row-major vals buffer.
            csr = sp.csr_matrix(
                (self.vals.ravel().copy(), self.cols.ravel().copy(), indptr),
                shape=(self.n, self.w),
            )
            csr.sort_indices()
            self._csr = csr
        return self._csr

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """W @ u for a length-w vector."""
        if u.shape != (self.w,):
            raise DimensionMismatch(f"u has shape {u.shape}, expected ({self.w},)")
        if self.kind == "identity":
            return u.copy()
        if self.kind == "gaussian":
            return self.dense @ u
        return np.sum(self.vals * u[self.cols], axis=1)


def auto_sketch_dims(m: int, n: int, delta: float) -> tuple[int, int]:
    """Default sketch sizes for an m-row problem at failure probability delta:
    s = max(2, ceil(log2(m/delta))) nonzeros per row and w = 8*m*ceil(log2(m/delta))
    capped at n."""
    lg = max(1, math.ceil(math.log2(m / delta)))
    w = min(n, 8 * m * lg)
    s = min(max(2, lg), w)
    return w, s


def build_sparse_embedding(n: int, w: int, s: int, seed: int) -> SketchOperator:
    """Sparse sign embedding: each row gets s distinct columns in {0..w-1}
    (uniform without replacement) with values +-1/sqrt(s), signs uniform.

    Draw order: column tuples (rejection-resampled per row until distinct,
    or argsort selection when s is a large fraction of w), then signs.
    """
    if not (1 <= s <= w):
        raise InvalidDims(f"need 1 <= s <= w, got s={s}, w={w}")
    if w > n * s:
        raise InvalidDims(f"w={w} exceeds n*s={n * s}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    if 2 * s >= w:
        # Rejection sampling stalls when s ~ w; pick s of w per row via argsort.
        cols = np.argsort(rng.random((n, w)), axis=1)[:, :s].copy()
    else:
        cols = rng.integers(0, w, size=(n, s))
        while True:
            ordered = np.sort(cols, axis=1)
            dup = (np.diff(ordered, axis=1) == 0).any(axis=1)
            if not dup.any():
                break
            cols[dup] = rng.integers(0, w, size=(int(dup.sum()), s))
    signs = rng.integers(0, 2, size=(n, s)) * 2.0 - 1.0
    vals = signs / math.sqrt(s)
    return SketchOperator(kind="sparse_sign", n=n, w=w, s=s, seed=int(seed),
                          cols=cols, vals=vals)


def build_identity_sketch(n: int) -> SketchOperator:
    """Degenerate sketch W = I for w >= n: no dimension reduction is possible,
    the distortion is exactly zero, and the induced preconditioner is the
    exact normal matrix."""
    if n < 1:
        raise InvalidDims(f"n must be positive, got {n}")
    return SketchOperator(kind="identity", n=n, w=n, s=0, seed=0)


def build_gaussian_sketch(n: int, w: int, seed: int) -> SketchOperator:
    """Dense Gaussian sketch: N(0,1) draws stored scaled by 1/sqrt(w).

    Storage is n*w doubles; intended for desk-scale n."""
    if w < 1:
        raise InvalidDims(f"w must be positive, got {w}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    dense = rng.standard_normal((n, w)) / math.sqrt(w)
    return SketchOperator(kind="gaussian", n=n, w=w, s=0, seed=int(seed), dense=dense)


def apply_sketch(A: sp.csr_matrix, d: np.ndarray, W: SketchOperator) -> np.ndarray:
    """Dense m-by-w product A @ diag(d) @ W.

    Cost is O(nnz(A) * s) for the sparse embedding and one sparse-dense
    product for the Gaussian sketch."""
    m, n = A.shape
    if d.shape != (n,):
        raise DimensionMismatch(f"d has shape {d.shape}, expected ({n},)")
    if W.n != n:
        raise DimensionMismatch(f"sketch has {W.n} rows, expected {n}")
    if not np.all(d > 0):
        raise NonpositiveScaling("column scaling d must be strictly positive")
    AD = A.multiply(d[None, :]).tocsr()
    if W.kind == "identity":
        out = AD.toarray()
    elif W.kind == "gaussian":
        out = AD @ W.dense
    else:
        out = (AD @ W.as_sparse()).toarray()
    return np.asarray(out)


def embedding_quality(A: sp.csr_matrix, d: np.ndarray, W: SketchOperator,
                      cap: int = DENSE_DIAG_CAP) -> float:
    """||V' W W' V - I_m||_2 for V the top right-singular block of AD.

    Dense diagnostic: refuses problems with m*n beyond `cap`."""
    m, n = A.shape
    if m * n > cap or n * W.w > cap:
        raise TooLargeForDiagnostic(f"m*n={m * n}, n*w={n * W.w} exceed cap {cap}")
    if not np.all(d > 0):
        raise NonpositiveScaling("column scaling d must be strictly positive")
    AD = A.multiply(d[None, :]).toarray()
    _, _, Vt = np.linalg.svd(AD, full_matrices=False)
    V = Vt.T
    if W.kind == "gaussian":
        G = W.dense.T @ V
    else:
        G = W.as_sparse().T @ V
    M = G.T @ G
    eig = np.linalg.eigvalsh(M)
    return float(np.max(np.abs(eig - 1.0)))
