"""Factored preconditioner Q^{-1/2} built from the sketched matrix ADW.

With the thin SVD ADW = U diag(sigma) V_hat', the sketched normal matrix is
Q = ADW (ADW)' = U diag(sigma^2) U', so Q^{-1/2} = U diag(1/sigma) U' and the
pseudoinverse (ADW)^+ = V_hat diag(1/sigma) U'. Both are applied in factored
form at O(m^2) (plus O(m w) for the pseudoinverse), never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import RankDeficient, TooLargeForDiagnostic
from .sketching import DENSE_DIAG_CAP

RANK_TOL = 1e-12


@dataclass
class PreconditionerFactor:
    """Thin-SVD factor of ADW: U is m-by-m orthonormal, sigma_sqrt holds the
    singular values of ADW (so Q's eigenvalues are sigma_sqrt**2), V_hat is
    w-by-m with orthonormal columns. sketch_tag records which sketch built it."""

    U: np.ndarray
    sigma_sqrt: np.ndarray
    V_hat: np.ndarray
    sketch_tag: tuple | None = None

    @property
    def m(self) -> int:
        return self.U.shape[0]


def build_preconditioner(ADW: np.ndarray, rank_tol: float = RANK_TOL,
                         sketch_tag: tuple | None = None) -> PreconditionerFactor:
    """Factor the dense m-by-w product ADW; raises RankDeficient when the
    singular value ratio sigma_min/sigma_max falls below rank_tol."""
    ADW = np.asarray(ADW, dtype=np.float64)
    m, w = ADW.shape
    if w < m:
        raise RankDeficient(f"sketch width {w} below row count {m}")
    U, sig, Vt = np.linalg.svd(ADW, full_matrices=False)
    if sig[0] <= 0.0 or sig[-1] / sig[0] < rank_tol:
        raise RankDeficient(
            f"ADW numerically rank deficient: sigma ratio {sig[-1] / max(sig[0], 1e-300):.3e}"
        )
    return PreconditionerFactor(U=U, sigma_sqrt=sig, V_hat=Vt.T, sketch_tag=sketch_tag)


def apply_inv_sqrt(f: PreconditionerFactor, r: np.ndarray) -> np.ndarray:
    """Q^{-1/2} r = U diag(1/sigma) U' r."""
    return f.U @ ((f.U.T @ r) / f.sigma_sqrt)


def apply_inv(f: PreconditionerFactor, r: np.ndarray) -> np.ndarray:
    """Q^{-1} r = U diag(1/sigma^2) U' r."""
    return f.U @ ((f.U.T @ r) / f.sigma_sqrt**2)


def apply_pinv_adw(f: PreconditionerFactor, r: np.ndarray) -> np.ndarray:
    """(ADW)^+ r = V_hat diag(1/sigma) U' r, a length-w vector."""
    return f.V_hat @ ((f.U.T @ r) / f.sigma_sqrt)


def spectrum_bounds(f: PreconditionerFactor, A: sp.csr_matrix, d: np.ndarray,
                    cap: int = DENSE_DIAG_CAP) -> tuple[float, float]:
    """Extreme squared singular values of Q^{-1/2} A D.

    When the sketch certifies the subspace embedding at distortion zeta/2,
    these land in [2/(2+zeta), 2/(2-zeta)]. Dense diagnostic with an m*n cap."""
    m, n = A.shape
    if m * n > cap:
        raise TooLargeForDiagnostic(f"m*n={m * n} exceeds cap {cap}")
    AD = A.multiply(d[None, :]).toarray()
    B = f.U @ ((f.U.T @ AD) / f.sigma_sqrt[:, None])
    svals = np.linalg.svd(B, compute_uv=False)
    return float(svals[-1] ** 2), float(svals[0] ** 2)
