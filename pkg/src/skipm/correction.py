"""Correction vector v that makes inexact Newton steps exact.

After an inner solve returns dy with infeasibility infeas = A D^2 A' dy - p,
the vector

    v = (x s)^{1/2} . ( W (ADW)^+ infeas )

satisfies A S^{-1} v = ADW (ADW)^+ infeas = infeas exactly whenever ADW has
full row rank (A S^{-1} (XS)^{1/2} = A D elementwise), so substituting v into
the step equations removes the solver error from the primal residual. Its
size is controlled by ||v|| <= sqrt(3 n mu) ||f~|| for iterates in the
neighborhood, with f~ the preconditioned residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonpositivePoint, StaleFactor
from .preconditioning import PreconditionerFactor, apply_pinv_adw
from .sketching import SketchOperator


@dataclass
class CorrectionVector:
    """v plus its recorded diagnostics. invariant_residual is relative (the
    driver scales by ||infeas|| + ||p||); norm_bound_slack is nan until
    check_v_norm runs."""

    v: np.ndarray
    invariant_residual: float
    norm_bound_slack: float = float("nan")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.v))


def compute_v(f: PreconditionerFactor, W: SketchOperator, x: np.ndarray,
              s: np.ndarray, infeas: np.ndarray,
              scale: float | None = None) -> CorrectionVector:
    """Build v from the factored pseudoinverse; O(m w + n s) work.

    The stored invariant residual is ||U diag(sigma) V_hat' u - infeas||
    over `scale` (default ||infeas|| + 1), i.e. the projection error of
    infeas onto range(ADW); the IPM driver re-measures the invariant with
    the actual A and the documented scale ||infeas|| + ||p||."""
    if x.shape != s.shape or x.shape != (W.n,):
        raise DimensionMismatch(f"x/s shapes {x.shape}/{s.shape}, expected ({W.n},)")
    if not (np.all(x > 0) and np.all(s > 0)):
        raise NonpositivePoint("x and s must be strictly positive")
    if f.sketch_tag is not None and f.sketch_tag != W.tag:
        raise StaleFactor(f"factor built from {f.sketch_tag}, got sketch {W.tag}")
    if infeas.shape != (f.m,):
        raise DimensionMismatch(f"infeas has shape {infeas.shape}, expected ({f.m},)")
    u = apply_pinv_adw(f, infeas)
    v = np.sqrt(x * s) * W.matvec(u)
    reconstructed = f.U @ (f.sigma_sqrt * (f.V_hat.T @ u))
    denom = scale if scale is not None else float(np.linalg.norm(infeas)) + 1.0
    if denom <= 0.0:
        denom = 1.0
    inv_res = float(np.linalg.norm(reconstructed - infeas)) / denom
    return CorrectionVector(v=v, invariant_residual=inv_res)


def check_v_norm(cv: CorrectionVector, mu: float, f_norm: float) -> float:
    """Slack of ||v|| <= sqrt(3 n mu) ||f~||; nonnegative when the bound holds.
    Stores the slack on the CorrectionVector."""
    n = cv.v.shape[0]
    slack = float(np.sqrt(3.0 * n * mu) * f_norm - cv.norm)
    cv.norm_bound_slack = slack
    return slack


def check_v_small_enough(cv: CorrectionVector, gamma: float, sigma: float,
                         mu: float) -> bool:
    """Convergence requirement ||v|| <= gamma sigma mu / 4 (inclusive)."""
    return cv.norm <= gamma * sigma * mu / 4.0
