"""Inner solvers for the normal equations A D^2 A' dy = p.

pcg and chebyshev run on the left-preconditioned system with Q^{-1} applied
in factored form; their iterates coincide with the symmetrically
preconditioned iterates z~ via dy = Q^{-1/2} z~, and the recorded residual
norms are the preconditioned residuals ||Q^{-1/2}(A D^2 A' dy - p)||_2 =
sqrt(r' Q^{-1} r), read off the recurrence without extra matvecs.

Chebyshev uses the fixed eigenvalue band [2/(2+zeta), 2/(2-zeta)] that holds
for the sketched preconditioner whenever the embedding certifies distortion
zeta/2, so it needs no inner products to converge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import Breakdown, InvalidZeta, NonpositiveScaling, NotPositiveDefinite, TooLarge
from .preconditioning import PreconditionerFactor, apply_inv

DIRECT_CAP = 2000


@dataclass
class NormalOperator:
    """Matrix-free A D^2 A' with D = diag(d); apply costs two sparse matvecs."""

    A: sp.csr_matrix
    d: np.ndarray

    def __post_init__(self):
        if self.d.shape != (self.A.shape[1],):
            raise ValueError(f"d has shape {self.d.shape}, expected ({self.A.shape[1]},)")
        if not np.all(self.d > 0):
            raise NonpositiveScaling("d must be strictly positive")
        self._d2 = self.d**2

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.A @ (self._d2 * (self.A.T @ v))

    def dense(self) -> np.ndarray:
        return (self.A.multiply(self._d2[None, :]) @ self.A.T).toarray()


@dataclass
class SolverTrace:
    """Residual history of one inner solve. residual_norms[0] is the norm of
    the initial (preconditioned) residual; iterations == len(residual_norms)-1."""

    residual_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    zeta: float | None = None
    t_max: int = 0


def pcg(op: NormalOperator, f: PreconditionerFactor, p: np.ndarray,
        t_max: int, tol: float) -> tuple[np.ndarray, SolverTrace]:
    """Preconditioned CG on A D^2 A' dy = p with M^{-1} = Q^{-1}.

    Stops when the preconditioned residual drops below tol relative to its
    initial value, or after t_max iterations. Raises Breakdown on nonpositive
    curvature."""
    m = op.m
    dy = np.zeros(m)
    r = p.copy()
    z = apply_inv(f, r)
    gamma = float(r @ z)
    if gamma < 0:
        raise Breakdown("preconditioner produced a negative inner product")
    norm0 = np.sqrt(gamma)
    trace = SolverTrace(residual_norms=[norm0], t_max=t_max)
    if norm0 == 0.0:
        trace.converged = True
        return dy, trace
    target = tol * norm0
    q = z.copy()
    for _ in range(t_max):
        Aq = op.apply(q)
        curv = float(q @ Aq)
        if curv <= 0:
            raise Breakdown(f"nonpositive curvature {curv:.3e}")
        alpha = gamma / curv
        dy += alpha * q
        r -= alpha * Aq
        z = apply_inv(f, r)
        gamma_new = float(r @ z)
        if gamma_new < 0:
            raise Breakdown("preconditioner produced a negative inner product")
        trace.residual_norms.append(float(np.sqrt(gamma_new)))
        trace.iterations += 1
        if trace.residual_norms[-1] <= target:
            trace.converged = True
            break
        q = z + (gamma_new / gamma) * q
        gamma = gamma_new
    return dy, trace


def chebyshev(op: NormalOperator, f: PreconditionerFactor, p: np.ndarray,
              zeta: float, t_max: int, tol: float | None = None
              ) -> tuple[np.ndarray, SolverTrace]:
    """Chebyshev iteration with the fixed band lambda in [2/(2+zeta), 2/(2-zeta)].

    Runs the full t_max schedule (its contraction is guaranteed a priori);
    pass tol to stop early on the relative preconditioned residual. The
    residual polynomial after t steps is T_t((d0-lam)/c)/T_t(d0/c) with
    d0, c the band midpoint and half-width."""
    if not 0.0 < zeta <= 1.0:
        raise InvalidZeta(f"zeta must lie in (0, 1], got {zeta}")
    lam_min = 2.0 / (2.0 + zeta)
    lam_max = 2.0 / (2.0 - zeta)
    d0 = 0.5 * (lam_max + lam_min)
    c = 0.5 * (lam_max - lam_min)
    m = op.m
    dy = np.zeros(m)
    r = p.copy()
    z = apply_inv(f, r)
    norm0 = float(np.sqrt(max(r @ z, 0.0)))
    trace = SolverTrace(residual_norms=[norm0], zeta=zeta, t_max=t_max)
    if norm0 == 0.0:
        trace.converged = True
        return dy, trace
    target = tol * norm0 if tol is not None else None
    alpha = 0.0
    q = np.zeros(m)
    for k in range(t_max):
        if k == 0:
            q = z.copy()
            alpha = 1.0 / d0
        else:
            beta = (0.5 if k == 1 else 0.25) * (c * alpha) ** 2
            alpha = 1.0 / (d0 - beta / alpha)
            q = z + beta * q
        dy += alpha * q
        r -= alpha * op.apply(q)
        z = apply_inv(f, r)
        trace.residual_norms.append(float(np.sqrt(max(r @ z, 0.0))))
        trace.iterations += 1
        if target is not None and trace.residual_norms[-1] <= target:
            trace.converged = True
            break
    if target is None:
        trace.converged = True
    return dy, trace


def direct_solve(op: NormalOperator, p: np.ndarray, cap: int = DIRECT_CAP) -> np.ndarray:
    """Dense Cholesky of A D^2 A' with one iterative refinement pass.

    Baseline path for comparisons; refuses m beyond cap."""
    m = op.m
    if m > cap:
        raise TooLarge(f"m={m} exceeds direct-solve cap {cap}")
    M = op.dense()
    try:
        cho = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    dy = scipy.linalg.cho_solve(cho, p, check_finite=False)
    resid = p - op.apply(dy)
    dy += scipy.linalg.cho_solve(cho, resid, check_finite=False)
    return dy


def unpreconditioned_cg(op: NormalOperator, p: np.ndarray, t_max: int,
                        tol: float) -> tuple[np.ndarray, SolverTrace]:
    """Plain CG baseline; the trace stores unpreconditioned residual norms."""
    m = op.m
    dy = np.zeros(m)
    r = p.copy()
    norm0 = float(np.linalg.norm(r))
    trace = SolverTrace(residual_norms=[norm0], t_max=t_max)
    if norm0 == 0.0:
        trace.converged = True
        return dy, trace
    target = tol * norm0
    gamma = float(r @ r)
    q = r.copy()
    for _ in range(t_max):
        Aq = op.apply(q)
        curv = float(q @ Aq)
        if curv <= 0:
            raise Breakdown(f"nonpositive curvature {curv:.3e}")
        alpha = gamma / curv
        dy += alpha * q
        r -= alpha * Aq
        gamma_new = float(r @ r)
        trace.residual_norms.append(float(np.sqrt(gamma_new)))
        trace.iterations += 1
        if trace.residual_norms[-1] <= target:
            trace.converged = True
            break
        q = r + (gamma_new / gamma) * q
        gamma = gamma_new
    return dy, trace
