"""Long-step primal-dual interior point drivers.

Both modes solve min c'x s.t. Ax = b, x >= 0 by damped Newton steps on the
perturbed KKT system, with the normal equations A D^2 A' dy = p handed to an
inner solver (sketch-preconditioned CG or Chebyshev, dense Cholesky, or plain
CG as baselines). When correction is enabled, the inner solver's error is
removed exactly by the vector v (see correction.py), so search directions
satisfy their linear invariants to rounding:

    feasible:    A dx = 0,     A'dy + ds = 0
    infeasible:  A dx = -r_p,  A'dy + ds = -r_d
    both:        x.ds + s.dx = -x.s + sigma*mu*1 - v

The feasible mode stays in N(gamma) = {x_i s_i >= (1-gamma) mu} with exact
(to tolerance) feasibility; the infeasible mode additionally keeps
||(r_p, r_d)|| / ||r0|| <= mu/mu0, shrinking residuals collinearly by
(1 - alpha) each step.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .correction import CorrectionVector, check_v_norm, check_v_small_enough, compute_v
from .errors import (
    DimensionMismatch,
    Infeasible,
    InvalidZeta,
    InvariantViolated,
    MaxIterations,
    NeighborhoodViolated,
    NonpositivePoint,
    RankDeficient,
    Unbounded,
)
from .krylov_solvers import (
    NormalOperator,
    SolverTrace,
    chebyshev,
    direct_solve,
    pcg,
    unpreconditioned_cg,
)
from .lp_model import LinearProgram, make_lp, phase1_lp, validate
from .preconditioning import build_preconditioner, spectrum_bounds
from .sketching import (
    apply_sketch,
    auto_sketch_dims,
    build_gaussian_sketch,
    build_identity_sketch,
    build_sparse_embedding,
)

FEAS_TOL = 1e-9
PROXIMITY_SLACK = 1e-12
RATIO_FLOOR = 1e-32
RATIO_CAP = 1e32
V_INVARIANT_TOL = 1e-10
MU_IDENTITY_TOL = 1e-10
DIRECTION_TOL = 1e-8


@dataclass
class IpmIterate:
    """Primal-dual point with cached residuals r_p = Ax - b, r_d = A'y + s - c
    and duality measure mu = x's/n."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    r_p: np.ndarray
    r_d: np.ndarray
    mu: float
    k: int = 0

    @property
    def residual_norm(self) -> float:
        return float(math.hypot(np.linalg.norm(self.r_p), np.linalg.norm(self.r_d)))


def duality_measure(x: np.ndarray, s: np.ndarray) -> float:
    if x.shape != s.shape:
        raise DimensionMismatch(f"x and s shapes differ: {x.shape} vs {s.shape}")
    return float(x @ s) / x.shape[0]


def make_iterate(lp: LinearProgram, x: np.ndarray, y: np.ndarray, s: np.ndarray,
                 k: int = 0) -> IpmIterate:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    r_p = lp.A @ x - lp.b
    r_d = lp.A.T @ y + s - lp.c
    return IpmIterate(x=x, y=y, s=s, r_p=r_p, r_d=r_d,
                      mu=duality_measure(x, s), k=k)


def default_start(lp: LinearProgram) -> IpmIterate:
    """All-ones triple, the infeasible-mode default."""
    return make_iterate(lp, np.ones(lp.n), np.ones(lp.m), np.ones(lp.n))


def in_neighborhood(lp: LinearProgram, it: IpmIterate, gamma: float, mode: str,
                    r0_norm: float | None = None, mu0: float | None = None) -> bool:
    """Membership in N(gamma): strict positivity, proximity
    min x_i s_i >= (1-gamma) mu (with 1e-12 relative slack), and the mode's
    residual condition (feasible: residuals within 1e-9 scale; infeasible:
    ||r||/||r0|| <= mu/mu0 + 1e-12)."""
    if not (np.all(it.x > 0) and np.all(it.s > 0)) or it.mu <= 0:
        return False
    if np.min(it.x * it.s) < (1.0 - gamma) * it.mu - PROXIMITY_SLACK * it.mu:
        return False
    if mode == "feasible":
        b_scale = 1.0 + float(np.linalg.norm(lp.b))
        c_scale = 1.0 + float(np.linalg.norm(lp.c))
        return (np.linalg.norm(it.r_p) <= FEAS_TOL * b_scale
                and np.linalg.norm(it.r_d) <= FEAS_TOL * c_scale)
    if r0_norm is None or mu0 is None:
        raise ValueError("infeasible-mode membership needs r0_norm and mu0")
    r0 = max(r0_norm, 1e-300)
    return it.residual_norm / r0 <= it.mu / mu0 + 1e-12


@dataclass
class IpmParams:
    """Run configuration. sigma must stay below 4/5 for the long-step
    decrease argument; zeta below 1 so the inner schedule contracts."""

    mode: str = "infeasible"
    solver: str = "pcg"
    gamma: float = 0.5
    sigma: float = 0.5
    zeta: float = 0.5
    sketch: str = "sparse"
    w: int | None = None
    s: int | None = None
    tol_cg: float = 1e-5
    tol_outer: float = 1e-9
    seed: int = 0
    max_outer: int = 200
    correction: bool = True
    t_max: int | None = None
    diag_cond: bool = False

    def validate(self) -> None:
        if self.mode not in ("feasible", "infeasible"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.solver not in ("pcg", "chebyshev", "direct", "unpreconditioned"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.sigma < 0.8:
            raise ValueError(f"sigma must lie in (0, 4/5), got {self.sigma}")
        if not 0.0 < self.zeta < 1.0:
            raise InvalidZeta(f"zeta must lie in (0, 1) for a contracting schedule, got {self.zeta}")
        if self.sketch not in ("sparse", "gaussian"):
            raise ValueError(f"unknown sketch {self.sketch!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.tol_cg <= 0 or self.tol_outer <= 0:
            raise ValueError("tolerances must be positive")

    @property
    def delta(self) -> float:
        """Sketch failure probability budget: 0.1 spread over the outer loop."""
        return 0.1 / self.max_outer


def default_t_max(n: int, params: IpmParams) -> int:
    """Inner budget t >= log(n psi)/log(1/zeta) with
    psi = 4 sqrt(6) (1 + sigma/sqrt(1-gamma)) / (gamma sigma), after which
    ||v|| <= gamma sigma mu / 4 under the certified-sketch contraction."""
    psi = 4.0 * math.sqrt(6.0) * (1.0 + params.sigma / math.sqrt(1.0 - params.gamma)) \
        / (params.gamma * params.sigma)
    return max(1, math.ceil(math.log(n * psi) / math.log(1.0 / params.zeta)))


@dataclass
class SearchDirection:
    dx: np.ndarray
    dy: np.ndarray
    ds: np.ndarray
    v: np.ndarray
    trace: SolverTrace | None = None
    correction: CorrectionVector | None = None
    cross: float = 0.0  # dx'ds


def build_rhs(lp: LinearProgram, it: IpmIterate, sigma: float, mode: str) -> np.ndarray:
    """Normal-equations right-hand side.

    feasible:    p = -sigma mu A S^{-1} 1 + A x
    infeasible:  p = -r_p - sigma mu A S^{-1} 1 + A x - A D^2 r_d
    """
    u = it.x - sigma * it.mu / it.s
    if mode == "feasible":
        return np.asarray(lp.A @ u)
    u = u - (it.x / it.s) * it.r_d
    return np.asarray(lp.A @ u) - it.r_p


def assemble_directions(lp: LinearProgram, it: IpmIterate, dy: np.ndarray,
                        v: np.ndarray, sigma: float, mode: str,
                        strict: bool = True) -> SearchDirection:
    """Back-substitute ds and dx from dy and v, asserting the direction
    invariants (primal row to 1e-8 scale, complementarity row to 1e-10).

    strict=False skips the primal/dual row assertions: an uncorrected
    iterative solve only satisfies them to its own tolerance, which is the
    drift the correction vector exists to remove."""
    Atdy = np.asarray(lp.A.T @ dy)
    ds = -Atdy if mode == "feasible" else -it.r_d - Atdy
    dx = -it.x + sigma * it.mu / it.s - (it.x / it.s) * ds - v / it.s

    if strict:
        Adx = np.asarray(lp.A @ dx)
        a_scale = math.sqrt(float((lp.A.data**2).sum()))
        row_scale = 1.0 + a_scale * float(np.linalg.norm(dx)) + float(np.linalg.norm(lp.b))
        primal_err = float(np.linalg.norm(Adx)) if mode == "feasible" \
            else float(np.linalg.norm(Adx + it.r_p))
        if primal_err > DIRECTION_TOL * row_scale:
            raise InvariantViolated(
                f"primal direction row off by {primal_err:.3e} (scale {row_scale:.3e})")
        dual_err = float(np.linalg.norm(Atdy + ds)) if mode == "feasible" \
            else float(np.linalg.norm(Atdy + ds + it.r_d))
        dual_scale = 1.0 + a_scale * float(np.linalg.norm(dy)) + float(np.linalg.norm(it.r_d))
        if dual_err > DIRECTION_TOL * dual_scale:
            raise InvariantViolated(
                f"dual direction row off by {dual_err:.3e} (scale {dual_scale:.3e})")
    comp = it.x * ds + it.s * dx + it.x * it.s - sigma * it.mu + v
    comp_scale = max(it.mu, float(np.max(np.abs(it.x * it.s))),
                     float(np.max(np.abs(it.x * ds))), float(np.max(np.abs(it.s * dx))))
    if float(np.max(np.abs(comp))) > 1e-10 * max(comp_scale, 1e-300):
        raise InvariantViolated("complementarity row of the step system violated")
    return SearchDirection(dx=dx, dy=dy, ds=ds, v=v, cross=float(dx @ ds))


def _first_crossing(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Smallest alpha > 0 at which some quadratic a_i t^2 + b_i t + c_i
    (with c_i >= 0 up to noise) turns negative; +inf when none does.
    Near-tangent cases are disambiguated by evaluating at the half point."""
    if np.any(c < 0):
        neg = c < 0
        # Already violated at alpha = 0 beyond noise: no room to move.
        if np.any(c[neg] < -1e-12 * max(1.0, float(np.max(np.abs(c))))):
            return 0.0
        c = np.maximum(c, 0.0)
    best = np.inf
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        disc = b * b - 4.0 * a * c
        has_real = disc >= 0
        sq = np.sqrt(np.where(has_real, disc, 0.0))
        sign_b = np.where(b >= 0, 1.0, -1.0)
        qq = -0.5 * (b + sign_b * sq)
        r1 = np.where((a != 0) & has_real, qq / np.where(a != 0, a, 1.0), np.inf)
        r2 = np.where((qq != 0) & has_real, c / np.where(qq != 0, qq, 1.0), np.inf)
        lin = np.where((a == 0) & (b < 0), -c / np.where(b < 0, b, -1.0), np.inf)
    roots = np.stack([r1, r2, lin])
    roots = np.where((roots > 0) & np.isfinite(roots), roots, np.inf)
    cand = roots.min(axis=0)
    idx = np.isfinite(cand)
    if not np.any(idx):
        return float(best)
    # Quadratics that dip negative immediately (c ~ 0, b < 0) cross at 0.
    half = 0.5 * cand[idx]
    val = a[idx] * half**2 + b[idx] * half + c[idx]
    crossing = np.where(val < 0, 0.0, cand[idx])
    return float(min(best, crossing.min()))


def max_alpha(lp: LinearProgram, it: IpmIterate, dirn: SearchDirection, gamma: float,
              mode: str, r0_norm: float | None = None, mu0: float | None = None) -> float:
    """Largest step alpha in [0, 1] keeping (x, y, s) + alpha (dx, dy, ds)
    inside N(gamma), found by per-coordinate quadratic root analysis, then
    verified by the membership predicate with a bisection fallback."""
    x, s, dx, ds = it.x, it.s, dirn.dx, dirn.ds
    n = x.shape[0]
    g1 = 1.0 - gamma
    cross_i = dx * ds
    lin_i = x * ds + s * dx
    a_mu = float(cross_i.sum()) / n
    b_mu = float(lin_i.sum()) / n
    alpha = min(1.0, _first_crossing(cross_i - g1 * a_mu, lin_i - g1 * b_mu,
                                     x * s - g1 * it.mu))
    # mu(alpha) itself must stay positive.
    alpha = min(alpha, _first_crossing(np.array([a_mu]), np.array([b_mu]),
                                       np.array([it.mu])))
    if mode == "infeasible":
        if r0_norm is None or mu0 is None:
            raise ValueError("infeasible-mode step needs r0_norm and mu0")
        ratio = it.residual_norm / max(r0_norm, 1e-300)
        alpha = min(alpha, _first_crossing(
            np.array([a_mu / mu0]),
            np.array([b_mu / mu0 + ratio]),
            np.array([it.mu / mu0 + 1e-12 - ratio]),
        ))
    if alpha <= 0.0:
        return 0.0

    def ok(a: float) -> bool:
        cand = make_iterate(lp, x + a * dx, it.y + a * dirn.dy, s + a * ds, it.k)
        return in_neighborhood(lp, cand, gamma, mode, r0_norm, mu0)

    if ok(alpha):
        return float(alpha)
    lo, hi = 0.0, alpha
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def argmin_alpha(it: IpmIterate, dirn: SearchDirection, alpha_max: float) -> float:
    """Minimizer of g(alpha) = (x + alpha dx)'(s + alpha ds) over [0, alpha_max];
    ties break toward the larger step."""
    if alpha_max <= 0.0:
        return 0.0
    lin = float(it.x @ dirn.ds + it.s @ dirn.dx)
    quad = dirn.cross
    cands = [0.0, float(alpha_max)]
    if quad > 0.0:
        vertex = -lin / (2.0 * quad)
        if 0.0 < vertex < alpha_max:
            cands.append(vertex)
    n = it.x.shape[0]

    def g(a: float) -> float:
        return n * it.mu + lin * a + quad * a * a

    return float(min(cands, key=lambda a: (g(a), -a)))


@dataclass
class StepRecord:
    """Per-outer-iteration diagnostics collected by ipm_step."""

    k: int
    mu: float
    mu_after: float
    alpha_tilde: float
    alpha_bar: float
    inner_iterations: int
    inner_iterations_total: int
    f_norm0: float
    f_norm: float
    v_norm: float
    v_bar: float
    v_invariant_rel: float
    v_norm_slack: float
    v_ok: bool
    v_retries: int
    rank_retries: int
    sketch_w: int
    sketch_seed: int | None
    residual_ratio: float
    mu_identity_error: float
    clip_count: int
    inner_residual_norms: list[float] = field(default_factory=list)
    spectrum_lo: float | None = None
    spectrum_hi: float | None = None
    kappa_sk: float | None = None
    kappa_stan: float | None = None

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        return out


def _build_factor(lp: LinearProgram, d: np.ndarray, params: IpmParams,
                  rng: np.random.Generator, w: int, s_nnz: int):
    """Draw a sketch and factor ADW, resketching up to 3 times on rank loss.

    At w >= n no reduction is possible and a random square sketch would only
    distort; the identity sketch (exact preconditioner) is used instead."""
    rank_retries = 0
    for _ in range(4):
        if w >= lp.n:
            W = build_identity_sketch(lp.n)
        elif params.sketch == "gaussian":
            W = build_gaussian_sketch(lp.n, w, int(rng.integers(0, 2**63)))
        else:
            W = build_sparse_embedding(lp.n, w, s_nnz, int(rng.integers(0, 2**63)))
        ADW = apply_sketch(lp.A, d, W)
        try:
            f = build_preconditioner(ADW, sketch_tag=W.tag)
            return W, f, rank_retries
        except RankDeficient:
            rank_retries += 1
            if W.kind == "identity":
                break
    raise RankDeficient(f"ADW rank deficient after {rank_retries} resketches")


def ipm_step(lp: LinearProgram, it: IpmIterate, params: IpmParams,
             rng: np.random.Generator, r0_norm: float | None = None,
             mu0: float | None = None) -> tuple[IpmIterate, StepRecord]:
    """One outer iteration: inner solve, correction, step sizes, update,
    and the runtime assertions of the step invariants."""
    mode = params.mode
    if not in_neighborhood(lp, it, params.gamma, mode, r0_norm, mu0):
        raise NeighborhoodViolated(f"iterate {it.k} is outside N({params.gamma})")
    if not (np.all(it.x > 0) and np.all(it.s > 0)):
        raise NonpositivePoint("iterate lost strict positivity")

    ratio = it.x / it.s
    clipped = np.clip(ratio, RATIO_FLOOR, RATIO_CAP)
    clip_count = int(np.count_nonzero(clipped != ratio))
    if clip_count:
        warnings.warn(f"{clip_count} x/s ratios clipped to [{RATIO_FLOOR}, {RATIO_CAP}]",
                      RuntimeWarning, stacklevel=2)
    d = np.sqrt(clipped)
    op = NormalOperator(lp.A, d)
    p = build_rhs(lp, it, params.sigma, mode)
    p_norm = float(np.linalg.norm(p))

    v_cv: CorrectionVector | None = None
    W = None
    factor = None
    sketch_seed = None
    sketch_w = 0
    rank_retries = 0
    v_retries = 0
    inner_total = 0
    t_base = params.t_max if params.t_max is not None else default_t_max(lp.n, params)

    # Without correction the inner residual lands in the step unremoved, so
    # its tolerance must shrink with the residual budget of the neighborhood.
    tol_eff = params.tol_cg
    if not params.correction or params.solver == "unpreconditioned":
        if mode == "infeasible":
            budget = 0.05 * (it.mu / mu0) * r0_norm
        else:
            budget = 0.05 * FEAS_TOL * (1.0 + float(np.linalg.norm(lp.b))) \
                / max(params.max_outer, 1)
        tol_eff = min(params.tol_cg, budget / max(p_norm, 1e-300))
        tol_eff = max(tol_eff, 1e-14)
        t_deep = math.ceil(math.log(1.0 / tol_eff) / math.log(1.0 / params.zeta)) + 2
        t_base = max(t_base, t_deep)

    if params.solver == "direct":
        dy = direct_solve(op, p)
        trace = SolverTrace(residual_norms=[p_norm, float(np.linalg.norm(op.apply(dy) - p))],
                            iterations=0, converged=True)
    elif params.solver == "unpreconditioned":
        dy, trace = unpreconditioned_cg(op, p, t_max=max(1000, 20 * lp.m), tol=tol_eff)
        inner_total = trace.iterations
    else:
        w, s_nnz = auto_sketch_dims(lp.m, lp.n, params.delta)
        if params.w is not None:
            w = params.w
        if params.s is not None:
            s_nnz = params.s
        sketch_w = w
        best = None
        chosen = None
        # Budget escalation: (fresh W, t), (same W, 2t), then fresh sketches at 2t.
        schedule = [(True, t_base), (False, 2 * t_base), (True, 2 * t_base),
                    (True, 2 * t_base), (True, 2 * t_base)]
        for fresh, t_eff in schedule:
            if fresh or W is None:
                W, factor, retries = _build_factor(lp, d, params, rng, w, s_nnz)
                rank_retries += retries
                sketch_seed = W.seed
            if params.solver == "chebyshev":
                dy, trace = chebyshev(op, factor, p, params.zeta, t_eff,
                                      tol=None if params.correction else tol_eff)
            else:
                dy, trace = pcg(op, factor, p, t_eff, tol_eff)
            inner_total += trace.iterations
            if not params.correction:
                chosen = (dy, trace, None, None)
                break
            infeas = op.apply(dy) - p
            scale = float(np.linalg.norm(infeas)) + p_norm
            cv = compute_v(factor, W, it.x, it.s, infeas, scale=scale if scale > 0 else 1.0)
            check_v_norm(cv, it.mu, trace.residual_norms[-1])
            cand = (dy, trace, cv, infeas)
            if check_v_small_enough(cv, params.gamma, params.sigma, it.mu):
                chosen = cand
                break
            v_retries += 1
            if best is None or cv.norm < best[2].norm:
                best = cand
        if chosen is None:
            chosen = best
        dy, trace, v_cv, infeas = chosen

    v_invariant_rel = float("nan")
    if v_cv is not None:
        # Exactness of the correction, re-measured with the actual A.
        scale = float(np.linalg.norm(infeas)) + p_norm
        resid = np.asarray(lp.A @ (v_cv.v / it.s)) - infeas
        v_invariant_rel = float(np.linalg.norm(resid)) / max(scale, 1e-300)
        if v_invariant_rel > V_INVARIANT_TOL:
            raise InvariantViolated(
                f"correction invariant off by {v_invariant_rel:.3e} at iteration {it.k}")
        v_vec = v_cv.v
    else:
        v_vec = np.zeros(lp.n)

    strict = params.solver == "direct" or v_cv is not None
    dirn = assemble_directions(lp, it, dy, v_vec, params.sigma, mode, strict=strict)
    dirn.trace = trace
    dirn.correction = v_cv
    alpha_t = max_alpha(lp, it, dirn, params.gamma, mode, r0_norm, mu0)
    alpha_b = argmin_alpha(it, dirn, alpha_t)

    new_it = make_iterate(lp, it.x + alpha_b * dirn.dx, it.y + alpha_b * dirn.dy,
                          it.s + alpha_b * dirn.ds, it.k + 1)

    # mu update identity; the linear form is exact only when dx'ds = 0
    # (feasible mode), the quadratic form holds for any direction satisfying
    # the complementarity row.
    v_bar = float(v_vec.sum()) / lp.n
    pred_lin = (1.0 - alpha_b * (1.0 - params.sigma)) * it.mu - alpha_b * v_bar
    pred_quad = pred_lin + alpha_b**2 * dirn.cross / lp.n
    mu_scale = max(it.mu, abs(pred_quad), 1e-300)
    mu_identity_error = abs(new_it.mu - pred_quad) / mu_scale
    if mu_identity_error > MU_IDENTITY_TOL:
        raise InvariantViolated(
            f"mu update identity off by {mu_identity_error:.3e} at iteration {it.k}")
    if mode == "feasible" and abs(new_it.mu - pred_lin) > MU_IDENTITY_TOL * mu_scale:
        raise InvariantViolated("feasible-mode linear mu identity violated")
    if new_it.mu > it.mu * (1.0 + 1e-12):
        raise InvariantViolated(f"mu increased: {it.mu:.6e} -> {new_it.mu:.6e}")
    v_ok = v_cv is not None and check_v_small_enough(v_cv, params.gamma, params.sigma, it.mu)
    if mode == "feasible" and v_ok:
        bound = (1.0 - 0.5 * alpha_b * (1.0 - 1.25 * params.sigma)) * it.mu
        if new_it.mu > bound * (1.0 + 1e-10):
            raise InvariantViolated("argmin step exceeded the mu decrease bound")

    if mode == "feasible":
        b_scale = 1.0 + float(np.linalg.norm(lp.b))
        c_scale = 1.0 + float(np.linalg.norm(lp.c))
        if (np.linalg.norm(new_it.r_p) > FEAS_TOL * b_scale
                or np.linalg.norm(new_it.r_d) > FEAS_TOL * c_scale):
            raise InvariantViolated("feasible-mode residual drift beyond tolerance")
    if not in_neighborhood(lp, new_it, params.gamma, mode, r0_norm, mu0):
        raise NeighborhoodViolated(f"step {it.k} left N({params.gamma})")

    record = StepRecord(
        k=it.k,
        mu=float(it.mu),
        mu_after=float(new_it.mu),
        alpha_tilde=float(alpha_t),
        alpha_bar=float(alpha_b),
        inner_iterations=trace.iterations,
        inner_iterations_total=inner_total,
        f_norm0=float(trace.residual_norms[0]),
        f_norm=float(trace.residual_norms[-1]),
        v_norm=float(np.linalg.norm(v_vec)),
        v_bar=v_bar,
        v_invariant_rel=v_invariant_rel,
        v_norm_slack=v_cv.norm_bound_slack if v_cv is not None else float("nan"),
        v_ok=bool(v_ok),
        v_retries=v_retries,
        rank_retries=rank_retries,
        sketch_w=sketch_w,
        sketch_seed=sketch_seed,
        residual_ratio=float(new_it.residual_norm / max(r0_norm, 1e-300))
        if r0_norm is not None else float("nan"),
        mu_identity_error=float(mu_identity_error),
        clip_count=clip_count,
        inner_residual_norms=[float(r) for r in trace.residual_norms],
    )
    if params.diag_cond and factor is not None:
        lo, hi = spectrum_bounds(factor, lp.A, d)
        record.spectrum_lo, record.spectrum_hi = lo, hi
        record.kappa_sk = hi / lo
    if params.diag_cond:
        AD = lp.A.multiply(d[None, :]).toarray()
        svals = np.linalg.svd(AD, compute_uv=False)
        if svals[-1] > 0:
            record.kappa_stan = float((svals[0] / svals[-1]) ** 2)
    return new_it, record


@dataclass
class SolveReport:
    """Run summary returned by solve(); to_dict feeds the CLI JSON report."""

    problem: str
    m: int
    n: int
    mode: str
    solver: str
    params: dict
    converged: bool
    outer: int
    sum_inner: int
    max_inner: int
    mu0: float
    mu_final: float
    epsilon: float
    objective: float
    dual_objective: float
    gap: float
    r0_norm: float
    r_final_norm: float
    x: np.ndarray
    y: np.ndarray
    s_vec: np.ndarray
    steps: list[StepRecord]
    wall_seconds: float
    v_bound_failures: int
    gamma_effective: float = float("nan")

    @property
    def mu_trace(self) -> list[float]:
        return [self.mu0] + [rec.mu_after for rec in self.steps]

    @property
    def v_norm_trace(self) -> list[float]:
        return [rec.v_norm for rec in self.steps]

    def to_dict(self, include_vectors: bool = False) -> dict:
        out = {
            "problem": self.problem,
            "m": self.m,
            "n": self.n,
            "mode": self.mode,
            "solver": self.solver,
            "params": self.params,
            "converged": self.converged,
            "outer": self.outer,
            "sum_inner": self.sum_inner,
            "max_inner": self.max_inner,
            "mu0": self.mu0,
            "mu_final": self.mu_final,
            "epsilon": self.epsilon,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "gap": self.gap,
            "r0_norm": self.r0_norm,
            "r_final_norm": self.r_final_norm,
            "mu_trace": self.mu_trace,
            "v_norm_trace": self.v_norm_trace,
            "inner_iterations": [rec.inner_iterations for rec in self.steps],
            "wall_seconds": self.wall_seconds,
            "v_bound_failures": self.v_bound_failures,
            "gamma_effective": self.gamma_effective,
            "steps": [rec.to_dict() for rec in self.steps],
        }
        if include_vectors:
            out["x"] = [float(v) for v in self.x]
            out["y"] = [float(v) for v in self.y]
            out["s"] = [float(v) for v in self.s_vec]
        return out


def _params_dict(params: IpmParams) -> dict:
    return {k: v for k, v in params.__dict__.items()}


def solve(lp: LinearProgram, start: IpmIterate | None = None,
          params: IpmParams | None = None) -> SolveReport:
    """Run the configured IPM until mu <= tol_outer * max(1, mu0).

    Infeasible mode defaults to the all-ones start; feasible mode builds a
    strictly feasible, centered start via feasible_start unless one is given.
    Raises MaxIterations (with the partial report attached) when the outer
    budget runs out."""
    params = params if params is not None else IpmParams()
    params.validate()
    validate(lp)
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(int(params.seed)))
    if start is None:
        if params.mode == "feasible":
            start = feasible_start(lp, params)
        else:
            start = default_start(lp)
    if not (np.all(start.x > 0) and np.all(start.s > 0)):
        raise NonpositivePoint("start must be strictly positive in x and s")
    mu0 = start.mu
    r0_norm = max(start.residual_norm, 1e-300)
    epsilon = params.tol_outer * max(1.0, mu0)
    if params.mode == "feasible" and not in_neighborhood(lp, start, params.gamma, "feasible"):
        raise NeighborhoodViolated("feasible mode requires a start in N(gamma) within tolerance")
    # The infeasible method accepts any strictly positive start: if the given
    # point is off-center, run in the wider neighborhood N(gamma') that
    # contains it (the convergence argument holds for any gamma in (0,1)).
    gamma_run = params.gamma
    if params.mode == "infeasible" and not in_neighborhood(
            lp, start, params.gamma, "infeasible", r0_norm, mu0):
        theta0 = float(np.min(start.x * start.s) / mu0)
        gamma_run = min(1.0 - 1e-12, max(params.gamma, 1.0 - 0.999 * theta0))
    run_params = replace(params, gamma=gamma_run) if gamma_run != params.gamma else params

    it = start
    steps: list[StepRecord] = []

    def report(converged: bool) -> SolveReport:
        return SolveReport(
            problem=lp.name, m=lp.m, n=lp.n, mode=params.mode, solver=params.solver,
            params=_params_dict(params), converged=converged, outer=len(steps),
            sum_inner=sum(rec.inner_iterations_total for rec in steps),
            max_inner=max((rec.inner_iterations for rec in steps), default=0),
            mu0=float(mu0), mu_final=float(it.mu), epsilon=float(epsilon),
            objective=float(lp.c @ it.x), dual_objective=float(lp.b @ it.y),
            gap=float(lp.c @ it.x - lp.b @ it.y), r0_norm=float(r0_norm),
            r_final_norm=float(it.residual_norm), x=it.x, y=it.y, s_vec=it.s,
            steps=steps, wall_seconds=time.perf_counter() - t0,
            v_bound_failures=sum(1 for rec in steps if rec.v_retries and not rec.v_ok),
            gamma_effective=gamma_run,
        )

    obj_scale0 = 1.0 + abs(float(lp.c @ start.x))
    circulations = _null_pair_columns(lp)
    it = _rebalance_circulations(lp, it, circulations, run_params.gamma,
                                 params.mode, r0_norm, mu0)
    while it.mu > epsilon:
        if len(steps) >= params.max_outer:
            raise MaxIterations(
                f"mu = {it.mu:.3e} > {epsilon:.3e} after {params.max_outer} outer iterations",
                report=report(False),
            )
        it, rec = ipm_step(lp, it, run_params, rng, r0_norm, mu0)
        it = _rebalance_circulations(lp, it, circulations, run_params.gamma,
                                     params.mode, r0_norm, mu0)
        steps.append(rec)
        if float(lp.c @ it.x) < -1e13 * obj_scale0:
            raise Unbounded("objective diverging to -inf: problem is unbounded")
    return report(True)


def _null_pair_columns(lp: LinearProgram) -> list[tuple[int, int]]:
    """Indices of exactly anti-parallel zero-cost column pairs (A_j = -A_k,
    c_j = c_k = 0), each column matched at most once.

    Such a pair spans a null-space circulation u = e_j + e_k with Au = 0 and
    c'u = 0 (e.g. the two halves of a sign-split free variable), along which
    the log barrier is unbounded below: left alone, the pair's coordinates
    inflate without limit as mu shrinks."""
    csc = sp.csc_matrix(lp.A)
    csc.sort_indices()
    by_key: dict[tuple, int] = {}
    pairs: list[tuple[int, int]] = []
    for j in range(lp.n):
        if lp.c[j] != 0.0:
            continue
        cols = slice(csc.indptr[j], csc.indptr[j + 1])
        idx = tuple(int(i) for i in csc.indices[cols])
        vals = tuple(float(v) for v in csc.data[cols])
        mate = by_key.pop((idx, tuple(-v for v in vals)), None)
        if mate is not None:
            pairs.append((mate, j))
        else:
            by_key[(idx, vals)] = j
    return pairs


def _rebalance_circulations(lp: LinearProgram, it: IpmIterate,
                            pairs: list[tuple[int, int]], gamma: float,
                            mode: str, r0_norm: float | None,
                            mu0: float | None) -> IpmIterate:
    """Renormalize the coordinates of zero-cost circulations (infeasible mode).

    The dual residual decays faster than mu by design, and a circulation
    pair's slacks live entirely inside that residual (s_j + s_k = r_d,j +
    r_d,k), so left alone the pair's x entries must inflate exponentially to
    keep x_i s_i above the proximity floor, eventually wrecking the scaling
    matrix. Whenever the residual ratio has slack below its mu/mu0 ceiling,
    spend half of it lifting the pair's slacks to a common healthy value
    beta and shift x down the circulation u = e_j + e_k so each pair product
    equals the pair's previous average product: Ax, c'x, r_p, and mu are
    unchanged (products are redistributed, infinitesimally shrunk), proximity
    of other coordinates is untouched, and the ratio bound still holds."""
    if mode != "infeasible" or not pairs:
        return it
    x = it.x.copy()
    s = it.s.copy()
    moved = False
    budget = 0.5 * max(0.0, (it.mu / mu0) * r0_norm - it.residual_norm)
    for j, k in pairs:
        beta = budget / math.sqrt(2.0)
        if beta <= max(s[j], s[k]):
            continue
        pair_product = 0.5 * (x[j] * s[j] + x[k] * s[k])
        t = min(x[j], x[k]) - pair_product / beta
        if t <= 0.0:
            continue
        x[j] -= t
        x[k] -= t
        s_new_j = pair_product / x[j]
        s_new_k = pair_product / x[k]
        budget -= math.hypot(s_new_j - s[j], s_new_k - s[k])
        s[j] = s_new_j
        s[k] = s_new_k
        moved = True
    if not moved:
        return it
    return make_iterate(lp, x, it.y, s, it.k)


def _sub_params(params: IpmParams, **overrides) -> IpmParams:
    """Parameters for internal auxiliary solves: infeasible mode, fresh auto
    sketch sizes (the sub-LP has different dimensions), diagnostics off."""
    base = replace(params, mode="infeasible", w=None, s=None, t_max=None,
                   diag_cond=False, max_outer=max(params.max_outer, 400))
    return replace(base, **overrides)


def phase1_point(lp: LinearProgram, params: IpmParams | None = None
                 ) -> tuple[np.ndarray, SolveReport]:
    """Strictly positive x0 with Ax0 = b to working precision.

    Solves the auxiliary problem min 1'z s.t. Ax + Zz = b, (x, z) >= 0 from
    its canonical interior start, pins coordinates of all-zero columns (they
    are unconstrained in the auxiliary problem, so the central path inflates
    them without bound, yet they contribute nothing to Ax = b), and snaps the
    point back onto Ax = b with a dense least-squares step when that keeps it
    interior. Returns (x0, auxiliary solve report). Raises Infeasible when
    the auxiliary optimum is bounded away from zero."""
    params = params if params is not None else IpmParams()
    params.validate()
    aux, aux_start = phase1_lp(lp)
    aux_report = solve(aux, start=aux_start,
                       params=_sub_params(params, tol_outer=1e-10))
    z_sum = float(np.sum(aux_report.x[lp.n:]))
    if z_sum > 1e-7 * (1.0 + float(np.linalg.norm(lp.b))):
        raise Infeasible(f"phase-1 optimum 1'z = {z_sum:.3e} is bounded away from zero")
    x0 = aux_report.x[:lp.n].copy()
    col_nnz = np.diff(sp.csc_matrix(lp.A).indptr)
    x0[col_nnz == 0] = 1.0
    AAt = (lp.A @ lp.A.T).toarray()
    try:
        cho = scipy.linalg.cho_factor(AAt, lower=True, check_finite=False)
        corr = lp.A.T @ scipy.linalg.cho_solve(cho, lp.b - lp.A @ x0, check_finite=False)
        if np.all(x0 + corr > 0):
            x0 = x0 + corr
    except scipy.linalg.LinAlgError:
        pass
    if not np.all(x0 > 0):
        raise NeighborhoodViolated("phase-1 produced a boundary primal point")
    return x0, aux_report


def feasible_start(lp: LinearProgram, params: IpmParams | None = None) -> IpmIterate:
    """Construct a strictly feasible primal-dual start inside N(gamma).

    Stage 1 builds a strictly positive primal point on Ax = b (phase1_point).
    Stage 2 finds an interior dual point by solving the problem with the
    objective shifted down to c - delta*1: a dual optimum of the shifted
    problem has slack about delta in every coordinate of s = c - A'y.
    Stage 3 runs pure centering Newton steps (sigma = 1) with a centrality-
    maximizing step length until the proximity target of the requested
    neighborhood is met, then shrinks mu to O(1) with ordinary steps."""
    params = params if params is not None else IpmParams()
    params.validate()
    rng = np.random.Generator(np.random.Philox(int(params.seed) + 0x9E3779B9))

    # Stage 1: primal interior point with Ax = b.
    x0, _ = phase1_point(lp, params)

    # Stage 2: interior dual point by solving the problem with the objective
    # shifted down, c - delta*1. A dual optimum y0 of the shifted problem
    # satisfies A'y0 <= c - delta*1 up to solver tolerance, so s0 = c - A'y0
    # (exact by construction) has margin ~delta. delta shrinks on retry in
    # case the dual interior is thinner than the current shift.
    y0 = None
    s0 = None
    c_scale = 1.0 + float(np.max(np.abs(lp.c)))
    for delta in (1e-2 * c_scale, 1e-4 * c_scale, 1e-6 * c_scale):
        shifted = make_lp(lp.A, lp.b, lp.c - delta, name=lp.name + "_shifted")
        try:
            shifted_report = solve(shifted, start=default_start(shifted),
                                   params=_sub_params(params, tol_outer=1e-10,
                                                      max_outer=200))
        except (MaxIterations, Unbounded):
            continue
        y_cand = shifted_report.y
        s_cand = lp.c - lp.A.T @ y_cand
        if np.all(s_cand >= 0.25 * delta):
            y0, s0 = y_cand, s_cand
            break
    if y0 is None:
        raise Unbounded("no interior dual point found: dual feasible region "
                        "appears to have empty interior")

    # Stage 3: centering prelude toward N(gamma). Pure centering Newton steps
    # (targets mu*1) with the step length chosen to maximize centrality
    # theta = min(x_i s_i)/mu, which converges to the central path quickly.
    it = make_iterate(lp, x0, y0, s0)
    target = min(0.99, 1.05 * (1.0 - params.gamma))
    for _ in range(50):
        theta = float(np.min(it.x * it.s) / it.mu)
        if theta >= target:
            break
        it = _centering_step(lp, it, params, rng)
    else:
        raise NeighborhoodViolated("centering prelude failed to reach N(gamma)")

    # Bring mu to O(1) with ordinary feasible steps so the outer stopping
    # rule epsilon = tol_outer * max(1, mu0) is an absolute-scale target.
    shrink = replace(params, mode="feasible", w=None, s=None, t_max=None, diag_cond=False)
    for _ in range(300):
        if it.mu <= 1.0:
            break
        it, _ = ipm_step(lp, it, shrink, rng)
    return IpmIterate(x=it.x, y=it.y, s=it.s, r_p=it.r_p, r_d=it.r_d, mu=it.mu, k=0)


def _centering_step(lp: LinearProgram, it: IpmIterate, params: IpmParams,
                    rng: np.random.Generator) -> IpmIterate:
    """One Newton step toward the central-path point at the current mu
    (sigma = 1), stepping as far as centrality improves. Feasibility is
    preserved exactly through the usual corrected directions."""
    d = np.sqrt(np.clip(it.x / it.s, RATIO_FLOOR, RATIO_CAP))
    op = NormalOperator(lp.A, d)
    p = build_rhs(lp, it, 1.0, "feasible")
    p_norm = float(np.linalg.norm(p))
    w, s_nnz = auto_sketch_dims(lp.m, lp.n, params.delta)
    if params.w is not None:
        w = params.w
    if params.s is not None:
        s_nnz = params.s
    t_budget = max(40, 4 * default_t_max(lp.n, params))
    last_err = float("inf")
    for _ in range(3):
        W, factor, _ = _build_factor(lp, d, params, rng, w, s_nnz)
        dy, _ = pcg(op, factor, p, t_budget, 1e-13)
        infeas = op.apply(dy) - p
        scale = float(np.linalg.norm(infeas)) + p_norm
        cv = compute_v(factor, W, it.x, it.s, infeas, scale=scale if scale > 0 else 1.0)
        resid = np.asarray(lp.A @ (cv.v / it.s)) - infeas
        last_err = float(np.linalg.norm(resid)) / max(scale, 1e-300)
        if last_err <= V_INVARIANT_TOL:
            break
    else:
        raise InvariantViolated(f"centering correction off by {last_err:.3e}")
    dirn = assemble_directions(lp, it, dy, cv.v, 1.0, "feasible")

    a_hi = 1.0
    for vec, dvec in ((it.x, dirn.dx), (it.s, dirn.ds)):
        neg = dvec < 0
        if np.any(neg):
            a_hi = min(a_hi, 0.9999 * float(np.min(-vec[neg] / dvec[neg])))
    if a_hi <= 0.0:
        raise NeighborhoodViolated("centering step blocked at the boundary")
    grid = np.linspace(0.0, a_hi, 65)[1:]
    best_alpha, best_theta = 0.0, float(np.min(it.x * it.s) / it.mu)
    for a in grid:
        prod = (it.x + a * dirn.dx) * (it.s + a * dirn.ds)
        if np.any(prod <= 0):
            continue
        theta = float(np.min(prod) / np.mean(prod))
        if theta > best_theta:
            best_alpha, best_theta = float(a), theta
    if best_alpha == 0.0:
        raise NeighborhoodViolated("centering step made no centrality progress")
    new_it = make_iterate(lp, it.x + best_alpha * dirn.dx, it.y + best_alpha * dirn.dy,
                          it.s + best_alpha * dirn.ds, it.k + 1)
    b_scale = 1.0 + float(np.linalg.norm(lp.b))
    c_scale = 1.0 + float(np.linalg.norm(lp.c))
    if (np.linalg.norm(new_it.r_p) > FEAS_TOL * b_scale
            or np.linalg.norm(new_it.r_d) > FEAS_TOL * c_scale):
        raise InvariantViolated("centering step drifted off the feasible set")
    return new_it
