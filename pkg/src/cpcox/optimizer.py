"""Alternating maximization of the smoothed log partial likelihood.

The objective is concave in xi = (beta, gamma) for fixed psi, so that
block is maximized by safeguarded Newton-Raphson. The psi block is
non-concave and gets gradient ascent with an Armijo backtracking line
search. The two are alternated until the objective stops moving, and the
whole procedure is repeated from a grid of psi starting points; the best
final objective wins, with deterministic tie-breaking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import likelihood as lk
from .errors import (
    AllStartsFailedError,
    DegenerateFitError,
    InvalidStartError,
)
from .model import Dataset, KernelSpec, ThetaParams, default_bandwidth


@dataclass(frozen=True)
class FitOptions:
    """Tuning knobs for the alternating maximization.

    bandwidth "auto" applies the (log n)^2 / n rule. psi_starts, when
    given, overrides the start grid; otherwise grid_points_per_dim points
    per dimension over grid_box are used (quasi-random points of count
    n_random_starts for q > 3).
    """

    bandwidth: float | str = "auto"
    psi_starts: tuple | None = None
    grid_points_per_dim: int = 5
    grid_box: tuple[float, float] = (-1.0, 1.0)
    n_random_starts: int = 32
    outer_tol: float = 1e-8
    outer_max_iter: int = 100
    newton_max_iter: int = 50
    newton_tol: float = 1e-10
    ascent_max_iter: int = 500
    ascent_tol: float = 1e-8
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_halvings: int = 40
    ridge_floor: float = 1e-10

    def resolve_bandwidth(self, n: int) -> float:
        if self.bandwidth == "auto":
            return default_bandwidth(n)
        bw = float(self.bandwidth)
        if bw <= 0:
            raise InvalidStartError(f"bandwidth must be positive, got {bw}")
        return bw


@dataclass(frozen=True)
class TraceRecord:
    loglik: float
    score_xi_norm: float
    score_psi_norm: float


@dataclass(frozen=True)
class FitResult:
    theta_hat: ThetaParams
    loglik: float
    converged: bool
    bandwidth_used: float
    n_starts: int
    best_start: np.ndarray
    trace: tuple[TraceRecord, ...]
    covariance_xi: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _halfspace_starts(q: int, opts: FitOptions):
    lo, hi = opts.grid_box
    if opts.psi_starts is not None:
        starts = [np.asarray(s, dtype=float) for s in opts.psi_starts]
        if not starts:
            raise InvalidStartError("empty psi start list")
        return starts
    if q <= 3:
        axis = np.linspace(lo, hi, opts.grid_points_per_dim)
        return [np.array(p) for p in itertools.product(axis, repeat=q)]
    # box-filling quasi-random points for higher-dimensional planes
    from scipy.stats import qmc
    pts = qmc.Halton(d=q, scramble=False).random(opts.n_random_starts)
    return list(lo + (hi - lo) * pts)


def maximize_xi_given_psi(ds: Dataset, xi0, psi, kernel: KernelSpec,
                          opts: FitOptions):
    """Newton-Raphson in xi with psi held fixed.

    Returns (xi, loglik, converged). The Hessian is negative semidefinite;
    a ridge is added whenever the negated Hessian's smallest eigenvalue
    drops below the ridge floor, and steps are halved until the objective
    does not decrease.
    """
    p1 = ds.dims[0]
    xi = np.asarray(xi0, dtype=float).copy()
    theta = ThetaParams(beta=xi[:p1], gamma=xi[p1:], psi=np.asarray(psi, dtype=float))
    f = lk.smoothed_log_partial_likelihood(ds, theta, kernel)
    if not np.isfinite(f):
        raise InvalidStartError("objective is not finite at the xi start")

    converged = False
    for _ in range(opts.newton_max_iter):
        g = lk.score_xi(ds, theta, kernel)
        if np.max(np.abs(g)) < opts.newton_tol:
            converged = True
            break
        neg_h = -lk.hessian_xi_xi(ds, theta, kernel)
        eigs = np.linalg.eigvalsh(neg_h)
        if eigs[0] < opts.ridge_floor:
            neg_h = neg_h + (opts.ridge_floor - eigs[0] + opts.ridge_floor) * np.eye(len(xi))
        try:
            step = np.linalg.solve(neg_h, g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateFitError("singular Hessian in the xi Newton step") from exc
        t = 1.0
        improved = False
        for _ in range(opts.armijo_max_halvings + 1):
            cand = theta.with_xi(xi + t * step)
            f_new = lk.smoothed_log_partial_likelihood(ds, cand, kernel)
            if np.isfinite(f_new) and f_new >= f:
                theta, xi, f = cand, xi + t * step, f_new
                improved = True
                break
            t *= opts.armijo_shrink
            if t * np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(xi))):
                break
        if not improved:
            # objective at the roundoff floor: accept as converged when
            # the gradient is already below the first-order threshold
            converged = np.max(np.abs(g)) < 1e-6
            break
    else:
        g = lk.score_xi(ds, theta, kernel)
        converged = np.max(np.abs(g)) < opts.newton_tol
    if converged:
        # a flat direction surviving to the solution means a covariate
        # carries no information (e.g. a constant-zero column)
        eigs = np.linalg.eigvalsh(-lk.hessian_xi_xi(ds, theta, kernel))
        if eigs[0] < opts.ridge_floor:
            raise DegenerateFitError(
                f"curvature in xi is degenerate at the solution "
                f"(smallest eigenvalue {eigs[0]:.3e})")
    return xi, f, converged


def maximize_psi_given_xi(ds: Dataset, xi, psi0, kernel: KernelSpec,
                          opts: FitOptions):
    """Gradient ascent in psi with xi held fixed.

    Armijo backtracking from a unit initial trial step; subsequent
    iterations reuse double the last accepted step so the search adapts to
    the 1/h^2 curvature scale. Convergence is declared on the
    bandwidth-scaled gradient norm. Returns (psi, loglik, converged).
    """
    p1 = ds.dims[0]
    xi = np.asarray(xi, dtype=float)
    psi = np.asarray(psi0, dtype=float).copy()
    theta = ThetaParams(beta=xi[:p1], gamma=xi[p1:], psi=psi)
    f = lk.smoothed_log_partial_likelihood(ds, theta, kernel)
    if not np.isfinite(f):
        raise InvalidStartError("objective is not finite at the psi start")
    h = kernel.bandwidth

    converged = False
    t_init = 1.0
    for _ in range(opts.ascent_max_iter):
        g = lk.score_psi(ds, theta, kernel)
        gnorm2 = float(g @ g)
        if h * np.max(np.abs(g), initial=0.0) < opts.ascent_tol:
            converged = True
            break
        t = t_init
        accepted = False
        first_try = True
        for _ in range(opts.armijo_max_halvings + 1):
            cand = theta.with_psi(psi + t * g)
            f_new = lk.smoothed_log_partial_likelihood(ds, cand, kernel)
            if np.isfinite(f_new) and f_new >= f + opts.armijo_c * t * gnorm2:
                theta, psi, f = cand, psi + t * g, f_new
                accepted = True
                break
            first_try = False
            t *= opts.armijo_shrink
            if t * gnorm2 < 1e-18:
                break
        if not accepted:
            # step collapse: the Armijo increment fell below roundoff
            converged = h * np.max(np.abs(g), initial=0.0) < 1e-6
            break
        # grow the step memory only after a first-try acceptance so the
        # search settles near the local curvature scale
        t_init = min(2.0 * t, 1.0e6) if first_try else t
    else:
        if opts.ascent_max_iter > 0:
            g = lk.score_psi(ds, theta, kernel)
            converged = h * np.max(np.abs(g), initial=0.0) < opts.ascent_tol
    return psi, f, converged


def cox_initial_xi(ds: Dataset, kernel: KernelSpec, opts: FitOptions) -> np.ndarray:
    """xi start shared by every psi start: beta from a gamma = 0 Cox fit
    on Z alone, gamma = 0."""
    p1, p2, q = ds.dims
    if p1 == 0:
        return np.zeros(p2)
    # gamma = 0 makes the smoothed objective coincide with a plain Cox
    # partial likelihood in beta, so the same Newton machinery applies
    # with the gamma block pinned at zero
    beta = np.zeros(p1)
    psi = np.zeros(q)
    theta = ThetaParams(beta=beta, gamma=np.zeros(p2), psi=psi)
    f = lk.smoothed_log_partial_likelihood(ds, theta, kernel)
    for _ in range(opts.newton_max_iter):
        g = lk.score_xi(ds, theta, kernel)[:p1]
        if np.max(np.abs(g), initial=0.0) < opts.newton_tol:
            break
        neg_h = -lk.hessian_xi_xi(ds, theta, kernel)[:p1, :p1]
        eigs = np.linalg.eigvalsh(neg_h)
        if eigs[0] < opts.ridge_floor:
            neg_h = neg_h + (opts.ridge_floor - eigs[0] + opts.ridge_floor) * np.eye(p1)
        step = np.linalg.solve(neg_h, g)
        t = 1.0
        for _ in range(opts.armijo_max_halvings + 1):
            cand = ThetaParams(beta=beta + t * step, gamma=np.zeros(p2), psi=psi)
            f_new = lk.smoothed_log_partial_likelihood(ds, cand, kernel)
            if np.isfinite(f_new) and f_new >= f:
                theta, beta, f = cand, beta + t * step, f_new
                break
            t *= opts.armijo_shrink
        else:
            break
    return np.concatenate([beta, np.zeros(p2)])


def alternate_fit(ds: Dataset, psi_start, kernel: KernelSpec,
                  opts: FitOptions, xi_init=None) -> FitResult:
    """One full alternating run from a single psi start."""
    p1, p2, q = ds.dims
    psi = np.asarray(psi_start, dtype=float)
    if len(psi) != q:
        raise InvalidStartError(f"psi start has length {len(psi)}, expected {q}")
    xi = np.asarray(xi_init, dtype=float) if xi_init is not None \
        else cox_initial_xi(ds, kernel, opts)

    theta = ThetaParams(beta=xi[:p1], gamma=xi[p1:], psi=psi)
    f = lk.smoothed_log_partial_likelihood(ds, theta, kernel)
    if not np.isfinite(f):
        raise InvalidStartError("objective is not finite at the start")

    trace = []
    converged = False
    xi_conv = psi_conv = False
    for _ in range(opts.outer_max_iter):
        f_prev = f
        xi, f, xi_conv = maximize_xi_given_psi(ds, xi, psi, kernel, opts)
        psi, f, psi_conv = maximize_psi_given_xi(ds, xi, psi, kernel, opts)
        theta = ThetaParams(beta=xi[:p1], gamma=xi[p1:], psi=psi)
        trace.append(TraceRecord(
            loglik=f,
            score_xi_norm=float(np.max(np.abs(lk.score_xi(ds, theta, kernel)), initial=0.0)),
            score_psi_norm=float(np.max(np.abs(lk.score_psi(ds, theta, kernel)), initial=0.0)),
        ))
        if abs(f - f_prev) < opts.outer_tol:
            converged = True
            break
    return FitResult(
        theta_hat=theta,
        loglik=f,
        converged=converged,
        bandwidth_used=kernel.bandwidth,
        n_starts=1,
        best_start=np.asarray(psi_start, dtype=float),
        trace=tuple(trace),
        diagnostics={"xi_step_converged": bool(xi_conv),
                     "psi_step_converged": bool(psi_conv),
                     "psi_norm": float(np.linalg.norm(psi))},
    )


def multistart_fit(ds: Dataset, kernel: KernelSpec | None = None,
                   opts: FitOptions | None = None) -> FitResult:
    """Run alternate_fit from every configured psi start and keep the
    highest final objective; ties break on smallest ||psi_hat||, then on
    start order, so the result is deterministic."""
    opts = opts or FitOptions()
    if kernel is None:
        kernel = KernelSpec(bandwidth=opts.resolve_bandwidth(ds.n))
    q = ds.dims[2]
    starts = _halfspace_starts(q, opts)
    xi_init = cox_initial_xi(ds, kernel, opts)

    best = None
    best_key = None
    failures = []
    for idx, start in enumerate(starts):
        try:
            res = alternate_fit(ds, start, kernel, opts, xi_init=xi_init)
        except (InvalidStartError, DegenerateFitError) as exc:
            failures.append((np.asarray(start, float), exc))
            continue
        key = (-res.loglik, np.linalg.norm(res.theta_hat.psi), idx)
        if best is None or key < best_key:
            best, best_key = res, key
    if best is None:
        raise AllStartsFailedError(
            f"all {len(starts)} starts failed", causes=failures)
    return FitResult(
        theta_hat=best.theta_hat,
        loglik=best.loglik,
        converged=best.converged,
        bandwidth_used=kernel.bandwidth,
        n_starts=len(starts),
        best_start=best.best_start,
        trace=best.trace,
        diagnostics={**best.diagnostics, "n_failed_starts": len(failures)},
    )
