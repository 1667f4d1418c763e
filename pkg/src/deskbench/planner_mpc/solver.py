"""Augmented-Lagrangian solver with a projected Levenberg-Marquardt inner loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .nlp import NlpProblem, constraints, objective_residuals, rollout


@dataclass
class MpcSolution:
    controls: np.ndarray  # (N, 2)
    states: np.ndarray  # (N+1, 4)
    objective: float
    violation: float
    iterations: int  # inner iterations, summed over outer loops and starts
    outer_iterations: int
    status: str  # optimal | max-iter | infeasible
    stationarity: float = math.nan
    violation_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    multipliers: np.ndarray | None = None


class _Merit:
    """Residual form of the PHR augmented Lagrangian for fixed (lambda, rho)."""

    def __init__(self, problem: NlpProblem, lam, rho):
        self.problem = problem
        self.lam = lam
        self.rho = rho

    def evaluate(self, U, jacobian=True):
        X, S = rollout(self.problem, U, sensitivities=jacobian)
        r, Jr = objective_residuals(self.problem, U, X, S)
        g, Jg = constraints(self.problem, X, S)
        shifted = g + self.lam / self.rho
        active = shifted > 0.0
        sq = math.sqrt(self.rho / 2.0)
        ra = np.where(active, sq * shifted, 0.0)
        res = np.concatenate([r, ra])
        if not np.all(np.isfinite(res)):
            raise NumericError("non-finite residual", U.copy())
        jac = None
        if jacobian:
            jac = np.vstack([Jr, np.where(active[:, None], sq * Jg, 0.0)])
        return res, jac, g


def _lm_direction(U, grad, H, mu, lo, hi):
    """LM step on the variables not held at a bound.

    A variable within a small band of a bound whose gradient points outward
    is held fixed, so short steps along ``clip(U + alpha * d)`` descend.
    """
    band = 1e-6 * (hi - lo)
    held = ((U <= lo + band) & (grad > 0.0)) | ((U >= hi - band) & (grad < 0.0))
    free = ~held
    step = np.zeros_like(U)
    if free.any():
        Hf = H[np.ix_(free, free)]
        A = Hf + mu * (np.diag(np.diag(Hf)) + np.eye(int(free.sum())))
        step[free] = np.linalg.solve(A, -grad[free])
    return step


def _projected_gradient(U, grad, lo, hi):
    return U - np.clip(U - grad, lo, hi)


def _inner(merit: _Merit, U, lo, hi, max_iter, tol):
    """Projected LM with a backtracking fallback.

    Hinge residuals switch on abruptly, so a Gauss-Newton model built where
    they are inactive can overshoot into a steep region. When a full step
    fails, the step is halved along the projected path before giving up.
    ``tol`` is relative to the residual norm ``max(1, sqrt(merit))``.
    """
    iters = 0
    res, jac, _ = merit.evaluate(U)
    f = float(res @ res)
    mu = 1e-3
    for _ in range(max_iter):
        grad = 2.0 * jac.T @ res
        if np.max(np.abs(_projected_gradient(U, grad, lo, hi))) <= tol * max(1.0, math.sqrt(f)):
            break
        iters += 1
        step = _lm_direction(U, grad, 2.0 * jac.T @ jac, mu, lo, hi)
        trial, alpha = None, 1.0
        for _ in range(40):
            cand = np.clip(U + alpha * step, lo, hi)
            r_t, _, _ = merit.evaluate(cand, jacobian=False)
            if float(r_t @ r_t) < f:
                trial = cand
                break
            alpha *= 0.5
        if trial is None:
            break
        mu = max(mu / 3.0, 1e-9) if alpha == 1.0 else min(mu * 4.0, 1e9)
        U = trial
        res, jac, _ = merit.evaluate(U)
        f_prev, f = f, float(res @ res)
        if f_prev - f <= 1e-15 * max(1.0, f):
            break
    return U, iters


def _lagrangian_stationarity(problem, U, lam, lo, hi):
    X, S = rollout(problem, U)
    r, Jr = objective_residuals(problem, U, X, S)
    g, Jg = constraints(problem, X, S)
    grad = 2.0 * Jr.T @ r + Jg.T @ lam
    J = float(r @ r)
    return float(np.max(np.abs(_projected_gradient(U, grad, lo, hi)))), J, g


def constant_violation(problem: NlpProblem) -> float:
    """Violation of the constraints on ``p_0``, which no control can change."""
    X, _ = rollout(problem, np.zeros(problem.n_controls), sensitivities=False)
    g, _ = constraints(problem, X, None)
    n_first = int(problem.static_mask[0].sum())
    n_static = int(problem.static_mask.sum())
    fixed = np.concatenate([g[:n_first], g[n_static:n_static + 1]])
    return float(max(0.0, fixed.max()))


# Constant (steer fraction, accel fraction) seeds tried when the first start fails.
# A straight start is a saddle when an obstacle sits exactly on the path.
RESTART_SEEDS = ((0.15, 0.0), (-0.15, 0.0), (0.4, 0.0), (-0.4, 0.0),
                 (0.15, -0.5), (-0.15, -0.5), (0.0, -1.0))


def solve(problem: NlpProblem, U0=None, lam0=None, restarts: bool = True) -> MpcSolution:
    """Minimize the NLP from ``U0`` (zeros by default).

    If that start does not reach ``optimal`` and ``restarts`` is set, the
    constant-control seeds in :data:`RESTART_SEEDS` are tried and the best
    optimal result is returned. Iteration counts are summed over starts.
    """
    best = _solve_from(problem, U0, lam0)
    hopeless = constant_violation(problem) > problem.params.eps_g
    if best.status == "optimal" or not restarts or hopeless:
        return best
    b = problem.params.bicycle
    inner, outer = best.iterations, best.outer_iterations
    found = []
    for steer, accel in RESTART_SEEDS:
        a = accel * (-b.accel_min if accel < 0 else b.accel_max)
        seed = np.tile([steer * b.max_steer, a], problem.params.horizon)
        sol = _solve_from(problem, seed, None)
        inner += sol.iterations
        outer += sol.outer_iterations
        if sol.status == "optimal":
            found.append(sol)
    if found:
        best = min(found, key=lambda s: s.objective)
    best.iterations, best.outer_iterations = inner, outer
    return best


def _solve_from(problem: NlpProblem, U0, lam0) -> MpcSolution:
    """One augmented-Lagrangian run.

    Stationarity is the infinity norm of the projected Lagrangian gradient,
    measured relative to the residual norm ``max(1, sqrt(J))``. Outer iterates are only accepted if
    their violation does not exceed ``max(previous, eps_g)``.
    """
    p = problem.params
    n = p.horizon
    lo, hi = problem.lower(), problem.upper()
    U = np.clip(np.zeros(2 * n) if U0 is None else np.asarray(U0, dtype=float).ravel(), lo, hi)
    X, _ = rollout(problem, U, sensitivities=False)
    g, _ = constraints(problem, X, None)
    lam = np.zeros(len(g)) if lam0 is None or len(lam0) != len(g) else np.maximum(lam0, 0.0)
    viol = float(max(0.0, g.max()))
    trace_v, trace_j = [viol], []
    total_inner, outer, kkt = 0, 0, math.inf
    status = "max-iter"
    if constant_violation(problem) > p.eps_g:
        outer = p.max_outer + 1  # skip iterating: nothing can repair p_0
    rho, stalled = p.rho_init, 0
    while outer < p.max_outer:
        outer += 1
        U_new, it = _inner(_Merit(problem, lam, rho), U, lo, hi, p.max_inner, 0.1 * p.eps_kkt)
        total_inner += it
        X, _ = rollout(problem, U_new, sensitivities=False)
        g_new, _ = constraints(problem, X, None)
        viol_new = float(max(0.0, g_new.max()))
        if viol_new > max(viol, p.eps_g):
            # keep U but learn the multipliers the rejected iterate reveals
            lam = np.maximum(0.0, lam + rho * g_new)
            rho = min(rho * 10.0, p.rho_max)
            stalled += 1
        else:
            improved = viol_new <= max(0.5 * viol, p.eps_g)
            U, viol = U_new, viol_new
            lam = np.maximum(0.0, lam + rho * g_new)
            if improved:
                stalled = 0
            else:
                rho = min(rho * 10.0, p.rho_max)
                stalled += 1
        kkt, J, _ = _lagrangian_stationarity(problem, U, lam, lo, hi)
        trace_v.append(viol)
        trace_j.append(J)
        if viol <= p.eps_g and kkt <= p.eps_kkt * max(1.0, math.sqrt(J)):
            status = "optimal"
            break
        if stalled >= 6 and rho >= p.rho_max:
            break
    if status != "optimal" and (viol > p.eps_g or constant_violation(problem) > p.eps_g):
        status = "infeasible"
    X, _ = rollout(problem, U, sensitivities=False)
    r, _ = objective_residuals(problem, U, X, None)
    return MpcSolution(U.reshape(n, 2), X, float(r @ r), viol, total_inner, min(outer, p.max_outer),
                       status, kkt, trace_v, trace_j, lam)
