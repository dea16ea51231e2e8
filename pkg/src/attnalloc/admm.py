"""Per-step splitting of the window subproblem (scaled-dual ADMM).

Consensus copies S_pred/S_filt carry the chain LMIs, so the X-update
decomposes into one proximal subproblem per time step (solved by the
barrier engine, no cross-step constraints) and the Z-update into pairwise
LMI projections; both scale linearly in the horizon, as does the dual
sweep.  Fan-out over a worker pool is optional and results are merged in
step order, so residual histories are deterministic for a fixed
configuration.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .subsolver import (
    ConvexSubproblem,
    Infeasible,
    MaxIterations,
    StepBlock,
    SubsolverFailure,
    solve as barrier_solve,
    solve_zstep,
)

__all__ = ["AdmmConfig", "AdmmState", "AdmmRunReport", "init_state",
           "x_update", "z_update", "dual_update", "run"]


@dataclass
class AdmmConfig:
    rho: float = 1.0
    eps_primal: float = 1e-5
    eps_dual: float = 1e-5
    max_iter: int = 500
    parallel_workers: int = 1
    adapt_rho: bool = False
    x_tol: float = 1e-9
    z_tol: float = 1e-11


@dataclass
class AdmmState:
    """Primal blocks, slack copies, scaled duals and solve diagnostics."""

    Q_pred: list
    Q_filt: list
    u: list
    S_pred: list
    S_filt: list
    D_pred: list
    D_filt: list
    rho: float
    iterations: int = 0
    converged: bool = False
    primal_history: list = field(default_factory=list)
    dual_history: list = field(default_factory=list)
    iter_seconds: list = field(default_factory=list)
    x_warm: list = field(default_factory=list)
    t_warm: list = field(default_factory=list)


@dataclass
class AdmmRunReport:
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    iter_seconds: list


def init_state(problem, cfg: AdmmConfig) -> AdmmState:
    """Start from the zero-attention equality chain with zero duals."""
    from .allocator import feasible_init  # deferred: allocator imports this module

    Q_pred, Q_filt, u = feasible_init(problem)
    H = problem.horizon
    zeros = [np.zeros_like(problem.W) for _ in range(H + 1)]
    return AdmmState(
        Q_pred=[m.copy() for m in Q_pred],
        Q_filt=[m.copy() for m in Q_filt],
        u=[v.copy() for v in u],
        S_pred=[m.copy() for m in Q_pred],
        S_filt=[m.copy() for m in Q_filt],
        D_pred=[m.copy() for m in zeros],
        D_filt=[m.copy() for m in zeros],
        rho=cfg.rho,
        x_warm=[None] * (H + 1),
        t_warm=[None] * (H + 1),
    )


def _step_block(problem, G, state, k) -> ConvexSubproblem:
    return ConvexSubproblem(
        [
            StepBlock(
                Theta=problem.Theta[k],
                G=np.asarray(G[k], dtype=float),
                C=problem.C[k],
                caps=problem.vhat_inv.copy(),
                q_fixed=problem.Q_init.copy() if k == 0 else None,
                rho=state.rho,
                prox_pred=None if k == 0 else state.S_pred[k] - state.D_pred[k],
                prox_filt=state.S_filt[k] - state.D_filt[k],
            )
        ],
        beta_half=0.5 * problem.beta,
    )


def x_update(state: AdmmState, problem, G, cfg: AdmmConfig) -> None:
    """Solve the per-step proximal subproblems and write back by index."""

    def solve_one(k):
        sub = _step_block(problem, G, state, k)
        t0 = None if state.t_warm[k] is None else max(1.0, state.t_warm[k] / 100.0)
        try:
            return barrier_solve(sub, tol=cfg.x_tol, x0=state.x_warm[k], t0=t0)
        except Infeasible:
            # stale warm start (rho jumps or fresh linearization); cold restart
            return barrier_solve(sub, tol=cfg.x_tol)
        except MaxIterations as exc:
            raise SubsolverFailure(str(exc), step=k) from exc

    H = problem.horizon
    if cfg.parallel_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel_workers) as pool:
            results = list(pool.map(solve_one, range(H + 1)))
    else:
        results = [solve_one(k) for k in range(H + 1)]
    for k, res in enumerate(results):
        state.Q_pred[k] = res.Q_pred[0]
        state.Q_filt[k] = res.Q_filt[0]
        state.u[k] = res.u[0]
        state.x_warm[k] = res.x
        state.t_warm[k] = res.t_final


def z_update(state: AdmmState, problem, cfg: AdmmConfig) -> None:
    """Project slack targets onto the chain LMIs, pair by pair."""
    H = problem.horizon
    pred_targets = [state.Q_pred[k] + state.D_pred[k] for k in range(H + 1)]
    filt_targets = [state.Q_filt[k] + state.D_filt[k] for k in range(H + 1)]
    S_pred, S_filt = solve_zstep(
        pred_targets,
        filt_targets,
        problem.A,
        problem.W,
        problem.Q_init,
        tol=cfg.z_tol,
        workers=cfg.parallel_workers,
    )
    state.S_pred = S_pred
    state.S_filt = S_filt


def dual_update(state: AdmmState) -> None:
    """Scaled dual ascent on both consensus families."""
    for k in range(len(state.Q_pred)):
        state.D_pred[k] = state.D_pred[k] + state.Q_pred[k] - state.S_pred[k]
        state.D_filt[k] = state.D_filt[k] + state.Q_filt[k] - state.S_filt[k]


def _residuals(state: AdmmState, S_pred_old, S_filt_old):
    primal = 0.0
    dual = 0.0
    for k in range(len(state.Q_pred)):
        primal = max(primal, float(np.linalg.norm(state.Q_pred[k] - state.S_pred[k])))
        primal = max(primal, float(np.linalg.norm(state.Q_filt[k] - state.S_filt[k])))
        dual = max(dual, state.rho * float(np.linalg.norm(state.S_pred[k] - S_pred_old[k])))
        dual = max(dual, state.rho * float(np.linalg.norm(state.S_filt[k] - S_filt_old[k])))
    return primal, dual


def run(problem, G, cfg: AdmmConfig | None = None, state: AdmmState | None = None):
    """Iterate X/Z/dual updates until both residuals clear their tolerances.

    Returns the (possibly warm-started) state plus a per-call report; on
    hitting max_iter the best-so-far iterate is returned with
    ``converged=False`` rather than raising, since the outer loop's descent
    safeguard copes with an inexact subsolve.
    """
    cfg = cfg or AdmmConfig()
    if state is None:
        state = init_state(problem, cfg)
    primal = dual = np.inf
    iters = 0
    seconds = []
    for _ in range(cfg.max_iter):
        tic = time.perf_counter()
        S_pred_old = [m.copy() for m in state.S_pred]
        S_filt_old = [m.copy() for m in state.S_filt]
        x_update(state, problem, G, cfg)
        z_update(state, problem, cfg)
        dual_update(state)
        primal, dual = _residuals(state, S_pred_old, S_filt_old)
        seconds.append(time.perf_counter() - tic)
        state.primal_history.append(primal)
        state.dual_history.append(dual)
        state.iterations += 1
        iters += 1
        if cfg.adapt_rho and iters % 10 == 0:
            if primal > 10.0 * dual:
                state.rho *= 2.0
                _rescale_duals(state, 0.5)
            elif dual > 10.0 * primal:
                state.rho *= 0.5
                _rescale_duals(state, 2.0)
        if primal <= cfg.eps_primal and dual <= cfg.eps_dual:
            state.converged = True
            break
    else:
        state.converged = False
    state.iter_seconds.extend(seconds)
    return state, AdmmRunReport(
        iterations=iters,
        converged=state.converged,
        primal_residual=primal,
        dual_residual=dual,
        iter_seconds=seconds,
    )


def _rescale_duals(state: AdmmState, factor: float) -> None:
    # scaled duals are D = Y / rho; changing rho rescales them
    for k in range(len(state.D_pred)):
        state.D_pred[k] = state.D_pred[k] * factor
        state.D_filt[k] = state.D_filt[k] * factor
