"""Receding-horizon, rate-regularized attention allocation over one window.

The window problem trades the predicted LQG cost sum_k trace(Theta_k
Q_filt,k^-1) against the information rate of the measurement stream,
(1/2) sum_k (logdet Q_filt,k - logdet Q_pred,k), weighted by beta.  The rate
term is accounted in nats inside the optimizer and reported in bits.

The non-convex piece (+logdet Q_filt) is handled by a convex-concave outer
loop: each iteration replaces it with its tangent at the current iterate and
solves the resulting max-det subproblem with either the centralized barrier
solver or the per-step splitting method.  A descent safeguard keeps the true
objective non-increasing across iterations even under inexact subsolves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import admm as admm_mod
from .filtering import AttentionVector
from .subsolver import (
    BarrierConfig,
    ConvexSubproblem,
    Infeasible,
    MaxIterations,
    StepBlock,
    SubsolverFailure,
    interior_chain,
    pack_point,
    solve as barrier_solve,
)
from .symmetric import SpdMatrix

__all__ = [
    "WindowProblem",
    "CcpConfig",
    "AllocationSolution",
    "directed_info",
    "feasible_init",
    "reconstruct_consistent",
    "objective_value",
    "lmi_residual",
    "build_subproblem",
    "ccp_solve",
]

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class WindowProblem:
    """Immutable data of one receding-horizon allocation window.

    Theta and C have one entry per window step (H+1 of them); A has one per
    transition (H).  Q_init is the predicted information entering the
    window, caps are the per-landmark attention bounds, beta weighs the
    information-rate term.
    """

    Theta: tuple
    C: tuple
    A: tuple
    W: np.ndarray
    Q_init: np.ndarray
    vhat_inv: np.ndarray
    beta: float

    def __post_init__(self):
        if len(self.C) != len(self.Theta) or len(self.A) != len(self.C) - 1:
            raise ValueError("need H+1 Theta/C blocks and H transition matrices")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        object.__setattr__(self, "Theta", tuple(np.asarray(m, dtype=float) for m in self.Theta))
        object.__setattr__(self, "C", tuple(np.asarray(m, dtype=float) for m in self.C))
        object.__setattr__(self, "A", tuple(np.asarray(m, dtype=float) for m in self.A))
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "Q_init", np.asarray(self.Q_init, dtype=float))
        object.__setattr__(self, "vhat_inv", np.asarray(self.vhat_inv, dtype=float).reshape(-1))

    @property
    def horizon(self) -> int:
        return len(self.C) - 1

    @property
    def dim(self) -> int:
        return self.Q_init.shape[0]


@dataclass
class CcpConfig:
    """Outer-loop controls; the subsolver tolerances ride along."""

    tol: float = 1e-6
    max_iter: int = 50
    barrier_tol: float = 1e-7
    snap_tol: float = 1e-5
    barrier: BarrierConfig = field(default_factory=BarrierConfig)


@dataclass(frozen=True)
class AllocationSolution:
    """Allocation for one window plus the consistent information chain."""

    u_star: tuple
    Q_pred: tuple
    Q_filt: tuple
    objective: float
    di_bits: float
    ccp_iterations: int
    trace_cost: float
    objective_history: tuple
    admm_iterations: int = 0
    wall_seconds: float = 0.0


def _logdet(a) -> float:
    sign, ld = np.linalg.slogdet(np.asarray(a, dtype=float))
    if sign <= 0:
        raise ValueError("matrix must be positive definite")
    return float(ld)


def directed_info(Q_filt, Q_pred) -> float:
    """Information rate of the window in bits: sum of half log-det ratios."""
    if len(Q_filt) != len(Q_pred):
        raise ValueError("sequences must be aligned")
    nats = 0.0
    for Qf, Qp in zip(Q_filt, Q_pred):
        Qf = Qf.full() if isinstance(Qf, SpdMatrix) else Qf
        Qp = Qp.full() if isinstance(Qp, SpdMatrix) else Qp
        nats += 0.5 * (_logdet(Qf) - _logdet(Qp))
    return nats / LN2


def feasible_init(p: WindowProblem):
    """Zero-attention chain: u = 0, equality prediction recursion, DI = 0."""
    H = p.horizon
    u = [np.zeros_like(p.vhat_inv) for _ in range(H + 1)]
    Q_pred = [p.Q_init.copy()]
    for k in range(1, H + 1):
        P = np.linalg.inv(Q_pred[k - 1])
        Q_pred.append(np.linalg.inv(p.A[k - 1] @ P @ p.A[k - 1].T + p.W))
    Q_filt = [Qp.copy() for Qp in Q_pred]
    return Q_pred, Q_filt, u


def reconstruct_consistent(p: WindowProblem, u):
    """Equality-Riccati chain for a fixed allocation, from the window boundary.

    Starting at Q_pred[0] = Q_init, alternates the measurement equality and
    the exact prediction recursion; the result satisfies both window
    constraints with equality and never scores worse than any relaxed chain
    carrying the same allocation.
    """
    H = p.horizon
    Q_pred = [p.Q_init.copy()]
    Q_filt = []
    for k in range(H + 1):
        uk = np.asarray(u[k], dtype=float)
        Q_filt.append(Q_pred[k] + p.C[k].T @ (uk[:, None] * p.C[k]))
        if k < H:
            P = np.linalg.inv(Q_filt[k])
            Q_next = np.linalg.inv(p.A[k] @ P @ p.A[k].T + p.W)
            Q_pred.append(0.5 * (Q_next + Q_next.T))
    return Q_pred, Q_filt


def objective_value(p: WindowProblem, Q_pred, Q_filt) -> float:
    """True window objective (trace cost plus beta-weighted rate in nats)."""
    val = 0.0
    for k in range(p.horizon + 1):
        Qf = Q_filt[k].full() if isinstance(Q_filt[k], SpdMatrix) else Q_filt[k]
        Qp = Q_pred[k].full() if isinstance(Q_pred[k], SpdMatrix) else Q_pred[k]
        val += float(np.sum(p.Theta[k] * np.linalg.inv(Qf)))
        if p.beta > 0.0:
            val += 0.5 * p.beta * (_logdet(Qf) - _logdet(Qp))
    return val


def lmi_residual(p: WindowProblem, Q_pred, Q_filt) -> float:
    """Smallest eigenvalue across the window's prediction LMIs (>= 0 feasible)."""
    worst = np.inf
    for k in range(1, p.horizon + 1):
        Qp = Q_pred[k].full() if isinstance(Q_pred[k], SpdMatrix) else Q_pred[k]
        Qf = Q_filt[k - 1].full() if isinstance(Q_filt[k - 1], SpdMatrix) else Q_filt[k - 1]
        # Q_pred[k]^-1 >= A P A' + W  <=>  P_pred - (A P A' + W) psd-ordered
        lhs = np.linalg.inv(Qp)
        rhs = p.A[k - 1] @ np.linalg.inv(Qf) @ p.A[k - 1].T + p.W
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (lhs + lhs.T) - rhs)[0]))
    return worst if p.horizon >= 1 else 0.0


def build_subproblem(p: WindowProblem, G, rho: float = 0.0, prox_pred=None, prox_filt=None,
                     coupled: bool = True) -> ConvexSubproblem:
    """Materialize the convexified subproblem at linearization weights G.

    G[k] must be (beta/2) * inverse of the current filtered-information
    iterate; the concave +logdet Q_filt term of the true objective is
    replaced by <G[k], Q_filt,k> (tangent over-approximation).
    """
    steps = []
    for k in range(p.horizon + 1):
        steps.append(
            StepBlock(
                Theta=p.Theta[k],
                G=np.asarray(G[k], dtype=float),
                C=p.C[k],
                caps=p.vhat_inv.copy(),
                q_fixed=p.Q_init.copy() if k == 0 else None,
                rho=rho,
                prox_pred=None if prox_pred is None else prox_pred[k],
                prox_filt=None if prox_filt is None else prox_filt[k],
            )
        )
    if coupled and p.horizon >= 1:
        return ConvexSubproblem(steps, beta_half=0.5 * p.beta, A=np.asarray(p.A), W=p.W)
    return ConvexSubproblem(steps, beta_half=0.5 * p.beta)


def _linearization_weights(p: WindowProblem, Q_filt):
    return [0.5 * p.beta * np.linalg.inv(Qf) for Qf in Q_filt]


def _validate(p: WindowProblem, u, Q_pred, Q_filt):
    res = lmi_residual(p, Q_pred, Q_filt)
    if res < -1e-8:
        raise SubsolverFailure(f"reconstructed chain violates the prediction LMI ({res})")
    for k in range(p.horizon + 1):
        uk = np.asarray(u[k])
        if np.any(uk < -1e-12) or np.any(uk > p.vhat_inv + 1e-9):
            raise SubsolverFailure(f"allocation outside caps at window step {k}")


def ccp_solve(
    p: WindowProblem,
    cfg: CcpConfig | None = None,
    method: str = "centralized",
    admm_cfg=None,
) -> AllocationSolution:
    """Outer convex-concave loop over the window problem.

    Starts from the always-feasible zero-attention chain, solves tangent
    subproblems until the relative decrease of the true objective falls
    under cfg.tol (or max_iter), snaps vanishing allocations to exact zero
    and returns the equality-consistent chain.
    """
    cfg = cfg or CcpConfig()
    if method not in ("centralized", "admm"):
        raise ValueError(f"unknown subsolver method {method!r}")
    t_start = time.perf_counter()

    Q_pred, Q_filt, u = feasible_init(p)
    J = objective_value(p, Q_pred, Q_filt)
    history = [J]

    x_warm = None
    t_warm = None
    admm_state = None
    admm_iters = 0
    iterations = 0

    for j in range(cfg.max_iter):
        G = _linearization_weights(p, Q_filt)
        sub = build_subproblem(p, G, coupled=(method == "centralized"))
        try:
            if method == "centralized":
                if x_warm is None:
                    Qp0, u0 = interior_chain(
                        p.Q_init, p.A, p.W, list(p.C), [p.vhat_inv] * (p.horizon + 1)
                    )
                    x_warm = pack_point(sub, Qp0, u0)
                res = barrier_solve(sub, tol=cfg.barrier_tol, x0=x_warm, t0=t_warm, cfg=cfg.barrier)
                cand_Qp, cand_u = res.Q_pred, res.u
                x_next, t_next = res.x, res.t_final
            else:
                admm_state, run_report = admm_mod.run(p, G, admm_cfg, state=admm_state)
                admm_iters += run_report.iterations
                cand_Qp = [m.copy() for m in admm_state.Q_pred]
                cand_u = [v.copy() for v in admm_state.u]
                x_next = t_next = None
        except (Infeasible, MaxIterations) as exc:
            raise SubsolverFailure(str(exc), iteration=j) from exc

        iterations = j + 1
        cand_Qf = [
            cand_Qp[k] + p.C[k].T @ (cand_u[k][:, None] * p.C[k]) for k in range(p.horizon + 1)
        ]
        J_new = objective_value(p, cand_Qp, cand_Qf)
        if not np.isfinite(J_new) or J_new > J:
            break  # inexact subsolve produced no descent; keep the last iterate
        Q_pred, Q_filt, u = cand_Qp, cand_Qf, cand_u
        if method == "centralized":
            x_warm, t_warm = x_next, max(1.0, t_next / 1e3)
        history.append(J_new)
        decrease = J - J_new
        J = J_new
        if decrease <= cfg.tol * max(1.0, abs(J)):
            break

    u_final = [np.where(uk < cfg.snap_tol * p.vhat_inv, 0.0, np.minimum(uk, p.vhat_inv)) for uk in u]
    Q_pred_f, Q_filt_f = reconstruct_consistent(p, u_final)
    _validate(p, u_final, Q_pred_f, Q_filt_f)

    di_bits = directed_info(Q_filt_f, Q_pred_f)
    trace_cost = float(
        sum(np.sum(p.Theta[k] * np.linalg.inv(Q_filt_f[k])) for k in range(p.horizon + 1))
    )
    return AllocationSolution(
        u_star=tuple(AttentionVector(uk, p.vhat_inv) for uk in u_final),
        Q_pred=tuple(SpdMatrix.from_full(m) for m in Q_pred_f),
        Q_filt=tuple(SpdMatrix.from_full(m) for m in Q_filt_f),
        objective=objective_value(p, Q_pred_f, Q_filt_f),
        di_bits=di_bits,
        ccp_iterations=iterations,
        trace_cost=trace_cost,
        objective_history=tuple(history),
        admm_iterations=admm_iters,
        wall_seconds=time.perf_counter() - t_start,
    )
