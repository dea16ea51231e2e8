"""Comparison and oracle algorithms.

Two independent reference points for the allocator: a cardinality-budgeted
greedy landmark selector (pick the best k landmarks at full accuracy, one at
a time), and the closed-form stationary solution of the scalar
time-invariant problem, whose three regimes (full measurement, graded
interior, no measurement) explain the bang-bang tendency of the vector
allocations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symmetric import SpdMatrix

__all__ = [
    "Diverges",
    "GreedyBudget",
    "ScalarSystem",
    "greedy_select",
    "scalar_riccati_fixed_point",
    "scalar_stationary_solution",
    "scalar_regime_thresholds",
]


class Diverges(Exception):
    """Open-loop variance diverges: no measurement and |a| >= 1."""


@dataclass(frozen=True)
class GreedyBudget:
    """Number of landmarks observed (at full accuracy) per step."""

    k_select: int

    def __post_init__(self):
        if self.k_select < 0:
            raise ValueError("budget must be nonnegative")


@dataclass(frozen=True)
class ScalarSystem:
    """Scalar time-invariant instance: x' = a x + b u + w, y = x + v.

    The input gain is absorbed into the stationary cost weight theta; vhat
    is the best-case measurement variance, beta the rate weight.
    """

    a: float
    W: float
    theta: float
    vhat: float
    beta: float = 0.0

    def __post_init__(self):
        if self.W <= 0 or self.theta <= 0 or self.vhat <= 0:
            raise ValueError("W, theta and vhat must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


def greedy_select(Q_prior, Theta, C, vhat_inv, budget: GreedyBudget):
    """Pick ``budget`` landmarks one at a time, each minimizing the cost
    trace(Theta (Q + sum_selected cap_i c_i c_i')^-1); ties go to the lower
    index.  Selected landmarks are meant to be observed at full accuracy."""
    Q = Q_prior.full() if isinstance(Q_prior, SpdMatrix) else np.asarray(Q_prior, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    C = np.asarray(C, dtype=float)
    caps = np.asarray(vhat_inv, dtype=float).reshape(-1)
    M = C.shape[0]
    if budget.k_select > M:
        raise ValueError("budget exceeds the number of landmarks")
    selected: list[int] = []
    Q_cur = Q.copy()
    for _ in range(budget.k_select):
        best_i, best_cost = -1, np.inf
        for i in range(M):
            if i in selected:
                continue
            Q_try = Q_cur + caps[i] * np.outer(C[i], C[i])
            cost = float(np.sum(Theta * np.linalg.inv(Q_try)))
            if cost < best_cost - 1e-15:
                best_i, best_cost = i, cost
        selected.append(best_i)
        Q_cur = Q_cur + caps[best_i] * np.outer(C[best_i], C[best_i])
    return selected


def scalar_riccati_fixed_point(sys: ScalarSystem, V: float) -> float:
    """Stationary filtered variance P = g(V): unique positive root of
    1/P = 1/(a^2 P + W) + 1/V, found by bisection to 1e-12 relative."""
    a2 = sys.a * sys.a
    if np.isinf(V):
        if abs(sys.a) >= 1.0:
            raise Diverges("|a| >= 1 with no measurement")
        return sys.W / (1.0 - a2)
    if V <= 0:
        raise ValueError("V must be positive")

    def resid(p):
        return 1.0 / (a2 * p + sys.W) + 1.0 / V - 1.0 / p

    lo = 1e-12
    hi = V + (sys.W / (1.0 - a2) if abs(sys.a) < 1.0 else sys.W)
    while resid(hi) < 0.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, lo):
            break
    return 0.5 * (lo + hi)


def scalar_regime_thresholds(sys: ScalarSystem, half_log: bool = True):
    """Rate weights at which the interior stationary point crosses the
    endpoints: beta(P) = theta P (a^2 P + W) / (lw * W) evaluated at
    P = g(vhat) and at P = g(inf), with lw = 1/2 for the half-log objective."""
    if abs(sys.a) >= 1.0:
        raise Diverges("thresholds need |a| < 1")
    lw = 0.5 if half_log else 1.0
    a2 = sys.a * sys.a

    def beta_of(P):
        return sys.theta * P * (a2 * P + sys.W) / (lw * sys.W)

    beta1 = beta_of(scalar_riccati_fixed_point(sys, sys.vhat))
    beta2 = beta_of(sys.W / (1.0 - a2))
    return float(beta1), float(beta2)


def scalar_stationary_solution(sys: ScalarSystem, half_log: bool = True):
    """Stationary optimum of theta*P + lw*beta*log(a^2 + W/P) over
    [g(vhat), g(inf)].

    Returns (P_star, V_star, regime) with regime 1 = full measurement
    (lower endpoint), 2 = graded interior, 3 = no measurement (upper
    endpoint, V = inf).  ``half_log=True`` uses lw = 1/2, the weight
    consistent with the rate term as optimized; False reproduces the
    alternative lw = 1 convention (4 a^2 theta W beta under the root).
    """
    if abs(sys.a) >= 1.0:
        raise Diverges("stationary solution needs |a| < 1")
    lw = 0.5 if half_log else 1.0
    a2 = sys.a * sys.a
    P_lo = scalar_riccati_fixed_point(sys, sys.vhat)
    P_hi = sys.W / (1.0 - a2)

    if sys.beta == 0.0:
        return P_lo, sys.vhat, 1
    beta1, beta2 = scalar_regime_thresholds(sys, half_log=half_log)
    if sys.beta <= beta1:
        return P_lo, sys.vhat, 1
    if sys.beta > beta2:
        return P_hi, np.inf, 3
    if a2 == 0.0:
        P = lw * sys.beta / sys.theta
    else:
        disc = (sys.theta * sys.W) ** 2 + 4.0 * a2 * sys.theta * lw * sys.beta * sys.W
        P = (-sys.theta * sys.W + np.sqrt(disc)) / (2.0 * sys.theta * a2)
    P = min(max(P, P_lo), P_hi)
    inv_v = 1.0 / P - 1.0 / (a2 * P + sys.W)
    V = np.inf if inv_v <= 0.0 else 1.0 / inv_v
    return float(P), float(V), 2
