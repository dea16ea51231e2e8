"""Finite-horizon LQG synthesis: backward Riccati sweep, gains and the cost
decomposition whose estimation-dependent part drives the attention allocator.

Indexing is zero-based over mission steps 0..T-1.  The tape entry S[t] is the
value weight acting at step t (terminal S[T-1] equals the state penalty), the
gain K[t] uses S[t+1], and Theta[t] prices the filtered covariance at step t;
the final step has no control, so K[T-1] and Theta[T-1] are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import ControlInput, LtvWindow
from .symmetric import NotPositiveDefinite, SpdMatrix, SymMatrix, cholesky, inverse

__all__ = [
    "SingularInnerMatrix",
    "CostWeights",
    "RiccatiTape",
    "backward_riccati",
    "control",
    "expected_cost",
    "scalar_stationary_weight",
]


class SingularInnerMatrix(Exception):
    """B' S B + R lost positive definiteness (impossible for R > 0)."""


@dataclass(frozen=True)
class CostWeights:
    """Quadratic penalties: Q on the state deviation, R on the input."""

    Q: SpdMatrix
    R: SpdMatrix


@dataclass(frozen=True)
class RiccatiTape:
    """Backward-pass products over the full mission.

    S : tuple of SpdMatrix, len T, S[T-1] == Q
    K : (T, m, n) feedback gains, K[T-1] == 0
    Theta : tuple of SymMatrix cost-sensitivity weights, Theta[T-1] == 0
    """

    S: tuple
    K: np.ndarray
    Theta: tuple


def backward_riccati(ltv: LtvWindow, weights: CostWeights) -> RiccatiTape:
    """Dynamic Riccati recursion over the whole mission window.

    S[t-1] = Q + A' S[t] A - A' S[t] B (B' S[t] B + R)^-1 B' S[t] A with
    terminal S[T-1] = Q, where (A, B) map step t-1 to t.
    """
    T = len(ltv)
    if T < 1:
        raise ValueError("horizon must contain at least one step")
    Qw = weights.Q.full()
    Rw = weights.R.full()
    n = Qw.shape[0]
    m = Rw.shape[0]

    S_full = [None] * T
    K = np.zeros((T, m, n))
    Theta = [None] * T
    S_full[T - 1] = Qw
    Theta[T - 1] = SymMatrix.zeros(n)
    for t in range(T - 2, -1, -1):
        A, B = ltv.A[t], ltv.B[t]
        S_next = S_full[t + 1]
        inner = B.T @ S_next @ B + Rw
        try:
            cholesky(inner)
        except NotPositiveDefinite as exc:
            raise SingularInnerMatrix(f"at step {t}: {exc}") from exc
        gain = -np.linalg.solve(inner, B.T @ S_next @ A)
        K[t] = gain
        Theta[t] = SymMatrix.from_full(gain.T @ inner @ gain)
        S_full[t] = Qw + A.T @ S_next @ A + A.T @ S_next @ B @ gain

    S = tuple(SpdMatrix.from_full(s) for s in S_full)
    return RiccatiTape(S=S, K=K, Theta=tuple(Theta))


def control(K_t: np.ndarray, xhat: np.ndarray) -> ControlInput:
    """Certainty-equivalent feedback in deviation coordinates."""
    u = np.asarray(K_t) @ np.asarray(xhat, dtype=float)
    return ControlInput(u[0], u[1])


def expected_cost(
    tape: RiccatiTape,
    Q_filtered,
    W: SpdMatrix,
    P_init: SpdMatrix,
) -> tuple[float, float]:
    """Predicted LQG cost split into its allocation-dependent and constant parts.

    variable = sum_t trace(Theta[t] @ P_{t|t}) with P_{t|t} = Q_filtered[t]^-1;
    constant = trace((S[0]-Q) P_init) + sum_{t>=1} trace(S[t] W).  Only the
    variable part responds to attention; the constant is reported for logging.
    """
    T = len(tape.S)
    if len(Q_filtered) != T:
        raise ValueError("need one filtered information matrix per step")
    variable = 0.0
    for t in range(T):
        theta = tape.Theta[t].full()
        if not theta.any():
            continue
        P = inverse(Q_filtered[t]).full()
        variable += float(np.sum(theta * P))
    Wf = W.full()
    Qw = tape.S[-1].full()
    constant = float(np.sum((tape.S[0].full() - Qw) * P_init.full()))
    for t in range(1, T):
        constant += float(np.sum(tape.S[t].full() * Wf))
    return variable, constant


def scalar_stationary_weight(a: float, b: float, q: float, r: float) -> float:
    """Stationary limit of Theta for a scalar time-invariant system.

    Iterates the scalar Riccati map s <- q + a^2 s r / (b^2 s + r) to its
    fixed point, then returns theta = a^2 b^2 s^2 / (b^2 s + r).
    """
    if q <= 0 or r <= 0:
        raise ValueError("q and r must be positive")
    s = q
    for _ in range(100000):
        s_next = q + (a * a) * s * r / (b * b * s + r)
        if abs(s_next - s) <= 1e-14 * max(1.0, abs(s)):
            s = s_next
            break
        s = s_next
    inner = b * b * s + r
    k = -a * b * s / inner
    return float(k * k * inner)
