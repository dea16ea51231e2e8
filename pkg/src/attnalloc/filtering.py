"""Kalman filtering in information form with per-landmark attention scaling.

The filter carries Fisher information Q = P^-1 rather than covariance so that
zero attention (infinite measurement noise) stays representable: a landmark
with u_i = 0 simply contributes nothing, and its measurement is never read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import wrap_angle
from .symmetric import SpdMatrix, inverse

__all__ = ["AttentionVector", "Belief", "predict", "update"]

CAP_SLACK = 1e-12


@dataclass(frozen=True)
class AttentionVector:
    """Per-landmark inverse noise variances u_i in [0, vhat_inv_i].

    u_i is the data rate knob: the cap vhat_inv_i means observing landmark i
    at full accuracy, u_i = 0 means no data at all.
    """

    u: np.ndarray
    vhat_inv: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float)).copy()
        caps = np.atleast_1d(np.asarray(self.vhat_inv, dtype=float)).copy()
        if u.shape != caps.shape:
            raise ValueError("u and vhat_inv must have matching shapes")
        if np.any(caps <= 0) or not np.all(np.isfinite(caps)):
            raise ValueError("caps must be positive and finite")
        if np.any(u < -CAP_SLACK) or np.any(u > caps + CAP_SLACK):
            raise ValueError("attention outside [0, vhat_inv]")
        u = np.clip(u, 0.0, caps)
        u.flags.writeable = False
        caps.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "vhat_inv", caps)

    @staticmethod
    def zero(vhat_inv) -> "AttentionVector":
        caps = np.atleast_1d(np.asarray(vhat_inv, dtype=float))
        return AttentionVector(np.zeros_like(caps), caps)

    @staticmethod
    def full(vhat_inv) -> "AttentionVector":
        caps = np.atleast_1d(np.asarray(vhat_inv, dtype=float))
        return AttentionVector(caps.copy(), caps)


@dataclass(frozen=True)
class Belief:
    """Gaussian belief in deviation coordinates: mean and Fisher information."""

    mean: np.ndarray
    info: SpdMatrix
    predicted: bool

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1).copy()
        if mean.shape[0] != self.info.dim:
            raise ValueError("mean and information dimensions differ")
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)

    def covariance(self) -> SpdMatrix:
        return inverse(self.info)


def predict(b: Belief, A, B, u, W: SpdMatrix) -> Belief:
    """Propagate a filtered belief through the linear dynamics.

    mean' = A mean + B u and info' = (A info^-1 A' + W)^-1; W > 0 keeps the
    information matrix positive definite even with zero attention forever.
    """
    if b.predicted:
        raise ValueError("predict expects a filtered belief")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    mean = A @ b.mean + B @ u
    P = inverse(b.info).full()
    P_next = A @ P @ A.T + W.full()
    return Belief(mean, inverse(SpdMatrix.from_full(P_next)), predicted=True)


def update(b: Belief, y, C, attn: AttentionVector, wrap_innovation: bool = True) -> Belief:
    """Measurement update with attention-scaled noise.

    info' = info + C' diag(u) C and mean' = mean + L (y - C mean) with the
    information-form gain L = info'^-1 C' diag(u).  Rows with u_i = 0 are
    skipped entirely; their entries of ``y`` are never read, so they may be
    NaN or missing in spirit.  Innovations are wrapped to (-pi, pi] when the
    measurements are angles (the default here).
    """
    if not b.predicted:
        raise ValueError("update expects a predicted belief")
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[1] != b.info.dim:
        raise ValueError("C must be M x n")
    if attn.u.shape[0] != C.shape[0]:
        raise ValueError("attention length must match measurement rows")

    active = attn.u > 0.0
    if not np.any(active):
        return Belief(b.mean, b.info, predicted=False)

    Ca = C[active]
    ua = attn.u[active]
    ya = np.asarray(y, dtype=float).reshape(-1)[active]

    info_full = b.info.full() + Ca.T @ (ua[:, None] * Ca)
    info_post = SpdMatrix.from_full(info_full)
    innovation = ya - Ca @ b.mean
    if wrap_innovation:
        innovation = wrap_angle(innovation)
    rhs = Ca.T @ (ua * innovation)
    mean = b.mean + np.linalg.solve(info_full, rhs)
    return Belief(mean, info_post, predicted=False)
