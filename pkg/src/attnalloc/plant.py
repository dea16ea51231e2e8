"""Unicycle plant, bearing-only landmark sensing and LTV linearization.

The robot state is planar position plus heading.  Measurements are relative
bearings to known landmarks, as seen by an omnidirectional camera.  The
reference trajectory generator rolls the noiseless dynamics forward so the
feasibility requirement (each reference state is the exact noiseless
successor of the previous one) holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symmetric import SpdMatrix

__all__ = [
    "LandmarkCollision",
    "RobotState",
    "ControlInput",
    "Landmark",
    "ReferenceTrajectory",
    "LtvWindow",
    "wrap_angle",
    "step_dynamics",
    "measure",
    "reference_circle",
    "linearize",
]

MIN_LANDMARK_DISTANCE = 1e-6


class LandmarkCollision(Exception):
    """A robot position coincides with landmark ``landmark_id``."""

    def __init__(self, landmark_id: int):
        self.landmark_id = landmark_id
        super().__init__(f"robot within {MIN_LANDMARK_DISTANCE} m of landmark {landmark_id}")


def wrap_angle(theta):
    """Wrap angles to the interval (-pi, pi]."""
    phi = np.mod(theta, 2.0 * np.pi)
    out = np.where(phi > np.pi, phi - 2.0 * np.pi, phi)
    return float(out) if np.isscalar(theta) else out


@dataclass(frozen=True)
class RobotState:
    """Planar pose: position in meters, heading in radians, wrapped."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class ControlInput:
    """Forward velocity (m/s) and turn rate (rad/s)."""

    v: float
    omega: float

    def __post_init__(self):
        if not (np.isfinite(self.v) and np.isfinite(self.omega)):
            raise ValueError("control input must be finite")
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass(frozen=True)
class Landmark:
    id: int
    position: tuple[float, float]

    def __post_init__(self):
        pos = (float(self.position[0]), float(self.position[1]))
        if not all(np.isfinite(pos)):
            raise ValueError(f"landmark {self.id} position must be finite")
        object.__setattr__(self, "position", pos)


def landmark_array(landmarks) -> np.ndarray:
    """Stack landmark positions as an (M, 2) array, checking id uniqueness."""
    ids = [lm.id for lm in landmarks]
    if len(set(ids)) != len(ids):
        raise ValueError("landmark ids must be distinct")
    return np.array([lm.position for lm in landmarks], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Feasible reference: states[t+1] is the noiseless step from states[t]."""

    states: tuple
    inputs: tuple
    dt: float

    def __post_init__(self):
        if len(self.states) < 2 or len(self.inputs) != len(self.states) - 1:
            raise ValueError("need T states and T-1 inputs")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self) -> int:
        return len(self.states)

    def feasibility_residual(self) -> float:
        """Max per-component defect of the noiseless one-step recursion."""
        worst = 0.0
        for t, u in enumerate(self.inputs):
            pred = step_dynamics(self.states[t], u, self.dt)
            delta = np.abs(pred.as_array() - self.states[t + 1].as_array())
            delta[2] = abs(wrap_angle(delta[2]))
            worst = max(worst, float(delta.max()))
        return worst


@dataclass(frozen=True)
class LtvWindow:
    """Linearized time-varying model along a slice of the reference.

    Covers reference steps ``start .. start + K - 1`` (K = len(C)).  A[i] and
    B[i] map step start+i to start+i+1, so there are K-1 of each; C[i] stacks
    one bearing-Jacobian row per landmark at step start+i.
    """

    start: int
    A: np.ndarray  # (K-1, n, n)
    B: np.ndarray  # (K-1, n, m)
    C: np.ndarray  # (K, M, n)
    W: SpdMatrix

    def __len__(self) -> int:
        return self.C.shape[0]

    @property
    def n_landmarks(self) -> int:
        return self.C.shape[1]


def step_dynamics(s: RobotState, u: ControlInput, dt: float, noise=None) -> RobotState:
    """One Euler step of the unicycle; process noise enters additively."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = np.zeros(3) if noise is None else np.asarray(noise, dtype=float)
    return RobotState(
        s.x + u.v * np.cos(s.theta) * dt + w[0],
        s.y + u.v * np.sin(s.theta) * dt + w[1],
        wrap_angle(s.theta + u.omega * dt + w[2]),
    )


def measure(s: RobotState, landmarks, noise=None) -> np.ndarray:
    """Relative bearing to every landmark, wrapped to (-pi, pi]."""
    pos = landmark_array(landmarks)
    dx = pos[:, 0] - s.x
    dy = pos[:, 1] - s.y
    dist = np.hypot(dx, dy)
    if np.any(dist <= MIN_LANDMARK_DISTANCE):
        raise LandmarkCollision(landmarks[int(np.argmax(dist <= MIN_LANDMARK_DISTANCE))].id)
    v = np.zeros(len(landmarks)) if noise is None else np.asarray(noise, dtype=float)
    return wrap_angle(np.arctan2(dy, dx) - s.theta + v)


def reference_circle(
    radius: float,
    start: RobotState,
    steps: int,
    dt: float,
    arc_fraction: float = 0.95,
) -> ReferenceTrajectory:
    """Anticlockwise circular-arc reference rolled out with constant inputs.

    v_ref = arc_fraction * 2*pi*radius / ((steps-1)*dt) and
    omega_ref = v_ref / radius.  Rolling the noiseless dynamics forward keeps
    the feasibility residual at exactly zero; the resulting polygon tracks
    the requested circle to within a fraction of a percent for the step
    counts used here.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if steps < 2:
        raise ValueError("need at least two reference steps")
    v_ref = arc_fraction * 2.0 * np.pi * radius / ((steps - 1) * dt)
    omega_ref = v_ref / radius
    u = ControlInput(v_ref, omega_ref)
    states = [start]
    for _ in range(steps - 1):
        states.append(step_dynamics(states[-1], u, dt))
    return ReferenceTrajectory(tuple(states), tuple([u] * (steps - 1)), dt)


def _dynamics_jacobians(s: RobotState, u: ControlInput, dt: float):
    sin_t, cos_t = np.sin(s.theta), np.cos(s.theta)
    A = np.array(
        [
            [1.0, 0.0, -u.v * sin_t * dt],
            [0.0, 1.0, u.v * cos_t * dt],
            [0.0, 0.0, 1.0],
        ]
    )
    B = np.array([[cos_t * dt, 0.0], [sin_t * dt, 0.0], [0.0, dt]])
    return A, B


def _bearing_jacobian(s: RobotState, positions: np.ndarray, ids) -> np.ndarray:
    dx = positions[:, 0] - s.x
    dy = positions[:, 1] - s.y
    d2 = dx * dx + dy * dy
    if np.any(d2 <= MIN_LANDMARK_DISTANCE**2):
        raise LandmarkCollision(ids[int(np.argmax(d2 <= MIN_LANDMARK_DISTANCE**2))])
    C = np.empty((positions.shape[0], 3))
    C[:, 0] = dy / d2
    C[:, 1] = -dx / d2
    C[:, 2] = -1.0
    return C


def linearize(
    ref: ReferenceTrajectory,
    landmarks,
    window: tuple[int, int],
    W: SpdMatrix,
) -> LtvWindow:
    """LTV model (A_k, B_k, C_k) for reference steps window[0]..window[1]."""
    lo, hi = window
    if not (0 <= lo <= hi < len(ref)):
        raise ValueError(f"window {window} outside trajectory of length {len(ref)}")
    pos = landmark_array(landmarks)
    ids = [lm.id for lm in landmarks]
    A, B, C = [], [], []
    for t in range(lo, hi + 1):
        C.append(_bearing_jacobian(ref.states[t], pos, ids))
        if t < hi:
            At, Bt = _dynamics_jacobians(ref.states[t], ref.inputs[t], ref.dt)
            A.append(At)
            B.append(Bt)
    return LtvWindow(
        start=lo,
        A=np.array(A).reshape(hi - lo, 3, 3),
        B=np.array(B).reshape(hi - lo, 3, 2),
        C=np.array(C),
        W=W,
    )
