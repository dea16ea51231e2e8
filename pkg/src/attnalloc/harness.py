"""Mission driver, configuration, metrics and CSV/JSON export.

A mission runs the receding-horizon loop over the circular-reference
scenario: linearize the window ahead, allocate attention by the configured
method, apply only the first step of the window allocation, sample the true
(nonlinear) dynamics and the attention-scaled bearings, filter, close the
LQG loop, and log everything.  Units are SI throughout; sensor accuracy may
be given in degrees via the ``vhat_sigma_deg`` key, converted by
1 / (sigma * pi/180)^2.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import admm as admm_mod
from .allocator import (
    CcpConfig,
    WindowProblem,
    build_subproblem,
    ccp_solve,
    feasible_init,
)
from .baselines import GreedyBudget, greedy_select
from .filtering import AttentionVector, Belief, predict, update
from .lqg import CostWeights, backward_riccati, expected_cost
from .plant import (
    ControlInput,
    Landmark,
    RobotState,
    linearize,
    measure,
    reference_circle,
    step_dynamics,
    wrap_angle,
)
from .rng import PortableRng
from .subsolver import SubsolverFailure, solve as barrier_solve
from .symmetric import SpdMatrix, inverse, logdet

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SummaryStats",
    "StepRecord",
    "RunLog",
    "sigma_deg_to_vhat_inv",
    "default_landmarks",
    "paper_scenario_config",
    "run_mission",
    "export",
    "monte_carlo",
    "bench_admm_scaling",
    "TRACE_COLUMNS_FIXED",
]

LN2 = float(np.log(2.0))

METHODS = ("none", "full", "greedy", "ccp-centralized", "ccp-admm")

TRACE_COLUMNS_FIXED = (
    "step,t_sec,x_true,y_true,th_true,x_ref,y_ref,th_ref,x_est,y_est,th_est,"
    "p11,p12,p13,p22,p23,p33"
)


class ConfigError(Exception):
    """Configuration is malformed or violates an invariant."""


def sigma_deg_to_vhat_inv(sigma_deg: float) -> float:
    """Bearing accuracy in degrees to inverse noise variance (rad^-2)."""
    if sigma_deg <= 0:
        raise ConfigError("sigma_deg must be positive")
    return 1.0 / (sigma_deg * np.pi / 180.0) ** 2


def _conversion_selfcheck():
    # the two accuracies quoted for the scenario: 15 deg <-> 14.6, 3.5 deg <-> ~270
    if abs(sigma_deg_to_vhat_inv(15.0) - 14.6) > 0.05:
        raise ConfigError("degree conversion self-check failed at 15 deg")
    if abs(sigma_deg_to_vhat_inv(3.5) - 270.0) > 3.0:
        raise ConfigError("degree conversion self-check failed at 3.5 deg")


def default_landmarks(count: int = 16) -> list:
    """Landmark ring straddling the reference circle (alternating radii)."""
    out = []
    for j in range(count):
        angle = 2.0 * np.pi * j / count
        radius = 5.4 if j % 2 == 0 else 2.8
        out.append((radius * np.cos(angle), radius * np.sin(angle)))
    return out


@dataclass
class ScenarioConfig:
    """Everything a mission needs; defaults reproduce the 16-landmark
    circular scenario (dt, arc fraction and P_init are fixed here for
    reproducibility -- they are not quoted anywhere authoritative)."""

    radius_m: float = 4.0
    start: tuple = (4.0, 0.0, np.pi / 2.0)
    steps: int = 90
    dt_sec: float = 1.0
    arc_fraction: float = 0.95
    landmarks: list = field(default_factory=default_landmarks)
    w_diag: tuple = (1.2e-3, 1.2e-3, 30e-3)
    vhat_inv: tuple | float = 14.6
    q_diag: tuple = (0.3, 0.3, 1.6)
    r_diag: tuple = (3.5e-3, 3.5e-3)
    beta: float = 18.0
    horizon: int = 10
    method: str = "ccp-centralized"
    greedy_budget: int = 3
    rng_seed: int = 0
    p_init_diag: tuple = (0.01, 0.01, 0.01)
    record_wall_ms: bool = False
    ccp: CcpConfig = field(default_factory=CcpConfig)
    admm: admm_mod.AdmmConfig = field(default_factory=admm_mod.AdmmConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.steps < 2:
            raise ConfigError("steps must be at least 2")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.dt_sec <= 0 or self.radius_m <= 0:
            raise ConfigError("dt and radius must be positive")
        if len(self.landmarks) < 1:
            raise ConfigError("need at least one landmark")
        caps = self.caps()
        if np.any(caps <= 0):
            raise ConfigError("vhat_inv entries must be positive")
        if np.any(np.asarray(self.w_diag) <= 0) or np.any(np.asarray(self.p_init_diag) <= 0):
            raise ConfigError("noise variances must be positive")
        if np.any(np.asarray(self.q_diag) <= 0) or np.any(np.asarray(self.r_diag) <= 0):
            raise ConfigError("cost weights must be positive")
        if self.greedy_budget < 0 or self.greedy_budget > len(self.landmarks):
            raise ConfigError("greedy budget must lie in [0, M]")

    def caps(self) -> np.ndarray:
        M = len(self.landmarks)
        v = np.asarray(self.vhat_inv, dtype=float).reshape(-1)
        if v.size == 1:
            return np.full(M, float(v[0]))
        if v.size != M:
            raise ConfigError("vhat_inv must be scalar or one entry per landmark")
        return v

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "reference": {
                "radius_m": self.radius_m,
                "start": list(self.start),
                "steps": self.steps,
                "dt_sec": self.dt_sec,
                "arc_fraction": self.arc_fraction,
            },
            "landmarks": [list(p) for p in self.landmarks],
            "noise": {
                "w_diag": list(self.w_diag),
                "vhat_inv": list(np.atleast_1d(np.asarray(self.vhat_inv, dtype=float))),
            },
            "weights": {"q_diag": list(self.q_diag), "r_diag": list(self.r_diag)},
            "allocation": {
                "beta": self.beta,
                "horizon": self.horizon,
                "method": self.method,
                "greedy_budget": self.greedy_budget,
            },
            "solver": {
                "ccp": {
                    "tol": self.ccp.tol,
                    "max_iter": self.ccp.max_iter,
                    "barrier_tol": self.ccp.barrier_tol,
                    "snap_tol": self.ccp.snap_tol,
                },
                "admm": {
                    "rho": self.admm.rho,
                    "eps_primal": self.admm.eps_primal,
                    "eps_dual": self.admm.eps_dual,
                    "max_iter": self.admm.max_iter,
                    "parallel_workers": self.admm.parallel_workers,
                    "adapt_rho": self.admm.adapt_rho,
                },
            },
            "rng_seed": self.rng_seed,
            "p_init_diag": list(self.p_init_diag),
            "record_wall_ms": self.record_wall_ms,
        }

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        _conversion_selfcheck()
        try:
            cfg = ScenarioConfig()
            ref = data.get("reference", {})
            cfg.radius_m = float(ref.get("radius_m", cfg.radius_m))
            start = ref.get("start", list(cfg.start))
            if "start_theta_deg" in ref:
                start = [start[0], start[1], float(ref["start_theta_deg"]) * np.pi / 180.0]
            cfg.start = tuple(float(v) for v in start)
            cfg.steps = int(ref.get("steps", cfg.steps))
            cfg.dt_sec = float(ref.get("dt_sec", cfg.dt_sec))
            cfg.arc_fraction = float(ref.get("arc_fraction", cfg.arc_fraction))
            if "landmarks" in data:
                cfg.landmarks = [tuple(float(v) for v in p) for p in data["landmarks"]]
            noise = data.get("noise", {})
            cfg.w_diag = tuple(float(v) for v in noise.get("w_diag", cfg.w_diag))
            if "vhat_sigma_deg" in noise:
                cfg.vhat_inv = sigma_deg_to_vhat_inv(float(noise["vhat_sigma_deg"]))
            elif "vhat_inv" in noise:
                v = noise["vhat_inv"]
                cfg.vhat_inv = (
                    tuple(float(x) for x in v) if isinstance(v, (list, tuple)) else float(v)
                )
            weights = data.get("weights", {})
            cfg.q_diag = tuple(float(v) for v in weights.get("q_diag", cfg.q_diag))
            cfg.r_diag = tuple(float(v) for v in weights.get("r_diag", cfg.r_diag))
            alloc = data.get("allocation", {})
            cfg.beta = float(alloc.get("beta", cfg.beta))
            cfg.horizon = int(alloc.get("horizon", cfg.horizon))
            cfg.method = str(alloc.get("method", cfg.method))
            cfg.greedy_budget = int(alloc.get("greedy_budget", cfg.greedy_budget))
            solver = data.get("solver", {})
            ccp = solver.get("ccp", {})
            cfg.ccp = CcpConfig(
                tol=float(ccp.get("tol", cfg.ccp.tol)),
                max_iter=int(ccp.get("max_iter", cfg.ccp.max_iter)),
                barrier_tol=float(ccp.get("barrier_tol", cfg.ccp.barrier_tol)),
                snap_tol=float(ccp.get("snap_tol", cfg.ccp.snap_tol)),
            )
            admm_d = solver.get("admm", {})
            cfg.admm = admm_mod.AdmmConfig(
                rho=float(admm_d.get("rho", cfg.admm.rho)),
                eps_primal=float(admm_d.get("eps_primal", cfg.admm.eps_primal)),
                eps_dual=float(admm_d.get("eps_dual", cfg.admm.eps_dual)),
                max_iter=int(admm_d.get("max_iter", cfg.admm.max_iter)),
                parallel_workers=int(admm_d.get("parallel_workers", cfg.admm.parallel_workers)),
                adapt_rho=bool(admm_d.get("adapt_rho", cfg.admm.adapt_rho)),
            )
            cfg.rng_seed = int(data.get("rng_seed", cfg.rng_seed))
            cfg.p_init_diag = tuple(float(v) for v in data.get("p_init_diag", cfg.p_init_diag))
            cfg.record_wall_ms = bool(data.get("record_wall_ms", cfg.record_wall_ms))
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(path) -> "ScenarioConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be an object")
        return ScenarioConfig.from_dict(data)


def paper_scenario_config(**overrides) -> ScenarioConfig:
    """The 16-landmark circular scenario with its quoted parameter set."""
    cfg = ScenarioConfig()
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


@dataclass
class SummaryStats:
    rms_error_m: float
    total_di_bits: float
    mean_active_landmarks: float
    variable_cost: float
    constant_cost: float
    wall_ms: float

    def to_dict(self) -> dict:
        return {
            "rms_error_m": self.rms_error_m,
            "total_di_bits": self.total_di_bits,
            "mean_active_landmarks": self.mean_active_landmarks,
            "variable_cost": self.variable_cost,
            "constant_cost": self.constant_cost,
            "wall_ms": self.wall_ms,
        }


@dataclass
class StepRecord:
    step: int
    t_sec: float
    true: np.ndarray
    ref: np.ndarray
    est: np.ndarray
    p_packed: np.ndarray
    u: np.ndarray
    di_bits: float
    track_err_m: float
    v_cmd: float
    w_cmd: float
    ccp_iters: int
    admm_iters: int
    wall_ms: float
    window_u: list = None  # full window allocation (first entry is applied)


@dataclass
class RunLog:
    """Per-step mission record plus the information-matrix sequences."""

    config: ScenarioConfig
    records: list
    Q_pred: list
    Q_filt: list
    summary: SummaryStats


class _Scenario:
    """Derived mission-wide objects shared by every step."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.ref = reference_circle(
            cfg.radius_m,
            RobotState(*cfg.start),
            cfg.steps,
            cfg.dt_sec,
            cfg.arc_fraction,
        )
        self.landmarks = [Landmark(i + 1, tuple(p)) for i, p in enumerate(cfg.landmarks)]
        self.W = SpdMatrix.diagonal(cfg.w_diag)
        self.weights = CostWeights(SpdMatrix.diagonal(cfg.q_diag), SpdMatrix.diagonal(cfg.r_diag))
        self.full_ltv = linearize(self.ref, self.landmarks, (0, cfg.steps - 1), self.W)
        self.tape = backward_riccati(self.full_ltv, self.weights)
        self.caps = cfg.caps()
        self.P_init = SpdMatrix.diagonal(cfg.p_init_diag)

    def window_problem(self, t: int, Q_init: np.ndarray, horizon: int) -> WindowProblem:
        T = self.cfg.steps
        t_end = min(t + horizon, T - 1)
        lo = t
        return WindowProblem(
            Theta=tuple(self.tape.Theta[k].full() for k in range(lo, t_end + 1)),
            C=tuple(self.full_ltv.C[k] for k in range(lo, t_end + 1)),
            A=tuple(self.full_ltv.A[k] for k in range(lo, t_end)),
            W=self.W.full(),
            Q_init=Q_init,
            vhat_inv=self.caps,
            beta=self.cfg.beta,
        )


def _allocate(scn: _Scenario, cfg: ScenarioConfig, t: int, belief: Belief):
    """First-step allocation for mission step t plus solver diagnostics."""
    caps = scn.caps
    if cfg.method == "none":
        return np.zeros_like(caps), 0, 0, None
    if cfg.method == "full":
        return caps.copy(), 0, 0, None
    if cfg.method == "greedy":
        picks = greedy_select(
            belief.info,
            scn.tape.Theta[t].full(),
            scn.full_ltv.C[t],
            caps,
            GreedyBudget(cfg.greedy_budget),
        )
        u = np.zeros_like(caps)
        u[picks] = caps[picks]
        return u, 0, 0, None
    wp = scn.window_problem(t, belief.info.full(), cfg.horizon)
    method = "admm" if cfg.method == "ccp-admm" else "centralized"
    sol = ccp_solve(wp, cfg.ccp, method=method, admm_cfg=cfg.admm)
    return sol.u_star[0].u.copy(), sol.ccp_iterations, sol.admm_iterations, sol


def run_mission(cfg: ScenarioConfig, _window_hook=None) -> RunLog:
    """Receding-horizon mission loop; see the module docstring for the order
    of operations within a step.  ``_window_hook`` is a test seam that may
    rewrite the unused tail of each window allocation before the first entry
    is applied (the trace must not depend on it)."""
    mission_tic = time.perf_counter()
    scn = _Scenario(cfg)
    rng = PortableRng(cfg.rng_seed)
    T = cfg.steps
    M = len(scn.landmarks)

    true_state = RobotState(*(scn.ref.states[0].as_array() + np.sqrt(cfg.p_init_diag) * rng.normals(3)))
    belief = Belief(np.zeros(3), inverse(scn.P_init), predicted=True)

    records = []
    Q_pred_log, Q_filt_log = [], []
    try:
        for t in range(T):
            step_tic = time.perf_counter()
            true_now = true_state.as_array()
            ref_now = scn.ref.states[t].as_array()

            u_t, ccp_iters, admm_iters, sol = _allocate(scn, cfg, t, belief)
            if _window_hook is not None and sol is not None:
                window_u = _window_hook([av.u.copy() for av in sol.u_star])
                u_t = window_u[0]
            attn = AttentionVector(u_t, scn.caps)

            # attention-scaled bearings; unattended rows are never read
            meas_noise = rng.normals(M)
            proc_noise = np.sqrt(cfg.w_diag) * rng.normals(3)
            active = attn.u > 0.0
            y = np.full(M, np.nan)
            if np.any(active):
                bearings = measure(true_state, scn.landmarks)
                ref_bearings = measure(scn.ref.states[t], scn.landmarks)
                y[active] = wrap_angle(
                    bearings[active]
                    - ref_bearings[active]
                    + meas_noise[active] / np.sqrt(attn.u[active])
                )
            Q_pred_log.append(belief.info.full())
            filtered = update(belief, y, scn.full_ltv.C[t], attn)
            Q_filt_log.append(filtered.info.full())
            di_step = 0.5 * (logdet(filtered.info) - logdet(belief.info)) / LN2

            est_world = ref_now + filtered.mean
            est_world[2] = wrap_angle(est_world[2])
            track_err = float(np.hypot(true_now[0] - ref_now[0], true_now[1] - ref_now[1]))

            v_cmd = w_cmd = 0.0
            if t < T - 1:
                u_dev = scn.tape.K[t] @ filtered.mean
                u_ref = scn.ref.inputs[t]
                v_cmd = float(u_ref.v + u_dev[0])
                w_cmd = float(u_ref.omega + u_dev[1])
                true_state = step_dynamics(
                    true_state, ControlInput(v_cmd, w_cmd), cfg.dt_sec, proc_noise
                )
                belief = predict(filtered, scn.full_ltv.A[t], scn.full_ltv.B[t], u_dev, scn.W)

            wall_ms = (time.perf_counter() - step_tic) * 1e3 if cfg.record_wall_ms else 0.0
            records.append(
                StepRecord(
                    step=t + 1,
                    t_sec=t * cfg.dt_sec,
                    true=true_now,
                    ref=ref_now,
                    est=est_world,
                    p_packed=svec_to_packed(filtered),
                    u=attn.u.copy(),
                    di_bits=float(di_step),
                    track_err_m=track_err,
                    v_cmd=v_cmd,
                    w_cmd=w_cmd,
                    ccp_iters=ccp_iters,
                    admm_iters=admm_iters,
                    wall_ms=wall_ms,
                )
            )
    except SubsolverFailure as exc:
        exc.mission_step = len(records)
        exc.partial_records = records
        raise

    total_wall_ms = (time.perf_counter() - mission_tic) * 1e3
    track = np.array([r.track_err_m for r in records])
    di_total = float(sum(r.di_bits for r in records))
    caps = scn.caps
    active_counts = [float(np.sum(r.u > 0.05 * caps)) for r in records]
    Q_filt_spd = [SpdMatrix.from_full(q) for q in Q_filt_log]
    variable_cost, constant_cost = expected_cost(scn.tape, Q_filt_spd, scn.W, scn.P_init)
    summary = SummaryStats(
        rms_error_m=float(np.sqrt(np.mean(track**2))),
        total_di_bits=di_total,
        mean_active_landmarks=float(np.mean(active_counts)),
        variable_cost=float(variable_cost),
        constant_cost=float(constant_cost),
        wall_ms=total_wall_ms,
    )
    return RunLog(cfg, records, Q_pred_log, Q_filt_log, summary)


def svec_to_packed(belief: Belief) -> np.ndarray:
    """Packed upper triangle of the filtered covariance (p11..p33 order)."""
    return inverse(belief.info).base.packed.copy()


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trace_csv_text(log: RunLog) -> str:
    M = len(log.config.landmarks)
    header = (
        TRACE_COLUMNS_FIXED
        + ","
        + ",".join(f"u_{i + 1}" for i in range(M))
        + ",di_bits,track_err_m,v_cmd,w_cmd,ccp_iters,admm_iters,wall_ms"
    )
    lines = [header]
    for r in log.records:
        cells = [
            _fmt(r.step),
            _fmt(r.t_sec),
            *[_fmt(v) for v in r.true],
            *[_fmt(v) for v in r.ref],
            *[_fmt(v) for v in r.est],
            *[_fmt(v) for v in r.p_packed],
            *[_fmt(v) for v in r.u],
            _fmt(r.di_bits),
            _fmt(r.track_err_m),
            _fmt(r.v_cmd),
            _fmt(r.w_cmd),
            _fmt(r.ccp_iters),
            _fmt(r.admm_iters),
            _fmt(r.wall_ms),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def export(log: RunLog, out_dir) -> dict:
    """Write trace.csv, summary.json and config_resolved.json; byte-stable
    for a fixed RunLog.  Returns the file paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trace": out / "trace.csv",
            "summary": out / "summary.json",
            "config": out / "config_resolved.json",
        }
        paths["trace"].write_text(trace_csv_text(log), encoding="utf-8")
        paths["summary"].write_text(
            json.dumps(log.summary.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        paths["config"].write_text(
            json.dumps(log.config.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise OSError(f"export to {out} failed: {exc}") from exc
    return paths


def monte_carlo(cfg: ScenarioConfig, n_runs: int) -> dict:
    """Aggregate SummaryStats over seeds rng_seed + i, i in [0, n_runs)."""
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    rows = []
    for i in range(n_runs):
        run_cfg = ScenarioConfig.from_dict(cfg.to_dict())
        run_cfg.rng_seed = cfg.rng_seed + i
        rows.append(run_mission(run_cfg).summary.to_dict())
    out = {}
    for key in rows[0]:
        vals = np.array([row[key] for row in rows], dtype=float)
        out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals, ddof=0))}
    out["n_runs"] = n_runs
    return out


# ---------------------------------------------------------------------------
# horizon-scaling bench (splitting vs centralized)
# ---------------------------------------------------------------------------


def bench_admm_scaling(
    cfg: ScenarioConfig,
    horizons=(5, 10, 20, 40),
    admm_iters: int = 12,
    centralized_timeout_s: float = 180.0,
) -> dict:
    """Per-iteration splitting cost and full centralized solve cost vs H.

    Uses the first mission window of the configured scenario with the
    zero-attention linearization, single worker.  The centralized column
    reports a full barrier solve (or ``null`` once one exceeds the
    timeout - later horizons only get slower).
    """
    scn = _Scenario(cfg)
    Q_init = inverse(scn.P_init).full()
    rows = []
    skip_centralized = False
    for H in horizons:
        if H > cfg.steps - 1:
            raise ConfigError("bench horizon exceeds the mission length")
        wp = scn.window_problem(0, Q_init, H)
        _, Q_filt0, _ = feasible_init(wp)
        G = [0.5 * wp.beta * np.linalg.inv(Qf) for Qf in Q_filt0]

        acfg = admm_mod.AdmmConfig(
            rho=cfg.admm.rho,
            eps_primal=0.0,
            eps_dual=0.0,
            max_iter=admm_iters,
            parallel_workers=1,
        )
        state, report = admm_mod.run(wp, G, acfg)
        # the first iteration pays cold-start costs; use the median of the rest
        per_iter = float(np.median(report.iter_seconds[1:] or report.iter_seconds))

        central_s = None
        if not skip_centralized:
            sub = build_subproblem(wp, G, coupled=True)
            tic = time.perf_counter()
            barrier_solve(sub, tol=cfg.ccp.barrier_tol)
            central_s = time.perf_counter() - tic
            if central_s > centralized_timeout_s:
                skip_centralized = True
        rows.append(
            {
                "horizon": H,
                "admm_iter_seconds": per_iter,
                "centralized_solve_seconds": central_s,
            }
        )
    return {"rows": rows, "admm_iters_per_horizon": admm_iters}
