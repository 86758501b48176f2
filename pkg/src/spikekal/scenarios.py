"""Benchmark scenarios and the method-comparison harness.

Three scenarios: a constant-velocity linear motion model observed in
position, the Lorenz system observed in its first component, and UAV pixel
tracks loaded from CSV. Every comparison runs all methods on bit-identical
observations and reports per-dimension mean absolute error.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ContractViolationError, CsvFormatError, ModelValidationError
from .filters import run_filter
from .hybrid import SpikeKalConfig, run_spikekal
from .statespace import (
    LINEAR,
    LORENZ,
    NoiseGenerator,
    StateSpaceModel,
    Trajectory,
    default_obs_labels,
    simulate,
)

log = logging.getLogger(__name__)

LINEAR_MOTION = "linear_motion"
LORENZ_SCENARIO = "lorenz"
UAV_CSV = "uav_csv"
SCENARIO_NAMES = (LINEAR_MOTION, LORENZ_SCENARIO, UAV_CSV)

_LABELS = {
    LINEAR_MOTION: ("X", "Y", "Vx", "Vy"),
    LORENZ_SCENARIO: ("X1", "X2", "X3"),
    UAV_CSV: ("X", "Y", "Vx", "Vy"),
}

_DEFAULTS = {
    LINEAR_MOTION: dict(
        dt=0.01,
        duration=30.0,
        q_diag=(1e-4, 1e-4, 1e-2, 1e-2),
        r_diag=(0.25, 0.25),
        x0=(0.0, 0.0, 1.0, 1.0),
    ),
    LORENZ_SCENARIO: dict(
        dt=0.01,
        duration=30.0,
        q_diag=(0.1, 0.1, 0.1),
        r_diag=(1.0,),
        x0=(1.0, 1.0, 1.0),
    ),
    UAV_CSV: dict(
        dt=0.033,
        duration=100.0,
        q_diag=(0.5, 0.5, 2.0, 2.0),
        r_diag=(9.0, 9.0),
        x0=(100.0, 200.0, 3.0, -1.0),
    ),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to rebuild a scenario deterministically."""

    name: str
    dt: float
    duration: float
    q_diag: tuple[float, ...]
    r_diag: tuple[float, ...]
    x0: tuple[float, ...]
    seed: int = 0
    mismatch_q_scale: float = 10.0
    mismatch_r_scale: float = 0.1
    uav_csv: str | None = None
    warmup_fraction: float = 0.2

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ModelValidationError(f"unknown scenario {self.name!r}")
        if self.dt <= 0 or self.duration <= 0:
            raise ModelValidationError("dt and duration must be > 0")
        if self.mismatch_q_scale <= 0 or self.mismatch_r_scale <= 0:
            raise ModelValidationError("mismatch scales must be > 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ModelValidationError("warmup_fraction must be in [0, 1)")
        n = len(_LABELS[self.name])
        m = 2 if self.name != LORENZ_SCENARIO else 1
        if len(self.q_diag) != n:
            raise ModelValidationError(
                f"q_diag needs {n} entries for {self.name}, got {len(self.q_diag)}"
            )
        if len(self.r_diag) != m:
            raise ModelValidationError(
                f"r_diag needs {m} entries for {self.name}, got {len(self.r_diag)}"
            )
        if len(self.x0) != n:
            raise ModelValidationError(
                f"x0 needs {n} entries for {self.name}, got {len(self.x0)}"
            )
        if self.name != UAV_CSV:
            steps = self.duration / self.dt
            if abs(steps - round(steps)) > 1e-9:
                raise ModelValidationError(
                    f"duration/dt must be an integer step count, got {steps}"
                )

    @classmethod
    def defaults(cls, name: str, seed: int = 0, **overrides) -> "ScenarioConfig":
        if name not in _DEFAULTS:
            raise ModelValidationError(f"unknown scenario {name!r}")
        base = dict(_DEFAULTS[name])
        base.update(overrides)
        return cls(name=name, seed=seed, **base)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def labels(self) -> tuple[str, ...]:
        return _LABELS[self.name]


def _constant_velocity_model(dt: float, q_diag, r_diag) -> StateSpaceModel:
    A = np.array(
        [
            [1.0, 0.0, dt, 0.0],
            [0.0, 1.0, 0.0, dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    return StateSpaceModel(
        kind=LINEAR, A=A, H=H, Q=np.diag(q_diag), R_obs=np.diag(r_diag), dt=dt
    )


def scenario_model(config: ScenarioConfig) -> StateSpaceModel:
    if config.name == LORENZ_SCENARIO:
        return StateSpaceModel(
            kind=LORENZ,
            A=None,
            H=np.array([[1.0, 0.0, 0.0]]),
            Q=np.diag(config.q_diag),
            R_obs=np.diag(config.r_diag),
            dt=config.dt,
        )
    return _constant_velocity_model(config.dt, config.q_diag, config.r_diag)


def write_synthetic_uav_csv(path, config: ScenarioConfig) -> None:
    """Generate a UAV-like pixel track for testing: a constant-velocity
    simulation written in the UAV input format."""
    model = scenario_model(config)
    steps = config.steps
    noise = NoiseGenerator(config.seed)
    traj = simulate(model, np.asarray(config.x0), steps, noise, labels=config.labels)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,x_obs,y_obs,x_true,y_true\n")
        for t, truth, obs in zip(traj.times, traj.truth, traj.observations):
            fh.write(
                f"{t:.6f},{obs[0]:.17g},{obs[1]:.17g},"
                f"{truth[0]:.17g},{truth[1]:.17g}\n"
            )


def load_uav_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a `t,x_obs,y_obs,x_true,y_true` file into (times, obs, truth)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError("empty UAV capture", line=1)
    if lines[0].strip() != "t,x_obs,y_obs,x_true,y_true":
        raise CsvFormatError(
            "expected header 't,x_obs,y_obs,x_true,y_true'", line=1
        )
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise CsvFormatError(f"expected 5 columns, got {len(cells)}", line=i)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise CsvFormatError(str(exc), line=i) from None
    if not rows:
        raise CsvFormatError("no data rows", line=2)
    data = np.array(rows)
    return data[:, 0], data[:, 1:3], data[:, 3:5]


def _fd_velocity(positions: np.ndarray, dt: float) -> np.ndarray:
    """Central-difference velocity pseudo-truth from annotated positions."""
    v = np.empty_like(positions)
    v[1:-1] = (positions[2:] - positions[:-2]) / (2.0 * dt)
    v[0] = (positions[1] - positions[0]) / dt
    v[-1] = (positions[-1] - positions[-2]) / dt
    return v


def build_scenario(config: ScenarioConfig) -> tuple[StateSpaceModel, Trajectory]:
    """Instantiate the model and the ground-truth/observation trajectory."""
    model = scenario_model(config)
    if config.name == UAV_CSV:
        if config.uav_csv is None:
            raise ContractViolationError("uav_csv scenario requires an input file")
        _, obs, truth_pos = load_uav_csv(config.uav_csv)
        truth = np.hstack([truth_pos, _fd_velocity(truth_pos, config.dt)])
        return model, Trajectory(
            dt=config.dt,
            truth=truth,
            observations=obs,
            labels=config.labels,
            obs_labels=default_obs_labels(model, config.labels),
        )
    noise = NoiseGenerator(config.seed)
    traj = simulate(
        model, np.asarray(config.x0), config.steps, noise, labels=config.labels
    )
    return model, traj


def mae(truth: np.ndarray, est: np.ndarray) -> np.ndarray:
    """Per-dimension mean absolute error between two equally long tracks."""
    truth = np.asarray(truth, dtype=float)
    est = np.asarray(est, dtype=float)
    if truth.shape != est.shape or len(truth) < 1:
        raise ContractViolationError(
            f"truth and estimate shapes must match, got {truth.shape} vs {est.shape}"
        )
    return np.mean(np.abs(truth - est), axis=0)


@dataclass
class MethodReport:
    """Comparison row for one method on one scenario."""

    method: str
    mae: dict[str, float]
    mae_post_warmup: dict[str, float]
    neurons: int
    faults: int
    wall_time_s: float
    mae_autonomous: dict[str, float] | None = None
    error: str | None = None


@dataclass
class ComparisonResult:
    scenario: ScenarioConfig
    reports: list[MethodReport]
    estimates: dict[str, np.ndarray]
    gains: dict[str, np.ndarray]
    trajectory: Trajectory
    model: StateSpaceModel
    observation_checksum: str


def observation_checksum(trajectory: Trajectory) -> str:
    return hashlib.sha256(np.ascontiguousarray(trajectory.observations).tobytes()).hexdigest()


def default_methods(name: str) -> list[str]:
    classic = "ekf" if name == LORENZ_SCENARIO else "kf"
    return [classic, f"{classic}_matched", "snn_baseline", "spikekal"]


def baseline_config(skcfg: SpikeKalConfig) -> SpikeKalConfig:
    """No-teacher network baseline: estimates come from the network from the
    first step on (a single initialization step), with only a global scalar
    reward for credit assignment. Converges slowly compared to a
    teacher-guided run."""
    return replace(skcfg, teacher_steps=1, global_reward=True, post_teacher_adapt=True)


def run_method(
    method: str,
    model: StateSpaceModel,
    trajectory: Trajectory,
    config: ScenarioConfig,
    skcfg: SpikeKalConfig,
) -> tuple[MethodReport, np.ndarray, np.ndarray]:
    """Run one method over the scenario observations and score it."""
    labels = config.labels
    T = len(trajectory)
    warm = int(np.ceil(config.warmup_fraction * T))
    t0 = time.perf_counter()
    faults = 0
    neurons = 0
    mae_autonomous = None
    obs = trajectory.observations
    if method in ("kf", "ekf"):
        filter_model = model.with_noise_scales(
            config.mismatch_q_scale, config.mismatch_r_scale
        )
        estimates, gains = run_filter(filter_model, obs)
    elif method in ("kf_matched", "ekf_matched"):
        estimates, gains = run_filter(model, obs)
    elif method in ("snn_baseline", "spikekal"):
        cfg = baseline_config(skcfg) if method == "snn_baseline" else skcfg
        result = run_spikekal(model, obs, cfg, seed=config.seed)
        estimates, gains = result.estimates, result.gains
        faults = result.fault_count
        neurons = model.n + model.m + model.n * model.m
        auto = ~result.is_teacher
        if auto.any():
            mae_autonomous = dict(
                zip(labels, mae(trajectory.truth[auto], estimates[auto]).tolist())
            )
    else:
        raise ContractViolationError(f"unknown method {method!r}")
    wall = time.perf_counter() - t0
    report = MethodReport(
        method=method,
        mae=dict(zip(labels, mae(trajectory.truth, estimates).tolist())),
        mae_post_warmup=dict(
            zip(labels, mae(trajectory.truth[warm:], estimates[warm:]).tolist())
        ),
        neurons=neurons,
        faults=faults,
        wall_time_s=wall,
        mae_autonomous=mae_autonomous,
    )
    return report, estimates, gains


def run_comparison(
    config: ScenarioConfig,
    skcfg: SpikeKalConfig | None = None,
    methods: list[str] | None = None,
) -> ComparisonResult:
    """Run every method on identical observations and collect the reports.

    Per-method failures are recorded on the report and do not stop the
    remaining methods.
    """
    model, trajectory = build_scenario(config)
    if skcfg is None:
        skcfg = SpikeKalConfig()
    if methods is None:
        methods = default_methods(config.name)
    checksum = observation_checksum(trajectory)
    reports: list[MethodReport] = []
    estimates: dict[str, np.ndarray] = {}
    gains: dict[str, np.ndarray] = {}
    for method in methods:
        if observation_checksum(trajectory) != checksum:
            raise ContractViolationError("shared observations were mutated")
        try:
            report, est, g = run_method(method, model, trajectory, config, skcfg)
            estimates[method] = est
            gains[method] = g
        except Exception as exc:  # keep the comparison going
            log.exception("method %s failed", method)
            report = MethodReport(
                method=method,
                mae={},
                mae_post_warmup={},
                neurons=0,
                faults=0,
                wall_time_s=0.0,
                error=f"{type(exc).__name__}: {exc}",
            )
        reports.append(report)
    return ComparisonResult(
        scenario=config,
        reports=reports,
        estimates=estimates,
        gains=gains,
        trajectory=trajectory,
        model=model,
        observation_checksum=checksum,
    )


def comparison_report_dict(result: ComparisonResult) -> dict:
    """JSON-ready report. Wall times are deliberately left out so identical
    runs serialize to identical bytes; they remain on the in-memory reports."""
    methods = []
    for rep in result.reports:
        methods.append(
            {
                "method": rep.method,
                "neurons": rep.neurons,
                "faults": rep.faults,
                "mae": rep.mae,
                "mae_post_warmup": rep.mae_post_warmup,
                "mae_autonomous": rep.mae_autonomous,
                "error": rep.error,
            }
        )
    scenario = asdict(result.scenario)
    return {
        "scenario": scenario,
        "observation_checksum": result.observation_checksum,
        "methods": methods,
    }


def write_trace_csv(path, result: ComparisonResult) -> None:
    """Long-format per-step trace for plotting: one row per (step, method,
    state dimension) with the truth, the observation of that dimension when
    it is directly observed, the estimate, and that dimension's gain row."""
    traj = result.trajectory
    model = result.model
    labels = result.scenario.labels
    m = model.m
    # map state dim -> observation column when H selects it directly
    obs_col = {}
    for r, row in enumerate(model.H):
        hot = np.nonzero(row)[0]
        if len(hot) == 1 and row[hot[0]] == 1.0:
            obs_col[int(hot[0])] = r
    gain_cols = ",".join(f"gain{j}" for j in range(m))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"t,method,dim,truth,obs,est,{gain_cols}\n")
        for method in result.estimates:
            est = result.estimates[method]
            gains = result.gains[method]
            for k, t in enumerate(traj.times):
                for d, label in enumerate(labels):
                    obs_val = (
                        f"{traj.observations[k][obs_col[d]]:.17g}"
                        if d in obs_col
                        else ""
                    )
                    grow = ",".join(f"{gains[k][d, j]:.17g}" for j in range(m))
                    fh.write(
                        f"{t:.6f},{method},{label},{traj.truth[k][d]:.17g},"
                        f"{obs_val},{est[k][d]:.17g},{grow}\n"
                    )
