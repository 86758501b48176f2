"""The hybrid filter: Kalman prediction with a spiking-network gain.

Each step predicts the prior estimate from the model, feeds the network the
previous posterior-minus-prior difference and the current innovation as input
currents, decodes a gain matrix from the output spike traces, and corrects
the prior with it. During an initial teacher window a classic Kalman filter
supplies the state updates, the decoder regression targets, and the reward
that modulates STDP; afterwards the network runs on its own.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, ModelValidationError
from .filters import (
    KalmanState,
    initial_state,
    kf_gain,
    kf_step,
    transition_matrix,
)
from .plasticity import (
    EligibilityTrace,
    PlasticityParams,
    accumulate_eligibility,
    compute_reward,
    rstdp_apply,
)
from .snn import (
    GainDecoder,
    LifParams,
    SpikingNetwork,
    decode_gain,
    decoder_lms_update,
    encode_features,
    network_forward,
)
from .statespace import StateSpaceModel

log = logging.getLogger(__name__)

TEACHER = "teacher"
AUTONOMOUS = "autonomous"


@dataclass(frozen=True)
class SpikeKalConfig:
    """Run configuration for the hybrid filter.

    ``teacher_steps`` filter iterations are driven by the classic Kalman
    filter while the network learns; ``snn_substeps`` internal LIF steps run
    per filter iteration. ``lif`` defaults to standard constants with
    snn_dt = model dt / snn_substeps, resolved when the filter is built.
    """

    teacher_steps: int = 500
    snn_substeps: int = 20
    input_gain: float = 2000.0
    lif: LifParams | None = None
    plasticity: PlasticityParams = field(default_factory=PlasticityParams)
    tau_dec: float = 0.050
    tau_elig: float = 0.050
    lms_rate: float = 0.01
    reward_scale: float = 1.0
    global_reward: bool = False
    post_teacher_adapt: bool = False
    w_init_max: float = 0.5
    early_stop_error: float | None = None
    early_stop_window: int = 50

    def __post_init__(self):
        if self.teacher_steps < 1:
            raise ModelValidationError("teacher_steps must be >= 1")
        if self.snn_substeps < 1:
            raise ModelValidationError("snn_substeps must be >= 1")
        if self.early_stop_window < 1:
            raise ModelValidationError("early_stop_window must be >= 1")

    def resolve_lif(self, dt: float) -> LifParams:
        if self.lif is not None:
            return self.lif
        return LifParams(snn_dt=dt / self.snn_substeps)


@dataclass
class StepResult:
    estimate: np.ndarray
    gain: np.ndarray
    snn_gain: np.ndarray
    phase: str
    fault: bool


class SpikeKalFilter:
    """Stateful hybrid filter instance; one per run, not thread-shared."""

    def __init__(
        self,
        model: StateSpaceModel,
        config: SpikeKalConfig,
        seed: int,
        net: SpikingNetwork | None = None,
        decoder: GainDecoder | None = None,
    ):
        self.model = model
        self.config = config
        lif = config.resolve_lif(model.dt)
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=(int(seed), 0x5EED)))
        )
        n, m = model.n, model.m
        self.net = net if net is not None else SpikingNetwork.build(
            n, m, lif, rng, config.w_init_max
        )
        if self.net.topology.n_in != n + m or self.net.topology.n_out != n * m:
            raise ContractViolationError(
                f"network topology does not fit an ({n}, {m}) model"
            )
        self.decoder = decoder if decoder is not None else GainDecoder(
            n_out=n * m, tau_dec=config.tau_dec, lms_rate=config.lms_rate
        )
        self.elig = EligibilityTrace.zeros(n * m, n + m, config.tau_elig)
        self.kalman: KalmanState | None = None
        self.step_index = 0
        self.teacher_end = config.teacher_steps
        self.prev_delta_x = np.zeros(n)
        self._recent_errors: deque[float] = deque(maxlen=config.early_stop_window)
        self._transition_logged = False

    @property
    def phase(self) -> str:
        return TEACHER if self.step_index < self.teacher_end else AUTONOMOUS

    @property
    def neuron_count(self) -> int:
        return self.net.topology.neuron_count

    def _learn(self, k_teacher: np.ndarray, k_snn: np.ndarray, record) -> None:
        plast = self.config.plasticity
        for s in range(len(record.times)):
            accumulate_eligibility(
                self.elig,
                record.input_spikes[s] > 0,
                record.output_spikes[s] > 0,
                record.times[s],
                plast,
            )
        decoder_lms_update(self.decoder, k_teacher)
        reward = compute_reward(
            k_teacher, k_snn, self.config.reward_scale, self.config.global_reward
        )
        rstdp_apply(self.net.topology.W, self.elig, reward, plast)
        if self.config.early_stop_error is not None:
            norm = np.linalg.norm(k_teacher)
            self._recent_errors.append(
                float(np.linalg.norm(k_teacher - k_snn) / max(norm, 1e-12))
            )

    def _maybe_early_stop(self) -> None:
        # current step stays a teacher step; the next one switches
        cfg = self.config
        if (
            cfg.early_stop_error is not None
            and self.phase == TEACHER
            and len(self._recent_errors) == cfg.early_stop_window
            and float(np.mean(self._recent_errors)) < cfg.early_stop_error
        ):
            self.teacher_end = self.step_index + 1

    def step(self, y: np.ndarray) -> StepResult:
        """Process one observation and return the posterior estimate, the
        gain actually applied, the network-decoded gain, the phase and the
        fault flag of this step."""
        model = self.model
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (model.m,):
            raise ContractViolationError(
                f"observation must have dimension {model.m}"
            )
        if self.kalman is None:
            self.kalman = initial_state(model, y)
        if self.step_index == self.teacher_end and not self._transition_logged:
            log.info("teacher phase ended at step %d", self.teacher_end)
            self._transition_logged = True

        A = transition_matrix(model, self.kalman.x)
        x_hat = A @ self.kalman.x
        delta_y = y - model.H @ x_hat
        currents = encode_features(self.prev_delta_x, delta_y, self.config.input_gain)
        _, record = network_forward(
            self.net, currents, self.config.snn_substeps, self.decoder
        )
        k_snn = decode_gain(self.decoder, model.n, model.m)
        fault = False

        if self.phase == TEACHER:
            self.kalman, k_teacher = kf_step(self.kalman, model, y)
            self._learn(k_teacher, k_snn, record)
            self._maybe_early_stop()
            k_used = k_teacher
            estimate = self.kalman.x
            self.prev_delta_x = self.kalman.x - self.kalman.x_prior
        else:
            if self.config.post_teacher_adapt:
                # keep the teacher's gain schedule alive for learning only;
                # the filter output still comes from the network
                p_hat = A @ self.kalman.P @ A.T + model.Q
                k_teacher = kf_gain(p_hat, model.H, model.R_obs)
                posterior_cov = (np.eye(model.n) - k_teacher @ model.H) @ p_hat
                self.kalman.P = 0.5 * (posterior_cov + posterior_cov.T)
                self._learn(k_teacher, k_snn, record)
            if np.isfinite(k_snn).all():
                k_used = k_snn
            else:
                log.warning(
                    "non-finite decoded gain at step %d; zero-gain fallback",
                    self.step_index,
                )
                k_used = np.zeros((model.n, model.m))
                fault = True
            estimate = x_hat + k_used @ delta_y
            self.kalman.x = estimate
            self.kalman.x_prior = x_hat
            self.prev_delta_x = estimate - x_hat

        self.step_index += 1
        return StepResult(
            estimate=estimate,
            gain=k_used,
            snn_gain=k_snn,
            phase=TEACHER if self.step_index <= self.teacher_end else AUTONOMOUS,
            fault=fault,
        )


@dataclass
class SpikeKalResult:
    """Per-step record of a full hybrid-filter run."""

    estimates: np.ndarray
    gains: np.ndarray
    snn_gains: np.ndarray
    is_teacher: np.ndarray
    faults: np.ndarray
    teacher_end: int

    @property
    def fault_count(self) -> int:
        return int(self.faults.sum())


def run_spikekal(
    model: StateSpaceModel,
    observations: np.ndarray,
    config: SpikeKalConfig,
    seed: int,
    net: SpikingNetwork | None = None,
    decoder: GainDecoder | None = None,
) -> SpikeKalResult:
    """Run the hybrid filter over a whole observation sequence.

    The run never aborts on per-step numerical faults; they are flagged in
    the result instead.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2 or observations.shape[1] != model.m:
        raise ContractViolationError(f"observations must have shape (T, {model.m})")
    filt = SpikeKalFilter(model, config, seed, net=net, decoder=decoder)
    T = len(observations)
    estimates = np.empty((T, model.n))
    gains = np.empty((T, model.n, model.m))
    snn_gains = np.empty((T, model.n, model.m))
    is_teacher = np.empty(T, dtype=bool)
    faults = np.zeros(T, dtype=bool)
    for k in range(T):
        phase_before = filt.phase
        result = filt.step(observations[k])
        estimates[k] = result.estimate
        gains[k] = result.gain
        snn_gains[k] = result.snn_gain
        is_teacher[k] = phase_before == TEACHER
        faults[k] = result.fault
    return SpikeKalResult(
        estimates=estimates,
        gains=gains,
        snn_gains=snn_gains,
        is_teacher=is_teacher,
        faults=faults,
        teacher_end=filt.teacher_end,
    )
