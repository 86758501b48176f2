"""Spike-timing-dependent plasticity: pairwise eligibility computation and
reward-modulated weight updates.

Pre-before-post spike pairs earn positive eligibility (potentiation),
post-before-pre negative (depression). Eligibility accumulates across a
filter step with exponential forgetting and is converted into weight change
only when multiplied by the per-neuron reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, ModelValidationError


@dataclass(frozen=True)
class PlasticityParams:
    a_plus: float = 0.1
    a_minus: float = 0.12
    tau_plus: float = 0.020
    tau_minus: float = 0.020
    lr: float = 0.05
    w_min: float = 0.0
    w_max: float = 1.0

    def __post_init__(self):
        for name in ("a_plus", "a_minus", "tau_plus", "tau_minus"):
            if getattr(self, name) <= 0:
                raise ModelValidationError(f"{name} must be > 0")
        if self.w_min >= self.w_max:
            raise ModelValidationError("w_min must be below w_max")


def stdp_eligibility(delta_t: float, params: PlasticityParams) -> float:
    """Pairwise eligibility for a spike pair with delta_t = t_post - t_pre.

    Positive delta_t (causal pre -> post) yields +a_plus * exp(-dt/tau_plus),
    negative yields -a_minus * exp(dt/tau_minus); simultaneous spikes
    contribute nothing.
    """
    if delta_t > 0:
        return params.a_plus * np.exp(-delta_t / params.tau_plus)
    if delta_t < 0:
        return -params.a_minus * np.exp(delta_t / params.tau_minus)
    return 0.0


@dataclass
class EligibilityTrace:
    """Accumulated pairwise eligibility per synapse with exponential
    forgetting (time constant tau_elig). Tracks the most recent spike time on
    each side for nearest-neighbor pairing."""

    e: np.ndarray
    tau_elig: float
    last_pre: np.ndarray
    last_post: np.ndarray
    t_last: float = 0.0

    @classmethod
    def zeros(cls, n_out: int, n_in: int, tau_elig: float = 0.050) -> "EligibilityTrace":
        if tau_elig <= 0:
            raise ModelValidationError("tau_elig must be > 0")
        return cls(
            e=np.zeros((n_out, n_in)),
            tau_elig=tau_elig,
            last_pre=np.full(n_in, -np.inf),
            last_post=np.full(n_out, -np.inf),
        )


def accumulate_eligibility(
    trace: EligibilityTrace,
    pre_spikes: np.ndarray,
    post_spikes: np.ndarray,
    now: float,
    params: PlasticityParams,
) -> EligibilityTrace:
    """Fold one substep's spikes into the eligibility matrix.

    The trace first forgets by exp(-elapsed/tau_elig); then every spiking
    post neuron is paired with the most recent spike of each pre neuron
    (positive branch) and every spiking pre neuron with the most recent spike
    of each post neuron (negative branch). In-place update; returns the trace.
    """
    pre_spikes = np.asarray(pre_spikes, dtype=bool)
    post_spikes = np.asarray(post_spikes, dtype=bool)
    if pre_spikes.shape != trace.last_pre.shape or post_spikes.shape != trace.last_post.shape:
        raise ContractViolationError("spike vectors do not match trace shape")
    elapsed = now - trace.t_last
    if elapsed > 0:
        trace.e *= np.exp(-elapsed / trace.tau_elig)
    trace.t_last = now

    if post_spikes.any():
        dt_pre = now - trace.last_pre  # >= 0; inf where pre never spiked
        ltp = params.a_plus * np.exp(-dt_pre / params.tau_plus)
        ltp[dt_pre <= 0] = 0.0  # simultaneous pairs contribute nothing
        trace.e[post_spikes, :] += ltp[None, :]
    if pre_spikes.any():
        dt_post = trace.last_post - now  # <= 0; -inf where post never spiked
        ltd = -params.a_minus * np.exp(dt_post / params.tau_minus)
        ltd[dt_post >= 0] = 0.0
        trace.e[:, pre_spikes] += ltd[:, None]

    trace.last_pre[pre_spikes] = now
    trace.last_post[post_spikes] = now
    return trace


def rstdp_apply(
    W: np.ndarray,
    trace: EligibilityTrace,
    reward: np.ndarray,
    params: PlasticityParams,
) -> np.ndarray:
    """Reward-modulated update: W[j, i] += lr * reward[j] * e[j, i], clamped
    to [w_min, w_max]. In-place; returns W."""
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (W.shape[0],) or trace.e.shape != W.shape:
        raise ContractViolationError("reward/trace shapes do not match W")
    W += params.lr * reward[:, None] * trace.e
    np.clip(W, params.w_min, params.w_max, out=W)
    return W


def apply_stdp(
    W: np.ndarray, trace: EligibilityTrace, params: PlasticityParams
) -> np.ndarray:
    """Unmodulated variant (reward identically 1); used by unit tests only."""
    return rstdp_apply(W, trace, np.ones(W.shape[0]), params)


def compute_reward(
    k_teacher: np.ndarray,
    k_decoded: np.ndarray,
    scale: float = 1.0,
    global_reward: bool = False,
) -> np.ndarray:
    """Per-output-neuron reward: scaled teacher-minus-decoded gain error,
    clamped to [-1, 1]. With ``global_reward`` every neuron receives the mean
    of the per-neuron rewards (credit assignment ablation)."""
    k_teacher = np.asarray(k_teacher, dtype=float).reshape(-1)
    k_decoded = np.asarray(k_decoded, dtype=float).reshape(-1)
    if k_teacher.shape != k_decoded.shape:
        raise ContractViolationError("gain matrices must have the same shape")
    reward = np.clip(scale * (k_teacher - k_decoded), -1.0, 1.0)
    if global_reward:
        reward = np.full_like(reward, reward.mean())
    return reward
