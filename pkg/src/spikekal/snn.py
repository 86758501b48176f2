"""Leaky integrate-and-fire population, two-layer topology, and the
current-injection encoder / spike-trace decoder that bridge the filter's
analog quantities and the network's spikes.

One input neuron per feature component and one output neuron per gain-matrix
entry, fully connected: an (n, m) model uses n + m input and n * m output
neurons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, CsvFormatError, ModelValidationError

CHECKPOINT_MAGIC = "spikekal-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LifParams:
    """LIF neuron constants.

    dV/dt = -(V - v_rest)/tau1 + I/tau2 and dI/dt = -I/tau3 + inputs,
    integrated with forward Euler at step snn_dt. A neuron crossing v_thresh
    emits a spike and is reset to v_reset.
    """

    tau1: float = 0.020
    tau2: float = 0.020
    tau3: float = 0.010
    v_rest: float = 0.0
    v_thresh: float = 1.0
    v_reset: float = 0.0
    snn_dt: float = 5e-4

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "snn_dt"):
            if getattr(self, name) <= 0:
                raise ModelValidationError(f"{name} must be > 0")
        if self.v_thresh <= self.v_rest:
            raise ModelValidationError("v_thresh must exceed v_rest")
        limit = 0.5 * min(self.tau1, self.tau3)
        if self.snn_dt > limit:
            raise ModelValidationError(
                f"snn_dt={self.snn_dt} violates the stability guard "
                f"snn_dt <= min(tau1, tau3)/2 = {limit}"
            )


@dataclass
class NeuronState:
    """Mutable per-neuron state: membrane potential, synaptic current, and
    the time of the most recent spike (-inf if the neuron never fired)."""

    v: np.ndarray
    i_syn: np.ndarray
    last_spike_time: np.ndarray

    @classmethod
    def zeros(cls, count: int, params: LifParams) -> "NeuronState":
        return cls(
            v=np.full(count, params.v_rest, dtype=float),
            i_syn=np.zeros(count),
            last_spike_time=np.full(count, -np.inf),
        )

    def __len__(self) -> int:
        return len(self.v)


@dataclass
class NetworkTopology:
    """Fully connected two-layer wiring: W has shape (n_out, n_in)."""

    n_in: int
    n_out: int
    W: np.ndarray

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1:
            raise ModelValidationError("n_in and n_out must be >= 1")
        self.W = np.asarray(self.W, dtype=float)
        if self.W.shape != (self.n_out, self.n_in):
            raise ModelValidationError(
                f"W must be {self.n_out}x{self.n_in}, got {self.W.shape}"
            )

    @property
    def neuron_count(self) -> int:
        return self.n_in + self.n_out

    @classmethod
    def for_model(
        cls, n: int, m: int, rng: np.random.Generator, w_init_max: float = 0.5
    ) -> "NetworkTopology":
        """Topology for an (n, m) filtering problem: n + m inputs feeding
        n * m outputs, weights uniform in [0, w_init_max]."""
        n_in, n_out = n + m, n * m
        return cls(n_in=n_in, n_out=n_out, W=rng.uniform(0.0, w_init_max, (n_out, n_in)))


def encode_features(
    delta_x: np.ndarray, delta_y: np.ndarray, input_gain: float = 1.0
) -> np.ndarray:
    """Turn the filter features into input currents: (delta_x || delta_y)
    scaled by input_gain. Currents keep their sign; negative features
    hyperpolarize their input neuron."""
    return input_gain * np.concatenate(
        [np.atleast_1d(np.asarray(delta_x, dtype=float)),
         np.atleast_1d(np.asarray(delta_y, dtype=float))]
    )


def lif_step(
    state: NeuronState,
    params: LifParams,
    external_current: np.ndarray,
    weights: np.ndarray | None = None,
    input_spikes: np.ndarray | None = None,
    now: float = 0.0,
) -> tuple[NeuronState, np.ndarray]:
    """Advance one population by one Euler substep and collect its spikes.

    Synaptic current decays with tau3 and integrates the external current;
    presynaptic spikes arriving through ``weights`` add their weight to the
    current as impulses. The state is updated in place.
    """
    h = params.snn_dt
    state.i_syn += h * (-state.i_syn / params.tau3 + external_current)
    if weights is not None and input_spikes is not None:
        state.i_syn += weights @ input_spikes
    state.v += h * (-(state.v - params.v_rest) / params.tau1 + state.i_syn / params.tau2)
    fired = state.v >= params.v_thresh
    if fired.any():
        state.v[fired] = params.v_reset
        state.last_spike_time[fired] = now
    return state, fired.astype(float)


@dataclass
class GainDecoder:
    """Per-output-neuron affine readout of filtered spike activity.

    Each output neuron j owns one gain-matrix entry decoded as
    gain[j] * trace[j] + bias[j], where trace is the exponentially filtered
    spike train of that neuron (time constant tau_dec, reset at the start of
    every filter step). gain/bias are fitted online by LMS against the
    teacher's gain.
    """

    n_out: int
    tau_dec: float = 0.050
    lms_rate: float = 0.005
    gain: np.ndarray = field(default=None)
    bias: np.ndarray = field(default=None)
    trace: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.tau_dec <= 0:
            raise ModelValidationError("tau_dec must be > 0")
        if self.gain is None:
            self.gain = np.zeros(self.n_out)
        if self.bias is None:
            self.bias = np.zeros(self.n_out)
        if self.trace is None:
            self.trace = np.zeros(self.n_out)
        self.gain = np.asarray(self.gain, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        self.trace = np.asarray(self.trace, dtype=float)
        for name in ("gain", "bias", "trace"):
            if getattr(self, name).shape != (self.n_out,):
                raise ModelValidationError(f"decoder {name} must have length {self.n_out}")

    def reset_traces(self) -> None:
        self.trace[:] = 0.0

    def advance(self, spikes: np.ndarray, dt_sub: float) -> None:
        self.trace *= np.exp(-dt_sub / self.tau_dec)
        self.trace += spikes


def decode_gain(decoder: GainDecoder, n: int, m: int) -> np.ndarray:
    """Read the gain matrix out of the decoder traces, row-major (n, m)."""
    if decoder.n_out != n * m:
        raise ContractViolationError(
            f"decoder has {decoder.n_out} outputs, expected {n * m}"
        )
    flat = decoder.gain * decoder.trace + decoder.bias
    return flat.reshape(n, m)


def decoder_lms_update(decoder: GainDecoder, k_teacher: np.ndarray) -> GainDecoder:
    """One LMS step pulling the affine readout toward the teacher gain."""
    target = np.asarray(k_teacher, dtype=float).reshape(-1)
    if target.shape != (decoder.n_out,):
        raise ContractViolationError(
            f"teacher gain must flatten to length {decoder.n_out}"
        )
    err = target - (decoder.gain * decoder.trace + decoder.bias)
    decoder.gain += decoder.lms_rate * err * decoder.trace
    decoder.bias += decoder.lms_rate * err
    return decoder


@dataclass
class SpikingNetwork:
    """Bundle of LIF parameters, topology, and both layers' neuron state."""

    params: LifParams
    topology: NetworkTopology
    input_state: NeuronState
    output_state: NeuronState
    t: float = 0.0

    @classmethod
    def build(
        cls,
        n: int,
        m: int,
        params: LifParams,
        rng: np.random.Generator,
        w_init_max: float = 0.5,
    ) -> "SpikingNetwork":
        topo = NetworkTopology.for_model(n, m, rng, w_init_max)
        return cls(
            params=params,
            topology=topo,
            input_state=NeuronState.zeros(topo.n_in, params),
            output_state=NeuronState.zeros(topo.n_out, params),
        )


@dataclass
class SpikeRecord:
    """Spike rasters of one forward pass: times (S,), input and output spike
    matrices (S, n_in) / (S, n_out) as 0/1 floats."""

    times: np.ndarray
    input_spikes: np.ndarray
    output_spikes: np.ndarray


def network_forward(
    net: SpikingNetwork,
    input_currents: np.ndarray,
    substeps: int,
    decoder: GainDecoder | None = None,
) -> tuple[np.ndarray, SpikeRecord]:
    """Run the two-layer network for ``substeps`` internal steps.

    Input neurons integrate the injected currents; their spikes drive the
    output layer through W within the same substep. Decoder traces, when a
    decoder is given, are reset and then updated substep by substep. Returns
    output spike counts and the full spike record of the pass.
    """
    if substeps < 1:
        raise ContractViolationError(f"substeps must be >= 1, got {substeps}")
    currents = np.asarray(input_currents, dtype=float)
    if currents.shape != (net.topology.n_in,):
        raise ContractViolationError(
            f"expected {net.topology.n_in} input currents, got {currents.shape}"
        )
    h = net.params.snn_dt
    times = net.t + (np.arange(substeps) + 1) * h
    in_spikes = np.empty((substeps, net.topology.n_in))
    out_spikes = np.empty((substeps, net.topology.n_out))
    no_current = np.zeros(net.topology.n_out)
    if decoder is not None:
        decoder.reset_traces()
    for s in range(substeps):
        now = times[s]
        _, spk_in = lif_step(net.input_state, net.params, currents, now=now)
        _, spk_out = lif_step(
            net.output_state,
            net.params,
            no_current,
            weights=net.topology.W,
            input_spikes=spk_in,
            now=now,
        )
        in_spikes[s] = spk_in
        out_spikes[s] = spk_out
        if decoder is not None:
            decoder.advance(spk_out, h)
    net.t = float(times[-1])
    record = SpikeRecord(times=times, input_spikes=in_spikes, output_spikes=out_spikes)
    return out_spikes.sum(axis=0), record


def save_checkpoint(path, net: SpikingNetwork, decoder: GainDecoder) -> None:
    """Write weights and decoder parameters as a versioned text dump."""
    p = net.params
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n")
        fh.write(f"n_in {net.topology.n_in}\n")
        fh.write(f"n_out {net.topology.n_out}\n")
        for name in ("tau1", "tau2", "tau3", "v_rest", "v_thresh", "v_reset", "snn_dt"):
            fh.write(f"{name} {getattr(p, name):.17g}\n")
        fh.write(f"tau_dec {decoder.tau_dec:.17g}\n")
        fh.write(f"lms_rate {decoder.lms_rate:.17g}\n")
        for label, matrix in (("W", net.topology.W), ("gain", [decoder.gain]),
                              ("bias", [decoder.bias])):
            fh.write(f"{label}\n")
            for row in matrix:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_checkpoint(path) -> tuple[LifParams, NetworkTopology, GainDecoder]:
    """Reconstruct (params, topology, decoder) from :func:`save_checkpoint`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
        raise CsvFormatError("not a recognized checkpoint file", line=1)
    scalars: dict[str, float] = {}
    arrays: dict[str, list[list[float]]] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        parts = line.split()
        if len(parts) == 2:
            scalars[parts[0]] = float(parts[1])
        elif len(parts) == 1 and parts[0] in ("W", "gain", "bias"):
            label = parts[0]
            rows = int(scalars["n_out"]) if label == "W" else 1
            block = []
            for _ in range(rows):
                if i >= len(lines):
                    raise CsvFormatError(f"truncated {label} block", line=i + 1)
                block.append([float(v) for v in lines[i].split()])
                i += 1
            arrays[label] = block
        else:
            raise CsvFormatError(f"unexpected content {line!r}", line=i)
    try:
        params = LifParams(
            tau1=scalars["tau1"],
            tau2=scalars["tau2"],
            tau3=scalars["tau3"],
            v_rest=scalars["v_rest"],
            v_thresh=scalars["v_thresh"],
            v_reset=scalars["v_reset"],
            snn_dt=scalars["snn_dt"],
        )
        topo = NetworkTopology(
            n_in=int(scalars["n_in"]),
            n_out=int(scalars["n_out"]),
            W=np.array(arrays["W"]),
        )
        decoder = GainDecoder(
            n_out=topo.n_out,
            tau_dec=scalars["tau_dec"],
            lms_rate=scalars["lms_rate"],
            gain=np.array(arrays["gain"][0]),
            bias=np.array(arrays["bias"][0]),
        )
    except KeyError as exc:
        raise CsvFormatError(f"checkpoint missing field {exc}") from None
    return params, topo, decoder
