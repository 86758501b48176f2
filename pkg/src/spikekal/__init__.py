"""State estimation with a spiking-network-assisted Kalman filter.

The package bundles a classic Kalman/extended Kalman filter, a hybrid filter
whose gain matrix is decoded from a two-layer LIF network trained online with
reward-modulated STDP under a teacher filter, and a benchmark harness with
three scenarios (linear motion, Lorenz, UAV pixel tracks).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractViolationError,
    CsvFormatError,
    ModelValidationError,
    NumericalError,
    SpikeKalError,
)
from .filters import (
    KalmanState,
    ekf_jacobian,
    initial_state,
    kf_gain,
    kf_predict,
    kf_step,
    kf_update,
    run_filter,
    transition_matrix,
)
from .hybrid import SpikeKalConfig, SpikeKalFilter, SpikeKalResult, run_spikekal
from .plasticity import (
    EligibilityTrace,
    PlasticityParams,
    accumulate_eligibility,
    apply_stdp,
    compute_reward,
    rstdp_apply,
    stdp_eligibility,
)
from .scenarios import (
    ComparisonResult,
    MethodReport,
    ScenarioConfig,
    build_scenario,
    mae,
    run_comparison,
    write_synthetic_uav_csv,
)
from .snn import (
    GainDecoder,
    LifParams,
    NetworkTopology,
    NeuronState,
    SpikingNetwork,
    decode_gain,
    decoder_lms_update,
    encode_features,
    lif_step,
    load_checkpoint,
    network_forward,
    save_checkpoint,
)
from .statespace import (
    NoiseGenerator,
    StateSpaceModel,
    Trajectory,
    evolve,
    lorenz_derivative,
    lorenz_jacobian,
    observe,
    rk4_step,
    simulate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
