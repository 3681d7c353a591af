"""Multi-mode inverter control toolkit.

Synthesis of the unified GFM/GFL/STATCOM/ESS controller family, MIMO
sensitivity-factorization stability analysis, and nonlinear dq-frame
multi-inverter time-domain simulation with seamless mode transitions.
"""

__version__ = "0.1.0"

from .plant import InverterParams, LineParams, line_tf, steady_power_flow
from .synth import (
    ControllerSet,
    ModePoint,
    SynthParams,
    apply_mode_point,
    default_params,
    inertia_to_wtheta,
    make_controllers,
    make_KL,
    make_PR,
    split_cascade,
    vsi_point,
    wtheta_for_inertia,
)
from .analysis import (
    ModeReport,
    StabilityReport,
    check_stability,
    classify_mode,
    coupling_bound,
    factorize,
    freq_shape,
    prop4_checks,
    sharing_ratios,
    sync_check,
)
from .sim import (
    GridConfig,
    NetworkConfig,
    SimEvent,
    SimInverter,
    SimResult,
    Simulator,
    SolverConfig,
    mode_ramp_guard,
    spectral_extract,
    transient_energy,
)
from .tf import (
    MarginReport,
    Polynomial,
    RationalTF,
    StateSpace,
    TransferMatrix2,
    count_origin_roots,
    discretize,
    margins,
    singular_values,
    to_state_space,
)
