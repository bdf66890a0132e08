"""flowscope: a fluid-flow TCP/AQM network laboratory.

Computes operating points of a multi-source bottleneck fluid model,
linearizes the multi-delay dynamics, synthesizes delay-dependent observer
gains by semidefinite programming, simulates the nonlinear plant and the
observer in closed loop, and raises traffic-anomaly alarms from the
queue-length measurement alone.
"""

from .dde import DelaySystem, Trace, integrate
from .linearize import AugmentedModel, LinearModel, augment, fd_jacobian, linearize, rhs_nonlinear
from .observer import (
    AlarmInterval,
    AlarmReport,
    CombinedTrace,
    ErrorMetrics,
    ObserverTrace,
    build_delayed_inputs,
    closed_loop,
    detect_anomalies,
    error_metrics,
    run_observer,
)
from .plant import AqmPolicy, PlantTrace, aqm_step, simulate_plant
from .scenario import Scenario, load_scenario
from .synthesis import (
    CertificateReport,
    SynthesisOptions,
    SynthesisResult,
    assemble_lmi,
    check_certificate,
    evaluate_block,
    export_triplets,
    synthesize_gain,
    verify_gain,
)
from .topology import (
    AnomalyWindow,
    Equilibrium,
    NetworkConfig,
    Source,
    ValidationError,
    anomaly_rate,
    compute_equilibrium,
    sample_anomaly,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "AlarmInterval",
    "AlarmReport",
    "AnomalyWindow",
    "AqmPolicy",
    "AugmentedModel",
    "CertificateReport",
    "CombinedTrace",
    "DelaySystem",
    "Equilibrium",
    "ErrorMetrics",
    "LinearModel",
    "NetworkConfig",
    "ObserverTrace",
    "PlantTrace",
    "Scenario",
    "Source",
    "SynthesisOptions",
    "SynthesisResult",
    "Trace",
    "ValidationError",
    "anomaly_rate",
    "aqm_step",
    "assemble_lmi",
    "augment",
    "build_delayed_inputs",
    "check_certificate",
    "closed_loop",
    "compute_equilibrium",
    "detect_anomalies",
    "error_metrics",
    "evaluate_block",
    "export_triplets",
    "fd_jacobian",
    "integrate",
    "linearize",
    "load_scenario",
    "rhs_nonlinear",
    "run_observer",
    "sample_anomaly",
    "simulate_plant",
    "synthesize_gain",
    "validate_config",
    "verify_gain",
    "__version__",
]
