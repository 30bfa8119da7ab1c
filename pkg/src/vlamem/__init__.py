"""Bounded-state linear-attention memory kernels and their experiment harness."""

from .config import ConfigError, HeadConfig, U_MODES

__version__ = "0.1.0"

from .backend import BACKENDS, compiled_available, forward, resolve_backend
from .bench import BenchRecord, fit_loglog_slope, measure_latency
from .diagnostics import (
    BoundReport,
    JacobianReport,
    TraceRecord,
    aligned_pair,
    bound_check,
    chain_magnification,
    fd_gradient_check,
    jacobian_report,
    jacobian_sigma,
    run_norm_trace,
)
from .kernels import (
    DegenerateGeometryError,
    DeltaHead,
    KERNEL_KINDS,
    LinearHead,
    SoftmaxHead,
    StepOutput,
    VlaHead,
    feature_map,
    make_head,
    sm_update,
    softmax_forward,
    vla_write_geometry,
)
from .scan import (
    RecurrenceElement,
    ScanStats,
    blelloch_scan,
    compose,
    identity_element,
    make_element,
    sequential_scan,
    vla_elements,
    vla_scan,
)
from .tasks import (
    CopyInstance,
    GEOMETRIES,
    InfeasibleGeometryError,
    MqarInstance,
    RecallResult,
    capacity_curve,
    gen_copy,
    gen_mqar,
    long_context_curve,
    recall_experiment,
    summarize_results,
)

__all__ = [
    "BACKENDS",
    "BenchRecord",
    "BoundReport",
    "ConfigError",
    "CopyInstance",
    "DegenerateGeometryError",
    "DeltaHead",
    "GEOMETRIES",
    "HeadConfig",
    "InfeasibleGeometryError",
    "JacobianReport",
    "KERNEL_KINDS",
    "LinearHead",
    "MqarInstance",
    "RecallResult",
    "RecurrenceElement",
    "ScanStats",
    "SoftmaxHead",
    "StepOutput",
    "TraceRecord",
    "U_MODES",
    "VlaHead",
    "aligned_pair",
    "blelloch_scan",
    "bound_check",
    "capacity_curve",
    "chain_magnification",
    "compiled_available",
    "compose",
    "fd_gradient_check",
    "feature_map",
    "fit_loglog_slope",
    "forward",
    "gen_copy",
    "gen_mqar",
    "identity_element",
    "jacobian_report",
    "jacobian_sigma",
    "long_context_curve",
    "make_element",
    "make_head",
    "measure_latency",
    "recall_experiment",
    "resolve_backend",
    "run_norm_trace",
    "sequential_scan",
    "sm_update",
    "softmax_forward",
    "summarize_results",
    "vla_elements",
    "vla_scan",
    "vla_write_geometry",
    "__version__",
]
