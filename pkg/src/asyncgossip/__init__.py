"""Asynchronous randomized gossip optimization with continuized momentum:
event-driven simulator, threaded in-process runtime, spectral graph toolkit,
synthetic objectives and convergence diagnostics."""

from .dynamics import (
    MomentumParams,
    WorkerState,
    grad_step,
    momentum_mix,
    momentum_params,
    pairwise_average,
    step_size_bound,
)
from .graphs import (
    DisconnectedGraphError,
    Graph,
    GraphError,
    SpectralReport,
    build_topology,
    effective_resistance,
    laplacian,
    laplacian_pinv,
    spectral_report,
)
from .metrics import consensus_distance, lyapunov_phi2, time_avg_grad_norm
from .objectives import (
    ObjectiveEnsemble,
    build_perturbed_quadratic,
    build_quadratic,
    from_descriptor,
)
from .runtime import (
    Matchmaker,
    RunningDurationAverage,
    RuntimeConfig,
    grad_duration_average,
    matchmaker_next_pair,
    run_concurrent,
)
from .simulator import (
    Event,
    ExperimentConfig,
    PoissonEventStream,
    next_event,
    run_simulation,
    run_sync_baseline,
)
from .traces import CSV_HEADER, Trace

__all__ = [
    "CSV_HEADER",
    "DisconnectedGraphError",
    "Event",
    "ExperimentConfig",
    "Graph",
    "GraphError",
    "Matchmaker",
    "MomentumParams",
    "ObjectiveEnsemble",
    "PoissonEventStream",
    "RunningDurationAverage",
    "RuntimeConfig",
    "SpectralReport",
    "Trace",
    "WorkerState",
    "build_perturbed_quadratic",
    "build_quadratic",
    "build_topology",
    "consensus_distance",
    "effective_resistance",
    "from_descriptor",
    "grad_duration_average",
    "grad_step",
    "laplacian",
    "laplacian_pinv",
    "lyapunov_phi2",
    "matchmaker_next_pair",
    "momentum_mix",
    "momentum_params",
    "next_event",
    "pairwise_average",
    "run_concurrent",
    "run_simulation",
    "run_sync_baseline",
    "spectral_report",
    "step_size_bound",
    "time_avg_grad_norm",
]

__version__ = "0.1.0"
