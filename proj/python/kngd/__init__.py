"""Kernel-space natural gradient optimizers for physics-informed networks."""

from ._kngd import (
    METRICS_HEADER,
    NystromApprox,
    SpringState,
    StableNystrom,
    __version__,
    bias_correction,
    bench_nystrom,
    constrained_step,
    effective_dimension,
    engdw_direction,
    exact_solution,
    forward,
    init_params,
    jets,
    line_search,
    num_params,
    nystrom,
    nystrom_stable,
    projector_distance,
    residual_system,
    run,
    sample_batch,
)

METRICS_COLUMNS = tuple(METRICS_HEADER.split(","))

__all__ = [name for name in dir() if not name.startswith("_")]
