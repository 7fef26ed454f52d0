"""Kernel-space natural-gradient optimizers and PDE benchmarks for PINNs."""

from .config import ParamSpec, RunConfig, SearchSpace, load_run_config, load_search_space
from .harness import bench_nystrom, random_search, run_experiment
from .jets import Jet2, JetBatch, JetCoeffs, forward_jets, scalar_pullback
from .mlp import MlpArchitecture, MlpParams, flatten_layers, forward_values, init_params
from .nystrom import (
    NystromApprox,
    Spectrum,
    effective_dimension,
    kernel_spectrum,
    nystrom_gpu_efficient,
    nystrom_inv_apply,
    nystrom_stable,
    randomized_direction,
)
from .optim import (
    AdamState,
    KernelSystem,
    OptimizerState,
    adam_step,
    build_kernel,
    constrained_update,
    engdw_direction,
    line_search,
    sgd_step,
    spring_step,
)
from .problems import (
    Batch,
    PdeProblem,
    ResidualSystem,
    assemble_residual,
    batch_loss,
    l2_error,
    make_heat,
    make_log_fokker_planck,
    make_poisson,
    make_problem,
    sample_batch,
)

__all__ = [
    "AdamState", "Batch", "Jet2", "JetBatch", "JetCoeffs", "KernelSystem",
    "MlpArchitecture", "MlpParams", "NystromApprox", "OptimizerState", "ParamSpec",
    "PdeProblem", "ResidualSystem", "RunConfig", "SearchSpace", "Spectrum",
    "adam_step", "assemble_residual", "batch_loss", "bench_nystrom", "build_kernel",
    "constrained_update", "effective_dimension", "engdw_direction", "flatten_layers",
    "forward_jets", "forward_values", "init_params", "kernel_spectrum", "l2_error",
    "line_search", "load_run_config", "load_search_space", "make_heat",
    "make_log_fokker_planck", "make_poisson", "make_problem", "nystrom_gpu_efficient",
    "nystrom_inv_apply", "nystrom_stable", "random_search", "randomized_direction",
    "run_experiment", "sample_batch", "scalar_pullback", "sgd_step", "spring_step",
]
