"""Gaussian-process regression with evidence, cross-validation and
posterior-agreement model selection."""

from .criteria import (
    AscConfig,
    AscScore,
    AscVariant,
    Partition,
    average_log_eta,
    log_eta_bayesian,
    log_eta_beta_noise,
    sample_partitions,
)
from .errors import (
    AllPartitionsFailed,
    DegenerateBaseline,
    EmptyData,
    GpSelectError,
    InsufficientData,
    OptimizationFailed,
    RankDeficient,
    SchemaError,
    SingularCovariance,
)
from .gaussian import (
    GaussianDist,
    JointGaussian,
    condition,
    log_gaussian_quadratic_integral,
    log_product_integral,
    maxent_linear_map_posterior,
)
from .harness import (
    ExperimentConfig,
    RankingReport,
    aggregate_ranks,
    load_csv_dataset,
    rank_students,
    run_ranking,
    sample_synthetic,
)
from .kernels import KernelSpec, KernelStructure, MeanSpec, kernel_matrix, mean_vector, noisy_kernel_matrix
from .optimize import (
    Criterion,
    ObjectiveSpec,
    OptResult,
    evaluate_criterion,
    finite_diff_gradient,
    optimize,
)
from .regression import Dataset, GPModel, joint_latent_output, log_evidence, loo_cv_objective, msll, predict

__all__ = [
    "AllPartitionsFailed",
    "AscConfig",
    "AscScore",
    "AscVariant",
    "Criterion",
    "Dataset",
    "DegenerateBaseline",
    "EmptyData",
    "ExperimentConfig",
    "GPModel",
    "GaussianDist",
    "GpSelectError",
    "InsufficientData",
    "JointGaussian",
    "KernelSpec",
    "KernelStructure",
    "MeanSpec",
    "ObjectiveSpec",
    "OptResult",
    "OptimizationFailed",
    "Partition",
    "RankDeficient",
    "RankingReport",
    "SchemaError",
    "SingularCovariance",
    "aggregate_ranks",
    "average_log_eta",
    "condition",
    "evaluate_criterion",
    "finite_diff_gradient",
    "joint_latent_output",
    "kernel_matrix",
    "load_csv_dataset",
    "log_eta_bayesian",
    "log_eta_beta_noise",
    "log_evidence",
    "log_gaussian_quadratic_integral",
    "log_product_integral",
    "loo_cv_objective",
    "maxent_linear_map_posterior",
    "mean_vector",
    "msll",
    "noisy_kernel_matrix",
    "optimize",
    "predict",
    "rank_students",
    "run_ranking",
    "sample_partitions",
    "sample_synthetic",
]
