"""Gaussian-process regression: joints, predictives, and the classic objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import DegenerateBaseline
from .gaussian import GaussianDist, JointGaussian, chol_spd, _LOG_2PI
from .kernels import KernelSpec, MeanSpec, kernel_matrix, mean_vector, noisy_kernel_matrix


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs as columns of X (D x N) with outputs y (N,).

    ``meta`` carries provenance such as the input standardization transform;
    it never affects numerical results.
    """

    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[1] != y.size:
            raise ValueError(f"X has {X.shape[1]} columns but y has length {y.size}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class GPModel:
    mean: MeanSpec
    kernel: KernelSpec


def joint_latent_output(model: GPModel, anchors, data: Dataset) -> JointGaussian:
    """Joint Gaussian over (latent values at the anchors, noisy outputs).

    Top block: latent f at the anchor inputs, noise-free. Bottom block: the
    observed outputs with sigma_n^2 on the diagonal. The anchor Gram matrix
    must factor (after jitter) or SingularCovariance is raised.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    cov_tt = kernel_matrix(model.kernel, anchors, anchors)
    chol_spd(cov_tt, "anchor covariance")  # invertibility check only
    return JointGaussian(
        mean_top=mean_vector(model.mean, anchors),
        mean_bottom=mean_vector(model.mean, data.X),
        cov_tt=cov_tt,
        cov_bb=noisy_kernel_matrix(model.kernel, data.X),
        cov_bt=kernel_matrix(model.kernel, data.X, anchors),
    )


def log_evidence(model: GPModel, data: Dataset) -> float:
    """log p(y | X) under the GP prior and Gaussian noise."""
    if data.n < 1:
        raise ValueError("evidence requires at least one data point")
    prior = GaussianDist.from_moments(
        mean_vector(model.mean, data.X),
        noisy_kernel_matrix(model.kernel, data.X),
        "output covariance",
    )
    return prior.log_density(data.y)


def loo_cv_objective(model: GPModel, data: Dataset) -> float:
    """Negative mean leave-one-out log predictive density (lower is better).

    Each fold's predictive is the 1-D conditional of y_k given the remaining
    outputs under the joint N(m(X), K + sigma_n^2 I). Computed through the
    precision matrix in O(N^3) total rather than refactoring per fold.
    """
    if data.n < 2:
        raise ValueError("leave-one-out requires at least two data points")
    m = mean_vector(model.mean, data.X)
    factor, _ = chol_spd(noisy_kernel_matrix(model.kernel, data.X), "output covariance")
    prec = cho_solve((factor, True), np.eye(data.n))
    q = np.diag(prec)
    alpha = prec @ (data.y - m)
    # fold k: mean y_k - alpha_k / q_k, variance 1 / q_k
    log_pred = -0.5 * (np.log(2.0 * np.pi / q) + alpha**2 / q)
    return float(-np.mean(log_pred))


def predict(model: GPModel, train: Dataset, xstar) -> GaussianDist:
    """Predictive Gaussian over noisy test outputs at the given inputs."""
    xstar = np.atleast_2d(np.asarray(xstar, dtype=float))
    if xstar.shape[1] < 1:
        raise ValueError("prediction requires at least one test input")
    factor, _ = chol_spd(noisy_kernel_matrix(model.kernel, train.X), "training covariance")
    cross = kernel_matrix(model.kernel, train.X, xstar)  # (N, P)
    gain = cho_solve((factor, True), cross)
    mean = mean_vector(model.mean, xstar) + gain.T @ (train.y - mean_vector(model.mean, train.X))
    cov = noisy_kernel_matrix(model.kernel, xstar) - cross.T @ gain
    return GaussianDist.from_moments(mean, 0.5 * (cov + cov.T), "predictive covariance")


def msll(predictive: GaussianDist, y_test, train_y) -> float:
    """Mean standardized log loss of a predictive against held-out outputs.

    Per test point: negative log predictive density (marginal variance from
    the predictive diagonal) minus the same loss under a single Gaussian
    fitted to the training outputs. Negative values beat that baseline.
    """
    y_test = np.asarray(y_test, dtype=float).reshape(-1)
    train_y = np.asarray(train_y, dtype=float).reshape(-1)
    if predictive.dim != y_test.size:
        raise ValueError(f"predictive dimension {predictive.dim} != test length {y_test.size}")
    if train_y.size == 0:
        raise DegenerateBaseline("no training outputs for the trivial baseline")
    base_mean = float(np.mean(train_y))
    base_var = float(np.var(train_y))
    if not base_var > 0.0:
        raise DegenerateBaseline("training outputs have zero variance")
    pred_var = np.diag(predictive.cov)
    loss_model = 0.5 * (_LOG_2PI + np.log(pred_var) + (y_test - predictive.mean) ** 2 / pred_var)
    loss_base = 0.5 * (_LOG_2PI + np.log(base_var) + (y_test - base_mean) ** 2 / base_var)
    return float(np.mean(loss_model - loss_base))
