"""Multivariate-Gaussian algebra: densities, conditioning and closed-form integrals.

Everything here works in log space; raw densities are never multiplied.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, ldl, solve_triangular

from .errors import RankDeficient, SingularCovariance

_LOG_2PI = float(np.log(2.0 * np.pi))

# Escalating diagonal jitter, as multiples of the mean diagonal entry.
_JITTER_SCALES = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def chol_spd(mat: np.ndarray, name: str = "covariance") -> tuple[np.ndarray, np.ndarray]:
    """Lower Cholesky factor of a (nearly) SPD matrix.

    The matrix is symmetrized first; on factorization failure the diagonal is
    jittered by 1e-10 .. 1e-6 times the mean diagonal entry, escalating x10.
    Returns ``(factor, matrix actually factored)`` so callers can keep the two
    consistent. Raises :class:`SingularCovariance` carrying the smallest
    pivot once the jitter ladder is exhausted.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + mat.T)
    n = sym.shape[0]
    base = np.trace(sym) / n if n else 0.0
    if not np.isfinite(base) or base <= 0.0:
        base = 1.0  # zero/negative diagonal: fall back to absolute jitter
    eye = np.eye(n)
    for scale in _JITTER_SCALES:
        shifted = sym if scale == 0.0 else sym + (scale * base) * eye
        try:
            return np.linalg.cholesky(shifted), shifted
        except np.linalg.LinAlgError:
            continue
    raise SingularCovariance(
        f"{name} is not positive-definite", smallest_pivot=_smallest_pivot(sym)
    )


def _smallest_pivot(sym: np.ndarray) -> float | None:
    try:
        _, d, _ = ldl(sym, lower=True)
        return float(np.min(np.linalg.eigvalsh(d)))
    except Exception:
        return None


def _half_logdet(chol: np.ndarray) -> float:
    return float(np.sum(np.log(np.diag(chol))))


def _logpdf_dev(chol: np.ndarray, dev: np.ndarray) -> float:
    """log N(dev | 0, L L^T) from the cached factor."""
    z = solve_triangular(chol, dev, lower=True)
    return float(-0.5 * (dev.size * _LOG_2PI + z @ z) - _half_logdet(chol))


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Gaussian with a cached lower-triangular factor of its covariance.

    Construct through :meth:`from_moments`, which symmetrizes and applies the
    jitter ladder; ``cov`` always equals ``chol @ chol.T`` up to round-off.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray

    @classmethod
    def from_moments(cls, mean, cov, name: str = "covariance") -> "GaussianDist":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if cov.size and float(np.max(np.abs(cov - cov.T))) > 1e-10:
            raise ValueError("covariance is asymmetric beyond tolerance 1e-10")
        factor, used = chol_spd(cov, name)
        return cls(mean=mean, cov=used, chol=factor)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"point has length {x.size}, expected {self.dim}")
        return _logpdf_dev(self.chol, x - self.mean)


@dataclass(frozen=True, eq=False)
class JointGaussian:
    """Block Gaussian over stacked (top, bottom) vectors.

    ``cov_bt`` is the bottom-by-top cross block, so the assembled covariance
    is ``[[cov_tt, cov_bt.T], [cov_bt, cov_bb]]``.
    """

    mean_top: np.ndarray
    mean_bottom: np.ndarray
    cov_tt: np.ndarray
    cov_bb: np.ndarray
    cov_bt: np.ndarray

    def __post_init__(self):
        m, n = self.mean_top.size, self.mean_bottom.size
        if self.cov_tt.shape != (m, m):
            raise ValueError(f"top covariance shape {self.cov_tt.shape}, expected {(m, m)}")
        if self.cov_bb.shape != (n, n):
            raise ValueError(f"bottom covariance shape {self.cov_bb.shape}, expected {(n, n)}")
        if self.cov_bt.shape != (n, m):
            raise ValueError(f"cross block shape {self.cov_bt.shape}, expected {(n, m)}")

    def assembled_mean(self) -> np.ndarray:
        return np.concatenate([self.mean_top, self.mean_bottom])

    def assembled_cov(self) -> np.ndarray:
        return np.block([[self.cov_tt, self.cov_bt.T], [self.cov_bt, self.cov_bb]])


def condition(joint: JointGaussian, observed_bottom) -> GaussianDist:
    """Gaussian over the top block given an observed bottom block."""
    obs = np.asarray(observed_bottom, dtype=float).reshape(-1)
    if obs.size != joint.mean_bottom.size:
        raise ValueError(
            f"observation has length {obs.size}, expected {joint.mean_bottom.size}"
        )
    factor, _ = chol_spd(joint.cov_bb, "bottom-block covariance")
    gain = cho_solve((factor, True), joint.cov_bt)  # cov_bb^{-1} cov_bt
    mean = joint.mean_top + gain.T @ (obs - joint.mean_bottom)
    cov = joint.cov_tt - joint.cov_bt.T @ gain
    return GaussianDist.from_moments(mean, 0.5 * (cov + cov.T), "conditional covariance")


def log_gaussian_quadratic_integral(mu, lam) -> float:
    """log of  integral exp(x^T (mu - Lambda x / 2)) dx  for SPD Lambda.

    Equals ``-log|Lambda| - log N(mu | 0, Lambda)`` with Lambda placed in the
    covariance slot of the density.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (mu.size, mu.size):
        raise ValueError(f"matrix shape {lam.shape} does not match vector length {mu.size}")
    factor, _ = chol_spd(lam, "quadratic-form matrix")
    return -2.0 * _half_logdet(factor) - _logpdf_dev(factor, mu)


def log_product_integral(
    components: list[GaussianDist],
) -> tuple[float, GaussianDist]:
    """log of  integral prod_k N(x | mu_k, Sigma_k) dx  and the product Gaussian.

    The integral equals ``prod_k N(mu_k | 0, Sigma_k) / (|Lambda| N(r | 0, Lambda))``
    with ``r = sum_k Sigma_k^{-1} mu_k`` and ``Lambda = sum_k Sigma_k^{-1}``; the
    normalized product of the component densities is ``N(Lambda^{-1} r, Lambda^{-1})``,
    which is returned alongside the log value.
    """
    if not components:
        raise ValueError("need at least one component")
    n = components[0].dim
    if any(c.dim != n for c in components):
        raise ValueError("components have mismatched dimensions")
    eye = np.eye(n)
    log_gamma = 0.0
    lam = np.zeros((n, n))
    r = np.zeros(n)
    for c in components:
        log_gamma += _logpdf_dev(c.chol, c.mean)
        prec = cho_solve((c.chol, True), eye)
        lam += 0.5 * (prec + prec.T)
        r += cho_solve((c.chol, True), c.mean)
    factor, _ = chol_spd(lam, "precision sum")
    value = log_gamma - 2.0 * _half_logdet(factor) - _logpdf_dev(factor, r)
    cov = cho_solve((factor, True), eye)
    mean = cho_solve((factor, True), r)
    product = GaussianDist.from_moments(mean, 0.5 * (cov + cov.T), "product covariance")
    return value, product


def maxent_linear_map_posterior(A, mu, sigma) -> GaussianDist:
    """Normalize N(A^T x | mu, Sigma) as a density over x.

    For ``A`` (m x n) of full row rank the result is
    ``N(Lambda^{-1} r, Lambda^{-1})`` with ``r = A Sigma^{-1} mu`` and
    ``Lambda = A Sigma^{-1} A^T``. Rank deficiency surfaces as a failed
    factorization of Lambda and raises :class:`RankDeficient`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    mu = np.asarray(mu, dtype=float).reshape(-1)
    m, n = A.shape
    if m > n:
        raise ValueError(f"map has more rows ({m}) than columns ({n}); cannot have full row rank")
    if mu.size != n:
        raise ValueError(f"vector length {mu.size} does not match map columns {n}")
    factor, _ = chol_spd(np.asarray(sigma, dtype=float), "noise covariance")
    w = cho_solve((factor, True), A.T)  # Sigma^{-1} A^T
    lam = A @ w
    r = w.T @ mu
    # strict factorization: a jittered rescue here would mask rank deficiency
    try:
        lam_factor = np.linalg.cholesky(0.5 * (lam + lam.T))
    except np.linalg.LinAlgError as err:
        raise RankDeficient("linear map does not have full row rank") from err
    cov = cho_solve((lam_factor, True), np.eye(m))
    mean = cho_solve((lam_factor, True), r)
    return GaussianDist.from_moments(mean, 0.5 * (cov + cov.T), "normalized-map covariance")
