"""Gaussian spatial model families: autoregressive lattice models and kernel
Gaussian fields, plus the shared multivariate-normal value type.

All densities are represented by :class:`GaussianDensity`: a mean vector plus
a cached lower Cholesky factor of either the covariance or the precision.
That one type is the currency for data-generating processes, marginal
likelihood evaluation, simulation, and the predictive blocks produced by the
posterior approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .lattice import AdjacencyMatrix

COVARIANCE = "covariance"
PRECISION = "precision"

KERNEL_KINDS = ("matern_half", "exp_quadratic")

_LOG_2PI = math.log(2.0 * math.pi)


class SingularModelError(Exception):
    """The requested parameters do not yield a positive-definite model."""


@dataclass(frozen=True)
class SarParams:
    """Autoregressive model parameters: regression coefficients, spatial
    coefficient and noise variance."""

    beta: np.ndarray
    rho: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class KernelParams:
    """Kernel field parameters: length scale and amplitude."""

    lam: float
    sigma: float

    def __post_init__(self):
        if not (self.lam > 0 and self.sigma > 0):
            raise ValueError(f"kernel parameters must be positive, got lam={self.lam}, sigma={self.sigma}")


@dataclass(frozen=True)
class PriorSpec:
    """Weakly-informative prior settings.

    Regression coefficients get independent normal(beta_mean, beta_variance)
    priors, the spatial coefficient a Beta(rho_a, rho_b), and every positive
    scale parameter a half-normal with the given underlying variance
    (``N_+(0, v)`` notation: the density at 0 is ``2 / sqrt(2 pi v)``).
    """

    beta_mean: float = 0.0
    beta_variance: float = 10.0
    rho_a: float = 2.0
    rho_b: float = 2.0
    sigma2_variance: float = 10.0
    sigma_variance: float = 1.0
    lambda_variance: float = 1.0


@dataclass(frozen=True)
class ModelSpec:
    """One candidate model: family, spatial structure, covariate subset,
    priors, and (optionally) clamped parameter values.

    ``family`` is one of ``"sar"``, ``"modified_sar"``, ``"kernel"``.  SAR
    variants need ``adjacency``; kernel fields need ``kernel`` and ``dist``
    (the centroid distance matrix).  ``columns`` selects covariate columns
    of the experiment design matrix (None = all).  ``fixed`` clamps the
    parameters to known values, turning posterior approximation into exact
    Gaussian conditioning (used by oracle tests).
    """

    family: str
    adjacency: AdjacencyMatrix | None = None
    kernel: str | None = None
    dist: np.ndarray | None = None
    columns: tuple[int, ...] | None = None
    priors: PriorSpec = field(default_factory=PriorSpec)
    fixed: SarParams | KernelParams | None = None

    def __post_init__(self):
        if self.family in ("sar", "modified_sar"):
            if self.adjacency is None:
                raise ValueError(f"{self.family} model requires an adjacency matrix")
        elif self.family == "kernel":
            if self.kernel not in KERNEL_KINDS:
                raise ValueError(f"kernel must be one of {KERNEL_KINDS}, got {self.kernel!r}")
            if self.dist is None:
                raise ValueError("kernel model requires a distance matrix")
        else:
            raise ValueError(f"unknown model family {self.family!r}")


class GaussianDensity:
    """Multivariate normal with a cached Cholesky factorization.

    Parameters
    ----------
    mean : (n,) array
    factor : (n, n) lower-triangular Cholesky factor of the covariance or
        the precision, according to ``shape``.
    shape : "covariance" or "precision"
    """

    def __init__(self, mean: np.ndarray, factor: np.ndarray, shape: str):
        if shape not in (COVARIANCE, PRECISION):
            raise ValueError(f"shape must be covariance or precision, got {shape!r}")
        mean = np.asarray(mean, dtype=float).ravel()
        factor = np.asarray(factor, dtype=float)
        if factor.shape != (mean.size, mean.size):
            raise ValueError("factor dimension does not match mean")
        self.mean = mean
        self.factor = factor
        self.shape = shape
        # log-determinant of the factored matrix (covariance or precision)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(factor))))

    @classmethod
    def from_covariance(cls, mean: np.ndarray, cov: np.ndarray) -> "GaussianDensity":
        return cls(mean, sla.cholesky(cov, lower=True), COVARIANCE)

    @classmethod
    def from_precision(cls, mean: np.ndarray, prec: np.ndarray) -> "GaussianDensity":
        return cls(mean, sla.cholesky(prec, lower=True), PRECISION)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, y: np.ndarray) -> float:
        """Exact multivariate normal log density at ``y``."""
        y = np.asarray(y, dtype=float).ravel()
        if y.size != self.dim:
            raise ValueError(f"dimension mismatch: density has dim {self.dim}, y has {y.size}")
        r = y - self.mean
        if self.shape == COVARIANCE:
            u = sla.solve_triangular(self.factor, r, lower=True)
            return -0.5 * (self.dim * _LOG_2PI + self.logdet + float(u @ u))
        u = self.factor.T @ r
        return -0.5 * (self.dim * _LOG_2PI - self.logdet + float(u @ u))

    def from_standard_normal(self, z: np.ndarray) -> np.ndarray:
        """Map a standard-normal draw through the factorization."""
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.dim:
            raise ValueError("dimension mismatch in from_standard_normal")
        if self.shape == COVARIANCE:
            return self.mean + self.factor @ z
        return self.mean + sla.solve_triangular(self.factor, z, lower=True, trans="T")

    def simulate(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one realization; deterministic given the generator state."""
        return self.from_standard_normal(rng.standard_normal(self.dim))

    def marginal_variances(self) -> np.ndarray:
        """Diagonal of the covariance matrix."""
        if self.shape == COVARIANCE:
            return np.sum(self.factor**2, axis=1)
        z = sla.solve_triangular(self.factor, np.eye(self.dim), lower=True)
        return np.sum(z**2, axis=0)

    def covariance(self) -> np.ndarray:
        if self.shape == COVARIANCE:
            return self.factor @ self.factor.T
        inv = sla.solve_triangular(self.factor, np.eye(self.dim), lower=True)
        return inv.T @ inv


def log_density(g: GaussianDensity, y: np.ndarray) -> float:
    return g.log_density(y)


def simulate(g: GaussianDensity, rng: np.random.Generator) -> np.ndarray:
    return g.simulate(rng)


def _check_rho(adj: AdjacencyMatrix, rho: float) -> None:
    if adj.standardized:
        if not (0.0 <= rho < 1.0):
            raise SingularModelError(
                f"rho={rho} outside [0, 1) for row-standardized weights"
            )
    else:
        lo, hi = adj.rho_interval()
        if not (lo < rho < hi):
            raise SingularModelError(f"rho={rho} outside spectral interval ({lo}, {hi})")


def _sar_precision(adj: AdjacencyMatrix, rho: float, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    n = adj.n
    a = np.eye(n) - rho * adj.toarray()
    prec = (a.T @ a) / sigma2
    return a, prec


def sar_density(adj: AdjacencyMatrix, X: np.ndarray, p: SarParams) -> GaussianDensity:
    """Joint density of the autoregressive model (I - rho W) y = X beta + eps.

    Mean is (I - rho W)^-1 X beta and precision (1/sigma2) A^T A with
    A = I - rho W.  Returned in precision shape.
    """
    _check_rho(adj, p.rho)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != adj.n:
        raise ValueError(f"X must be ({adj.n}, k), got {X.shape}")
    if X.shape[1] != p.beta.size:
        raise ValueError(f"beta length {p.beta.size} does not match X columns {X.shape[1]}")
    a, prec = _sar_precision(adj, p.rho, p.sigma2)
    mean = sla.solve(a, X @ p.beta)
    try:
        return GaussianDensity.from_precision(mean, prec)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by _check_rho
        raise SingularModelError(f"precision not positive definite at rho={p.rho}") from exc


def modified_sar_density(adj: AdjacencyMatrix, X: np.ndarray, p: SarParams) -> GaussianDensity:
    """Spatial-error variant: mean X beta, autoregressive structure on the
    noise only.  Same precision as :func:`sar_density`."""
    _check_rho(adj, p.rho)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != adj.n:
        raise ValueError(f"X must be ({adj.n}, k), got {X.shape}")
    if X.shape[1] != p.beta.size:
        raise ValueError(f"beta length {p.beta.size} does not match X columns {X.shape[1]}")
    _, prec = _sar_precision(adj, p.rho, p.sigma2)
    mean = X @ p.beta
    try:
        return GaussianDensity.from_precision(mean, prec)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularModelError(f"precision not positive definite at rho={p.rho}") from exc


JITTER_BASE = 1e-8
JITTER_MAX = 1e-4


def kernel_matrix(kind: str, dist: np.ndarray, p: KernelParams, jitter: float = JITTER_BASE) -> np.ndarray:
    """Dense covariance from an isotropic kernel on a distance matrix.

    matern_half:    sigma^2 exp(-d / lam)
    exp_quadratic:  sigma^2 exp(-d^2 / (2 lam^2))

    The diagonal carries a relative jitter (jitter * sigma^2) for numerical
    stability; the model itself has no nugget.
    """
    if kind == "matern_half":
        corr = np.exp(-dist / p.lam)
    elif kind == "exp_quadratic":
        corr = np.exp(-(dist**2) / (2.0 * p.lam**2))
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    k = p.sigma**2 * corr
    k[np.diag_indices_from(k)] += jitter * p.sigma**2
    return k


def kernel_covariance(kind: str, dist: np.ndarray, p: KernelParams) -> GaussianDensity:
    """Zero-mean Gaussian field with the requested kernel (covariance shape).

    Jitter escalates tenfold on Cholesky failure, up to 1e-4 * sigma^2.
    """
    dist = np.asarray(dist, dtype=float)
    jitter = JITTER_BASE
    while True:
        k = kernel_matrix(kind, dist, p, jitter)
        try:
            return GaussianDensity.from_covariance(np.zeros(dist.shape[0]), k)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise SingularModelError(
                    f"kernel matrix not positive definite at lam={p.lam}, sigma={p.sigma}"
                )


# ---------------------------------------------------------------------------
# priors


def _normal_logpdf(x, mean, variance):
    return -0.5 * (_LOG_2PI + math.log(variance)) - (x - mean) ** 2 / (2.0 * variance)


def _beta_logpdf(x, a, b):
    if not (0.0 < x < 1.0):
        return -np.inf
    return (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + (a - 1.0) * math.log(x)
        + (b - 1.0) * math.log(1.0 - x)
    )


def _half_normal_logpdf(x, variance):
    if x < 0.0:
        return -np.inf
    return 0.5 * math.log(2.0 / (math.pi * variance)) - x**2 / (2.0 * variance)


def log_prior(p: SarParams | KernelParams, spec: PriorSpec) -> float:
    """Sum of component log prior densities on the constrained scale.

    Out-of-support parameters return -inf (the transform Jacobians of the
    unconstrained optimization are accounted for elsewhere).
    """
    if isinstance(p, SarParams):
        lp = float(np.sum(_normal_logpdf(p.beta, spec.beta_mean, spec.beta_variance)))
        lp += _beta_logpdf(p.rho, spec.rho_a, spec.rho_b)
        lp += _half_normal_logpdf(p.sigma2, spec.sigma2_variance)
        return lp
    if isinstance(p, KernelParams):
        return _half_normal_logpdf(p.lam, spec.lambda_variance) + _half_normal_logpdf(
            p.sigma, spec.sigma_variance
        )
    raise TypeError(f"unsupported parameter type {type(p).__name__}")


def model_density(spec: ModelSpec, X: np.ndarray | None, p: SarParams | KernelParams) -> GaussianDensity:
    """Dispatch to the family's joint density constructor."""
    if spec.family == "sar":
        cols = list(spec.columns) if spec.columns is not None else slice(None)
        return sar_density(spec.adjacency, np.asarray(X)[:, cols], p)
    if spec.family == "modified_sar":
        cols = list(spec.columns) if spec.columns is not None else slice(None)
        return modified_sar_density(spec.adjacency, np.asarray(X)[:, cols], p)
    return kernel_covariance(spec.kernel, spec.dist, p)
