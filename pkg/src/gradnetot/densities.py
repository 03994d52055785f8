"""Source and target densities: Gaussians and isotropic Gaussian mixtures.

Both density classes evaluate ``log_density`` on a single point ``(d,)`` or a
batch ``(N, d)`` and can record the same computation on an autodiff tape via
``log_density_node`` so that ``log q(T(x))`` is differentiable in the map.
Random draws use ``numpy.random.Generator`` instances supplied by the caller.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from . import linalg
from .errors import AllZeroImage, DimensionMismatch, NotPositiveDefinite

LOG_2PI = np.log(2.0 * np.pi)


def _batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {x.shape}")
    return X, single


class GaussianDensity:
    """Multivariate normal ``N(mean, cov)`` with a cached Cholesky factor."""

    kind = "gaussian"

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"covariance {cov.shape} does not match mean of size {mean.size}")
        self.mean = mean
        self.cov = linalg.symmetrize(cov)
        self.chol = linalg.cholesky(self.cov)
        self.logdet_cov = float(linalg.logdet_from_cholesky(self.chol))
        self._prec_factor = linalg.solve_lower(self.chol, np.eye(mean.size)).T  # L^{-T}

    @property
    def dim(self):
        return self.mean.size

    def log_density(self, x):
        X, single = _batch(x, self.dim)
        z = (X - self.mean) @ self._prec_factor
        out = -0.5 * np.sum(z * z, axis=1) - 0.5 * self.logdet_cov - 0.5 * self.dim * LOG_2PI
        return out[0] if single else out

    def log_density_node(self, y):
        """Tape version of :meth:`log_density` for a ``(B, d)`` node."""
        z = (y - self.mean) @ self._prec_factor
        return ad.sum(ad.square(z), axis=1) * -0.5 + (-0.5 * self.logdet_cov - 0.5 * self.dim * LOG_2PI)

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self.chol.T

    def to_dict(self):
        return {"type": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians sharing one variance ``sigma2``."""

    weights: np.ndarray
    means: np.ndarray
    sigma2: float
    _log_weights: np.ndarray = field(init=False, repr=False, compare=False)

    kind = "mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        if m.shape[0] != w.size:
            raise DimensionMismatch(f"{w.size} weights for {m.shape[0]} means")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not np.all(np.isfinite(m)):
            raise ValueError("mixture means must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_weights", np.log(w))

    @property
    def dim(self):
        return self.means.shape[1]

    def with_sigma2(self, sigma2):
        """Same components and weights, new shared variance."""
        return GaussianMixture(self.weights, self.means, sigma2)

    def log_density(self, x):
        X, single = _batch(x, self.dim)
        diff = X[:, None, :] - self.means[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        logits = self._log_weights - sq / (2.0 * self.sigma2)
        out = logsumexp(logits, axis=1) - 0.5 * self.dim * (LOG_2PI + np.log(self.sigma2))
        return out[0] if single else out

    def log_density_node(self, y):
        B, d = y.shape
        # ||y - m||^2 expanded so the cross term is a single (B, d) x (d, K) product
        sq = (
            ad.reshape(ad.sum(ad.square(y), axis=1), (B, 1))
            - (y @ self.means.T) * 2.0
            + np.sum(self.means * self.means, axis=1)
        )
        logits = sq * (-0.5 / self.sigma2) + self._log_weights
        return ad.logsumexp(logits, axis=1) - 0.5 * self.dim * (LOG_2PI + np.log(self.sigma2))

    def sample(self, rng, n):
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.sigma2) * z

    def to_dict(self):
        return {
            "type": "mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "sigma2": self.sigma2,
        }


def image_to_mixture(pixels, sigma2):
    """Gaussian mixture with one component per positive pixel of an ``n x n`` image.

    Pixel ``(i, j)`` (row ``i``, column ``j``) sits at ``(i/(n-1), j/(n-1))``
    and carries weight proportional to its intensity; weights are normalized
    to sum to one. Zero pixels are dropped.
    """
    I = np.asarray(pixels, dtype=np.float64)
    if I.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D intensity grid, got shape {I.shape}")
    if np.any(I < 0) or not np.all(np.isfinite(I)):
        raise ValueError("intensities must be finite and nonnegative")
    if not np.any(I > 0):
        raise AllZeroImage("image has no positive pixel")
    n_rows, n_cols = I.shape
    rows, cols = np.nonzero(I > 0)
    means = np.column_stack([rows / max(n_rows - 1, 1), cols / max(n_cols - 1, 1)])
    w = I[rows, cols]
    w = w / w.sum()
    return GaussianMixture(w, means, sigma2)


def random_gaussian(dim, rng, retries=3):
    """Mean ~ N(0, I), covariance ~ Wishart(I, dim + 1)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    for _ in range(retries):
        mean = rng.standard_normal(dim)
        G = rng.standard_normal((dim + 1, dim))
        cov = G.T @ G
        try:
            return GaussianDensity(mean, cov)
        except NotPositiveDefinite:
            continue
    raise NotPositiveDefinite(f"Wishart draw was singular {retries} times in a row")


def density_from_dict(spec):
    """Inverse of ``to_dict`` for both density classes."""
    kind = spec.get("type")
    if kind == "gaussian":
        return GaussianDensity(spec["mean"], spec["cov"])
    if kind == "mixture":
        return GaussianMixture(np.asarray(spec["weights"]), np.asarray(spec["means"]), spec["sigma2"])
    raise ValueError(f"unknown density type {kind!r}")
