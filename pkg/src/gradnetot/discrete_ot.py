"""Reference transport maps: Gaussian whitening, entropic discrete OT, barycentric projection."""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import linalg
from .errors import DimensionMismatch, NoConvergenceWarning, NonFiniteKernel, ZeroMassRow


@dataclass(frozen=True)
class WhiteningMap:
    """``x -> Sigma0^{-1/2} (x - mu0)``, the OT map from ``N(mu0, Sigma0)`` to ``N(0, I)``."""

    mean: np.ndarray
    inv_sqrt_cov: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) @ self.inv_sqrt_cov.T

    def jacobian(self, x=None):
        return self.inv_sqrt_cov


def whitening_map(source):
    """Whitening map of a :class:`~gradnetot.densities.GaussianDensity`."""
    return WhiteningMap(source.mean.copy(), linalg.inv_sqrt_spd(source.cov))


def sqeuclidean_cost(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"point dimensions {X.shape[1]} and {Y.shape[1]} differ")
    return cdist(X, Y, "sqeuclidean")


@dataclass
class TransportPlan:
    gamma: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    marginal_error: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)

    def cost(self, C):
        return float(np.sum(self.gamma * C))

    def to_csv(self, path, threshold=1e-12):
        """Write ``i, j, gamma_ij`` for every entry above ``threshold``."""
        rows, cols = np.nonzero(self.gamma > threshold)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "gamma"])
            for i, j in zip(rows, cols):
                w.writerow([int(i), int(j), f"{self.gamma[i, j]:.17g}"])


def _logsumexp(M, axis):
    # max-shifted; several times faster than scipy.special.logsumexp at this size
    m = M.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(M - m).sum(axis=axis)) + np.squeeze(m, axis)


def sinkhorn(cost, mu, nu, epsilon=0.05, max_iter=10_000, tol=1e-6, check_every=10):
    """Entropic OT plan ``diag(u) exp(-C/eps) diag(v)`` by log-domain Sinkhorn iterations.

    Stops once the l1 error of both marginals is below ``tol``. When
    ``max_iter`` is reached first, the last iterate is returned with
    ``converged=False`` and a :class:`NoConvergenceWarning` is issued.
    ``history`` holds ``(iteration, marginal_error)`` every ``check_every``
    iterations.
    """
    C = np.asarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64).ravel()
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if C.shape != (mu.size, nu.size):
        raise DimensionMismatch(f"cost {C.shape} does not match marginals ({mu.size}, {nu.size})")
    if np.any(mu < 0) or np.any(nu < 0) or abs(mu.sum() - 1) > 1e-9 or abs(nu.sum() - 1) > 1e-9:
        raise ValueError("marginals must be nonnegative and sum to 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        K = -C / epsilon
    if not np.all(np.isfinite(K)):
        raise NonFiniteKernel("cost / epsilon is not finite")
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu), np.log(nu)
    f = np.zeros(mu.size)
    g = np.zeros(nu.size)
    history = []
    err = np.inf
    it = 0
    converged = False
    row_lse = _logsumexp(K, axis=1)
    while True:
        if it > 0 and (it % check_every == 0 or it == max_iter):
            # columns match exactly after the g-update; only rows can be off
            err = float(np.abs(np.exp(f + row_lse) - mu).sum())
            history.append((it, err))
            if err <= tol:
                converged = True
                break
        if it == max_iter:
            break
        f = log_mu - row_lse
        g = log_nu - _logsumexp(K + f[:, None], axis=0)
        row_lse = _logsumexp(K + g[None, :], axis=1)
        it += 1
    f = np.where(np.isfinite(f), f, -np.inf)
    g = np.where(np.isfinite(g), g, -np.inf)
    gamma = np.exp(K + f[:, None] + g[None, :])
    err = float(max(np.abs(gamma.sum(axis=1) - mu).sum(), np.abs(gamma.sum(axis=0) - nu).sum()))
    if not converged:
        warnings.warn(f"Sinkhorn stopped after {it} iterations with marginal error {err:.3e}", NoConvergenceWarning)
    return TransportPlan(gamma, mu, nu, err, it, converged, history)


def barycentric_projection(plan, targets):
    """Row-normalized ``gamma``-weighted average of the target points, one per source point."""
    gamma = plan.gamma if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if gamma.shape[1] != Y.shape[0]:
        raise DimensionMismatch(f"plan has {gamma.shape[1]} columns for {Y.shape[0]} targets")
    mass = gamma.sum(axis=1)
    if np.any(mass <= 0):
        raise ZeroMassRow(f"source rows without mass: {np.flatnonzero(mass <= 0)[:10].tolist()}")
    return (gamma @ Y) / mass[:, None]


def map_mse(map_a, map_b, points):
    """Mean over points of ``||map_a(x) - map_b(x)||^2``.

    Either map may be a callable or an already-evaluated ``(N, d)`` array.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("points must be nonempty")
    A = np.asarray(map_a(X) if callable(map_a) else map_a, dtype=np.float64)
    B = np.asarray(map_b(X) if callable(map_b) else map_b, dtype=np.float64)
    if A.shape != B.shape or A.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"mapped shapes {A.shape} and {B.shape} differ")
    return float(np.mean(np.sum((A - B) ** 2, axis=1)))


def interpolate(x, T_of_x, t):
    """Displacement interpolation ``(1 - t) x + t T(x)``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    return (1.0 - t) * x + t * np.asarray(T_of_x, dtype=np.float64)
