"""Reference posteriors: dense tensor-grid integration and the conjugate
linear-Gaussian formulas.

The grid oracle evaluates the unnormalised posterior on every node of a
uniform grid over the prior support and takes equally weighted (Riemann)
moments. It is only practical for up to three free parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .posterior import PosteriorBatch, PosteriorSummary
from .simulation import NoiseModel, PriorSpec

__all__ = [
    "GridSpec",
    "GridOracle",
    "grid_posterior",
    "grid_posterior_cov",
    "analytic_posterior",
    "gaussian_posterior",
    "DEFAULT_POINTS",
]

DEFAULT_POINTS = {1: 2001, 2: 401, 3: 101}
MAX_FREE = 3
# grid half-width for unbounded priors, in prior sds
UNBOUNDED_WIDTH = 8.0


@dataclass(frozen=True)
class GridSpec:
    """Per-free-parameter ``(index, low, high, points)`` axes."""

    axes: tuple
    budget: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(tuple(a) for a in self.axes))
        for idx, lo, hi, pts in self.axes:
            if not lo < hi:
                raise ValueError(f"grid axis {idx}: need low < high")
            if pts < 2:
                raise ValueError(f"grid axis {idx}: need at least 2 points")
        if self.size > self.budget:
            raise ValueError(f"grid has {self.size} nodes, budget is {self.budget}")

    @property
    def size(self) -> int:
        return int(np.prod([a[3] for a in self.axes])) if self.axes else 1

    @classmethod
    def from_prior(cls, prior: PriorSpec, points=None, budget=10_000_000) -> "GridSpec":
        free = prior.free_indices
        if len(free) > MAX_FREE:
            raise ValueError(f"grid oracle supports at most {MAX_FREE} free parameters, got {len(free)}")
        if points is None:
            points = DEFAULT_POINTS.get(len(free), 2)
        if np.isscalar(points):
            points = [int(points)] * len(free)
        axes = []
        for i, pts in zip(free, points):
            e = prior.entries[i]
            lo, hi = e.support()
            if not math.isfinite(lo):
                lo = e.mean() - UNBOUNDED_WIDTH * e.sd()
            if not math.isfinite(hi):
                hi = e.mean() + UNBOUNDED_WIDTH * e.sd()
            axes.append((int(i), float(lo), float(hi), int(pts)))
        return cls(tuple(axes), budget)

    def nodes(self, prior: PriorSpec) -> np.ndarray:
        """All grid nodes as full parameter vectors (fixed entries filled in)."""
        grids = np.meshgrid(*[np.linspace(lo, hi, pts) for _, lo, hi, pts in self.axes],
                            indexing="ij")
        theta = np.tile(prior.means(), (self.size, 1))
        for (idx, *_), g in zip(self.axes, grids):
            theta[:, idx] = g.ravel()
        return theta


class GridOracle:
    """Grid posterior for a fixed (model, prior, noise, grid).

    The forward model is evaluated once on all nodes; each observation then
    costs one pass over the cached reflectances.
    """

    def __init__(self, model, prior: PriorSpec, noise: NoiseModel, grid: GridSpec | None = None):
        if len(prior.free_indices) > MAX_FREE:
            raise ValueError(f"grid oracle supports at most {MAX_FREE} free parameters")
        self.prior = prior
        self.grid = grid or GridSpec.from_prior(prior)
        self.nodes = self.grid.nodes(prior)
        log_prior = np.asarray(prior.logpdf(self.nodes), dtype=float)
        keep = np.isfinite(log_prior)
        self.nodes = self.nodes[keep]
        self._log_prior = log_prior[keep]
        f = model(self.nodes)
        sd = noise.sd(f)
        if np.any(sd <= 0):
            raise ValueError("grid oracle needs strictly positive observation noise")
        self._f = f
        self._inv_sd = 1.0 / sd
        self._log_norm = self._log_prior - np.log(sd).sum(axis=1) - 0.5 * math.log(2 * math.pi) * f.shape[1]

    def log_weights(self, r) -> np.ndarray:
        z = (np.asarray(r, dtype=float) - self._f) * self._inv_sd
        return self._log_norm - 0.5 * np.einsum("ij,ij->i", z, z)

    def weights(self, r) -> np.ndarray:
        """Normalised node weights (log-sum-exp stabilised)."""
        lw = self.log_weights(r)
        top = lw.max()
        if not math.isfinite(top):
            raise NumericalError(f"all grid weights vanish (max log posterior {top})")
        w = np.exp(lw - top)
        total = w.sum()
        if not total > 0:
            raise NumericalError(f"all grid weights vanish (max log posterior {top})")
        return w / total

    def moments(self, r):
        """Posterior mean vector and covariance matrix over all parameters."""
        w = self.weights(r)
        mean = w @ self.nodes
        dev = self.nodes - mean
        cov = dev.T @ (dev * w[:, None])
        return mean, cov

    def summary(self, r, target_index: int) -> PosteriorSummary:
        mean, cov = self.moments(r)
        k = target_index
        others = {self.prior.names[j]: float(cov[k, j]) for j in self.prior.free_indices if j != k}
        return PosteriorSummary(float(mean[k]), float(math.sqrt(max(cov[k, k], 0.0))), others)

    def summary_batch(self, reflectances, target_index: int) -> PosteriorBatch:
        return PosteriorBatch.from_summaries(
            [self.summary(r, target_index) for r in np.atleast_2d(reflectances)])


def grid_posterior(r, model, prior: PriorSpec, noise: NoiseModel, grid: GridSpec | None,
                   target_index: int) -> PosteriorSummary:
    return GridOracle(model, prior, noise, grid).summary(r, target_index)


def grid_posterior_cov(r, model, prior: PriorSpec, noise: NoiseModel, grid: GridSpec | None,
                       indices) -> float:
    k, j = indices
    _, cov = GridOracle(model, prior, noise, grid).moments(r)
    return float(cov[k, j])


def gaussian_posterior(matrix_a, offset_b, mu0, sigma0, sigma_r, r):
    """Conjugate update for ``r ~ N(A theta + b, Sigma_r)``, ``theta ~ N(mu0, Sigma0)``.

    Returns ``(posterior mean, posterior covariance)``.
    """
    a = np.atleast_2d(np.asarray(matrix_a, dtype=float))
    b = np.asarray(offset_b, dtype=float).reshape(-1)
    mu0 = np.asarray(mu0, dtype=float).reshape(-1)
    s0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    sr = np.atleast_2d(np.asarray(sigma_r, dtype=float))
    try:
        np.linalg.cholesky(s0)
        np.linalg.cholesky(sr)
        s0_inv = np.linalg.inv(s0)
        at_sr_inv = np.linalg.solve(sr, a).T
        precision = s0_inv + at_sr_inv @ a
        cov = np.linalg.inv(precision)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"covariance matrices must be positive definite: {exc}") from None
    mean = cov @ (s0_inv @ mu0 + at_sr_inv @ (np.asarray(r, dtype=float) - b))
    return mean, 0.5 * (cov + cov.T)


def analytic_posterior(model, mu0, sigma0, sigma_r, r, target_index: int = 0) -> PosteriorSummary:
    """Closed-form posterior summary for a :class:`~upnet.forward_model.LinearGaussianModel`.

    ``cov`` holds the posterior covariance of the target with every other
    parameter, keyed by parameter name.
    """
    mean, cov = gaussian_posterior(model.matrix_a, model.offset_b, mu0, sigma0, sigma_r, r)
    k = target_index
    others = {name: float(cov[k, j]) for j, name in enumerate(model.param_names) if j != k}
    return PosteriorSummary(float(mean[k]), float(math.sqrt(cov[k, k])), others)
