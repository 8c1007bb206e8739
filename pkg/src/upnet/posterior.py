"""Posterior summaries shared by the network, sampler and grid estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["PosteriorSummary", "PosteriorBatch"]


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and standard deviation of one parameter, in its own units.

    ``cov`` optionally maps another parameter's name to the posterior
    covariance with it.
    """

    mean: float
    sd: float
    cov: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.sd)):
            raise ValueError("posterior summary must be finite")
        if self.sd < 0:
            raise ValueError("posterior sd must be non-negative")


@dataclass(frozen=True, eq=False)
class PosteriorBatch:
    """Column-wise posterior summaries for many records."""

    mean: np.ndarray
    sd: np.ndarray
    cov: dict = field(default_factory=dict)
    clamped: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.mean.shape[0]

    def __getitem__(self, i) -> PosteriorSummary:
        return PosteriorSummary(float(self.mean[i]), float(self.sd[i]),
                                {k: float(v[i]) for k, v in self.cov.items()})

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def n_clamped(self) -> int:
        return 0 if self.clamped is None else int(np.count_nonzero(self.clamped))

    @classmethod
    def from_summaries(cls, summaries, **extra) -> "PosteriorBatch":
        summaries = list(summaries)
        keys = summaries[0].cov.keys() if summaries else ()
        return cls(np.array([s.mean for s in summaries]), np.array([s.sd for s in summaries]),
                   {k: np.array([s.cov[k] for s in summaries]) for k in keys},
                   extra={k: np.asarray(v) for k, v in extra.items()})
