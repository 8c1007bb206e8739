"""Paired networks for the posterior mean and variance of one parameter.

Training is strictly sequential:

1. ``g`` is fitted on the simulated pairs ``(theta_k, r)`` with squared loss.
2. The squared residuals ``(theta_k - g(r))^2`` (in standardised target
   units) form a second training set over the *same* reflectances.
3. ``u`` is fitted on that set with squared loss, so it learns the
   conditional expectation of the squared error, i.e. the posterior variance.

The posterior sd is ``target_sd * sqrt(max(u, 0))``. Posterior covariances
between two parameters are learnt the same way from products of residuals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .neural_net import ScaledRegressor, TrainConfig
from .posterior import PosteriorBatch, PosteriorSummary
from .simulation import Dataset

__all__ = [
    "UpNetModel",
    "ResidualDataset",
    "train_mean_net",
    "build_d2",
    "train_variance_net",
    "train_cov_net",
    "train_upnet",
    "predict",
    "predict_batch",
    "FORMAT_VERSION",
]

FORMAT_VERSION = "upnet-model/1"


@dataclass(frozen=True, eq=False)
class ResidualDataset:
    """Squared (or cross-product) standardised residuals paired with reflectances."""

    targets: np.ndarray
    reflectance: np.ndarray

    def __len__(self):
        return self.targets.shape[0]


def _target_scaling(dataset: Dataset, k: int):
    col = dataset.theta[:, k]
    return float(col.mean()), float(max(col.std(), 1e-12))


def train_mean_net(dataset: Dataset, config: TrainConfig, target_index=None) -> ScaledRegressor:
    """Fit ``g(r)`` to the target parameter with inputs and target standardised."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    k = dataset.target_index if target_index is None else target_index
    mu, sd = _target_scaling(dataset, k)
    return ScaledRegressor.train(dataset.reflectance, dataset.theta[:, k], config,
                                 y_offset=mu, y_scale=sd, seed_offset=10 * k)


def _std_residual(mean_net: ScaledRegressor, dataset: Dataset, k: int) -> np.ndarray:
    if dataset.reflectance.shape[1] != mean_net.net.layer_sizes[0]:
        raise ValueError("dataset band count does not match the mean network")
    g_std = mean_net.raw(dataset.reflectance)
    t_std = (dataset.theta[:, k] - mean_net.y_offset) / mean_net.y_scale
    return t_std - g_std


def build_d2(mean_net: ScaledRegressor, dataset: Dataset, target_index=None) -> ResidualDataset:
    """Squared standardised residuals of ``g`` on the training records (same order)."""
    k = dataset.target_index if target_index is None else target_index
    resid = _std_residual(mean_net, dataset, k)
    return ResidualDataset(resid * resid, dataset.reflectance)


def _positive_scale(targets):
    scale = float(np.mean(np.abs(targets))) if targets.size else 1.0
    return scale if scale > 0 else 1.0


def train_variance_net(d2: ResidualDataset, config: TrainConfig, x_scaler=None,
                       seed_offset=1) -> ScaledRegressor:
    """Fit ``u(r)`` to the squared residuals.

    Targets are only divided by their mean (no centring), so the fitted
    network still predicts a non-negative quantity in standardised units.
    """
    if len(d2) == 0:
        raise ValueError("cannot train on an empty dataset")
    return ScaledRegressor.train(d2.reflectance, d2.targets, config, y_offset=0.0,
                                 y_scale=_positive_scale(d2.targets), x_scaler=x_scaler,
                                 seed_offset=seed_offset)


def train_cov_net(mean_net_k: ScaledRegressor, mean_net_j: ScaledRegressor, dataset: Dataset,
                  k: int, j: int, config: TrainConfig) -> ScaledRegressor:
    """Fit a network to the product of the standardised residuals of parameters k and j."""
    if k == j:
        raise ValueError("k == j: use the variance network for diagonal entries")
    targets = _std_residual(mean_net_k, dataset, k) * _std_residual(mean_net_j, dataset, j)
    return ScaledRegressor.train(dataset.reflectance, targets, config, y_offset=0.0,
                                 y_scale=float(np.sqrt(np.mean(targets ** 2))) or 1.0,
                                 x_scaler=mean_net_k.x_scaler, seed_offset=100 + 10 * j)


@dataclass(frozen=True, eq=False)
class UpNetModel:
    mean_net: ScaledRegressor
    variance_net: ScaledRegressor
    target_index: int
    names: tuple[str, ...]
    # name of partner parameter -> (covariance net, partner target sd)
    covariance_nets: dict = field(default_factory=dict)
    train_clamp_fraction: float = 0.0

    @property
    def n_bands(self) -> int:
        return self.mean_net.net.layer_sizes[0]

    @property
    def target_name(self) -> str:
        return self.names[self.target_index]

    @property
    def target_sd(self) -> float:
        return self.mean_net.y_scale

    def save(self, path) -> None:
        doc = {
            "version": FORMAT_VERSION,
            "names": list(self.names),
            "target_index": self.target_index,
            "train_clamp_fraction": self.train_clamp_fraction,
            "mean_net": self.mean_net.to_dict(),
            "variance_net": self.variance_net.to_dict(),
            "covariance_nets": {name: {"net": net.to_dict(), "partner_sd": sd}
                                for name, (net, sd) in self.covariance_nets.items()},
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "UpNetModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model version {doc.get('version')!r}")
        covs = {name: (ScaledRegressor.from_dict(c["net"]), float(c["partner_sd"]))
                for name, c in doc.get("covariance_nets", {}).items()}
        return cls(ScaledRegressor.from_dict(doc["mean_net"]),
                   ScaledRegressor.from_dict(doc["variance_net"]),
                   int(doc["target_index"]), tuple(doc["names"]), covs,
                   float(doc.get("train_clamp_fraction", 0.0)))


def train_upnet(dataset: Dataset, config: TrainConfig, variance_config: TrainConfig | None = None,
                covariance_with=()) -> UpNetModel:
    """Run the full two-stage training on ``dataset`` for its target parameter.

    ``covariance_with`` lists other parameter names; for each a mean network
    and a covariance network are trained as well.
    """
    variance_config = variance_config or config
    k = dataset.target_index
    g = train_mean_net(dataset, config)
    d2 = build_d2(g, dataset)
    u = train_variance_net(d2, variance_config, x_scaler=g.x_scaler)
    clamp = float(np.mean(u.raw(dataset.reflectance) < 0))
    covs = {}
    for name in covariance_with:
        j = dataset.names.index(name)
        g_j = train_mean_net(dataset, config, target_index=j)
        covs[name] = (train_cov_net(g, g_j, dataset, k, j, variance_config), g_j.y_scale)
    return UpNetModel(g, u, k, dataset.names, covs, clamp)


def predict_batch(upnet: UpNetModel, reflectances) -> PosteriorBatch:
    r = np.atleast_2d(np.asarray(reflectances, dtype=float))
    if r.shape[1] != upnet.n_bands:
        raise ValueError(f"expected {upnet.n_bands} bands, got {r.shape[1]}")
    bad = ~np.all(np.isfinite(r), axis=1)
    if bad.any():
        raise ValueError(f"record {int(np.argmax(bad))} has non-finite reflectance")
    mean = upnet.mean_net(r)
    var_std = upnet.variance_net(r)
    clamped = var_std < 0
    sd = upnet.target_sd * np.sqrt(np.where(clamped, 0.0, var_std))
    cov = {}
    for name, (net, partner_sd) in upnet.covariance_nets.items():
        cov[name] = net(r) * upnet.target_sd * partner_sd
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(sd))):
        raise FloatingPointError("network produced non-finite output")
    return PosteriorBatch(mean, sd, cov, clamped)


def predict(upnet: UpNetModel, r) -> PosteriorSummary:
    r = np.asarray(r, dtype=float)
    if r.ndim != 1:
        raise ValueError("predict takes a single reflectance vector; use predict_batch")
    return predict_batch(upnet, r[None, :])[0]

