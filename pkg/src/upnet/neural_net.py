"""One-hidden-layer ReLU perceptron trained with Adam, written on numpy.

The network maps an input row ``x`` (length n) to a scalar::

    y = W2 @ relu(W1 @ x + b1) + b2

Training minimises mean squared error plus ``l2 * (|W1|^2 + |W2|^2)``;
biases are not penalised.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "MlpModel",
    "Scaler",
    "TrainConfig",
    "AdamState",
    "ScaledRegressor",
    "init_mlp",
    "forward_mlp",
    "loss_and_gradient",
    "adam_step",
    "fit",
    "fit_scaler",
    "transform",
    "inverse_transform",
]

PARAM_NAMES = ("w1", "b1", "w2", "b2")
SD_FLOOR = 1e-12
# rows per block in batch prediction; keeps the hidden activations cache-sized
_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class MlpModel:
    w1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (1, hidden)
    b2: np.ndarray  # (1,)

    def __post_init__(self):
        h, n = np.shape(self.w1)
        if np.shape(self.b1) != (h,) or np.shape(self.w2) != (1, h) or np.shape(self.b2) != (1,):
            raise ValueError("inconsistent MLP parameter shapes")

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        h, n = self.w1.shape
        return n, h, 1

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params())

    def params(self) -> tuple[np.ndarray, ...]:
        return self.w1, self.b1, self.w2, self.b2

    def __call__(self, x):
        return forward_mlp(self, x)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        return cls(*(np.asarray(d[k], dtype=float) for k in PARAM_NAMES))


def init_mlp(layer_sizes, seed) -> MlpModel:
    """He-uniform weights (half-width ``sqrt(6 / fan_in)``), zero biases."""
    n, h, out = layer_sizes
    if min(n, h, out) < 1:
        raise ValueError("all layer sizes must be >= 1")
    if out != 1:
        raise ValueError("only single-output networks are supported")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    w1 = rng.uniform(-1, 1, (h, n)) * np.sqrt(6.0 / n)
    w2 = rng.uniform(-1, 1, (1, h)) * np.sqrt(6.0 / h)
    return MlpModel(w1, np.zeros(h), w2, np.zeros(1))


def forward_mlp(model: MlpModel, x) -> np.ndarray | float:
    """Evaluate the network on one input vector (returns a float) or a batch
    of shape ``(N, n)`` (returns shape ``(N,)``).

    A row's result does not depend on the batch it arrives in. The products
    use einsum's own loops rather than BLAS, whose blocking (and therefore
    summation order) changes with the number of rows.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.w1.shape[1]:
        raise ValueError(f"input has {x2.shape[1]} features, network expects {model.w1.shape[1]}")
    y = np.empty(x2.shape[0])
    w2 = model.w2[0]
    for start in range(0, x2.shape[0], _CHUNK):
        hidden = np.einsum("ij,kj->ik", x2[start:start + _CHUNK], model.w1)
        hidden += model.b1
        np.maximum(hidden, 0.0, out=hidden)
        y[start:start + _CHUNK] = np.einsum("ij,j->i", hidden, w2)
    y += model.b2[0]
    return float(y[0]) if single else y


def loss_and_gradient(model: MlpModel, inputs, targets, l2_coefficient=0.0):
    """Return ``(loss, (dW1, db1, dW2, db2))`` for the penalised squared loss."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    t = np.asarray(targets, dtype=float).reshape(-1)
    if t.size == 0:
        raise ValueError("empty batch")
    return _loss_grad(model.w1, model.b1, model.w2, model.b2, x, t, l2_coefficient)


def _loss_grad(w1, b1, w2, b2, x, t, l2):
    nb = t.size
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    resid = hidden @ w2[0] + b2[0] - t
    loss = float(resid @ resid) / nb
    if l2:
        loss += l2 * (float(np.vdot(w1, w1)) + float(np.vdot(w2, w2)))
    dy = (2.0 / nb) * resid
    gw2 = (dy @ hidden)[None, :]
    gb2 = np.array([dy.sum()])
    dh = np.outer(dy, w2[0])
    dh *= pre > 0
    gw1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    if l2:
        gw1 += 2.0 * l2 * w1
        gw2 += 2.0 * l2 * w2
    return loss, (gw1, gb1, gw2, gb2)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 30_000
    epochs: int = 3000
    l2_coefficient: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    hidden_units: int = 256

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.hidden_units < 1:
            raise ValueError("batch_size, epochs and hidden_units must be >= 1")
        if self.l2_coefficient < 0:
            raise ValueError("l2_coefficient must be non-negative")


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        return cls(tuple(np.zeros_like(p) for p in model.params()),
                   tuple(np.zeros_like(p) for p in model.params()), 0)


def _adam_inplace(params, grads, m, v, t, cfg: TrainConfig):
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    step = cfg.learning_rate * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    # epsilon applied to the bias-corrected second moment
    eps = cfg.adam_epsilon * np.sqrt(1 - b2 ** t)
    for p, g, mi, vi in zip(params, grads, m, v):
        mi *= b1
        mi += (1 - b1) * g
        vi *= b2
        vi += (1 - b2) * g * g
        p -= step * mi / (np.sqrt(vi) + eps)


def adam_step(model: MlpModel, gradients, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    params = [p.copy() for p in model.params()]
    m = [a.copy() for a in state.m]
    v = [a.copy() for a in state.v]
    for p, g, mi in zip(params, gradients, m):
        if np.shape(g) != p.shape or mi.shape != p.shape:
            raise ValueError("gradient/state shapes do not match the model")
    t = state.t + 1
    _adam_inplace(params, gradients, m, v, t, config)
    return MlpModel(*params), AdamState(tuple(m), tuple(v), t)


def fit(model: MlpModel, inputs, targets, config: TrainConfig):
    """Mini-batch Adam training.

    Returns ``(trained_model, loss_history)`` where ``loss_history[e]`` is the
    sample-weighted mean penalised loss over the batches of epoch ``e``.
    Raises :class:`FloatingPointError` if the loss becomes non-finite.
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(inputs, dtype=float)))
    t = np.asarray(targets, dtype=float).reshape(-1)
    n = t.size
    if n == 0:
        raise ValueError("need at least one training sample")
    if x.shape[0] != n:
        raise ValueError("inputs and targets are not aligned")
    params = [p.copy() for p in model.params()]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    bs = min(config.batch_size, n)
    history = np.empty(config.epochs)
    step = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            loss, grads = _loss_grad(*params, x[idx], t[idx], config.l2_coefficient)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            step += 1
            _adam_inplace(params, grads, m, v, step, config)
            total += loss * idx.size
        history[epoch] = total / n
        _flush_subnormals(params)
    return MlpModel(*params), history


def _flush_subnormals(params):
    # weight decay drives dead units' weights into the subnormal range, where
    # every multiply is orders of magnitude slower on common CPUs
    tiny = np.finfo(float).tiny
    for p in params:
        p[np.abs(p) < tiny] = 0.0


# ---------------------------------------------------------------------------
# Standardisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scaler:
    means: np.ndarray
    sds: np.ndarray

    def to_dict(self):
        return {"means": self.means.tolist(), "sds": self.sds.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["sds"], dtype=float))


def fit_scaler(values) -> Scaler:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] == 0:
        raise ValueError("need at least one sample to fit a scaler")
    return Scaler(values.mean(axis=0), np.maximum(values.std(axis=0), SD_FLOOR))


def transform(scaler: Scaler, values):
    return (np.asarray(values, dtype=float) - scaler.means) / scaler.sds


def inverse_transform(scaler: Scaler, values):
    return np.asarray(values, dtype=float) * scaler.sds + scaler.means


# ---------------------------------------------------------------------------
# Network bundled with its input scaler and output scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScaledRegressor:
    """An :class:`MlpModel` together with the input standardisation and the
    affine map from network output back to target units."""

    net: MlpModel
    x_scaler: Scaler
    y_offset: float = 0.0
    y_scale: float = 1.0
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def raw(self, x):
        """Network output in training-target units (before ``y_offset/y_scale``)."""
        return forward_mlp(self.net, transform(self.x_scaler, x))

    def __call__(self, x):
        return self.raw(x) * self.y_scale + self.y_offset

    @classmethod
    def train(cls, inputs, targets, config: TrainConfig, y_offset=0.0, y_scale=1.0,
              x_scaler: Scaler | None = None, seed_offset=0) -> "ScaledRegressor":
        """Fit on ``(targets - y_offset) / y_scale`` with standardised inputs."""
        x_scaler = x_scaler or fit_scaler(inputs)
        xs = transform(x_scaler, inputs)
        ys = (np.asarray(targets, dtype=float) - y_offset) / y_scale
        cfg = replace(config, seed=config.seed + seed_offset)
        net = init_mlp((xs.shape[1], config.hidden_units, 1), cfg.seed)
        net, history = fit(net, xs, ys, cfg)
        return cls(net, x_scaler, float(y_offset), float(y_scale), history)

    def to_dict(self):
        return {"net": self.net.to_dict(), "x_scaler": self.x_scaler.to_dict(),
                "y_offset": self.y_offset, "y_scale": self.y_scale,
                "loss_history": self.loss_history.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(MlpModel.from_dict(d["net"]), Scaler.from_dict(d["x_scaler"]),
                   float(d["y_offset"]), float(d["y_scale"]),
                   np.asarray(d.get("loss_history", []), dtype=float))
