"""Prior sampling, observation noise and training-set simulation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.special import ndtr

__all__ = [
    "Uniform",
    "TruncatedGaussian",
    "Fixed",
    "gaussian",
    "PriorSpec",
    "NoiseModel",
    "Dataset",
    "sample_prior",
    "apply_noise",
    "simulate_dataset",
    "table2_prior",
    "canopy_prior",
    "record_rng",
    "BLOCK_SIZE",
]

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)

# Records are generated in fixed blocks; each block owns one RNG substream
# keyed by (seed, block index) so results do not depend on execution order.
BLOCK_SIZE = 1024


@dataclass(frozen=True)
class Uniform:
    name: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"{self.name}: Uniform needs low < high")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, -math.log(self.high - self.low), -np.inf)

    def support(self):
        return self.low, self.high

    def mean(self):
        return 0.5 * (self.low + self.high)

    def sd(self):
        return (self.high - self.low) / math.sqrt(12.0)


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian restricted to ``[low, high]``; infinite bounds are allowed."""

    name: str
    mu: float
    sigma: float
    low: float = -math.inf
    high: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"{self.name}: sigma must be positive")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: TruncatedGaussian needs low < high")
        if self._mass() <= 0:
            raise ValueError(f"{self.name}: truncation interval has no prior mass")

    def _ab(self):
        return (self.low - self.mu) / self.sigma, (self.high - self.mu) / self.sigma

    def _mass(self):
        a, b = self._ab()
        return float(ndtr(b) - ndtr(a))

    def sample(self, rng, size):
        # rejection from the untruncated Gaussian
        out = rng.normal(self.mu, self.sigma, size)
        bad = (out < self.low) | (out > self.high)
        while bad.any():
            out[bad] = rng.normal(self.mu, self.sigma, int(bad.sum()))
            bad = (out < self.low) | (out > self.high)
        return out

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mu) / self.sigma
        lp = -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sigma) - math.log(self._mass())
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, lp, -np.inf)

    def support(self):
        return self.low, self.high

    def _moments(self):
        a, b = self._ab()
        mass = self._mass()
        pa = 0.0 if math.isinf(a) else math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        pb = 0.0 if math.isinf(b) else math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi)
        apa = 0.0 if math.isinf(a) else a * pa
        bpb = 0.0 if math.isinf(b) else b * pb
        mean_z = (pa - pb) / mass
        var_z = 1.0 + (apa - bpb) / mass - mean_z ** 2
        return mean_z, var_z

    def mean(self):
        return self.mu + self.sigma * self._moments()[0]

    def sd(self):
        return self.sigma * math.sqrt(self._moments()[1])


@dataclass(frozen=True)
class Fixed:
    name: str
    value: float

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x == self.value, 0.0, -np.inf)

    def support(self):
        return self.value, self.value

    def mean(self):
        return float(self.value)

    def sd(self):
        return 0.0


PriorEntry = Union[Uniform, TruncatedGaussian, Fixed]


def gaussian(name, mu, sigma):
    """Untruncated Gaussian prior entry."""
    return TruncatedGaussian(name, mu, sigma)


@dataclass(frozen=True)
class PriorSpec:
    """Independent per-parameter prior, in forward-model parameter order."""

    entries: tuple[PriorEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError("prior parameter names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def free_indices(self) -> np.ndarray:
        return np.array([i for i, e in enumerate(self.entries) if not isinstance(e, Fixed)], dtype=int)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}; have {self.names}") from None

    def sample(self, rng, size):
        """Draw ``size`` parameter vectors, shape ``(size, m)``."""
        return np.column_stack([e.sample(rng, size) for e in self.entries]) if self.entries \
            else np.empty((size, 0))

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        total = 0.0
        for i, e in enumerate(self.entries):
            total = total + e.logpdf(theta[..., i])
        return total

    def means(self) -> np.ndarray:
        return np.array([e.mean() for e in self.entries])

    def sds(self) -> np.ndarray:
        return np.array([e.sd() for e in self.entries])

    def bounds(self) -> np.ndarray:
        return np.array([e.support() for e in self.entries], dtype=float)

    def replace(self, **fixed_values):
        """Return a copy with the named parameters pinned to fixed values."""
        entries = []
        for e in self.entries:
            entries.append(Fixed(e.name, fixed_values.pop(e.name)) if e.name in fixed_values else e)
        if fixed_values:
            raise KeyError(f"unknown parameters {sorted(fixed_values)}")
        return PriorSpec(tuple(entries))

    # JSON round trip -------------------------------------------------------

    def to_json(self) -> list[dict]:
        out = []
        for e in self.entries:
            if isinstance(e, Fixed):
                out.append({"name": e.name, "dist": "fixed", "value": e.value})
            elif isinstance(e, Uniform):
                out.append({"name": e.name, "dist": "uniform", "low": e.low, "high": e.high})
            else:
                d = {"name": e.name, "dist": "truncnorm", "mu": e.mu, "sigma": e.sigma}
                if math.isfinite(e.low):
                    d["low"] = e.low
                if math.isfinite(e.high):
                    d["high"] = e.high
                out.append(d)
        return out

    @classmethod
    def from_json(cls, items) -> "PriorSpec":
        entries = []
        for item in items:
            dist = item.get("dist")
            name = item["name"]
            if dist == "fixed":
                entries.append(Fixed(name, float(item["value"])))
            elif dist == "uniform":
                entries.append(Uniform(name, float(item["low"]), float(item["high"])))
            elif dist in ("truncnorm", "normal", "gaussian"):
                entries.append(TruncatedGaussian(
                    name, float(item["mu"]), float(item["sigma"]),
                    float(item.get("low", -math.inf)), float(item.get("high", math.inf))))
            else:
                raise ValueError(f"{name}: unknown distribution {dist!r}")
        return cls(tuple(entries))

    @classmethod
    def load(cls, path) -> "PriorSpec":
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict):
            data = data["priors"]
        return cls.from_json(data)


def table2_prior() -> PriorSpec:
    """Thirteen-parameter canopy training distribution, with truncation bounds for the Gaussians."""
    return PriorSpec((
        Uniform("N", 1.3, 2.5),
        TruncatedGaussian("Cab", 30, 20, 0, 100),
        Fixed("Car", 8),
        TruncatedGaussian("Cw", 0.02, 0.01, 0.001, 0.05),
        TruncatedGaussian("Cm", 0.005, 0.001, 0.001, 0.02),
        Fixed("h", 0.3),
        Uniform("ALA", 40, 70),
        TruncatedGaussian("LAI", 3, 2, 0, 10),
        Fixed("rsoil", 0.8),
        Uniform("psoil", 0, 1),
        Fixed("VZA", 0),
        Uniform("SZA", 40, 70),
        Fixed("RAA", 0),
    ))


def canopy_prior(**fixed_values) -> PriorSpec:
    """Prior for :class:`~upnet.forward_model.ToyCanopyModel`, borrowing the matching entries
    of :func:`table2_prior`. Keyword arguments pin parameters, e.g. ``ALA=55``."""
    t2 = {e.name: e for e in table2_prior().entries}
    spec = PriorSpec(tuple(t2[n] for n in ("LAI", "ALA", "Cab", "psoil", "rsoil")))
    return spec.replace(**fixed_values) if fixed_values else spec


@dataclass(frozen=True)
class NoiseModel:
    """Heteroscedastic Gaussian noise with per-band sd ``mult * |f| + add``."""

    multiplicative_level: float = 0.04
    additive_sd: float = 0.01

    def __post_init__(self):
        if self.multiplicative_level < 0 or self.additive_sd < 0:
            raise ValueError("noise levels must be non-negative")

    def sd(self, clean):
        return self.multiplicative_level * np.abs(np.asarray(clean, dtype=float)) + self.additive_sd

    @property
    def is_zero(self) -> bool:
        return self.multiplicative_level == 0 and self.additive_sd == 0


def sample_prior(spec: PriorSpec, rng) -> np.ndarray:
    return spec.sample(rng, 1)[0]


def apply_noise(clean, noise: NoiseModel, rng) -> np.ndarray:
    clean = np.asarray(clean, dtype=float)
    if noise.is_zero:
        return clean.copy()
    return clean + noise.sd(clean) * rng.standard_normal(clean.shape)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired parameter vectors and noisy reflectances."""

    theta: np.ndarray
    reflectance: np.ndarray
    names: tuple[str, ...]
    target_index: int = 0
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1, len(self.names))
        refl = np.asarray(self.reflectance, dtype=float)
        if refl.ndim != 2:
            refl = refl.reshape(theta.shape[0], -1) if theta.shape[0] else refl.reshape(0, 0)
        if theta.shape[0] != refl.shape[0]:
            raise ValueError("theta and reflectance must have the same number of records")
        if not 0 <= self.target_index < len(self.names):
            raise ValueError("target_index out of range")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "reflectance", refl)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return self.theta.shape[0]

    @property
    def target(self) -> np.ndarray:
        return self.theta[:, self.target_index]

    @property
    def target_name(self) -> str:
        return self.names[self.target_index]

    def with_target(self, name_or_index) -> "Dataset":
        k = self.names.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        return Dataset(self.theta, self.reflectance, self.names, k, self.seed, dict(self.metadata))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.theta[idx], self.reflectance[idx], self.names, self.target_index,
                       self.seed, dict(self.metadata))

    def equals(self, other: "Dataset") -> bool:
        return (self.names == other.names and self.target_index == other.target_index
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.reflectance, other.reflectance))


def record_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))


def simulate_dataset(model, spec: PriorSpec, noise: NoiseModel, count: int,
                     target_index: int | str = 0, seed: int = 0) -> Dataset:
    """Sample the prior, run ``model`` and corrupt with ``noise``.

    The same ``(spec, noise, count, seed)`` always produces a bit-identical
    dataset.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if spec.names != tuple(model.param_names):
        raise ValueError(f"prior parameters {spec.names} do not match model parameters "
                         f"{tuple(model.param_names)}")
    if isinstance(target_index, str):
        target_index = spec.index(target_index)
    thetas, refls = [], []
    for block, start in enumerate(range(0, count, BLOCK_SIZE)):
        size = min(BLOCK_SIZE, count - start)
        rng = record_rng(seed, block)
        theta = spec.sample(rng, size)
        try:
            clean = model(theta)
        except Exception as exc:
            bad = _first_failing(model, theta)
            raise RuntimeError(f"forward model failed at theta={bad}: {exc}") from exc
        if not np.all(np.isfinite(clean)):
            bad = theta[~np.all(np.isfinite(clean), axis=1)][0]
            raise RuntimeError(f"forward model returned non-finite output at theta={bad}")
        thetas.append(theta)
        refls.append(apply_noise(clean, noise, rng))
    n = model.n_bands
    theta = np.concatenate(thetas) if thetas else np.empty((0, spec.m))
    refl = np.concatenate(refls) if refls else np.empty((0, n))
    return Dataset(theta, refl, spec.names, target_index, seed)


def _first_failing(model, theta):
    for row in theta:
        try:
            model(row)
        except Exception:
            return row
    return theta[0]
