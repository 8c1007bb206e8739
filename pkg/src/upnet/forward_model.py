"""Forward models f(theta) -> per-band reflectance.

Three concrete models share the same calling convention: ``model(theta)``
accepts a single parameter vector of shape ``(m,)`` or a stack of shape
``(N, m)`` and returns reflectance of shape ``(n,)`` or ``(N, n)``.

* :class:`LinearGaussianModel` -- ``A @ theta + b``; paired with a Gaussian
  prior its posterior is available in closed form.
* :class:`ToyCanopyModel` -- a cheap analytic canopy (Beer-law gap fraction
  over a dry/wet soil mixture).
* :class:`TabulatedModel` -- look-up of externally simulated reflectances.

Sensor band metadata for Landsat-8 OLI and Sentinel-2 MSI is available
through :func:`sensor_preset`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "Band",
    "SensorConfig",
    "sensor_preset",
    "LinearGaussianModel",
    "ToyCanopyModel",
    "TabulatedModel",
    "eval_linear",
    "soil_reflectance",
    "eval_canopy",
    "eval_tabulated",
    "CANOPY_PARAMS",
]


@dataclass(frozen=True)
class Band:
    band_name: str
    central_wavelength: float
    bandwidth: float


@dataclass(frozen=True)
class SensorConfig:
    sensor_name: str
    bands: tuple[Band, ...]

    def __post_init__(self):
        if not self.bands:
            raise ValueError("sensor needs at least one band")
        names = [b.band_name for b in self.bands]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate band names in {self.sensor_name}")
        for b in self.bands:
            if not b.central_wavelength > 0:
                raise ValueError(f"band {b.band_name}: wavelength must be positive")

    @property
    def band_names(self) -> list[str]:
        return [b.band_name for b in self.bands]

    def __len__(self):
        return len(self.bands)


_PRESETS = {
    "landsat8": ("Landsat-8 OLI", [
        ("Blue", 482, 60), ("Green", 561, 57), ("Red", 655, 37),
        ("NIR", 865, 28), ("SWIR 1", 1609, 85), ("SWIR 2", 2201, 187),
    ]),
    "sentinel2": ("Sentinel-2 MSI", [
        ("Blue", 490, 66), ("Green", 560, 36), ("Red", 665, 31),
        ("Red Edge 1", 705, 15), ("Red Edge 2", 740, 15), ("Red Edge 3", 783, 20),
        ("NIR1", 842, 106), ("NIR2", 865, 21), ("SWIR 1", 1610, 91),
        ("SWIR 2", 2190, 175),
    ]),
}


def sensor_preset(name: str) -> SensorConfig:
    """Return a built-in sensor configuration (``"landsat8"`` or ``"sentinel2"``)."""
    try:
        label, bands = _PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown sensor preset {name!r}; choose from {sorted(_PRESETS)}") from None
    return SensorConfig(label, tuple(Band(n, float(c), float(w)) for n, c, w in bands))


def _as_2d(theta, m):
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta2 = np.atleast_2d(theta)
    if theta2.ndim != 2 or theta2.shape[1] != m:
        raise ValueError(f"expected parameter vectors of length {m}, got shape {theta.shape}")
    return theta2, single


# ---------------------------------------------------------------------------
# Linear-Gaussian verification model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    """Affine forward model ``r = A @ theta + b``."""

    matrix_a: np.ndarray
    offset_b: np.ndarray
    param_names: tuple[str, ...] = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix_a, dtype=float))
        b = np.asarray(self.offset_b, dtype=float).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"A has {a.shape[0]} rows but b has length {b.shape[0]}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix_a", a)
        object.__setattr__(self, "offset_b", b)
        names = self.param_names or tuple(f"theta{i + 1}" for i in range(a.shape[1]))
        if len(names) != a.shape[1]:
            raise ValueError("param_names length must equal the number of columns of A")
        object.__setattr__(self, "param_names", tuple(names))

    @property
    def n_params(self) -> int:
        return self.matrix_a.shape[1]

    @property
    def n_bands(self) -> int:
        return self.matrix_a.shape[0]

    def __call__(self, theta):
        return eval_linear(self, theta)


def eval_linear(model: LinearGaussianModel, theta) -> np.ndarray:
    theta2, single = _as_2d(theta, model.n_params)
    out = theta2 @ model.matrix_a.T + model.offset_b
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Toy canopy model
# ---------------------------------------------------------------------------

CANOPY_PARAMS = ("LAI", "ALA", "Cab", "psoil", "rsoil")

_DEFAULT_R_DRY = (0.10, 0.15, 0.20, 0.25, 0.30, 0.30)


def soil_reflectance(rsoil, psoil, r_wet, r_dry):
    """Brightness-scaled linear mixture of wet and dry soil spectra.

    ``rsoil`` and ``psoil`` may be scalars or arrays of shape ``(N,)``; in the
    latter case the result has shape ``(N, n_bands)``.
    """
    psoil = np.asarray(psoil, dtype=float)
    rsoil = np.asarray(rsoil, dtype=float)
    if np.any((psoil < 0) | (psoil > 1)):
        raise ValueError("psoil must lie in [0, 1]")
    if np.any(rsoil < 0):
        raise ValueError("rsoil must be non-negative")
    r_wet = np.asarray(r_wet, dtype=float)
    r_dry = np.asarray(r_dry, dtype=float)
    p = psoil[..., None]
    return rsoil[..., None] * (p * r_wet + (1.0 - p) * r_dry)


@dataclass(frozen=True, eq=False)
class ToyCanopyModel:
    """Single-layer canopy over a mixed soil background.

    Per band, the gap fraction is ``exp(-k cos(ALA) LAI / cos(sza))``; the
    closed canopy reflects ``rho_max exp(-alpha Cab)`` and the gaps show the
    soil. Parameter order is :data:`CANOPY_PARAMS`.
    """

    k: tuple = (0.60, 0.65, 0.70, 0.55, 0.45, 0.40)
    alpha: tuple = (0.020, 0.012, 0.025, 0.002, 0.001, 0.001)
    rho_max: tuple = (0.05, 0.10, 0.06, 0.50, 0.30, 0.15)
    r_wet: tuple = tuple(0.5 * v for v in _DEFAULT_R_DRY)
    r_dry: tuple = _DEFAULT_R_DRY
    sza: float = 30.0
    param_names: tuple[str, ...] = field(default=CANOPY_PARAMS, init=False)

    def __post_init__(self):
        arrays = {}
        for name in ("k", "alpha", "rho_max", "r_wet", "r_dry"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            arrays[name] = arr
        n = {a.size for a in arrays.values()}
        if len(n) != 1:
            raise ValueError("all per-band constants must have the same length")
        if np.any(arrays["k"] <= 0):
            raise ValueError("extinction coefficients must be positive")
        for name in ("rho_max", "r_wet", "r_dry"):
            if np.any((arrays[name] < 0) | (arrays[name] > 1)):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.sza < 90:
            raise ValueError("sza must lie in [0, 90)")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def n_params(self) -> int:
        return len(CANOPY_PARAMS)

    @property
    def n_bands(self) -> int:
        return self.k.size

    def __call__(self, theta):
        return eval_canopy(self, theta)


def eval_canopy(model: ToyCanopyModel, theta) -> np.ndarray:
    theta2, single = _as_2d(theta, model.n_params)
    lai, ala, cab, psoil, rsoil = theta2.T
    if np.any(lai < 0):
        raise ValueError("LAI must be non-negative")
    if np.any((ala < 0) | (ala >= 90)):
        raise ValueError("ALA must lie in [0, 90)")
    if np.any(cab < 0):
        raise ValueError("Cab must be non-negative")
    soil = soil_reflectance(rsoil, psoil, model.r_wet, model.r_dry)
    depth = np.cos(np.deg2rad(ala)) * lai / np.cos(np.deg2rad(model.sza))
    gap = np.exp(-model.k * depth[:, None])
    veg = model.rho_max * np.exp(-model.alpha * cab[:, None])
    out = veg * (1.0 - gap) + soil * gap
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Tabulated model
# ---------------------------------------------------------------------------

class TabulatedModel:
    """Forward model backed by a table of pre-computed ``(theta, r)`` pairs.

    Parameters
    ----------
    thetas : array (G, m)
    reflectances : array (G, n)
    lookup_mode : {"nearest", "multilinear"}
        ``nearest`` picks the grid point closest to theta after scaling every
        parameter axis by the table's range on that axis. ``multilinear``
        requires the table to be a full regular grid and interpolates on it.
    """

    def __init__(self, thetas, reflectances, lookup_mode="nearest", param_names=None):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        refl = np.atleast_2d(np.asarray(reflectances, dtype=float))
        if thetas.size == 0 or refl.size == 0:
            raise ValueError("tabulated model needs a non-empty grid")
        if thetas.shape[0] != refl.shape[0]:
            raise ValueError("thetas and reflectances must have the same number of rows")
        if lookup_mode not in ("nearest", "multilinear"):
            raise ValueError(f"unknown lookup_mode {lookup_mode!r}")
        self.thetas = thetas
        self.reflectances = refl
        self.lookup_mode = lookup_mode
        self.param_names = tuple(param_names or (f"theta{i + 1}" for i in range(thetas.shape[1])))
        if len(self.param_names) != thetas.shape[1]:
            raise ValueError("param_names length must equal the number of parameter columns")
        self.thetas.setflags(write=False)
        self.reflectances.setflags(write=False)

        lo = thetas.min(axis=0)
        span = thetas.max(axis=0) - lo
        self._lo = lo
        self._span = np.where(span > 0, span, 1.0)
        self._scaled = (thetas - lo) / self._span
        self._interp = self._build_interpolator() if lookup_mode == "multilinear" else None

    def _build_interpolator(self):
        axes = [np.unique(col) for col in self.thetas.T]
        shape = tuple(a.size for a in axes)
        if int(np.prod(shape)) != self.thetas.shape[0]:
            raise ValueError("multilinear lookup requires a complete regular grid")
        live = [i for i, a in enumerate(axes) if a.size > 1]
        values = np.empty(shape + (self.n_bands,))
        idx = tuple(np.searchsorted(axes[i], self.thetas[:, i]) for i in range(self.n_params))
        values[idx] = self.reflectances
        self._axes = axes
        self._live = live
        if not live:
            return None
        squeeze = tuple(0 if a.size == 1 else slice(None) for a in axes)
        return RegularGridInterpolator([axes[i] for i in live], values[squeeze],
                                       method="linear", bounds_error=False, fill_value=None)

    @classmethod
    def from_csv(cls, path, lookup_mode="nearest"):
        """Load a table written in the dataset CSV layout (``theta_*`` then ``r_*`` columns)."""
        from .io import read_dataset

        ds = read_dataset(path)
        return cls(ds.theta, ds.reflectance, lookup_mode=lookup_mode, param_names=ds.names)

    @property
    def n_params(self) -> int:
        return self.thetas.shape[1]

    @property
    def n_bands(self) -> int:
        return self.reflectances.shape[1]

    def __call__(self, theta):
        return eval_tabulated(self, theta)


def eval_tabulated(model: TabulatedModel, theta) -> np.ndarray:
    theta2, single = _as_2d(theta, model.n_params)
    if not np.all(np.isfinite(theta2)):
        raise ValueError("theta must be finite")
    if model.lookup_mode == "nearest":
        scaled = (theta2 - model._lo) / model._span
        d2 = ((scaled[:, None, :] - model._scaled[None, :, :]) ** 2).sum(axis=2)
        out = model.reflectances[np.argmin(d2, axis=1)]
    else:
        lo = np.array([a[0] for a in model._axes])
        hi = np.array([a[-1] for a in model._axes])
        if np.any(theta2 < lo) or np.any(theta2 > hi):
            raise ValueError("theta lies outside the tabulated grid's bounding box")
        if model._interp is None:
            out = np.repeat(model.reflectances[:1], theta2.shape[0], axis=0)
        else:
            out = model._interp(theta2[:, model._live])
    return out[0] if single else out

