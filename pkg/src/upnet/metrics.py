"""Agreement metrics between two estimators and the speed benchmark."""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .mcmc import McmcConfig, run_chain, summarize
from .pipeline import predict_batch

__all__ = ["r2", "rmse", "MetricReport", "BenchReport", "consistency_report", "bench"]


def _pair(pred, truth, min_len):
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    if pred.size < min_len:
        raise ValueError(f"need at least {min_len} values")
    return pred, truth


def r2(pred, truth) -> float:
    """Coefficient of determination of ``pred`` against the 1:1 line."""
    pred, truth = _pair(pred, truth, 2)
    dev = truth - truth.mean()
    ss_tot = float(dev @ dev)
    scale = max(1.0, float(np.max(np.abs(truth))))
    if np.ptp(truth) <= 1e-12 * scale:
        raise ValueError("r2 undefined: truth values are constant")
    resid = truth - pred
    return 1.0 - float(resid @ resid) / ss_tot


def rmse(pred, truth) -> float:
    pred, truth = _pair(pred, truth, 1)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass(frozen=True)
class MetricReport:
    quantity: str
    method_a: str
    method_b: str
    n: int
    r2: float          # nan when the reference is constant
    rmse: float
    slope: float
    intercept: float
    r2_defined: bool = True

    FIELDS = ("quantity", "method_a", "method_b", "n", "r2", "rmse", "slope", "intercept", "r2_defined")

    def row(self):
        return [self.quantity, self.method_a, self.method_b, str(self.n), self.r2, self.rmse,
                self.slope, self.intercept, str(self.r2_defined).lower()]


def _report(quantity, a, b, label_a, label_b) -> MetricReport:
    a, b = _pair(a, b, 2)
    try:
        value, defined = r2(a, b), True
    except ValueError:
        value, defined = float("nan"), False
    if np.ptp(b) > 0:
        slope, intercept = np.polyfit(b, a, 1)
    else:
        slope, intercept = float("nan"), float("nan")
    return MetricReport(quantity, label_a, label_b, a.size, value, rmse(a, b),
                        float(slope), float(intercept), defined)


def consistency_report(summaries_a, summaries_b, label_a="a", label_b="b"):
    """Compare two aligned sets of posterior summaries.

    ``b`` is treated as the reference. Returns ``(means_report, sds_report)``;
    the regression line is ``a = slope * b + intercept``. When the reference
    sds are constant R² is undefined: it is reported as nan with
    ``r2_defined=False`` and only RMSE is meaningful.
    """
    ma, sa = np.asarray(summaries_a.mean), np.asarray(summaries_a.sd)
    mb, sb = np.asarray(summaries_b.mean), np.asarray(summaries_b.sd)
    if ma.shape != mb.shape:
        raise ValueError(f"misaligned inputs: {ma.size} vs {mb.size} records")
    return (_report("mean", ma, mb, label_a, label_b),
            _report("sd", sa, sb, label_a, label_b))


def format_table(reports) -> str:
    lines = [f"{'quantity':<8} {'a':<10} {'b':<10} {'n':>6} {'R2':>8} {'RMSE':>10} {'slope':>8} {'icpt':>9}"]
    for r in reports:
        lines.append(f"{r.quantity:<8} {r.method_a:<10} {r.method_b:<10} {r.n:>6d} {r.r2:>8.4f} "
                     f"{r.rmse:>10.4g} {r.slope:>8.4f} {r.intercept:>9.4g}")
    return "\n".join(lines)


@dataclass(frozen=True)
class BenchReport:
    method: str
    total_records: int
    wall_time: float
    per_pixel_time: float


def bench(upnet, reflectances, model, prior, noise, target_index, records=300_000,
          mcmc_pixels=20, mcmc_config: McmcConfig | None = None, min_time=0.05):
    """Time batch network prediction against per-pixel MCMC.

    Returns ``(upnet_report, mcmc_report, ratio)`` with
    ``ratio = mcmc per-pixel time / upnet per-pixel time``.
    """
    refl = np.atleast_2d(np.asarray(reflectances, dtype=float))
    if refl.shape[0] == 0 or refl.size == 0:
        raise ValueError("bench needs at least one reflectance record")
    reps = int(np.ceil(records / refl.shape[0]))
    batch = np.tile(refl, (reps, 1))[:records]

    predict_batch(upnet, batch)  # warm-up: first-touch page faults and allocator growth
    repetitions = 1
    while True:
        start = time.perf_counter()
        for _ in range(repetitions):
            predict_batch(upnet, batch)
        wall = time.perf_counter() - start
        if wall >= min_time or repetitions >= 1 << 20:
            break
        repetitions *= 4
    total = records * repetitions
    net = BenchReport("upnet", total, wall, wall / total)

    config = mcmc_config or McmcConfig()
    pixels = refl[:mcmc_pixels] if refl.shape[0] >= mcmc_pixels else np.tile(
        refl, (int(np.ceil(mcmc_pixels / refl.shape[0])), 1))[:mcmc_pixels]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        start = time.perf_counter()
        for i, r in enumerate(pixels):
            summarize(run_chain(r, model, prior, noise, config, pixel=i), target_index)
        wall = time.perf_counter() - start
    mc = BenchReport("mcmc", len(pixels), wall, wall / len(pixels))
    return net, mc, mc.per_pixel_time / net.per_pixel_time
