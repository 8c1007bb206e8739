"""Command-line entry point: ``upnet <subcommand> ...``.

Subcommands: simulate, train, predict, mcmc, oracle, evaluate, bench.
Every run writes ``<out>.manifest.json`` next to its main output.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import DataError, NumericalError
from .forward_model import LinearGaussianModel, TabulatedModel, ToyCanopyModel, sensor_preset
from .io import (ingest_reflectance_csv, read_dataset, read_summary_csv, write_dataset,
                 write_rows, write_summary_csv)
from .mcmc import McmcConfig, run_batch
from .metrics import MetricReport, bench, consistency_report, format_table, r2, rmse
from .neural_net import TrainConfig
from .oracle import GridOracle, GridSpec
from .pipeline import UpNetModel, predict_batch, train_upnet
from .posterior import PosteriorBatch
from .simulation import NoiseModel, PriorSpec, canopy_prior, simulate_dataset

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

PRESETS = {
    "full": TrainConfig(),
    "desk": TrainConfig(hidden_units=64, batch_size=512, epochs=300),
}


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return {"priors": data} if isinstance(data, list) else data


def _build_model(kind, cfg):
    mcfg = dict(cfg.get("model", {}))
    kind = kind or mcfg.pop("type", "toy-canopy")
    mcfg.pop("type", None)
    if kind == "toy-canopy":
        return ToyCanopyModel(**mcfg)
    if kind == "linear":
        try:
            return LinearGaussianModel(mcfg["A"], mcfg.get("b", np.zeros(len(mcfg["A"]))),
                                       tuple(mcfg["names"]) if "names" in mcfg else None)
        except KeyError:
            raise DataError("linear model needs 'A' in the config's model section") from None
    if kind == "tabulated":
        if "path" not in mcfg:
            raise DataError("tabulated model needs 'path' in the config's model section")
        return TabulatedModel.from_csv(mcfg["path"], mcfg.get("lookup", "nearest"))
    raise DataError(f"unknown model type {kind!r}")


def _build_prior(model, cfg):
    if "priors" in cfg:
        prior = PriorSpec.from_json(cfg["priors"])
    elif isinstance(model, ToyCanopyModel):
        prior = canopy_prior()
    else:
        raise DataError("config must define 'priors' for this model")
    if prior.names != tuple(model.param_names):
        raise DataError(f"prior parameters {prior.names} do not match model parameters "
                        f"{tuple(model.param_names)}")
    return prior


def _build_noise(cfg):
    return NoiseModel(**cfg.get("noise", {}))


def _target_index(prior, target):
    if target is None:
        return 0
    try:
        return prior.index(target)
    except KeyError as exc:
        raise DataError(str(exc)) from None


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out, args, cfg, inputs, extra=None):
    doc = {
        "command": args.command,
        "argv": sys.argv[1:],
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": getattr(args, "seed", None),
        "config": cfg,
        "versions": {"upnet": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "inputs": {str(p): _digest(p) for p in inputs if p and Path(p).is_file()},
        "outputs": [str(out)],
    }
    if extra:
        doc.update(extra)
    Path(f"{out}.manifest.json").write_text(json.dumps(doc, indent=2, default=str))


def _read_reflectance(path, n_bands, sensor):
    names = sensor_preset(sensor).band_names if sensor else None
    return ingest_reflectance_csv(path, n_bands, names)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _load_config(args.config)
    model = _build_model(args.model, cfg)
    prior = _build_prior(model, cfg)
    noise = _build_noise(cfg)
    k = _target_index(prior, args.target)
    ds = simulate_dataset(model, prior, noise, args.count, k, args.seed)
    write_dataset(ds, args.out)
    _write_manifest(args.out, args, cfg, [args.config])
    print(f"wrote {len(ds)} records to {args.out}")


def cmd_train(args):
    cfg = _load_config(args.config)
    ds = read_dataset(args.dataset)
    if args.target:
        if args.target not in ds.names:
            raise DataError(f"target {args.target!r} not among {ds.names}")
        ds = ds.with_target(args.target)
    if len(ds) == 0:
        raise DataError(f"{args.dataset}: dataset is empty")
    base = PRESETS[args.preset]
    overrides = {k: v for k, v in cfg.get("train", {}).items()}
    for flag, field_name in (("hidden", "hidden_units"), ("epochs", "epochs"),
                             ("batch_size", "batch_size"), ("lr", "learning_rate"),
                             ("l2", "l2_coefficient")):
        if getattr(args, flag) is not None:
            overrides[field_name] = getattr(args, flag)
    config = replace(base, seed=args.seed, **overrides)
    for name in args.cov_with:
        if name not in ds.names or name == ds.target_name:
            raise DataError(f"--cov-with {name!r} must name another dataset parameter")
    upnet = train_upnet(ds, config, covariance_with=args.cov_with)
    upnet.save(args.out)
    _write_manifest(args.out, args, cfg, [args.dataset, args.config],
                    {"train_config": asdict(config),
                     "final_loss": {"mean_net": float(upnet.mean_net.loss_history[-1]),
                                    "variance_net": float(upnet.variance_net.loss_history[-1])},
                     "train_clamp_fraction": upnet.train_clamp_fraction})
    print(f"trained UpNet for {ds.target_name} on {len(ds)} records -> {args.out}")


def cmd_predict(args):
    upnet = UpNetModel.load(args.model)
    refl = _read_reflectance(args.inp, upnet.n_bands, args.sensor)
    batch = predict_batch(upnet, refl)
    cols = {"mean": batch.mean, "sd": batch.sd}
    cols.update({f"cov_{name}": v for name, v in batch.cov.items()})
    write_summary_csv(args.out, refl, cols)
    _write_manifest(args.out, args, {}, [args.model, args.inp],
                    {"n_records": len(batch), "n_clamped": batch.n_clamped})
    print(f"predicted {len(batch)} records ({batch.n_clamped} variance clamps) -> {args.out}")


def _posterior_setup(args):
    cfg = _load_config(args.config)
    model = _build_model(args.model, cfg)
    prior = _build_prior(model, cfg)
    noise = _build_noise(cfg)
    k = _target_index(prior, args.target)
    refl = _read_reflectance(args.inp, model.n_bands, args.sensor)
    return cfg, model, prior, noise, k, refl


def cmd_mcmc(args):
    cfg, model, prior, noise, k, refl = _posterior_setup(args)
    mc = dict(cfg.get("mcmc", {}))
    if args.burn_in is not None:
        mc["burn_in"] = args.burn_in
    if args.samples is not None:
        mc["samples"] = args.samples
    mc["seed"] = args.seed
    if "proposal_sds" in mc:
        mc["proposal_sds"] = tuple(mc["proposal_sds"])
    config = McmcConfig(**mc)
    chains = [] if args.dump_chains else None
    batch = run_batch(refl, model, prior, noise, config, k, chains_out=chains)
    write_summary_csv(args.out, refl, {"mean": batch.mean, "sd": batch.sd,
                                       "acceptance_rate": batch.extra["acceptance_rate"]})
    if chains is not None:
        np.savez_compressed(args.dump_chains, states=np.stack([c.states for c in chains]),
                            log_posterior=np.stack([c.log_posterior for c in chains]),
                            names=np.array(prior.names))
    _write_manifest(args.out, args, cfg, [args.config, args.inp], {"mcmc_config": asdict(config)})
    print(f"sampled {len(batch)} pixels -> {args.out}")


def cmd_oracle(args):
    cfg, model, prior, noise, k, refl = _posterior_setup(args)
    gcfg = cfg.get("grid", {})
    points = args.points if args.points is not None else gcfg.get("points")
    grid = GridSpec.from_prior(prior, points, gcfg.get("budget", 10_000_000))
    batch = GridOracle(model, prior, noise, grid).summary_batch(refl, k)
    write_summary_csv(args.out, refl, {"mean": batch.mean, "sd": batch.sd,
                                       "acceptance_rate": np.full(len(batch), np.nan)})
    _write_manifest(args.out, args, cfg, [args.config, args.inp],
                    {"grid": [list(a) for a in grid.axes]})
    print(f"integrated {len(batch)} posteriors on {grid.size} nodes -> {args.out}")


def _summary_batch(path):
    cols = read_summary_csv(path)
    for c in ("mean", "sd"):
        if c not in cols:
            raise DataError(f"{path}: missing column {c!r}")
    return PosteriorBatch(cols["mean"], cols["sd"])


def cmd_evaluate(args):
    a, b = _summary_batch(args.a), _summary_batch(args.b)
    if len(a) != len(b):
        raise DataError(f"{args.a} has {len(a)} records but {args.b} has {len(b)}")
    reports = list(consistency_report(a, b, args.label_a, args.label_b))
    inputs = [args.a, args.b]
    if args.truth:
        truth = read_dataset(args.truth)
        if args.target:
            truth = truth.with_target(args.target)
        if len(truth) != len(a):
            raise DataError(f"{args.truth} has {len(truth)} records, predictions have {len(a)}")
        for label, batch in ((args.label_a, a), (args.label_b, b)):
            t = truth.target
            slope, icpt = np.polyfit(t, batch.mean, 1)
            reports.append(MetricReport(f"truth:{truth.target_name}", label, "truth", len(t),
                                        r2(batch.mean, t), rmse(batch.mean, t), float(slope),
                                        float(icpt)))
        inputs.append(args.truth)
    write_rows(args.out, list(MetricReport.FIELDS), [r.row() for r in reports],
               schema="upnet.report/1")
    _write_manifest(args.out, args, {}, inputs)
    print(format_table(reports))
    if any(not r.r2_defined for r in reports):
        print("note: reference values are constant for at least one quantity; R2 reported as nan")


def cmd_bench(args):
    upnet = UpNetModel.load(args.model)
    cfg = _load_config(args.config)
    model = _build_model(args.forward_model, cfg)
    prior = _build_prior(model, cfg)
    noise = _build_noise(cfg)
    refl = read_dataset(args.dataset).reflectance if args.dataset else None
    if refl is None or refl.shape[0] == 0:
        raise DataError("bench needs a non-empty --dataset")
    mc = McmcConfig(burn_in=args.burn_in, samples=args.samples, seed=args.seed)
    net, mcmc, ratio = bench(upnet, refl, model, prior, noise, upnet.target_index,
                             records=args.records, mcmc_pixels=args.mcmc_pixels, mcmc_config=mc)
    rows = [[r.method, str(r.total_records), r.wall_time, r.per_pixel_time] for r in (net, mcmc)]
    write_rows(args.out, ["method", "total_records", "wall_time", "per_pixel_time"], rows,
               schema="upnet.bench/1")
    _write_manifest(args.out, args, cfg, [args.model, args.dataset, args.config], {"ratio": ratio})
    for r in (net, mcmc):
        print(f"{r.method:<6} {r.per_pixel_time:.3e} s/pixel over {r.total_records} records")
    print(f"speed-up {ratio:.3e}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="upnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    s = add("simulate", cmd_simulate, "simulate a training or test dataset")
    s.add_argument("--config")
    s.add_argument("--model", choices=["toy-canopy", "linear", "tabulated"])
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--target")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    s = add("train", cmd_train, "train the mean and variance networks")
    s.add_argument("--dataset", required=True)
    s.add_argument("--target")
    s.add_argument("--config")
    s.add_argument("--preset", choices=sorted(PRESETS), default="full")
    s.add_argument("--hidden", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--l2", type=float)
    s.add_argument("--cov-with", action="append", default=[], metavar="PARAM")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    s = add("predict", cmd_predict, "posterior mean and sd from a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--sensor", choices=["landsat8", "sentinel2"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    for name, func, help_ in (("mcmc", cmd_mcmc, "Metropolis-Hastings posterior per pixel"),
                              ("oracle", cmd_oracle, "grid-integrated posterior per pixel")):
        s = add(name, func, help_)
        s.add_argument("--config")
        s.add_argument("--model", choices=["toy-canopy", "linear", "tabulated"])
        s.add_argument("--target")
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--sensor", choices=["landsat8", "sentinel2"])
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--out", required=True)
        if name == "mcmc":
            s.add_argument("--burn-in", type=int)
            s.add_argument("--samples", type=int)
            s.add_argument("--dump-chains", metavar="NPZ")
        else:
            s.add_argument("--points", type=int)

    s = add("evaluate", cmd_evaluate, "consistency metrics between two prediction files")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--label-a", default="a")
    s.add_argument("--label-b", default="b")
    s.add_argument("--truth", help="dataset CSV with the true parameters of each record")
    s.add_argument("--target")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = add("bench", cmd_bench, "per-pixel speed of batch prediction vs MCMC")
    s.add_argument("--model", required=True, help="trained UpNet model file")
    s.add_argument("--forward-model", choices=["toy-canopy", "linear", "tabulated"])
    s.add_argument("--config")
    s.add_argument("--dataset", required=True)
    s.add_argument("--records", type=int, default=300_000)
    s.add_argument("--mcmc-pixels", type=int, default=20)
    s.add_argument("--burn-in", type=int, default=100)
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            args.func(args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"upnet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"upnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
