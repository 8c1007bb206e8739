"""Random-walk Metropolis-Hastings over p(theta | r)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .posterior import PosteriorBatch, PosteriorSummary
from .simulation import NoiseModel, PriorSpec

__all__ = [
    "McmcConfig",
    "Chain",
    "log_posterior",
    "mh_step",
    "run_chain",
    "run_batch",
    "summarize",
    "default_proposal_sds",
    "effective_sample_size",
]

_LOG_2PI = math.log(2 * math.pi)


def log_posterior(theta, r, model, prior: PriorSpec, noise: NoiseModel):
    """Unnormalised log posterior for one ``(m,)`` vector or a stack ``(N, m)``.

    Gaussian likelihood with per-band sd ``noise.sd(f(theta))`` plus the prior
    log density. Points outside the prior support get ``-inf`` and the forward
    model is not evaluated there.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta2 = np.atleast_2d(theta)
    r = np.asarray(r, dtype=float)
    lp = np.atleast_1d(prior.logpdf(theta2)).astype(float)
    ok = np.isfinite(lp)
    if ok.any():
        f = model(theta2[ok] if not ok.all() else theta2)
        sd = noise.sd(f)
        z = (r - f) / sd
        lp[ok] += -0.5 * np.einsum("ij,ij->i", z, z) - np.log(sd).sum(axis=1) - 0.5 * _LOG_2PI * f.shape[1]
    return float(lp[0]) if single else lp


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 100
    samples: int = 500
    proposal_sds: tuple | None = None
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.samples < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, samples >= 1, thin >= 1")


@dataclass(frozen=True, eq=False)
class Chain:
    states: np.ndarray          # (samples, m)
    log_posterior: np.ndarray   # (samples,)
    acceptance_rate: float
    n_steps: int
    n_accepted: int

    def __len__(self):
        return self.states.shape[0]


def default_proposal_sds(prior: PriorSpec) -> np.ndarray:
    """0.1 x prior sd for every parameter (0 for fixed ones)."""
    return 0.1 * prior.sds()


def mh_step(theta, logp, logpost, rng, proposal_sds):
    """One Metropolis-Hastings transition; returns ``(theta, logp, accepted)``."""
    proposal = theta + proposal_sds * rng.standard_normal(theta.shape)
    return _accept(theta, logp, proposal, logpost(proposal), math.log(rng.random()))


def _accept(theta, logp, proposal, logp_new, log_u):
    if logp_new == -math.inf:
        return theta, logp, False
    if logp_new >= logp or log_u < logp_new - logp:
        return proposal, logp_new, True
    return theta, logp, False


def _chain_rng(seed, pixel):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, pixel])))


def run_chain(r, model, prior: PriorSpec, noise: NoiseModel, config: McmcConfig,
              pixel: int = 0, logpost=None) -> Chain:
    """Run one chain started at the prior means.

    ``logpost`` overrides the posterior (used for synthetic targets); by
    default it is :func:`log_posterior` for ``r``.
    """
    if logpost is None:
        if not noise.additive_sd > 0:
            raise ValueError("MCMC needs a strictly positive additive noise floor")
        r = np.asarray(r, dtype=float)
        logpost = lambda th: log_posterior(th, r, model, prior, noise)  # noqa: E731
    sds = np.asarray(config.proposal_sds if config.proposal_sds is not None
                     else default_proposal_sds(prior), dtype=float)
    free = prior.free_indices
    if np.any(sds[free] <= 0):
        raise ValueError("proposal sds must be positive for every free parameter")
    sds = np.where(np.isin(np.arange(prior.m), free), sds, 0.0)

    theta = prior.means()
    logp = logpost(theta)
    if logp == -math.inf:
        raise ValueError("initial state has zero posterior density")
    rng = _chain_rng(config.seed, pixel)
    n_steps = config.burn_in + config.samples * config.thin
    steps = rng.standard_normal((n_steps, prior.m)) * sds
    log_u = np.log(rng.random(n_steps))

    states = np.empty((config.samples, prior.m))
    trace = np.empty(config.samples)
    accepted = 0
    for i in range(n_steps):
        theta, logp, ok = _accept(theta, logp, theta + steps[i], logpost(theta + steps[i]), log_u[i])
        if i >= config.burn_in:
            accepted += ok
            j, rem = divmod(i - config.burn_in, config.thin)
            if rem == config.thin - 1:
                states[j] = theta
                trace[j] = logp
    recorded = n_steps - config.burn_in
    rate = accepted / recorded
    if not 0.1 <= rate <= 0.7:
        warnings.warn(f"MCMC acceptance rate {rate:.2f} outside [0.1, 0.7]", RuntimeWarning,
                      stacklevel=2)
    return Chain(states, trace, rate, recorded, accepted)


def summarize(chain: Chain, target_index: int) -> PosteriorSummary:
    if len(chain) == 0:
        raise ValueError("empty chain")
    x = chain.states[:, target_index]
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return PosteriorSummary(float(np.mean(x)), sd)


def run_batch(reflectances, model, prior, noise, config: McmcConfig, target_index: int,
              chains_out: list | None = None) -> PosteriorBatch:
    """One independent chain per reflectance row; pixel i uses substream (seed, i)."""
    reflectances = np.atleast_2d(np.asarray(reflectances, dtype=float))
    summaries, rates = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, r in enumerate(reflectances):
            chain = run_chain(r, model, prior, noise, config, pixel=i)
            summaries.append(summarize(chain, target_index))
            rates.append(chain.acceptance_rate)
            if chains_out is not None:
                chains_out.append(chain)
    return PosteriorBatch.from_summaries(summaries, acceptance_rate=rates)


def effective_sample_size(x) -> float:
    """ESS from the initial positive sequence of autocorrelation pairs."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1.0 / n))
