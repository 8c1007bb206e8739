import math

import numpy as np
import pytest

from upnet.forward_model import LinearGaussianModel, ToyCanopyModel
from upnet.mcmc import (
    McmcConfig,
    _accept,
    effective_sample_size,
    log_posterior,
    mh_step,
    run_batch,
    run_chain,
    summarize,
)
from upnet.simulation import NoiseModel, PriorSpec, Uniform, canopy_prior, gaussian

LINEAR = LinearGaussianModel([[1.0], [0.5], [-0.8]], [0.0, 0.0, 0.0], ("theta",))
PRIOR = PriorSpec((gaussian("theta", 0.0, 1.0),))
NOISE = NoiseModel(0.0, 0.5)


def test_log_posterior_matches_hand_formula():
    r = np.array([0.3, -0.1, 0.2])
    th = 0.4
    f = np.array([1.0, 0.5, -0.8]) * th
    ll = -0.5 * np.sum(((r - f) / 0.5) ** 2) - 3 * math.log(0.5) - 1.5 * math.log(2 * math.pi)
    lp = -0.5 * th ** 2 - 0.5 * math.log(2 * math.pi)
    assert log_posterior([th], r, LINEAR, PRIOR, NOISE) == pytest.approx(ll + lp, rel=1e-13)


def test_log_posterior_outside_support():
    prior = canopy_prior()
    bad = np.array([[-1.0, 50, 30, 0.5, 0.8], [3.0, 50, 30, 0.5, 0.8]])
    lp = log_posterior(bad, np.full(6, 0.2), ToyCanopyModel(), prior, NoiseModel())
    assert lp[0] == -np.inf and np.isfinite(lp[1])


def test_uphill_always_accepted():
    theta = np.zeros(1)
    for log_u in (-1e-9, 0.0, -50.0):
        _, _, ok = _accept(theta, -3.0, theta + 1, -2.0, log_u)
        assert ok
    _, _, ok = _accept(theta, -3.0, theta + 1, -np.inf, -100.0)
    assert not ok


def test_flat_posterior_acceptance_equals_in_support_probability():
    # uniform on [0,1], constant likelihood; proposals from the centre with sd 1
    logpost = lambda th: 0.0 if 0 <= th[0] <= 1 else -math.inf  # noqa: E731
    rng = np.random.default_rng(0)
    n, acc = 10_000, 0
    for _ in range(n):
        _, _, ok = mh_step(np.array([0.5]), 0.0, logpost, rng, np.array([1.0]))
        acc += ok
    from scipy.stats import norm
    p = norm.cdf(0.5) - norm.cdf(-0.5)
    assert abs(acc / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_chain_states_in_support_and_rate_consistent():
    r = ToyCanopyModel()(np.array([2.0, 55, 40, 0.5, 0.8]))
    prior = canopy_prior(ALA=55, psoil=0.5)
    with pytest.warns(RuntimeWarning):
        chain = run_chain(r, ToyCanopyModel(), prior, NoiseModel(), McmcConfig(seed=1))
    assert len(chain) == 500
    assert np.all(np.isfinite(prior.logpdf(chain.states)))
    assert np.all(chain.states[:, 1] == 55)
    assert chain.acceptance_rate == chain.n_accepted / chain.n_steps


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_chain_determinism_and_pixel_streams():
    cfg = McmcConfig(burn_in=10, samples=50, seed=3)
    r = np.array([0.3, 0.1, -0.2])
    a = run_chain(r, LINEAR, PRIOR, NOISE, cfg)
    b = run_chain(r, LINEAR, PRIOR, NOISE, cfg)
    c = run_chain(r, LINEAR, PRIOR, NOISE, cfg, pixel=1)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.log_posterior, b.log_posterior)
    assert not np.array_equal(a.states, c.states)


def test_default_proposal_converges_on_linear_benchmark():
    r = np.array([0.6, 0.2, -0.5])
    cfg = McmcConfig(burn_in=500, samples=20_000, seed=2)
    with pytest.warns(RuntimeWarning):
        chain = run_chain(r, LINEAR, PRIOR, NOISE, cfg)
    a = np.array([1.0, 0.5, -0.8])
    var = 1 / (1 + a @ a / 0.25)
    mu = var * (a @ r / 0.25)
    x = chain.states[:, 0]
    se = x.std() / math.sqrt(effective_sample_size(x))
    assert abs(x.mean() - mu) < 4 * se


def test_summarize_two_pass():
    x = np.random.default_rng(0).normal(3, 2, size=(1000, 1))
    from upnet.mcmc import Chain
    s = summarize(Chain(x, np.zeros(1000), 0.5, 1000, 500), 0)
    mean = sum(x[:, 0]) / 1000
    sd = math.sqrt(sum((v - mean) ** 2 for v in x[:, 0]) / 999)
    assert s.mean == pytest.approx(mean, rel=1e-12)
    assert s.sd == pytest.approx(sd, rel=1e-12)


def test_thinning_keeps_requested_samples():
    chain = run_chain(None, None, PRIOR, NOISE, McmcConfig(burn_in=0, samples=100, thin=5,
                                                           proposal_sds=(2.4,)),
                      logpost=lambda th: -0.5 * float(th[0]) ** 2)
    assert len(chain) == 100 and chain.n_steps == 500


def test_ess_iid_close_to_n():
    x = np.random.default_rng(1).normal(size=5000)
    assert 4000 < effective_sample_size(x) < 6000
    ar = np.zeros(5000)
    e = np.random.default_rng(2).normal(size=5000)
    for i in range(1, 5000):
        ar[i] = 0.9 * ar[i - 1] + e[i]
    assert effective_sample_size(ar) < 600


def test_run_batch_shapes():
    refl = np.array([[0.3, 0.1, -0.2], [0.0, 0.0, 0.0]])
    chains = []
    out = run_batch(refl, LINEAR, PRIOR, NOISE, McmcConfig(burn_in=5, samples=20), 0, chains)
    assert len(out) == 2 and len(chains) == 2
    assert out.extra["acceptance_rate"].shape == (2,)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_errors():
    with pytest.raises(ValueError):
        McmcConfig(samples=0)
    with pytest.raises(ValueError):
        run_chain(np.zeros(3), LINEAR, PRIOR, NoiseModel(0.04, 0.0), McmcConfig())
    with pytest.raises(ValueError):
        run_chain(np.zeros(3), LINEAR, PRIOR, NOISE, McmcConfig(proposal_sds=(0.0,)))
    uni = PriorSpec((Uniform("theta", 0, 1),))
    with pytest.raises(ValueError, match="initial state"):
        run_chain(None, None, uni, NOISE, McmcConfig(), logpost=lambda th: -math.inf)
