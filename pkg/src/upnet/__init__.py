"""Neural estimators of the posterior mean and variance for forward-model
inversion, with Metropolis-Hastings and grid-integration references."""

from .errors import DataError, NumericalError
from .forward_model import (
    LinearGaussianModel,
    SensorConfig,
    TabulatedModel,
    ToyCanopyModel,
    sensor_preset,
)
from .mcmc import McmcConfig, run_batch, run_chain, summarize
from .neural_net import TrainConfig
from .oracle import GridOracle, GridSpec, analytic_posterior, grid_posterior
from .pipeline import UpNetModel, predict, predict_batch, train_upnet
from .posterior import PosteriorBatch, PosteriorSummary
from .simulation import (
    Dataset,
    Fixed,
    NoiseModel,
    PriorSpec,
    TruncatedGaussian,
    Uniform,
    canopy_prior,
    gaussian,
    simulate_dataset,
    table2_prior,
)

__version__ = "0.1.0"
