# The same toy canopy pixels through Metropolis-Hastings (100 burn-in, 500
# samples) and through the trained network, with timings.
import time
import warnings

from upnet import McmcConfig, NoiseModel, ToyCanopyModel, TrainConfig, canopy_prior
from upnet import predict_batch, simulate_dataset, train_upnet
from upnet.mcmc import run_batch
from upnet.metrics import r2

model = ToyCanopyModel()
prior = canopy_prior(ALA=55, psoil=0.5)
noise = NoiseModel()

train = simulate_dataset(model, prior, noise, 20_000, "LAI", seed=11)
test = simulate_dataset(model, prior, noise, 30, "LAI", seed=12)
upnet = train_upnet(train, TrainConfig(hidden_units=64, epochs=100, batch_size=512, seed=3))

t = time.perf_counter()
net = predict_batch(upnet, test.reflectance)
t_net = time.perf_counter() - t

t = time.perf_counter()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    mc = run_batch(test.reflectance, model, prior, noise, McmcConfig(seed=5), 0)
t_mc = time.perf_counter() - t

print(f"mean R2 net vs mcmc: {r2(net.mean, mc.mean):.3f}")
print(f"acceptance rate: {mc.extra['acceptance_rate'].mean():.2f}")
print(f"network {t_net / len(test):.1e} s/pixel, mcmc {t_mc / len(test):.1e} s/pixel")
