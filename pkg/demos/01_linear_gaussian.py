# One parameter, three bands, Gaussian everything: the posterior is known in
# closed form, so we can see how close the two networks get to it.
import numpy as np

from upnet import LinearGaussianModel, NoiseModel, PriorSpec, TrainConfig, gaussian
from upnet import predict_batch, simulate_dataset, train_upnet
from upnet.oracle import gaussian_posterior

A = np.array([[1.0], [0.5], [-0.8]])
model = LinearGaussianModel(A, np.zeros(3), ("theta",))
prior = PriorSpec((gaussian("theta", 0.0, 1.0),))
noise = NoiseModel(0.0, 0.5)  # additive only, sd 0.5 in every band

train = simulate_dataset(model, prior, noise, 50_000, seed=1)
test = simulate_dataset(model, prior, noise, 10, seed=2)

upnet = train_upnet(train, TrainConfig(hidden_units=64, epochs=300, batch_size=512, seed=1))
pred = predict_batch(upnet, test.reflectance)

for r, m, s in zip(test.reflectance, pred.mean, pred.sd):
    mu, cov = gaussian_posterior(A, np.zeros(3), [0.0], [[1.0]], 0.25 * np.eye(3), r)
    print(f"net {m:+.3f} +- {s:.3f}   exact {mu[0]:+.3f} +- {np.sqrt(cov[0, 0]):.3f}")

# the exact sd is the same for every r; the variance net should be nearly flat
print("spread of predicted sd:", pred.sd.std())
