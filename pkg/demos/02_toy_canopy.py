# LAI retrieval from a six-band toy canopy, checked against brute-force
# integration of the posterior on a 401 x 401 grid over (LAI, Cab).
import numpy as np

from upnet import GridOracle, NoiseModel, ToyCanopyModel, TrainConfig, canopy_prior
from upnet import predict_batch, simulate_dataset, train_upnet
from upnet.metrics import consistency_report, format_table

model = ToyCanopyModel()
prior = canopy_prior(ALA=55, psoil=0.5)   # LAI and Cab free, soil fixed
noise = NoiseModel()                      # 4% multiplicative + 0.01 additive

train = simulate_dataset(model, prior, noise, 50_000, "LAI", seed=11)
test = simulate_dataset(model, prior, noise, 300, "LAI", seed=12)

upnet = train_upnet(train, TrainConfig(hidden_units=64, epochs=300, batch_size=512, seed=3))
net = predict_batch(upnet, test.reflectance)
grid = GridOracle(model, prior, noise).summary_batch(test.reflectance, 0)

print(format_table(consistency_report(net, grid, "upnet", "grid")))

# uncertainty grows with LAI as the canopy saturates
order = np.argsort(test.target)
for i in order[::60]:
    print(f"true LAI {test.target[i]:5.2f}  net {net.mean[i]:5.2f} +- {net.sd[i]:.2f}"
          f"  grid {grid.mean[i]:5.2f} +- {grid.sd[i]:.2f}")
