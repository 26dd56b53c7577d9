"""Simulate a one-dimensional jump diffusion and look at what came out.

The model has a sine-series drift on the core [-3, 3], a confining tail
outside it and a single Gaussian jump atom centred at 1.  We draw one long
path, count its jumps, then compare the empirical stationary law with a
histogram of observations sampled every half time unit.

    python demos/01_simulate_and_inspect.py
"""
import numpy as np

from jumpbayes.model_core import DomainSpec, DriftSpec, JumpDiffusionModel, LevyMixture
from jumpbayes.simulator import sample_observations, sample_stationary, simulate_path

dom = DomainSpec(1, 3.0)
drift = DriftSpec.zeros(dom, 4, s=4).with_coefficients(np.array([[0.2, 1.0, 0.1, 0.0]]))
levy = LevyMixture.single_atom(dom, 0.5, np.array([1.0]), 4.0)
model = JumpDiffusionModel(dom, drift, levy)

path = simulate_path(model, np.zeros(1), horizon=50.0, dt=1e-3, seed=1)
x = path.states[:, 0]
print(f"path: {len(path.times)} grid points up to t={path.horizon:.0f}")
print(f"  {len(path.jumps)} jumps (expected about {0.5 * 50:.0f}), mean size "
      f"{path.jump_sizes.mean():.3f}")
print(f"  range [{x.min():.2f}, {x.max():.2f}], fraction of time inside the core "
      f"{np.mean(np.abs(x) <= 3.0):.3f}")

# many short chains are cheaper than one long one on a single core
stat = sample_stationary(model, burn_in=40.0, thin=0.5, count=4000, seed=2)[:, 0]
obs = sample_observations(model, 2000, 0.5, dt=5e-3, seed=3).observations[:, 0]

edges = np.linspace(-4, 4, 17)
hs, _ = np.histogram(stat, edges, density=True)
ho, _ = np.histogram(obs, edges, density=True)
print("\n   bin       stationary  observed")
for lo, a, b in zip(edges[:-1], hs, ho):
    print(f"  {lo:+.1f}     {a:8.3f}  {b:8.3f}  {'#' * int(40 * a)}")

lag1 = np.corrcoef(obs[:-1], obs[1:])[0, 1]
print(f"\nlag-one autocorrelation of the observations: {lag1:.3f}")
