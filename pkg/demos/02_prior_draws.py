"""Draw models from the prior and run the regularity checker on each.

Drift coefficients come from a Gaussian series prior whose variances decay
with the Laplacian eigenvalues; the jump measure is a truncated
stick-breaking mixture of Gaussian kernels.  Every draw should pass the
drift and jump conditions, while a deliberately expanding drift should not.

    python demos/02_prior_draws.py
"""
import numpy as np

from jumpbayes.model_core import (
    DomainSpec, DriftField, JumpDiffusionModel, LevyMixture, check_conditions,
)
from jumpbayes.priors import DPMixConfig, GaussianPriorConfig, sample_drift_prior, sample_levy_prior

dom = DomainSpec(1, 3.0)
gcfg = GaussianPriorConfig(dom, s=4.0, J=4)
dcfg = DPMixConfig(dom)
rng = np.random.default_rng(0)

print("prior sd per coefficient:", np.round(np.sqrt(gcfg.variances), 4))
print("\n draw   lambda   atoms(w>0.05)   c5 margin   ok")
for i in range(10):
    m = JumpDiffusionModel(dom, sample_drift_prior(gcfg, rng), sample_levy_prior(dcfg, rng))
    rep = check_conditions(m, seed=i)
    big = int(np.sum(m.levy.weights > 0.05))
    print(f"  {i:2d}   {m.levy.intensity:6.3f}   {big:5d}          {rep.c5:8.3f}   {rep.ok}")

push = JumpDiffusionModel(DomainSpec(1, 1.0),
                          DriftField(lambda x: np.asarray(x, float).copy(), 1, name="+x"),
                          LevyMixture.empty(DomainSpec(1, 1.0)))
rep = check_conditions(push, grid_resolution=51, probe_pairs=200)
for v in rep.violations:
    print(f"\nexpanding drift: {v.condition} fails, {v.message}")
    print(f"  witness {v.witness}")
