"""Model builders shared by the test modules."""
import numpy as np

from jumpbayes.model_core import DomainSpec, DriftSpec, JumpDiffusionModel, LevyMixture, check_conditions
from jumpbayes.priors import DPMixConfig, GaussianPriorConfig, sample_drift_prior, sample_levy_prior

TRUTH_COEFFS = np.array([[0.2, 1.0, 0.1, 0.0]])


def brownian(d=1, r=50.0):
    """Zero drift on a core far larger than the paths reach, no jumps."""
    dom = DomainSpec(d, r)
    return JumpDiffusionModel(dom, DriftSpec.zeros(dom, 2), LevyMixture.empty(dom))


def reference_model(lam=0.5, tau=4.0, center=1.0):
    """One-dimensional model on ``[-3, 3]`` with a single jump atom."""
    dom = DomainSpec(1, 3.0)
    drift = DriftSpec.zeros(dom, 4, s=4).with_coefficients(TRUTH_COEFFS)
    levy = LevyMixture.single_atom(dom, lam, np.array([center]), tau)
    return JumpDiffusionModel(dom, drift, levy)


def prior_configs(d=1, r=3.0, J=4):
    dom = DomainSpec(d, r)
    return GaussianPriorConfig(dom, d + 3.0, J), DPMixConfig(dom)


def prior_model(seed, d=1, r=3.0, J=4):
    gc, dc = prior_configs(d, r, J)
    rng = np.random.default_rng(seed)
    return JumpDiffusionModel(gc.domain, sample_drift_prior(gc, rng), sample_levy_prior(dc, rng))


def recurrent_prior_models(start, count):
    """The first ``count`` prior draws from seed ``start`` on whose mean large jump the tail pull wins.

    Roughly a quarter of prior draws are pushed off to infinity by their
    jumps; those have no stationary law to start paths from.
    """
    out, seed = [], start
    while len(out) < count:
        m = prior_model(seed)
        if not check_conditions(m, grid_resolution=21, probe_pairs=50).notes["large_jump_push_exceeds_c5"]:
            out.append(m)
        seed += 1
    return out


def perturbed(model, seed, scale=0.3):
    """A random neighbour of ``model``: jittered coefficients, weights, atoms and precisions."""
    rng = np.random.default_rng(seed)
    dom = model.domain
    drift = model.drift.with_coefficients(
        model.drift.coefficients + (scale / 0.3) * 0.5 * rng.standard_normal(model.drift.coefficients.shape))
    lv = model.levy
    centers = np.clip(lv.centers + scale * rng.standard_normal(lv.centers.shape), -dom.r, dom.r)
    levy = LevyMixture(dom, lv.intensity * np.exp(scale * rng.standard_normal()), lv.weights,
                       centers, lv.precisions * np.exp(scale * rng.standard_normal(len(lv.weights))),
                       lv.mass_tol)
    return JumpDiffusionModel(dom, drift, levy)


# one line per acceptance criterion, printed in the pytest terminal summary
ACCEPTANCE_LINES = {}


def report(criterion, passed, detail):
    line = f"{criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed
