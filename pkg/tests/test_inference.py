import json
import warnings

import numpy as np
import pytest
from scipy import stats

from helpers import perturbed, prior_configs, reference_model
from jumpbayes.errors import InputError
from jumpbayes.inference import (
    Chain, ContractionCurve, ContractionEntry, ProposalConfig, chain_to_jsonl, contraction_metric,
    curve_to_csv, integrated_autocorr_time, log_acceptance_ratio, pcn_proposal,
    posterior_weak_distances, run_chain,
)
from jumpbayes.likelihood import EstimatorConfig, PriorBundle
from jumpbayes.priors import levy_to_unconstrained
from jumpbayes.simulator import sample_observations

FAST = EstimatorConfig(replicates=32, dt=0.1, method="euler")


def point_mass_chain(model, n=40, K=1):
    """A chain whose every draw is ``model``."""
    lv = model.levy
    return Chain(model.domain, model.drift.s, model.drift.k,
                 np.repeat(model.drift.coefficients[None], n, axis=0),
                 np.repeat(lv.weights[None], n, axis=0), np.repeat(lv.centers[None], n, axis=0),
                 np.repeat(lv.precisions[None], n, axis=0), np.full(n, lv.intensity),
                 np.zeros(n), {}, {}, 0)


def thinned(x):
    tau = integrated_autocorr_time(x)
    return x[:: max(1, int(np.ceil(tau)))]


@pytest.fixture(scope="module")
def prior_chain():
    gc, dc = prior_configs()
    pcfg = ProposalConfig(likelihood=False, n_atoms=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_chain(None, PriorBundle(gc, dc), pcfg, iterations=6000, warmup=1000, seed=1), gc, dc


class TestProposal:
    def test_pcn_preserves_prior_variance(self):
        rng = np.random.default_rng(0)
        var = np.array([1.0, 0.1, 0.01])
        a = rng.standard_normal((50000, 3)) * np.sqrt(var)
        out = pcn_proposal(a, rng.standard_normal((50000, 3)) * np.sqrt(var), np.array([0.2, 0.5, 0.9]))
        np.testing.assert_allclose(out.var(axis=0), var, rtol=0.03)

    def test_config_validation(self):
        for kw in ({"beta_pcn": 1.0}, {"n_atoms": 0}, {"levy_step": 0.0}, {"target_accept": 1.5}):
            with pytest.raises(InputError):
                ProposalConfig(**kw)

    def test_detailed_balance(self):
        truth = reference_model()
        data = sample_observations(truth, 30, 0.5, dt=1e-2, seed=1)
        gc, dc = prior_configs()
        pcfg = ProposalConfig(n_atoms=1, estimator=FAST)
        priors = PriorBundle(gc, dc)
        th = levy_to_unconstrained(truth.levy)
        x = (truth.drift.coefficients, th)
        other = perturbed(truth, 4)
        y_drift = (other.drift.coefficients, th)
        y_levy = (truth.drift.coefficients, levy_to_unconstrained(other.levy))
        for block, y in (("drift", y_drift), ("levy", y_levy)):
            fwd = log_acceptance_ratio(block, x, y, data, priors, pcfg, aux=7)
            back = log_acceptance_ratio(block, y, x, data, priors, pcfg, aux=7)
            assert fwd != 0.0
            assert abs(fwd + back) < 1e-10

    def test_unknown_block(self):
        truth = reference_model()
        gc, dc = prior_configs()
        th = levy_to_unconstrained(truth.levy)
        x = (truth.drift.coefficients, th)
        with pytest.raises(InputError):
            log_acceptance_ratio("tau", x, x, None, PriorBundle(gc, dc), ProposalConfig(n_atoms=1), 0)


class TestRunChain:
    def test_prior_reproduction(self, prior_chain):
        chain, gc, dc = prior_chain
        assert len(chain) == 5000
        sd = np.sqrt(gc.variances)
        pvals = []
        for j in range(gc.J):
            x = thinned(chain.coefficients[:, 0, j])
            pvals.append(stats.kstest(x, "norm", args=(0, sd[j])).pvalue)
        lam = thinned(chain.intensity)
        pvals.append(stats.kstest(lam, "gamma", args=(dc.lambda_shape, 0, 1 / dc.lambda_rate)).pvalue)
        assert min(pvals) > 0.01 / len(pvals)

    def test_prior_variance(self, prior_chain):
        chain, gc, _ = prior_chain
        a = chain.coefficients[:, 0, 0]
        n_eff = len(a) / integrated_autocorr_time(a ** 2)
        se = np.std(a ** 2) / np.sqrt(n_eff)
        assert abs(np.mean(a ** 2) - gc.variances[0]) < 3 * se

    def test_deterministic(self):
        truth = reference_model()
        data = sample_observations(truth, 20, 0.5, dt=1e-2, seed=2)
        gc, dc = prior_configs()
        pcfg = ProposalConfig(n_atoms=2, estimator=FAST)
        a = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=60, warmup=20, seed=5)
        b = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=60, warmup=20, seed=5)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        np.testing.assert_array_equal(a.log_score, b.log_score)
        assert len(a) == 40
        assert 0 < a.acceptance_rates["drift"] < 1

    def test_blocked_refresh(self):
        truth = reference_model()
        data = sample_observations(truth, 40, 0.5, dt=1e-2, seed=2)
        gc, dc = prior_configs()
        est = EstimatorConfig(replicates=8, dt=0.1, method="euler", refresh_prob=1.0, block_size=10)
        pcfg = ProposalConfig(n_atoms=2, estimator=est)
        a = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=80, warmup=20, seed=5)
        b = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=80, warmup=20, seed=5)
        np.testing.assert_array_equal(a.log_score, b.log_score)
        assert 0 < a.acceptance_rates["refresh"] < 1

    def test_weights_sum_to_one(self, prior_chain):
        chain = prior_chain[0]
        np.testing.assert_allclose(chain.weights.sum(axis=1), 1.0, atol=1e-12)

    def test_bad_iterations(self):
        gc, dc = prior_configs()
        with pytest.raises(InputError):
            run_chain(None, PriorBundle(gc, dc), ProposalConfig(), iterations=10, warmup=10)

    def test_tuning_failure_flagged(self):
        # data the model cannot produce: every move that changes the likelihood is rejected
        truth = reference_model()
        data = sample_observations(truth, 5, 0.5, dt=1e-2, seed=2)
        data.observations[:] = np.array([[0.0], [50.0], [-50.0], [50.0], [-50.0], [50.0]])
        gc, dc = prior_configs()
        pcfg = ProposalConfig(n_atoms=1, estimator=FAST, adapt=False, beta_pcn=0.99, levy_step=5.0)
        with pytest.warns(RuntimeWarning):
            chain = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=60, warmup=10, seed=1,
                              init=(truth.drift.coefficients, truth.levy))
        assert any(f.startswith("tuning_failure") for f in chain.flags)

    @pytest.mark.slow
    def test_calibration_of_first_coefficient(self):
        truth = reference_model()
        gc, dc = prior_configs()
        pcfg = ProposalConfig(estimator=FAST)
        hits = 0
        for seed in range(10):
            data = sample_observations(truth, 200, 0.5, dt=5e-3, seed=(11, seed))
            chain = run_chain(data, PriorBundle(gc, dc), pcfg, iterations=1000, warmup=300, seed=seed)
            lo, hi = np.quantile(chain.coefficients[:, 0, 0], [0.05, 0.95])
            hits += lo <= truth.drift.coefficients[0, 0] <= hi
        assert hits >= 8


class TestContraction:
    def test_point_mass_at_truth(self):
        truth = reference_model()
        chain = point_mass_chain(truth)
        mass, med = contraction_metric(chain, truth, epsilon=1e-6, replicates=200, dt=0.05)
        assert mass == 0.0 and med == 0.0

    def test_zero_epsilon_and_monotone(self):
        truth = reference_model()
        chain = point_mass_chain(perturbed(truth, 1), n=20)
        d = posterior_weak_distances(chain, truth, replicates=200, dt=0.05, seed=3)
        assert np.all(d > 0)
        masses = [np.mean(d > e) for e in (0.0, 0.5 * d.min(), np.median(d), 2 * d.max())]
        assert masses[0] == 1.0 and masses[-1] == 0.0
        assert all(a >= b for a, b in zip(masses, masses[1:]))

    def test_needs_twenty_samples(self):
        truth = reference_model()
        with pytest.raises(InputError):
            posterior_weak_distances(point_mass_chain(truth, n=19), truth, replicates=50, dt=0.1)

    def test_curve_sorted_and_decreasing(self, tmp_path):
        c = ContractionCurve()
        for n, m in ((800, 0.02), (50, 0.1), (200, 0.05)):
            c.add(ContractionEntry(n, 0.5, m, 0.01, 0.001, 0.05))
        assert [e.n for e in c.entries] == [50, 200, 800]
        assert c.is_decreasing()
        p = tmp_path / "curve.csv"
        curve_to_csv(c, p)
        rows = p.read_text().splitlines()
        assert rows[0].startswith("n,epsilon,mass_outside,median_distance") and len(rows) == 4


class TestDiagnostics:
    def test_iat_white_noise(self):
        x = np.random.default_rng(0).standard_normal(20000)
        assert integrated_autocorr_time(x) == pytest.approx(1.0, abs=0.15)

    def test_iat_ar1(self):
        rng = np.random.default_rng(1)
        phi = 0.8
        x = np.zeros(100000)
        e = rng.standard_normal(len(x))
        for i in range(1, len(x)):
            x[i] = phi * x[i - 1] + e[i]
        assert integrated_autocorr_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.15)

    def test_jsonl(self, tmp_path, prior_chain):
        chain = prior_chain[0]
        p = tmp_path / "chain.jsonl"
        chain_to_jsonl(chain, p)
        lines = p.read_text().splitlines()
        assert len(lines) == len(chain) + 1
        head = json.loads(lines[0])["header"]
        assert set(head["acceptance_rates"]) >= {"drift", "levy"}
        row = json.loads(lines[5])
        assert set(row) == {"coefficients", "mixture", "log_score"}
