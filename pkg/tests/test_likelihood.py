import numpy as np
import pytest
from scipy import integrate

from helpers import brownian, perturbed, prior_configs, reference_model
from jumpbayes.errors import InputError, SingularWeightError, SupportViolationError
from jumpbayes.likelihood import (
    EstimatorConfig, PriorBundle, estimate_transition_density, girsanov_log_weights,
    kl_upper_bound, literal_jump_term, log_girsanov_weight, log_likelihood_blocks,
    log_likelihood_estimate, log_posterior_unnorm, log_transition_densities, transition_blocks, score_breakdown, validate_kl_bound,
)
from jumpbayes.model_core import DomainSpec, DriftField, DriftSpec, JumpDiffusionModel, LevyMixture
from jumpbayes.simulator import sample_observations, sample_stationary, simulate_path


def scaled_levy(model, c):
    lv = model.levy
    return JumpDiffusionModel(model.domain, model.drift,
                              LevyMixture(lv.domain, c * lv.intensity, lv.weights, lv.centers,
                                          lv.precisions, lv.mass_tol))


@pytest.fixture(scope="module")
def stationary_ref():
    return sample_stationary(reference_model(), 40.0, 0.5, 2000, seed=0)


class TestGirsanov:
    def test_identity_is_zero(self):
        m = reference_model(lam=3.0)
        for seed in range(5):
            sk = simulate_path(m, np.zeros(1), 1.0, 1e-2, seed=seed)
            assert log_girsanov_weight(sk, m, m) == 0.0

    def test_skeleton_matches_batch(self):
        ref, tgt = reference_model(lam=2.0), perturbed(reference_model(lam=2.0), 1)
        sk = simulate_path(ref, np.array([0.5]), 0.5, 1e-2, seed=4)
        batch = girsanov_log_weights(ref, tgt, np.array([[0.5]]), 0.5, 1e-2, seed=4)
        assert log_girsanov_weight(sk, ref, tgt) == pytest.approx(batch[0], abs=1e-10)

    def test_constant_drift_gap(self):
        c, delta = 0.8, 0.5
        ref = brownian()
        tgt = JumpDiffusionModel(ref.domain, DriftField(lambda x: np.full_like(x, c), 1), ref.levy)
        lw = girsanov_log_weights(ref, tgt, np.zeros((20000, 1)), delta, 1e-2, seed=1)
        se = lw.std(ddof=1) / np.sqrt(len(lw))
        assert abs(lw.mean() + 0.5 * c * c * delta) < 3 * se

    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_compound_poisson_ratio(self, c):
        # an atom well outside the unit ball keeps the compensators (and drift gap) near zero
        ref = reference_model(lam=1.0, tau=25.0, center=2.0)
        tgt = scaled_levy(ref, c)
        delta = 0.5
        lw = girsanov_log_weights(ref, tgt, np.zeros((20000, 1)), delta, 1e-2, seed=2)
        n_jumps = np.round((lw + (c - 1) * delta) / np.log(c))
        np.testing.assert_allclose(lw, n_jumps * np.log(c) - (c - 1) * delta, atol=1e-5)
        se = lw.std(ddof=1) / np.sqrt(len(lw))
        assert abs(lw.mean() - delta * (np.log(c) - c + 1)) < 3 * se

    def test_exponential_martingale(self, stationary_ref):
        ref = reference_model()
        tgt = perturbed(ref, 3)
        x0 = stationary_ref[:4000]
        w = np.exp(girsanov_log_weights(ref, tgt, x0, 0.25, 1e-3, seed=5))
        assert abs(w.mean() - 1) < 3 * w.std(ddof=1) / np.sqrt(len(w))

    def test_mismatched_support(self):
        ref = reference_model()
        with pytest.raises(SupportViolationError):
            girsanov_log_weights(ref, scaled_levy(ref, 0.0), np.zeros((2, 1)), 0.5)

    def test_singular_weight(self):
        ref = reference_model(lam=5.0, center=-2.0)
        spike = JumpDiffusionModel(ref.domain, ref.drift,
                                   LevyMixture.single_atom(ref.domain, 5.0, np.array([2.5]), 1e6))
        sk = simulate_path(ref, np.zeros(1), 2.0, 1e-2, seed=0)
        assert len(sk.jumps) > 0
        with pytest.raises(SingularWeightError) as info:
            log_girsanov_weight(sk, ref, spike)
        assert info.value.jump_size is not None
        lw = girsanov_log_weights(ref, spike, np.zeros((5, 1)), 2.0, 1e-2, seed=0)
        assert np.isneginf(lw[0])


class TestKLBound:
    def test_self_is_zero(self, stationary_ref):
        m = reference_model()
        t = kl_upper_bound(m, m, stationary_ref)
        assert (t.drift_term, t.jump_term, t.total) == (0.0, 0.0, 0.0)

    def test_drift_only(self, stationary_ref):
        m = reference_model()
        other = JumpDiffusionModel(m.domain, m.drift.with_coefficients(m.drift.coefficients * -1), m.levy)
        t = kl_upper_bound(m, other, stationary_ref)
        diff = m.drift_at(stationary_ref) - other.drift_at(stationary_ref)
        assert t.jump_term == 0.0
        assert t.drift_term == pytest.approx(0.5 * np.mean(np.sum(diff ** 2, axis=1)), rel=1e-12)

    @pytest.mark.parametrize("c", [0.5, 2.0, 4.0])
    def test_scaled_measure(self, c, stationary_ref):
        # nu0 = c nu: the jump term is the Poisson relative entropy rate lam (c log c - c + 1)
        ref = reference_model(lam=1.0, tau=25.0, center=2.0)
        truth = scaled_levy(ref, c)
        t = kl_upper_bound(truth, ref, stationary_ref)
        assert t.jump_term == pytest.approx(c * np.log(c) - c + 1, rel=1e-6)
        literal = literal_jump_term(truth, ref)
        assert literal == pytest.approx(c * (np.log(c) - c + 1), rel=1e-6)
        assert literal < 0

    def test_literal_term_undercuts_path_kl(self, stationary_ref):
        ref = reference_model(lam=1.0, tau=25.0, center=2.0)
        truth = scaled_levy(ref, 2.0)
        chk = validate_kl_bound(truth, ref, stationary_ref[:4000], 0.5, 1e-2, seed=1)
        assert chk.mean_neg_logw > 0.5 * literal_jump_term(truth, ref) + 3 * chk.stderr
        assert chk.holds

    def test_permutation_invariant(self, stationary_ref):
        dom = DomainSpec(1, 3.0)
        base = reference_model()
        lv = LevyMixture(dom, 0.7, [0.5, 0.3, 0.2], [[-1.0], [0.5], [2.0]], [2.0, 5.0, 1.0])
        cand = JumpDiffusionModel(dom, base.drift, lv)
        perm = JumpDiffusionModel(dom, base.drift, lv.permuted([2, 0, 1]))
        a = kl_upper_bound(base, cand, stationary_ref).total
        b = kl_upper_bound(base, perm, stationary_ref).total
        assert a == pytest.approx(b, rel=1e-12)

    @pytest.mark.parametrize("seed", [1, 2])
    def test_chain_holds(self, seed, stationary_ref):
        truth = reference_model()
        chk = validate_kl_bound(truth, perturbed(truth, seed), stationary_ref[:3000], 0.25, 1e-3,
                                seed=seed, bound_samples=stationary_ref)
        assert chk.holds

    def test_support_violation(self, stationary_ref):
        truth = reference_model()
        narrow = JumpDiffusionModel(truth.domain, truth.drift,
                                    LevyMixture.single_atom(truth.domain, 0.5, np.zeros(1), 1e6))
        with pytest.raises(SupportViolationError):
            kl_upper_bound(truth, narrow, stationary_ref)

    def test_empty_samples(self):
        m = reference_model()
        with pytest.raises(InputError):
            kl_upper_bound(m, m, np.zeros((0, 1)))


class TestTransitionDensity:
    def test_heat_kernel_at_diagonal(self):
        delta = 0.5
        p, se = estimate_transition_density(brownian(), [0.3], [0.3], delta, replicates=20000,
                                            dt=0.01, seed=1)
        exact = (2 * np.pi * delta) ** -0.5
        assert abs(p - exact) < 3 * se + 0.05 * exact

    def test_euler_method(self):
        delta = 0.5
        p, _ = estimate_transition_density(brownian(), [0.0], [0.8], delta, replicates=5000,
                                           dt=0.05, seed=1, method="euler")
        exact = (2 * np.pi * delta) ** -0.5 * np.exp(-0.64 / (2 * delta))
        assert p == pytest.approx(exact, rel=0.05)

    def test_euler_method_with_jumps(self):
        m = reference_model(lam=0.8, tau=25.0, center=1.0)
        x = np.zeros((5, 1))
        y = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])[:, None]
        fine = EstimatorConfig(replicates=100_000, dt=0.005, method="kde", bandwidth=0.02)
        coarse = EstimatorConfig(replicates=20_000, dt=0.05, method="euler")
        ref, _ = log_transition_densities(m, x, y, 0.5, fine, seed=2)
        est, _ = log_transition_densities(m, x, y, 0.5, coarse, seed=1)
        np.testing.assert_allclose(np.exp(est - ref), 1.0, atol=0.08)

    def test_observed_jump_needs_no_simulated_jump(self):
        # a handful of paths rarely jump, but the last step carries the jump law in closed form
        m = reference_model(lam=0.8, tau=25.0, center=1.0)
        fine = EstimatorConfig(replicates=100_000, dt=0.005, method="kde", bandwidth=0.02)
        ref, _ = log_transition_densities(m, [[0.0]], [[1.0]], 0.5, fine, seed=2)
        cfg = EstimatorConfig(replicates=4, dt=0.1, method="euler")
        worst = min(log_transition_densities(m, [[0.0]], [[1.0]], 0.5, cfg, seed=s)[0][0]
                    for s in range(30))
        assert worst > ref[0] - 2.5

    def test_symmetry(self):
        a, sa = estimate_transition_density(brownian(), [0.0], [0.7], 0.5, 20000, dt=0.01, seed=2)
        b, sb = estimate_transition_density(brownian(), [0.7], [0.0], 0.5, 20000, dt=0.01, seed=2)
        assert abs(a - b) < 3 * np.hypot(sa, sb) + 0.02 * a

    def test_integrates_to_one(self):
        m = reference_model()
        ys = np.linspace(-4.0, 4.0, 161)
        cfg = EstimatorConfig(replicates=4000, dt=0.01)
        logp, _ = log_transition_densities(m, np.full((len(ys), 1), 0.5), ys[:, None], 0.5, cfg, seed=3)
        assert 0.95 <= integrate.trapezoid(np.exp(logp), ys) <= 1.05

    def test_deterministic_and_nonnegative(self):
        m = reference_model()
        a = estimate_transition_density(m, [0.0], [5.0], 0.5, 200, dt=0.01, seed=4)
        b = estimate_transition_density(m, [0.0], [5.0], 0.5, 200, dt=0.01, seed=4)
        assert a == b and a[0] >= 0

    def test_errors(self):
        m = reference_model()
        with pytest.raises(InputError):
            estimate_transition_density(m, [0.0], [0.0], 0.5, replicates=50)
        with pytest.raises(InputError):
            estimate_transition_density(m, [0.0], [0.0], 0.5, bandwidth=0.0)


class TestBlocks:
    def test_block_sizes(self):
        assert [len(b) for b in transition_blocks(10, 0)] == [10]
        assert [len(b) for b in transition_blocks(100, 25)] == [25] * 4
        assert len(transition_blocks(3, 25)) == 1
        assert np.concatenate(transition_blocks(83, 20)).tolist() == list(range(83))

    def test_single_block_matches_full_series(self):
        m = reference_model()
        data = sample_observations(m, 30, 0.5, dt=1e-2, seed=1)
        cfg = EstimatorConfig(replicates=16, dt=0.1, method="euler")
        logp, _ = log_likelihood_estimate(m, data, cfg, seed=7)
        parts = log_likelihood_blocks(m, data, cfg, (7,))
        assert parts.shape == (1,) and parts[0] == pytest.approx(logp.sum())

    def test_blocks_are_independent_streams(self):
        m = reference_model()
        data = sample_observations(m, 30, 0.5, dt=1e-2, seed=1)
        cfg = EstimatorConfig(replicates=16, dt=0.1, method="euler")
        a = log_likelihood_blocks(m, data, cfg, (1, 2, 3))
        b = log_likelihood_blocks(m, data, cfg, (1, 9, 3))
        only = log_likelihood_blocks(m, data, cfg, (1, 9, 3), only=1)
        assert a[0] == b[0] and a[2] == b[2] and a[1] != b[1]
        assert only[1] == b[1] and only[0] == only[2] == 0.0

    def test_block_size_validation(self):
        with pytest.raises(InputError):
            EstimatorConfig(block_size=-1)


class TestPosteriorScore:
    cfg = EstimatorConfig(replicates=32, dt=0.1, method="euler")

    def priors(self):
        return PriorBundle(*prior_configs())

    def test_additive_decomposition(self):
        truth = reference_model()
        data = sample_observations(truth, 1, 0.5, dt=1e-2, seed=1)
        other = perturbed(truth, 2)
        sa = score_breakdown((truth.drift, truth.levy), data, self.priors(), self.cfg, seed=3)
        sb = score_breakdown((other.drift, other.levy), data, self.priors(), self.cfg, seed=3)
        assert sa.transitions.shape == (1,)
        lhs = log_posterior_unnorm((truth.drift, truth.levy), data, self.priors(), self.cfg, 3) - \
            log_posterior_unnorm((other.drift, other.levy), data, self.priors(), self.cfg, 3)
        rhs = (sa.drift_prior - sb.drift_prior) + (sa.levy_prior - sb.levy_prior) + \
            (sa.transitions[0] - sb.transitions[0])
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_truth_score_finite(self):
        truth = reference_model()
        for seed in range(100):
            data = sample_observations(truth, 10, 0.5, dt=0.05, seed=seed, burn_in=40.0)
            assert np.isfinite(log_posterior_unnorm((truth.drift, truth.levy), data, self.priors(),
                                                    self.cfg, seed))

    def test_far_perturbation_lowers_score(self):
        truth = reference_model()
        data = sample_observations(truth, 400, 0.5, dt=1e-2, seed=7)
        cfg = EstimatorConfig(replicates=64, dt=0.05, method="euler")
        base = score_breakdown((truth.drift, truth.levy), data, self.priors(), cfg, 1).log_likelihood
        rng = np.random.default_rng(0)
        worse = []
        for _ in range(20):
            a = truth.drift.coefficients + 2.0 * rng.standard_normal(truth.drift.coefficients.shape)
            sb = score_breakdown((truth.drift.with_coefficients(a), truth.levy), data, self.priors(), cfg, 1)
            worse.append(sb.log_likelihood)
        assert np.median(worse) < base

    def test_stationary_factor(self):
        truth = reference_model()
        data = sample_observations(truth, 5, 0.5, dt=1e-2, seed=1)
        cfg = EstimatorConfig(replicates=200, dt=0.05, include_stationary_factor=True)
        sb = score_breakdown((truth.drift, truth.levy), data, self.priors(), cfg, 2)
        assert np.isfinite(sb.stationary) and sb.stationary != 0.0

    def test_outlier_transition_is_reported(self):
        # log-domain estimates stay finite; the breakdown pins down the offending factors
        truth = reference_model()
        data = sample_observations(truth, 3, 0.5, dt=1e-2, seed=1)
        data.observations[2] = 1e3
        sb = score_breakdown((truth.drift, truth.levy), data, self.priors(), self.cfg, 2)
        assert np.argmin(sb.transitions) in (1, 2) and sb.transitions[0] > -10
        assert sb.total < -1e5
