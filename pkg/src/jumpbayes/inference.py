"""Metropolis-within-blocks posterior sampling and weak-contraction diagnostics."""
from dataclasses import dataclass, field, asdict
import csv
import json
import math
import warnings

import numpy as np
from scipy import stats

from .errors import InputError
from .likelihood import EstimatorConfig, log_likelihood_blocks, transition_blocks
from .model_core import DriftSpec, JumpDiffusionModel, LevyMixture
from .priors import (
    levy_prior_logdensity, levy_to_unconstrained, levy_from_unconstrained,
    unconstrained_log_jacobian, initial_levy, sample_drift_coefficients,
)
from .simulator import default_rho, default_test_fields, semigroup_table, _as_rho

INTENSITY_TAIL = 1e-12


@dataclass
class ProposalConfig:
    """Sampler settings.

    Parameters
    ----------
    beta_pcn : float
        Initial step of the prior-preserving drift proposal, in (0, 1).
    n_atoms : int
        Fixed number of mixture atoms.  The last stick is closed so the
        weights sum to one.
    levy_step : float
        Initial random-walk scale on the unconstrained mixture coordinates.
    target_accept : float
        Acceptance rate the warmup adaptation aims for in both blocks.
    likelihood : bool
        Switch the likelihood off to sample the prior.
    update_levy : bool
        Hold the Levy measure fixed at its initial value when false.
    """
    beta_pcn: float = 0.2
    n_atoms: int = 5
    levy_step: float = 0.1
    target_accept: float = 0.25
    adapt: bool = True
    likelihood: bool = True
    update_levy: bool = True
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if not 0.0 < self.beta_pcn < 1.0:
            raise InputError(f"beta_pcn must lie in (0, 1), got {self.beta_pcn}")
        if self.n_atoms < 1:
            raise InputError("n_atoms must be positive")
        if not self.levy_step > 0:
            raise InputError("levy_step must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise InputError("target_accept must lie in (0, 1)")
        if isinstance(self.estimator, dict):
            self.estimator = EstimatorConfig(**self.estimator)


@dataclass
class Chain:
    """Post-warmup draws of a run of :func:`run_chain`.

    ``coefficients`` has shape ``(N, d, J**d)``; the mixture arrays are
    ``weights (N, K)``, ``centers (N, K, d)``, ``precisions (N, K)`` and
    ``intensity (N,)``.
    """
    domain: object
    s: float
    k: float
    coefficients: np.ndarray
    weights: np.ndarray
    centers: np.ndarray
    precisions: np.ndarray
    intensity: np.ndarray
    log_score: np.ndarray
    acceptance_rates: dict
    config: dict
    seed: object
    flags: list = field(default_factory=list)
    mass_tol: float = 0.01

    def __len__(self):
        return len(self.log_score)

    def drift(self, i):
        return DriftSpec(self.domain, self.s, self.k, self.coefficients[i])

    def levy(self, i):
        return LevyMixture(self.domain, float(self.intensity[i]), self.weights[i],
                           self.centers[i], self.precisions[i], self.mass_tol)

    def model(self, i):
        return JumpDiffusionModel(self.domain, self.drift(i), self.levy(i))

    @property
    def samples(self):
        return [(self.coefficients[i], self.levy(i), float(self.log_score[i]))
                for i in range(len(self))]

    def thinned_indices(self, thin):
        return np.arange(len(self) - 1, -1, -int(thin))[::-1]


class _Target:
    """Log-likelihood evaluations on a fixed auxiliary stream."""

    def __init__(self, data, priors, pcfg):
        self.data, self.priors, self.pcfg = data, priors, pcfg
        self.domain = priors.drift.domain
        self.evaluations = 0
        # proposals beyond this intensity would schedule absurd numbers of jumps;
        # the prior mass cut off is below 1e-12
        lp = priors.levy
        self.max_intensity = float(stats.gamma.isf(INTENSITY_TAIL, lp.lambda_shape,
                                                   scale=1.0 / lp.lambda_rate))

    def n_blocks(self):
        if self.data is None or not self.pcfg.likelihood:
            return 1
        n = len(self.data.observations) - 1
        return len(transition_blocks(n, self.pcfg.estimator.block_size))

    def block_logliks(self, coeffs, levy, aux, only=None):
        """Per-block log-likelihoods on the streams ``aux`` (one seed per block)."""
        if self.data is None or not self.pcfg.likelihood:
            return np.zeros(1)
        self.evaluations += 1
        drift = DriftSpec(self.domain, self.priors.drift.s, self.priors.drift.k, coeffs)
        model = JumpDiffusionModel(self.domain, drift, levy)
        parts = log_likelihood_blocks(model, self.data, self.pcfg.estimator, _as_seeds(aux), only)
        return np.where(np.isfinite(parts), parts, -math.inf)

    def loglik(self, coeffs, levy, aux):
        return float(np.sum(self.block_logliks(coeffs, levy, aux)))

    def levy_logtarget(self, theta):
        """Prior density of the mixture in unconstrained coordinates, or ``None`` if invalid."""
        K, d = self.pcfg.n_atoms, self.domain.d
        if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 700):
            return None, -math.inf
        try:
            levy = levy_from_unconstrained(theta, self.domain, K, self.priors.levy.mass_tol)
        except (InputError, FloatingPointError, OverflowError):
            return None, -math.inf
        if levy.intensity > self.max_intensity:
            return None, -math.inf
        lp = levy_prior_logdensity(levy, self.priors.levy) + unconstrained_log_jacobian(theta, d, K)
        return levy, lp


def _as_seeds(aux):
    return tuple(aux) if isinstance(aux, (tuple, list)) else (aux,)


def pcn_proposal(a, xi, beta):
    """``sqrt(1 - beta^2) a + beta xi``, coefficient-wise."""
    return np.sqrt(1.0 - beta ** 2) * a + beta * xi


def log_acceptance_ratio(block, current, proposed, data, priors, pcfg, aux):
    """Log Metropolis ratio of moving ``current -> proposed`` in one block.

    ``current`` and ``proposed`` are ``(coefficients, theta)`` pairs with
    ``theta`` the unconstrained mixture vector; ``aux`` is the frozen stream.
    The drift block's ratio is a pure likelihood ratio because the proposal
    is reversible with respect to the prior.
    """
    tgt = _Target(data, priors, pcfg)
    K = pcfg.n_atoms
    dom = priors.drift.domain

    def lik(state):
        return tgt.loglik(state[0], levy_from_unconstrained(state[1], dom, K, priors.levy.mass_tol), aux)

    if block == "drift":
        return lik(proposed) - lik(current)
    if block == "levy":
        _, lp1 = tgt.levy_logtarget(proposed[1])
        _, lp0 = tgt.levy_logtarget(current[1])
        return lik(proposed) + lp1 - lik(current) - lp0
    raise InputError(f"unknown block {block!r}")


def _robbins_monro(log_scale, accepted, target, t):
    return log_scale + (float(accepted) - target) / (t + 1.0) ** 0.6


def run_chain(data, prior_cfgs, proposal_cfg=None, iterations=2000, warmup=500, seed=0,
              init=None):
    """Sample the posterior of the truncated parameterization.

    Parameters
    ----------
    data : ObservationSeries or None
        ``None`` samples the prior.
    prior_cfgs : PriorBundle
        Drift and Levy prior configurations.
    proposal_cfg : ProposalConfig, optional
    init : (coefficients, LevyMixture), optional
        Starting point; defaults to zero coefficients and a prior mixture draw
        with ``n_atoms`` atoms.

    Returns
    -------
    Chain
        Post-warmup draws, with acceptance rates of both blocks and flags for
        degenerate rates.
    """
    pcfg = proposal_cfg or ProposalConfig()
    if not iterations > warmup >= 0:
        raise InputError(f"need iterations > warmup >= 0, got {iterations}, {warmup}")
    gp, dp = prior_cfgs.drift, prior_cfgs.levy
    dom = gp.domain
    rng = np.random.default_rng(seed)
    K = pcfg.n_atoms
    prior_sd = np.sqrt(gp.variances)[None, :] * np.ones((dom.d, 1))

    if init is None:
        a = np.zeros((dom.d, gp.J ** dom.d))
        levy = initial_levy(dp, K, seed=rng)
    else:
        a = np.array(init[0], dtype=float).reshape(dom.d, -1)
        levy = init[1]
        if levy.n_atoms != K:
            raise InputError(f"initial mixture has {levy.n_atoms} atoms, expected {K}")
        if abs(levy.weights.sum() - 1.0) > 1e-9:
            # close the last stick so that the fixed-size parameterization applies
            w = levy.weights / levy.weights.sum()
            levy = LevyMixture(dom, levy.intensity, w, levy.centers, levy.precisions, dp.mass_tol)
    theta = levy_to_unconstrained(levy)
    levy = levy_from_unconstrained(theta, dom, K, dp.mass_tol)

    tgt = _Target(data, prior_cfgs, pcfg)
    aux = [int(v) for v in rng.integers(2 ** 62, size=tgt.n_blocks())]
    parts = tgt.block_logliks(a, levy, aux)
    ll = float(parts.sum())
    _, lp_levy = tgt.levy_logtarget(theta)

    log_s_drift = 0.0
    rel_drift = np.full(a.shape, pcfg.beta_pcn)
    log_s_levy = 0.0
    rel_levy = np.full(theta.shape, pcfg.levy_step)
    adapt_points = {max(1, warmup // 4), max(1, warmup // 2)} if pcfg.adapt else set()
    window_a, window_t = [], []

    N = iterations - warmup
    out_a = np.empty((N,) + a.shape)
    out_th = np.empty((N,) + theta.shape)
    out_score = np.empty(N)
    acc = {"drift": 0, "levy": 0, "refresh": 0}
    tries = {"drift": 0, "levy": 0, "refresh": 0}
    refresh_p = pcfg.estimator.refresh_prob if (pcfg.likelihood and data is not None) else 0.0

    for t in range(iterations):
        warm = t < warmup
        # drift block
        beta = np.minimum(1.0, math.exp(log_s_drift) * rel_drift)
        xi = sample_drift_coefficients(gp, rng)
        a_new = pcn_proposal(a, xi, beta)
        parts_new = tgt.block_logliks(a_new, levy, aux)
        ll_new = float(parts_new.sum())
        ok = math.log(rng.random()) < ll_new - ll
        if ok:
            a, ll, parts = a_new, ll_new, parts_new
        if not warm:
            tries["drift"] += 1
            acc["drift"] += ok
        elif pcfg.adapt:
            log_s_drift = min(_robbins_monro(log_s_drift, ok, pcfg.target_accept, t), 10.0)

        # Levy block
        if pcfg.update_levy:
            th_new = theta + math.exp(log_s_levy) * rel_levy * rng.standard_normal(theta.shape)
            levy_new, lp_new = tgt.levy_logtarget(th_new)
            if levy_new is not None:
                parts_new = tgt.block_logliks(a, levy_new, aux)
                ll_new = float(parts_new.sum())
                ok = math.log(rng.random()) < ll_new + lp_new - ll - lp_levy
            else:
                ok = False
            if ok:
                theta, levy, ll, lp_levy, parts = th_new, levy_new, ll_new, lp_new, parts_new
            if not warm:
                tries["levy"] += 1
                acc["levy"] += ok
            elif pcfg.adapt:
                log_s_levy = _robbins_monro(log_s_levy, ok, pcfg.target_accept, t)

        # auxiliary stream refresh: an independence move on the stream of one block
        if refresh_p > 0 and rng.random() < refresh_p:
            g = int(rng.integers(len(aux)))
            aux_new = list(aux)
            aux_new[g] = int(rng.integers(2 ** 62))
            parts_new = parts.copy()
            parts_new[g] = tgt.block_logliks(a, levy, aux_new, only=g)[g]
            ll_new = float(parts_new.sum())
            ok = math.log(rng.random()) < ll_new - ll
            if ok:
                aux, ll, parts = aux_new, ll_new, parts_new
            if not warm:
                tries["refresh"] += 1
                acc["refresh"] += ok

        if warm:
            window_a.append(a.copy())
            window_t.append(theta.copy())
            if t + 1 in adapt_points and len(window_a) > 10:
                sd_a = np.std(window_a, axis=0)
                if np.any(sd_a > 0):
                    rel_drift = np.clip(sd_a / prior_sd, 1e-4, 1.0)
                    log_s_drift = math.log(2.38 / math.sqrt(a.size))
                sd_t = np.std(window_t, axis=0)
                if np.any(sd_t > 0):
                    rel_levy = np.clip(sd_t, 1e-3, 10.0)
                    log_s_levy = math.log(2.38 / math.sqrt(theta.size))
                window_a, window_t = [], []
        else:
            i = t - warmup
            out_a[i] = a
            out_th[i] = theta
            out_score[i] = ll + _drift_logprior(a, gp) + lp_levy - \
                unconstrained_log_jacobian(theta, dom.d, K)

    rates = {b: (acc[b] / tries[b] if tries[b] else float("nan")) for b in acc}
    flags = []
    for b in ("drift", "levy"):
        r = rates[b]
        if tries[b] and (r == 0.0 or r == 1.0):
            kind = "tuning_failure" if r == 0.0 else "degenerate_acceptance"
            flags.append(f"{kind}:{b}")
            warnings.warn(f"{b} block acceptance rate is {r:.0f} after warmup", RuntimeWarning,
                          stacklevel=2)

    weights = np.empty((N, K))
    centers = np.empty((N, K, dom.d))
    taus = np.empty((N, K))
    lam = np.empty(N)
    for i in range(N):
        lv = levy_from_unconstrained(out_th[i], dom, K, dp.mass_tol)
        weights[i], centers[i], taus[i], lam[i] = lv.weights, lv.centers, lv.precisions, lv.intensity
    config = {"proposal": _jsonable(asdict(pcfg)), "iterations": iterations, "warmup": warmup,
              "final_beta": np.minimum(1.0, math.exp(log_s_drift) * rel_drift).ravel().tolist(),
              "likelihood_evaluations": tgt.evaluations}
    return Chain(dom, gp.s, gp.k, out_a, weights, centers, taus, lam, out_score,
                 rates, config, _jsonable(seed), flags, dp.mass_tol)


def _drift_logprior(a, gp):
    var = gp.variances
    return float(np.sum(-0.5 * a ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return repr(obj)


def integrated_autocorr_time(x, c=5.0):
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    if n < 2 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, n=2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if window.any() else n - 1
    return float(max(taus[m], 1.0))


# ---------------------------------------------------------------------------
# Contraction

@dataclass
class ContractionEntry:
    n: int
    mass_outside: float
    median_weak_distance: float
    mass_stderr: float
    median_stderr: float
    epsilon: float


@dataclass
class ContractionCurve:
    entries: list = field(default_factory=list)

    def add(self, entry):
        self.entries.append(entry)
        self.entries.sort(key=lambda e: e.n)

    @property
    def medians(self):
        return np.array([e.median_weak_distance for e in self.entries])

    def is_decreasing(self):
        m = self.medians
        return bool(np.all(np.diff(m) < 0))


def posterior_weak_distances(chain, truth, f_set=None, rho_points=None, delta=0.5, thin=1,
                             seed=0, replicates=1000, dt=None, indices=None):
    """Per-sample ``max_f sum_i rho_i |P^sample f(x_i) - P^truth f(x_i)|`` on thinned draws."""
    f_set = default_test_fields(truth.d) if f_set is None else list(f_set)
    pts, mass = default_rho(truth.domain) if rho_points is None else _as_rho(rho_points, truth.d)
    idx = chain.thinned_indices(thin) if indices is None else np.asarray(indices)
    if len(idx) < 20:
        raise InputError(f"need at least 20 thinned samples, got {len(idx)}")
    pt, _ = semigroup_table(truth, f_set, pts, delta, replicates, dt, seed)
    out = np.empty(len(idx))
    for n, i in enumerate(idx):
        ps, _ = semigroup_table(chain.model(i), f_set, pts, delta, replicates, dt, seed)
        out[n] = float(np.max(np.abs(ps - pt) @ mass))
    return out


def summarize_distances(dists, epsilon):
    dists = np.asarray(dists)
    N = len(dists)
    mass = float(np.mean(dists > epsilon))
    med = float(np.median(dists))
    return mass, med, math.sqrt(mass * (1 - mass) / N), 1.2533 * float(dists.std(ddof=1)) / math.sqrt(N)


def contraction_metric(chain, truth, f_set=None, rho_points=None, delta=0.5, epsilon=0.05,
                       thin=1, seed=0, replicates=1000, dt=None):
    """Posterior mass outside the weak neighborhood of radius ``epsilon``, and the median distance."""
    d = posterior_weak_distances(chain, truth, f_set, rho_points, delta, thin, seed, replicates, dt)
    mass, med, _, _ = summarize_distances(d, epsilon)
    return mass, med


# ---------------------------------------------------------------------------
# IO

def chain_to_jsonl(chain, path):
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": {"seed": chain.seed, "acceptance_rates": chain.acceptance_rates,
                                        "flags": chain.flags, "config": chain.config,
                                        "d": chain.domain.d, "r": chain.domain.r,
                                        "s": chain.s, "k": chain.k}}) + "\n")
        for i in range(len(chain)):
            fh.write(json.dumps({
                "coefficients": chain.coefficients[i].tolist(),
                "mixture": chain.levy(i).to_json_dict(),
                "log_score": float(chain.log_score[i]),
            }) + "\n")


def curve_to_csv(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "epsilon", "mass_outside", "median_distance", "mass_stderr", "median_stderr"])
        for e in curve.entries:
            w.writerow([e.n, repr(e.epsilon), repr(e.mass_outside), repr(e.median_weak_distance),
                        repr(e.mass_stderr), repr(e.median_stderr)])


__all__ = [
    "ProposalConfig", "Chain", "run_chain", "pcn_proposal", "log_acceptance_ratio",
    "integrated_autocorr_time", "ContractionEntry", "ContractionCurve",
    "posterior_weak_distances", "summarize_distances", "contraction_metric",
    "chain_to_jsonl", "curve_to_csv",
]
