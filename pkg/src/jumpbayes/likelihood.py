"""Path-space likelihood ratios, a KL upper bound, and simulated transition densities."""
from collections import OrderedDict
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import InputError, SingularWeightError, SupportViolationError
from .model_core import JumpDiffusionModel
from .priors import drift_prior_logdensity, levy_prior_logdensity
from .quadrature import QuadratureConfig, box_rule
from .simulator import NoiseSource, NoiseTape, Observer, StackedTape, integrate, sample_stationary

RATIO_FLOOR = 1e-12
RATIO_CEIL = 1e12


# ---------------------------------------------------------------------------
# Girsanov weights

def _check_pair(ref, target):
    if ref.domain != target.domain:
        raise InputError("models live on different domains")
    a, b = ref.levy.intensity > 0, target.levy.intensity > 0
    if a != b:
        raise SupportViolationError("one Levy measure is zero and the other is not")


def _drift_gap(ref, target, x):
    """``g(x) = (b - m) - (b_ref - m_ref)``: the change of path drift."""
    return target.path_drift(x) - ref.path_drift(x)


def _log_jump_ratio(ref, target, z):
    with np.errstate(divide="ignore"):
        return target.levy.log_density(z) - ref.levy.log_density(z)


def log_girsanov_weight(skeleton, reference, target):
    """Log density of the target path law against the reference one on a skeleton.

    The skeleton must have been simulated under ``reference``.

    Raises
    ------
    SingularWeightError
        If the target Levy density vanishes at an observed jump.
    """
    _check_pair(reference, target)
    x = skeleton.states[:-1]
    dts = np.diff(skeleton.times)[:, None]
    g = _drift_gap(reference, target, x)
    cont = float(np.sum(g * skeleton.brownian_increments) - 0.5 * np.sum(g ** 2 * dts))
    jumps = skeleton.jump_sizes
    jump = 0.0
    if len(jumps):
        lr = _log_jump_ratio(reference, target, jumps)
        bad = ~np.isfinite(lr)
        if bad.any():
            raise SingularWeightError("target Levy density is zero at an observed jump",
                                      jump_size=jumps[np.flatnonzero(bad)[0]])
        jump = float(lr.sum())
    jump -= skeleton.horizon * (target.levy.total_mass - reference.levy.total_mass)
    return cont + jump


class _GirsanovAccumulator(Observer):
    def __init__(self, reference, target, n_paths):
        self.ref, self.target = reference, target
        self.logw = np.zeros(n_paths)

    def on_step(self, idx, x_before, x_after, h, dW, t_end):
        g = _drift_gap(self.ref, self.target, x_before)
        self.logw[idx] += np.sum(g * dW, axis=-1) - 0.5 * np.sum(g ** 2 * h, axis=-1)

    def on_jump(self, idx, x_minus, size, t):
        self.logw[idx] += _log_jump_ratio(self.ref, self.target, size)


def girsanov_log_weights(reference, target, x0s, delta, dt=1e-3, seed=0):
    """Log-weights of ``len(x0s)`` reference paths over ``[0, delta]``, one per start point.

    Singular weights come back as ``-inf`` rather than raising.
    """
    _check_pair(reference, target)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    acc = _GirsanovAccumulator(reference, target, len(x0s))
    noise = NoiseSource(seed, len(x0s), reference.d)
    integrate(reference, x0s, delta, dt, noise, observer=acc)
    return acc.logw - delta * (target.levy.total_mass - reference.levy.total_mass)


# ---------------------------------------------------------------------------
# KL upper bound

@dataclass
class KLBoundTerms:
    """Per-unit-time bound on the path KL divergence of the candidate from the truth."""
    drift_term: float
    jump_term: float
    total: float
    clipped: int = 0

    def to_json_dict(self):
        return {"drift_term": self.drift_term, "jump_term": self.jump_term,
                "total": self.total, "clipped_ratios": self.clipped}


def _ratio_on_grid(num, den, quad):
    width = min(num.levy.min_width, den.levy.min_width)
    nodes, weights = box_rule(num.domain.r, num.d, quad, width)
    p, q = num.levy.density(nodes), den.levy.density(nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = p / q
    if np.any(~np.isfinite(rho)) or np.any(rho == 0):
        raise SupportViolationError("density ratio is 0 or infinite on the core region")
    clipped = int(np.sum((rho < RATIO_FLOOR) | (rho > RATIO_CEIL)))
    return nodes, weights, p, np.clip(rho, RATIO_FLOOR, RATIO_CEIL), clipped


def kl_upper_bound(truth, candidate, stationary_samples, delta=None, quad=None):
    """Bound the KL rate of the candidate path law from the truth's.

    ``drift_term = 0.5 (|b0 - b|_{2,pi} + |m0 - m|)^2`` with ``m`` the
    small-jump compensators and the norm taken over the empirical measure of
    ``stationary_samples``; ``jump_term = int [log rho + 1/rho - 1] nu0(dz)``
    with ``rho = d nu0 / d nu``, which is the relative entropy rate of the two
    compound Poisson laws.  The path KL over ``[0, delta]`` is at most
    ``delta * total``.  ``delta`` is accepted for symmetry with the
    validator and does not enter the rate.
    """
    samples = np.atleast_2d(np.asarray(stationary_samples, dtype=float))
    if samples.size == 0:
        raise InputError("need at least one stationary sample")
    if samples.shape[1] != truth.d:
        samples = samples.reshape(-1, truth.d)
    _check_pair(truth, candidate)
    diff = truth.drift_at(samples) - candidate.drift_at(samples)
    l2 = math.sqrt(float(np.mean(np.sum(diff ** 2, axis=-1))))
    comp = float(np.linalg.norm(truth.compensator - candidate.compensator))
    drift_term = 0.5 * (l2 + comp) ** 2
    clipped = 0
    if truth.levy.intensity == 0.0:
        jump_term = 0.0
    else:
        _, w, p0, rho, clipped = _ratio_on_grid(truth, candidate, quad or QuadratureConfig())
        integrand = np.log(rho) + 1.0 / rho - 1.0
        jump_term = float(max(np.sum(w * p0 * integrand), 0.0))
    return KLBoundTerms(drift_term, jump_term, drift_term + jump_term, clipped)


def literal_jump_term(truth, candidate, quad=None):
    """``int [log rho - rho + 1] nu0(dz)``, ``rho = d nu0 / d nu``, kept for comparison.

    This expression is not an upper bound on the compound Poisson relative
    entropy; see the tests.
    """
    if truth.levy.intensity == 0.0:
        return 0.0
    _, w, p0, rho, _ = _ratio_on_grid(truth, candidate, quad or QuadratureConfig())
    return float(np.sum(w * p0 * (np.log(rho) - rho + 1.0)))


@dataclass
class KLChainCheck:
    mean_neg_logw: float
    stderr: float
    bound: float
    n_paths: int

    @property
    def holds(self):
        return 0.0 <= self.mean_neg_logw + 3 * self.stderr and \
            self.mean_neg_logw <= self.bound + 3.0 * self.stderr


def validate_kl_bound(truth, candidate, stationary_samples, delta, dt=1e-3, seed=0,
                      bound_samples=None):
    """Monte Carlo check that the mean negative log-weight stays below ``delta * total``.

    Reference paths are simulated under the truth from ``stationary_samples``;
    the bound is evaluated on ``bound_samples`` (defaults to the same points).
    """
    x0s = np.atleast_2d(np.asarray(stationary_samples, dtype=float))
    logw = girsanov_log_weights(truth, candidate, x0s, delta, dt, seed)
    terms = kl_upper_bound(truth, candidate, x0s if bound_samples is None else bound_samples)
    neg = -logw
    return KLChainCheck(float(neg.mean()), float(neg.std(ddof=1) / math.sqrt(len(neg))),
                        delta * terms.total, len(neg))


# ---------------------------------------------------------------------------
# Transition densities

@dataclass
class EstimatorConfig:
    """Settings of the simulated transition-density estimator.

    ``method`` is ``"kde"`` (Gaussian kernel density over simulated end
    points) or ``"euler"`` (Gaussian density of the last Euler step averaged
    over simulated paths up to the last step).  With ``block_size > 0`` the
    transitions are split into blocks of that size, each with its own
    auxiliary stream, and a refresh move renews one block at a time.
    """
    replicates: int = 200
    dt: float = 0.01
    bandwidth: object = "auto"
    refresh_prob: float = 0.05
    include_stationary_factor: bool = False
    method: str = "kde"
    block_size: int = 0

    def __post_init__(self):
        if self.replicates < 2:
            raise InputError("replicates must be >= 2")
        if not self.dt > 0:
            raise InputError("dt must be positive")
        if not 0.0 <= self.refresh_prob <= 1.0:
            raise InputError("refresh_prob must lie in [0, 1]")
        if self.block_size < 0:
            raise InputError("block_size must be >= 0")
        if self.method not in ("kde", "euler"):
            raise InputError(f"unknown estimator method {self.method!r}")
        if self.bandwidth != "auto":
            bw = float(self.bandwidth)
            if not bw > 0:
                raise InputError("bandwidth must be positive")


def silverman_bandwidth(samples):
    """Normal-reference bandwidth per coordinate, ``samples`` of shape ``(..., R, d)``."""
    R, d = samples.shape[-2:]
    sd = samples.std(axis=-2, ddof=1)
    return sd * (4.0 / ((d + 2.0) * R)) ** (1.0 / (d + 4.0))


def _log_gauss(diff, h):
    """Log of the product Gaussian density with per-coordinate sd ``h``."""
    return np.sum(-0.5 * (diff / h) ** 2 - np.log(h) - 0.5 * math.log(2 * math.pi), axis=-1)


_TAPES = OrderedDict()
_TAPE_CACHE_PATHS = 400_000      # total paths kept; blocked streams need many small tapes


def _tape(seed, n, d):
    """Recorded noise for a pseudo-marginal stream; reused while the stream is frozen."""
    key = (repr(seed), n, d)
    if key in _TAPES:
        _TAPES.move_to_end(key)
        return _TAPES[key]
    tape = NoiseTape(seed, n, d)
    _TAPES[key] = tape
    _evict()
    return tape


def _evict():
    while len(_TAPES) > 1 and sum(k[1] for k in _TAPES) > _TAPE_CACHE_PATHS:
        _TAPES.popitem(last=False)


def _simulate_from(model, starts, delta, dt, R, seed, last_step=False, tape=None):
    """End points (or last-step means and step size) of ``R`` paths per start point.

    Returns an array ``(m, R, d)`` (and ``h`` when ``last_step``).
    """
    m, d = starts.shape
    x0 = np.repeat(starts, R, axis=0)
    steps = max(1, int(round(delta / dt)))
    h = delta / steps
    noise = NoiseSource(seed, m * R, d, tape=_tape(seed, m * R, d) if tape is None else tape)
    if not last_step:
        return integrate(model, x0, delta, h, noise).reshape(m, R, d)
    x = x0 if steps == 1 else integrate(model, x0, delta - h, h, noise)
    mean = x + model.path_drift(x) * h
    return mean.reshape(m, R, d), h


def _log_last_step(levy, ends, mean, h):
    """Log density of one Euler step of size ``h`` from ``mean`` to ``ends``.

    At most one jump is allowed in the step, and its law is integrated out in
    closed form (a truncated Gaussian convolved with the Gaussian step), so a
    jump seen in the data never depends on a simulated path having jumped.
    """
    u = ends[:, None, :] - mean                                   # (m, R, d)
    rate = levy.total_mass
    out = -rate * h + _log_gauss(u, math.sqrt(h))
    if rate == 0.0:
        return out
    r = levy.domain.r
    tau = levy.precisions[:, None]                                # (K, 1)
    uk = u[..., None, :]                                          # (m, R, 1, d)
    var = 1.0 / tau + h
    log_conv = -0.5 * (uk - levy.centers) ** 2 / var - 0.5 * np.log(2 * math.pi * var)
    prec = tau + 1.0 / h
    post_mean = (tau * levy.centers + uk / h) / prec
    post_sd = 1.0 / np.sqrt(prec)
    mass = ndtr((r - post_mean) / post_sd) - ndtr((-r - post_mean) / post_sd)
    with np.errstate(divide="ignore"):
        log_k = np.sum(log_conv + np.log(mass), axis=-1)          # (m, R, K)
        log_k += np.log(levy.intensity * levy.weights) - np.log(levy._norms)
    jump = math.log(-math.expm1(-rate * h)) - math.log(rate) + logsumexp(log_k, axis=-1)
    return np.logaddexp(out, jump)


def log_transition_densities(model, starts, ends, delta, cfg, seed=0, tape=None):
    """Log density estimates for each pair ``starts[i] -> ends[i]``.

    Returns ``(logp, log_stderr_ratio)`` where the second array is the
    standard error divided by the estimate (the relative error).  ``tape``
    replaces the stream of ``seed`` by recorded noise for all ``m * R`` paths.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    R = cfg.replicates
    if cfg.method == "euler":
        mean, h = _simulate_from(model, starts, delta, cfg.dt, R, seed, last_step=True, tape=tape)
        lk = _log_last_step(model.levy, ends, mean, h)              # (m, R)
    else:
        pts = _simulate_from(model, starts, delta, cfg.dt, R, seed, tape=tape)
        if cfg.bandwidth == "auto":
            bw = silverman_bandwidth(pts)
        else:
            bw = np.full((len(starts), starts.shape[1]), float(cfg.bandwidth))
        if np.any(bw <= 0):
            raise InputError("kernel bandwidth is zero; simulated end points coincide")
        lk = _log_gauss(ends[:, None, :] - pts, bw[:, None, :])   # (m, R)
    logp = logsumexp(lk, axis=1) - math.log(R)
    with np.errstate(invalid="ignore"):
        rel = np.exp(lk - logp[:, None])
        rel_se = rel.std(axis=1, ddof=1) / math.sqrt(R)
    return logp, rel_se


def estimate_transition_density(model, x, y, delta, replicates=1000, bandwidth="auto",
                                seed=0, dt=None, method="kde"):
    """Simulated density of ``X_delta`` at ``y`` given ``X_0 = x``, with its standard error."""
    if replicates < 100:
        raise InputError("replicates must be >= 100")
    if bandwidth != "auto" and not float(bandwidth) > 0:
        raise InputError("bandwidth must be positive")
    dt = 1e-3 * min(1.0, delta) if dt is None else dt
    cfg = EstimatorConfig(replicates=replicates, dt=dt, bandwidth=bandwidth, method=method)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    logp, rel = log_transition_densities(model, x[None, :], y[None, :], delta, cfg, seed)
    p = float(np.exp(logp[0]))
    return p, float(p * rel[0])


# ---------------------------------------------------------------------------
# Posterior score

@dataclass
class PriorBundle:
    drift: object
    levy: object


@dataclass
class ScoreBreakdown:
    drift_prior: float
    levy_prior: float
    transitions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stationary: float = 0.0

    @property
    def log_likelihood(self):
        return float(np.sum(self.transitions)) + self.stationary

    @property
    def total(self):
        return self.drift_prior + self.levy_prior + self.log_likelihood

    @property
    def zero_transitions(self):
        return np.flatnonzero(~np.isfinite(self.transitions))


def _stationary_log_factor(model, x0, cfg, seed):
    k = getattr(model.drift, "k", 1.0)
    pts = sample_stationary(model, 10.0 * (model.domain.r + 1.0) / k, 1.0,
                            cfg.replicates, seed=(seed, 1), dt=cfg.dt)
    bw = silverman_bandwidth(pts)
    return float(logsumexp(_log_gauss(x0 - pts, bw)) - math.log(len(pts)))


def log_likelihood_estimate(model, data, cfg, seed=0):
    """Sum of simulated log transition densities over an observation series."""
    if data is None:
        return np.zeros(0), 0.0
    obs = data.observations
    with np.errstate(divide="ignore", under="ignore"):
        logp, _ = log_transition_densities(model, obs[:-1], obs[1:], data.delta, cfg, seed)
    stat = _stationary_log_factor(model, obs[0], cfg, seed) if cfg.include_stationary_factor else 0.0
    return logp, stat


def transition_blocks(n, block_size):
    """Contiguous index blocks of about ``block_size`` transitions (one block if 0)."""
    count = 1 if block_size <= 0 else max(1, int(round(n / block_size)))
    return np.array_split(np.arange(n), min(count, n))


def log_likelihood_blocks(model, data, cfg, seeds, only=None):
    """Per-block sums of log transition densities, block ``g`` simulated on ``seeds[g]``.

    Blocks come from :func:`transition_blocks` with ``len(seeds)`` blocks;
    ``only`` restricts the work to one block (the other entries are zero).
    The stationary factor, if enabled, is counted in block 0.
    """
    obs = data.observations
    blocks = np.array_split(np.arange(len(obs) - 1), len(seeds))
    out = np.zeros(len(blocks))
    with np.errstate(divide="ignore", under="ignore"):
        if only is None:
            # all blocks in one batch, each block on its own recorded stream
            logp, _ = log_transition_densities(model, obs[:-1], obs[1:], data.delta, cfg,
                                               tape=_stacked_tape(seeds, blocks, cfg.replicates, obs.shape[1]))
            for g, idx in enumerate(blocks):
                out[g] = logp[idx].sum()
        else:
            idx = blocks[only]
            logp, _ = log_transition_densities(model, obs[idx], obs[idx + 1], data.delta, cfg, seeds[only])
            out[only] = logp.sum()
    if cfg.include_stationary_factor and only in (None, 0):
        out[0] += _stationary_log_factor(model, obs[0], cfg, seeds[0])
    return out


def _stacked_tape(seeds, blocks, R, d):
    key = (repr(("stack",) + tuple(seeds)), sum(len(b) for b in blocks) * R, d)
    if key in _TAPES:
        _TAPES.move_to_end(key)
        return _TAPES[key]
    tape = StackedTape([_tape(sd, len(b) * R, d) for sd, b in zip(seeds, blocks)])
    _TAPES[key] = tape
    _evict()
    return tape


def score_breakdown(params, data, prior_cfgs, estimator_cfg, seed=0):
    drift, levy = params
    model = JumpDiffusionModel(drift.domain, drift, levy)
    trans, stat = log_likelihood_estimate(model, data, estimator_cfg, seed)
    return ScoreBreakdown(drift_prior_logdensity(drift, prior_cfgs.drift),
                          levy_prior_logdensity(levy, prior_cfgs.levy), trans, stat)


def log_posterior_unnorm(params, data, prior_cfgs, estimator_cfg, seed=0):
    """Prior log densities plus the simulated log likelihood of ``data``.

    Transition densities are estimated in the log domain, so an implausible
    observation gives a very negative but finite score rather than ``-inf``;
    use :func:`score_breakdown` to see which transitions were responsible.
    """
    return score_breakdown(params, data, prior_cfgs, estimator_cfg, seed).total


__all__ = [
    "log_girsanov_weight", "girsanov_log_weights", "KLBoundTerms", "kl_upper_bound",
    "literal_jump_term", "validate_kl_bound", "KLChainCheck", "EstimatorConfig",
    "silverman_bandwidth", "log_transition_densities", "estimate_transition_density",
    "PriorBundle", "ScoreBreakdown", "log_likelihood_estimate", "log_likelihood_blocks", "transition_blocks", "score_breakdown",
    "log_posterior_unnorm",
]
