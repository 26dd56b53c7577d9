"""Gaussian series prior on drifts and Dirichlet-mixture prior on Levy measures."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .errors import InputError
from .model_core import DomainSpec, DriftSpec, LevyMixture, laplacian_eigenvalues
from .model_core.types import truncated_gaussian_kernel


@dataclass
class GaussianPriorConfig:
    """Centred Gaussian prior with covariance ``(-Laplacian)^{-s}`` truncated at level ``J``."""
    domain: DomainSpec
    s: float
    J: int
    k: float = 1.0

    def __post_init__(self):
        if not self.s > self.domain.d + 2:
            raise InputError(f"s must exceed d + 2 = {self.domain.d + 2}, got {self.s}")
        if int(self.J) != self.J or self.J < 1:
            raise InputError(f"J must be a positive integer, got {self.J}")
        if not self.k > 0:
            raise InputError("k must be positive")
        self.J = int(self.J)

    @property
    def variances(self):
        """Prior variance ``lambda_j^{-s}`` per multi-index (shared by all components)."""
        return laplacian_eigenvalues(self.domain, self.J) ** (-self.s)

    @property
    def n_coefficients(self):
        return self.domain.d * self.J ** self.domain.d


@dataclass
class DPMixConfig:
    """Stick-breaking mixture prior on the jump-size law plus a prior on the intensity.

    Parameters
    ----------
    zeta_mass : float
        Total mass ``alpha`` of the Dirichlet process base measure.
    tau_logmean, tau_logsd : float
        Log-normal precision distribution ``F``.
    lambda_shape, lambda_rate : float
        Gamma prior on the intensity.
    mass_tol : float
        Residual stick mass at which the stick-breaking is stopped.
    zeta_base : str
        Only ``"uniform"`` (uniform on the core) is provided.
    """
    domain: DomainSpec
    zeta_mass: float = 1.0
    tau_logmean: float = 0.0
    tau_logsd: float = 1.0
    lambda_shape: float = 2.0
    lambda_rate: float = 2.0
    mass_tol: float = 0.01
    zeta_base: str = "uniform"
    max_atoms: int = 10_000

    def __post_init__(self):
        if not self.zeta_mass > 0:
            raise InputError("zeta_mass must be positive")
        if not 0 < self.mass_tol <= 0.01:
            raise InputError(f"mass_tol must lie in (0, 0.01], got {self.mass_tol}")
        if not self.tau_logsd > 0:
            raise InputError("tau_logsd must be positive")
        if not (self.lambda_shape > 0 and self.lambda_rate > 0):
            raise InputError("lambda prior parameters must be positive")
        if self.zeta_base != "uniform":
            raise InputError(f"unsupported zeta_base {self.zeta_base!r}")

    def base_logpdf(self, z):
        d, r = self.domain.d, self.domain.r
        inside = self.domain.contains(z)
        return np.where(inside, -d * math.log(2.0 * r), -np.inf)

    def tau_logpdf(self, tau):
        return stats.lognorm.logpdf(tau, s=self.tau_logsd, scale=math.exp(self.tau_logmean))

    def lambda_logpdf(self, lam):
        return stats.gamma.logpdf(lam, a=self.lambda_shape, scale=1.0 / self.lambda_rate)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_drift_coefficients(cfg, rng, size=None):
    """Raw coefficient draws, shape ``(d, J**d)`` or ``(size, d, J**d)``."""
    sd = np.sqrt(cfg.variances)
    shape = (cfg.domain.d, sd.size) if size is None else (size, cfg.domain.d, sd.size)
    return rng.standard_normal(shape) * sd


def sample_drift_prior(cfg, seed=0):
    """One drift from the truncated Gaussian series prior."""
    a = sample_drift_coefficients(cfg, _rng(seed))
    return DriftSpec(cfg.domain, cfg.s, cfg.k, a)


def drift_prior_logdensity(drift, cfg):
    """Log density of the coefficients under the truncated Gaussian prior."""
    if drift.J != cfg.J or drift.domain.d != cfg.domain.d:
        raise InputError(f"drift truncation J={drift.J} does not match prior J={cfg.J}")
    var = cfg.variances
    a = drift.coefficients
    return float(np.sum(-0.5 * a ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)))


def weights_to_sticks(weights):
    """Invert stick-breaking; the last stick is 1 when the weights sum to one."""
    w = np.asarray(weights, dtype=float)
    left = 1.0 - np.concatenate([[0.0], np.cumsum(w)[:-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(left > 0, w / left, 1.0)
    return np.clip(v, 0.0, 1.0)


def sticks_to_weights(v):
    v = np.asarray(v, dtype=float)
    left = np.concatenate([[1.0], np.cumprod(1.0 - v)[:-1]])
    return v * left


def sample_levy_prior(cfg, seed=0):
    """Stick-breaking draw, stopped once the residual mass drops below ``mass_tol``."""
    rng = _rng(seed)
    d, r = cfg.domain.d, cfg.domain.r
    sticks = []
    residual = 1.0
    while residual > cfg.mass_tol:
        if len(sticks) >= cfg.max_atoms:
            raise InputError(f"stick-breaking did not terminate within {cfg.max_atoms} atoms")
        v = rng.beta(1.0, cfg.zeta_mass)
        sticks.append(v)
        residual *= 1.0 - v
    w = sticks_to_weights(np.array(sticks))
    K = len(w)
    centers = rng.uniform(-r, r, size=(K, d))
    taus = np.exp(cfg.tau_logmean + cfg.tau_logsd * rng.standard_normal(K))
    lam = rng.gamma(cfg.lambda_shape, 1.0 / cfg.lambda_rate)
    return LevyMixture(cfg.domain, lam, w, centers, taus, cfg.mass_tol)


def levy_prior_logdensity(levy, cfg):
    """Joint log density of sticks, atoms, precisions and intensity.

    A stick equal to one (a closed, fixed-size truncation) carries no density.
    """
    v = weights_to_sticks(levy.weights)
    open_ = v < 1.0
    with np.errstate(divide="ignore"):
        lp_v = np.sum(stats.beta.logpdf(v[open_], 1.0, cfg.zeta_mass))
    lp_z = float(np.sum(cfg.base_logpdf(levy.centers)))
    lp_t = float(np.sum(cfg.tau_logpdf(levy.precisions)))
    lp_l = float(cfg.lambda_logpdf(levy.intensity))
    return float(lp_v + lp_z + lp_t + lp_l)


def truncated_kernel(z, center, tau, domain):
    """Gaussian kernel with covariance ``I / tau`` renormalized to a density on the core."""
    if not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if not domain.contains(center):
        raise InputError("kernel centre must lie in the core region")
    return truncated_gaussian_kernel(z, center, tau, domain)


# Unconstrained coordinates for the fixed-size mixture used by the sampler.

def levy_to_unconstrained(levy):
    """``(logit sticks[:-1], logit((z + r) / 2r), log tau, log lambda)`` as one flat vector."""
    r = levy.domain.r
    v = weights_to_sticks(levy.weights)[:-1]
    u = (levy.centers + r) / (2.0 * r)
    eps = 1e-12
    return np.concatenate([
        logit(np.clip(v, eps, 1 - eps)),
        logit(np.clip(u, eps, 1 - eps)).ravel(),
        np.log(levy.precisions),
        [math.log(max(levy.intensity, 1e-300))],
    ])


def levy_from_unconstrained(theta, domain, K, mass_tol=0.01):
    d, r = domain.d, domain.r
    i = 0
    v = np.append(expit(theta[i:i + K - 1]), 1.0)
    i += K - 1
    centers = (2.0 * r * expit(theta[i:i + K * d]) - r).reshape(K, d)
    i += K * d
    taus = np.exp(theta[i:i + K])
    i += K
    lam = math.exp(theta[i])
    return LevyMixture(domain, lam, sticks_to_weights(v), centers, taus, mass_tol)


def unconstrained_log_jacobian(theta, d, K):
    """``log |d(constrained)/d(theta)|`` for the map in :func:`levy_from_unconstrained`.

    Constants (the ``2r`` factors) are dropped since they cancel in ratios.
    """
    def log_sig_deriv(x):
        # log(expit(x) * (1 - expit(x)))
        return -np.logaddexp(0.0, x) - np.logaddexp(0.0, -x)
    i = 0
    out = np.sum(log_sig_deriv(theta[i:i + K - 1]))
    i += K - 1
    out += np.sum(log_sig_deriv(theta[i:i + K * d]))
    i += K * d
    out += np.sum(theta[i:i + K])
    i += K
    out += theta[i]
    return float(out)


def initial_levy(cfg, K, seed=0):
    """Fixed-size starting mixture: a prior draw with the last stick closed."""
    rng = _rng(seed)
    v = np.append(rng.beta(1.0, cfg.zeta_mass, K - 1), 1.0)
    d, r = cfg.domain.d, cfg.domain.r
    centers = rng.uniform(-r, r, size=(K, d))
    taus = np.exp(cfg.tau_logmean + cfg.tau_logsd * rng.standard_normal(K))
    lam = rng.gamma(cfg.lambda_shape, 1.0 / cfg.lambda_rate)
    return LevyMixture(cfg.domain, lam, sticks_to_weights(v), centers, taus, cfg.mass_tol)


__all__ = [
    "GaussianPriorConfig", "DPMixConfig", "sample_drift_prior", "sample_drift_coefficients",
    "drift_prior_logdensity", "sample_levy_prior", "levy_prior_logdensity", "truncated_kernel",
    "weights_to_sticks", "sticks_to_weights", "levy_to_unconstrained", "levy_from_unconstrained",
    "unconstrained_log_jacobian", "initial_levy",
]
