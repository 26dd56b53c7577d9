"""Parameter types for unit jump diffusions: domain, drift field, Levy measure.

The core region is the closed sup-norm ball ``[-r, r]^d``.  Drifts are sine
series on the core, vanish on its boundary, and are pulled towards the origin
with strength ``k`` outside ``r + 1``.  Levy measures are finite, homogeneous
mixtures of Gaussian kernels truncated to the core and renormalised.
"""
from dataclasses import dataclass, field
import hashlib
import itertools
import json
import math

import numpy as np
from scipy.special import ndtr, ndtri

from ..errors import InputError
from ..quadrature import ball_rule

_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DomainSpec:
    """Dimension ``d`` and core radius ``r`` (sup-norm)."""
    d: int
    r: float
    shell_width: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InputError(f"dimension must be a positive integer, got {self.d}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise InputError(f"core radius must be positive, got {self.r}")
        if self.shell_width != 1.0:
            raise InputError("shell_width is fixed to 1")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "r", float(self.r))

    @property
    def tail_radius(self):
        """Euclidean radius beyond which the pure tail drift applies."""
        return math.sqrt(self.d) * (self.r + self.shell_width)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(np.abs(x), axis=-1) <= self.r

    def grid(self, resolution, extent=None):
        """Regular grid over ``[-extent, extent]^d`` (defaults to the core)."""
        extent = self.r if extent is None else extent
        axis = np.linspace(-extent, extent, resolution)
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def multi_indices(d, J):
    """All multi-indices in ``{1..J}^d``, lexicographic, first axis slowest."""
    return np.array(list(itertools.product(range(1, J + 1), repeat=d)), dtype=int)


def laplacian_eigenvalues(domain, J):
    """Dirichlet Laplacian eigenvalues on the core box, one per multi-index."""
    j = multi_indices(domain.d, J)
    return np.sum((j * np.pi / (2.0 * domain.r)) ** 2, axis=1)


def _axis_sines(theta, J):
    """``sin(j theta)`` for ``j = 1..J`` by the three-term recurrence; shape ``(..., J)``."""
    s = np.empty(theta.shape + (J,))
    s[..., 0] = np.sin(theta)
    if J > 1:
        c2 = 2.0 * np.cos(theta)
        s[..., 1] = c2 * s[..., 0]
        for j in range(2, J):
            s[..., j] = c2 * s[..., j - 1] - s[..., j - 2]
    return s


def sine_basis(x, domain, J):
    """Tensor sine basis on the core box; shape ``(..., J**d)``."""
    x = np.asarray(x, dtype=float)
    theta = np.pi * (x + domain.r) / (2.0 * domain.r)
    s = _axis_sines(theta, J)                   # (..., d, J)
    out = s[..., 0, :]
    for i in range(1, domain.d):
        out = (out[..., :, None] * s[..., i, None, :]).reshape(*x.shape[:-1], -1)
    return out


def _clenshaw_sine(theta, a):
    """``sum_j a_j sin(j theta)`` for a 1-d coefficient vector ``a``."""
    c2 = 2.0 * np.cos(theta)
    b1 = np.zeros_like(theta)
    b2 = np.zeros_like(theta)
    for aj in a[::-1]:
        b1, b2 = aj + c2 * b1 - b2, b1
    return b1 * np.sin(theta)


def sine_basis_gradient(x, domain, J):
    """Gradient of each basis function; shape ``(..., J**d, d)``."""
    x = np.asarray(x, dtype=float)
    scale = np.pi / (2.0 * domain.r)
    theta = scale * (x + domain.r)
    jj = np.arange(1, J + 1)
    s = np.sin(theta[..., None] * jj)
    c = (jj * scale) * np.cos(theta[..., None] * jj)
    grads = []
    for axis in range(domain.d):
        out = None
        for i in range(domain.d):
            fac = c[..., i, :] if i == axis else s[..., i, :]
            out = fac if out is None else (out[..., :, None] * fac[..., None, :]).reshape(*x.shape[:-1], -1)
        grads.append(out)
    return np.stack(grads, axis=-1)


@dataclass
class DriftSpec:
    """Drift field given by sine-series coefficients on the core plus the fixed tail.

    Parameters
    ----------
    domain : DomainSpec
    s : float
        Covariance smoothness exponent of the prior this drift belongs to;
        must exceed ``d + 2``.
    k : float
        Strength of the inward pull outside ``r + 1``.
    coefficients : ndarray, shape (d, J**d)
        Row ``i`` holds the series coefficients of drift component ``i``,
        columns ordered as :func:`multi_indices`.
    """
    domain: DomainSpec
    s: float
    k: float
    coefficients: np.ndarray

    def __post_init__(self):
        d = self.domain.d
        if not self.s > d + 2:
            raise InputError(f"smoothness s must exceed d + 2 = {d + 2}, got {self.s}")
        if not self.k > 0:
            raise InputError(f"tail strength k must be positive, got {self.k}")
        a = np.array(self.coefficients, dtype=float)
        if a.ndim == 1 and d == 1:
            a = a[None, :]
        if a.ndim != 2 or a.shape[0] != d:
            raise InputError(f"coefficients must have shape (d, J**d), got {a.shape}")
        J = round(a.shape[1] ** (1.0 / d))
        if J < 1 or J ** d != a.shape[1]:
            raise InputError(f"coefficient count {a.shape[1]} is not a perfect {d}-th power")
        if not np.all(np.isfinite(a)):
            raise InputError("coefficients must be finite")
        self.coefficients = a
        self.J = int(J)

    @classmethod
    def zeros(cls, domain, J, s=None, k=1.0):
        s = domain.d + 3 if s is None else s
        return cls(domain, s, k, np.zeros((domain.d, J ** domain.d)))

    @classmethod
    def from_coefficient_map(cls, domain, s, k, J, coeffs):
        """Build from ``{multi_index: value-or-per-component-values}``."""
        a = np.zeros((domain.d, J ** domain.d))
        lookup = {tuple(j): n for n, j in enumerate(multi_indices(domain.d, J))}
        for j, val in coeffs.items():
            j = tuple(int(v) for v in j)
            if j not in lookup:
                raise InputError(f"multi-index {j} outside truncation level J={J}")
            a[:, lookup[j]] = np.broadcast_to(np.asarray(val, dtype=float), (domain.d,))
        return cls(domain, s, k, a)

    def coefficient_map(self):
        return {tuple(int(v) for v in j): self.coefficients[:, n].copy()
                for n, j in enumerate(multi_indices(self.domain.d, self.J))}

    def with_coefficients(self, coefficients):
        return DriftSpec(self.domain, self.s, self.k, coefficients)

    def __call__(self, x):
        return eval_drift(self, x)

    def jacobian(self, x):
        """Analytic Jacobian ``db_i/dx_j``, shape ``(..., d, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r, k = self.domain.r, self.k
        ninf = np.max(np.abs(x), axis=-1)
        n2 = np.linalg.norm(x, axis=-1)
        jac = np.zeros(x.shape + (self.domain.d,))
        core = ninf <= r
        if core.any():
            g = sine_basis_gradient(x[core], self.domain, self.J)  # (m, B, d)
            jac[core] = np.einsum("ib,mbj->mij", self.coefficients, g)
        out = ~core
        if out.any():
            xo, n2o, nio = x[out], n2[out], ninf[out]
            eye = np.eye(self.domain.d)
            unit = xo / n2o[:, None]
            dunit = (eye[None] - unit[:, :, None] * unit[:, None, :]) / n2o[:, None, None]
            scale = np.clip(nio - r, 0.0, 1.0)
            arg = np.argmax(np.abs(xo), axis=-1)
            dninf = np.zeros_like(xo)
            dninf[np.arange(len(xo)), arg] = np.sign(xo[np.arange(len(xo)), arg])
            in_shell = (nio < r + 1.0)[:, None, None]
            jac[out] = -k * (scale[:, None, None] * dunit
                             + in_shell * unit[:, :, None] * dninf[:, None, :])
        return jac

    def to_json_dict(self):
        coeffs = []
        for j, a in self.coefficient_map().items():
            coeffs.append({"j": list(j), "a": [float(v) for v in a]})
        return {"d": self.domain.d, "r": self.domain.r, "s": float(self.s),
                "k": float(self.k), "coeffs": coeffs}

    @classmethod
    def from_json_dict(cls, doc):
        _require_keys(doc, {"d", "r", "s", "k", "coeffs"}, "drift")
        domain = DomainSpec(doc["d"], doc["r"])
        entries = doc["coeffs"]
        if not entries:
            raise InputError("drift document has no coefficients")
        J = max(max(int(v) for v in e["j"]) for e in entries)
        cmap = {}
        for e in entries:
            _require_keys(e, {"j", "a"}, "drift coefficient")
            if len(e["j"]) != domain.d:
                raise InputError(f"multi-index {e['j']} has wrong length for d={domain.d}")
            cmap[tuple(e["j"])] = e["a"]
        return cls.from_coefficient_map(domain, doc["s"], doc["k"], J, cmap)


class DriftField:
    """Arbitrary drift given as a callable, optionally with an analytic Jacobian.

    Used for fields that do not follow the series-plus-tail construction, e.g.
    when probing the condition checkers.
    """

    def __init__(self, func, d, jacobian=None, name="custom"):
        self.func = func
        self.d = int(d)
        self._jacobian = jacobian
        self.name = name

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        if self._jacobian is not None:
            return np.asarray(self._jacobian(np.asarray(x, dtype=float)), dtype=float)
        return numeric_jacobian(self, x)


def numeric_jacobian(field_fn, x):
    """Central differences with step ``1e-5 * max(1, |x|)``; shape ``(..., d, d)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[-1]
    h = 1e-5 * np.maximum(1.0, np.linalg.norm(x, axis=-1))[..., None]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        cols.append((field_fn(x + h * e) - field_fn(x - h * e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def eval_drift(drift, x):
    """Evaluate a :class:`DriftSpec` at points ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    dom, k = drift.domain, drift.k
    r = dom.r
    if dom.d == 1:
        xc = np.clip(x2[:, 0], -r, r)
        series = _clenshaw_sine(np.pi * (xc + r) / (2.0 * r), drift.coefficients[0])
        ax = np.abs(x2[:, 0])
        tail = -k * np.minimum(ax - r, 1.0) * np.sign(x2[:, 0])
        out = np.where(ax <= r, series, tail)[:, None]
        return out[0] if single else out.reshape(x.shape)
    ninf = np.max(np.abs(x2), axis=-1)
    out = np.empty_like(x2)
    core = ninf <= r
    if core.any():
        out[core] = sine_basis(x2[core], dom, drift.J) @ drift.coefficients.T
    rest = ~core
    if rest.any():
        xr = x2[rest]
        scale = np.minimum(ninf[rest] - r, 1.0)
        out[rest] = -k * scale[:, None] * xr / np.linalg.norm(xr, axis=-1, keepdims=True)
    return out[0] if single else out.reshape(x.shape)


def _kernel_normalizer(centers, taus, r):
    """Mass of each untruncated Gaussian kernel inside the core box."""
    sd = 1.0 / np.sqrt(taus)[:, None]
    upper = ndtr((r - centers) / sd)
    lower = ndtr((-r - centers) / sd)
    return np.prod(upper - lower, axis=-1)


def truncated_gaussian_kernel(z, center, tau, domain):
    """Gaussian density (covariance ``I / tau``) at ``z - center``, truncated to the core."""
    z = np.asarray(z, dtype=float)
    center = np.atleast_1d(np.asarray(center, dtype=float))
    norm = _kernel_normalizer(center[None, :], np.array([tau]), domain.r)[0]
    diff = z - center
    q = np.sum(diff ** 2, axis=-1) * tau
    dens = (tau / (2.0 * np.pi)) ** (domain.d / 2.0) * np.exp(-0.5 * q) / norm
    return np.where(domain.contains(z), dens, 0.0)


@dataclass
class LevyMixture:
    """Finite homogeneous Levy measure ``lambda * sum_i w_i phi_{r,tau_i}(z - z_i)``.

    ``weights`` sum to a value in ``[1 - mass_tol, 1]``; the total jump
    intensity is ``intensity * weights.sum()``.
    """
    domain: DomainSpec
    intensity: float
    weights: np.ndarray
    centers: np.ndarray
    precisions: np.ndarray
    mass_tol: float = 0.01
    _norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d, r = self.domain.d, self.domain.r
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.precisions = np.atleast_1d(np.asarray(self.precisions, dtype=float))
        self.centers = np.asarray(self.centers, dtype=float).reshape(len(self.weights), d)
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise InputError(f"intensity must be a finite nonnegative number, got {self.intensity}")
        if not 0 < self.mass_tol <= 0.5:
            raise InputError(f"mass_tol out of range: {self.mass_tol}")
        if len(self.precisions) != len(self.weights) or len(self.weights) == 0:
            raise InputError("weights, centers and precisions must have equal nonzero length")
        if np.any(self.weights < 0):
            raise InputError("mixture weights must be nonnegative")
        total = self.weights.sum()
        if not (1.0 - self.mass_tol - 1e-12 <= total <= 1.0 + 1e-12):
            raise InputError(f"weights sum to {total}, outside [1 - mass_tol, 1]")
        if np.any(np.max(np.abs(self.centers), axis=-1) > r):
            raise InputError("every atom centre must lie in the core region")
        if not np.all((self.precisions > 0) & np.isfinite(self.precisions)):
            raise InputError("precisions must be positive and finite")
        self.intensity = float(self.intensity)
        self._norms = _kernel_normalizer(self.centers, self.precisions, r)

    @classmethod
    def single_atom(cls, domain, intensity, center, precision, mass_tol=0.01):
        return cls(domain, intensity, [1.0], np.atleast_2d(center), [precision], mass_tol)

    @classmethod
    def empty(cls, domain):
        """Zero Levy measure (no jumps)."""
        return cls.single_atom(domain, 0.0, np.zeros(domain.d), 1.0)

    @property
    def n_atoms(self):
        return len(self.weights)

    @property
    def total_mass(self):
        """``nu(D_r)``: the rate of the compound Poisson jump process."""
        return self.intensity * float(self.weights.sum())

    @property
    def min_width(self):
        return float(1.0 / np.sqrt(self.precisions.max()))

    def density(self, z):
        """Levy density at ``z`` (shape ``(..., d)``); zero outside the core."""
        z = np.asarray(z, dtype=float)
        if self.intensity == 0.0:
            return np.zeros(z.shape[:-1])
        diff = z[..., None, :] - self.centers                 # (..., K, d)
        q = np.sum(diff ** 2, axis=-1) * self.precisions
        coef = self.weights * (self.precisions / (2.0 * np.pi)) ** (self.domain.d / 2.0) / self._norms
        dens = self.intensity * np.sum(coef * np.exp(-0.5 * q), axis=-1)
        return np.where(self.domain.contains(z), dens, 0.0)

    def log_density(self, z):
        with np.errstate(divide="ignore"):
            return np.log(self.density(z))

    def small_jump_mean(self):
        """``int_{|z|_2 <= 1} z nu(dz)``, the compensator of small jumps."""
        d, r = self.domain.d, self.domain.r
        if self.intensity == 0.0:
            return np.zeros(d)
        if d == 1:
            a = min(1.0, r)
            sd = 1.0 / np.sqrt(self.precisions)
            c = self.centers[:, 0]
            lo, hi = (-a - c) / sd, (a - c) / sd
            phi = lambda u: np.exp(-0.5 * u ** 2) / _SQRT2PI
            part = c * (ndtr(hi) - ndtr(lo)) - sd * (phi(hi) - phi(lo))
            return np.array([self.intensity * np.sum(self.weights * part / self._norms)])
        nodes, weights = ball_rule(d, r)
        return (weights * self.density(nodes)) @ nodes

    def second_moment(self):
        """``int |z|_2^2 nu(dz)`` in closed form (product of truncated normals)."""
        if self.intensity == 0.0:
            return 0.0
        r = self.domain.r
        sd = 1.0 / np.sqrt(self.precisions)[:, None]
        c = self.centers
        lo, hi = (-r - c) / sd, (r - c) / sd
        mass = ndtr(hi) - ndtr(lo)
        phi = lambda u: np.exp(-0.5 * u ** 2) / _SQRT2PI
        # moments of the standardised truncated normal
        m1 = (phi(lo) - phi(hi)) / mass
        m2 = 1.0 + (lo * phi(lo) - hi * phi(hi)) / mass
        ez2 = c ** 2 + 2.0 * c * sd * m1 + sd ** 2 * m2
        per_atom = ez2.sum(axis=-1)
        return float(self.intensity * np.sum(self.weights * per_atom))

    def sizes_from_uniforms(self, u_atom, u_coords):
        """Map uniforms to jump sizes by atom selection and inverse-CDF sampling.

        ``u_atom`` has shape ``(m,)`` and ``u_coords`` shape ``(m, d)``.
        """
        r = self.domain.r
        cdf = np.cumsum(self.weights)
        cdf /= cdf[-1]
        idx = np.minimum(np.searchsorted(cdf, u_atom, side="right"), self.n_atoms - 1)
        c = self.centers[idx]
        sd = (1.0 / np.sqrt(self.precisions[idx]))[:, None]
        lo, hi = ndtr((-r - c) / sd), ndtr((r - c) / sd)
        z = c + sd * ndtri(lo + u_coords * (hi - lo))
        return np.clip(z, -r, r)

    def permuted(self, order):
        order = np.asarray(order)
        return LevyMixture(self.domain, self.intensity, self.weights[order],
                           self.centers[order], self.precisions[order], self.mass_tol)

    def to_json_dict(self):
        return {
            "lambda": self.intensity,
            "mass_tol": self.mass_tol,
            "atoms": [{"w": float(w), "z": [float(v) for v in z], "tau": float(t)}
                      for w, z, t in zip(self.weights, self.centers, self.precisions)],
        }

    @classmethod
    def from_json_dict(cls, doc, domain):
        _require_keys(doc, {"lambda", "mass_tol", "atoms"}, "levy")
        atoms = doc["atoms"]
        if not atoms:
            raise InputError("levy document has no atoms")
        for a in atoms:
            _require_keys(a, {"w", "z", "tau"}, "levy atom")
            if len(a["z"]) != domain.d:
                raise InputError(f"atom centre {a['z']} has wrong length for d={domain.d}")
        return cls(domain, float(doc["lambda"]),
                   [a["w"] for a in atoms], [a["z"] for a in atoms],
                   [a["tau"] for a in atoms], float(doc["mass_tol"]))


@dataclass
class JumpDiffusionModel:
    """A parameter point ``(b, nu)`` with its domain."""
    domain: DomainSpec
    drift: object
    levy: LevyMixture

    def __post_init__(self):
        if isinstance(self.drift, DriftSpec) and self.drift.domain != self.domain:
            raise InputError("drift domain does not match model domain")
        if isinstance(self.drift, DriftField) and self.drift.d != self.domain.d:
            raise InputError("drift dimension does not match model domain")
        if self.levy.domain != self.domain:
            raise InputError("Levy measure domain does not match model domain")
        self._m = self.levy.small_jump_mean()

    @property
    def d(self):
        return self.domain.d

    @property
    def compensator(self):
        """Small-jump compensator subtracted from the drift along paths."""
        return self._m

    def drift_at(self, x):
        return self.drift(x)

    def path_drift(self, x):
        """Drift of the path between jumps: ``b(x) - int_{|z|<=1} z nu(dz)``."""
        return self.drift(x) - self._m

    def to_json_dict(self):
        if not isinstance(self.drift, DriftSpec):
            raise InputError("only series drifts can be serialised")
        return {"drift": self.drift.to_json_dict(), "levy": self.levy.to_json_dict()}

    @classmethod
    def from_json_dict(cls, doc):
        _require_keys(doc, {"drift", "levy"}, "model")
        drift = DriftSpec.from_json_dict(doc["drift"])
        levy = LevyMixture.from_json_dict(doc["levy"], drift.domain)
        return cls(drift.domain, drift, levy)

    def fingerprint(self):
        """Short hash of the JSON form; custom drifts hash by name."""
        try:
            payload = json.dumps(self.to_json_dict(), sort_keys=True)
        except InputError:
            payload = json.dumps({"drift": getattr(self.drift, "name", "custom"),
                                  "levy": self.levy.to_json_dict()}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _require_keys(doc, keys, what):
    if not isinstance(doc, dict):
        raise InputError(f"{what} entry must be an object")
    missing = keys - set(doc)
    extra = set(doc) - keys
    if missing:
        raise InputError(f"{what} entry missing keys {sorted(missing)}")
    if extra:
        raise InputError(f"{what} entry has unknown keys {sorted(extra)}")
