"""Experiment configuration: a YAML document with a fixed, strictly checked schema.

Schema (all sections optional except ``domain``, ``truth`` and ``n_schedule``
for experiments)::

    seed: 0
    domain: {d: 1, r: 3.0}
    truth:
      drift: {s: 4.0, k: 1.0, coeffs: [{j: [1], a: [0.2]}, ...]}
      levy: {lambda: 0.5, mass_tol: 0.01, atoms: [{w: 1.0, z: [1.0], tau: 4.0}]}
    priors:
      drift: {s: 4.0, J: 4, k: 1.0}
      levy: {zeta_mass: 1.0, tau_logmean: 0.0, tau_logsd: 1.0,
             lambda_shape: 2.0, lambda_rate: 2.0, mass_tol: 0.01}
    sampler: {iterations: 2000, warmup: 500, beta_pcn: 0.2, n_atoms: 5,
              levy_step: 0.1, target_accept: 0.25, likelihood: true}
    estimator: {replicates: 64, dt: 0.05, bandwidth: auto, refresh_prob: 0.05,
                include_stationary_factor: false, method: kde, block_size: 0}
    data: {delta: 0.5, dt: 0.005, init: stationary}
    n_schedule: [50, 200, 800]
    metric: {replicates: 500, dt: 0.005, thin: 50, epsilon: [0.05], rho_points: 64}
    repetitions: 1
    output: results
"""
from dataclasses import dataclass, field
import hashlib
import json

import numpy as np
import yaml

from ..errors import InputError
from ..model_core import DomainSpec, DriftField, DriftSpec, JumpDiffusionModel, LevyMixture

_SECTIONS = {
    "seed": None, "domain": {"d", "r"}, "truth": {"drift", "levy"},
    "priors": {"drift", "levy"}, "sampler": None, "estimator": None, "data": None,
    "n_schedule": None, "metric": None, "repetitions": None, "output": None,
}
_SAMPLER_KEYS = {"iterations", "warmup", "beta_pcn", "n_atoms", "levy_step", "target_accept",
                 "likelihood", "adapt", "update_levy"}
_ESTIMATOR_KEYS = {"replicates", "dt", "bandwidth", "refresh_prob", "include_stationary_factor", "block_size",
                   "method"}
_DATA_KEYS = {"delta", "dt", "init"}
_METRIC_KEYS = {"replicates", "dt", "thin", "epsilon", "rho_points"}
_DRIFT_PRIOR_KEYS = {"s", "J", "k"}
_LEVY_PRIOR_KEYS = {"zeta_mass", "tau_logmean", "tau_logsd", "lambda_shape", "lambda_rate",
                    "mass_tol"}


def _check_keys(doc, allowed, where):
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise InputError(f"{where}: expected a mapping")
    extra = set(doc) - set(allowed)
    if extra:
        raise InputError(f"{where}: unknown keys {sorted(extra)}")
    return doc


@dataclass
class ExperimentConfig:
    domain: DomainSpec
    truth: JumpDiffusionModel = None
    drift_prior: dict = field(default_factory=dict)
    levy_prior: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    n_schedule: list = field(default_factory=list)
    metric: dict = field(default_factory=dict)
    seed: int = 0
    repetitions: int = 1
    output: str = "results"
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ns = list(self.n_schedule)
        if ns and (any(int(n) != n or n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:]))):
            raise InputError(f"n_schedule must be strictly increasing positive integers, got {ns}")
        if self.repetitions < 1:
            raise InputError("repetitions must be positive")

    @property
    def delta(self):
        return float(self.data.get("delta", 0.5))

    def digest(self):
        """Hash of the canonical JSON form of the raw document."""
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def prior_bundle(self):
        from ..likelihood import PriorBundle
        from ..priors import DPMixConfig, GaussianPriorConfig
        dp = dict(self.drift_prior)
        drift = GaussianPriorConfig(self.domain, float(dp.get("s", self.domain.d + 3)),
                                    int(dp.get("J", 4)), float(dp.get("k", 1.0)))
        levy = DPMixConfig(self.domain, **{k: float(v) for k, v in self.levy_prior.items()})
        return PriorBundle(drift, levy)

    def proposal(self):
        from ..inference import ProposalConfig
        from ..likelihood import EstimatorConfig
        kw = {k: v for k, v in self.sampler.items() if k not in ("iterations", "warmup")}
        return ProposalConfig(estimator=EstimatorConfig(**self.estimator), **kw)


def truth_from_doc(doc, domain):
    _check_keys(doc, {"drift", "levy"}, "truth")
    if "drift" not in doc:
        raise InputError("truth: missing drift")
    dd = dict(doc["drift"])
    dd.setdefault("d", domain.d)
    dd.setdefault("r", domain.r)
    drift = DriftSpec.from_json_dict(dd)
    if drift.domain != domain:
        raise InputError("truth drift domain differs from the configured domain")
    if "levy" in doc:
        ld = dict(doc["levy"])
        ld.setdefault("mass_tol", 0.01)
        levy = LevyMixture.from_json_dict(ld, domain)
    else:
        levy = LevyMixture.empty(domain)
    return JumpDiffusionModel(domain, drift, levy)


def config_from_dict(doc):
    _check_keys(doc, _SECTIONS, "config")
    if "domain" not in doc:
        raise InputError("config: missing domain section")
    dom_doc = _check_keys(doc["domain"], {"d", "r"}, "domain")
    domain = DomainSpec(int(dom_doc.get("d", 1)), float(dom_doc.get("r", 1.0)))
    truth = truth_from_doc(doc["truth"], domain) if "truth" in doc else None
    priors = _check_keys(doc.get("priors"), {"drift", "levy"}, "priors")
    return ExperimentConfig(
        domain=domain, truth=truth,
        drift_prior=dict(_check_keys(priors.get("drift"), _DRIFT_PRIOR_KEYS, "priors.drift")),
        levy_prior=dict(_check_keys(priors.get("levy"), _LEVY_PRIOR_KEYS, "priors.levy")),
        sampler=dict(_check_keys(doc.get("sampler"), _SAMPLER_KEYS, "sampler")),
        estimator=dict(_check_keys(doc.get("estimator"), _ESTIMATOR_KEYS, "estimator")),
        data=dict(_check_keys(doc.get("data"), _DATA_KEYS, "data")),
        n_schedule=list(doc.get("n_schedule", [])),
        metric=dict(_check_keys(doc.get("metric"), _METRIC_KEYS, "metric")),
        seed=int(doc.get("seed", 0)),
        repetitions=int(doc.get("repetitions", 1)),
        output=str(doc.get("output", "results")),
        raw=doc,
    )


def load_config(path, overrides=None):
    """Read a YAML config file; ``overrides`` is a list of ``section.key=value`` strings."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be a mapping")
    for item in overrides or []:
        apply_override(doc, item)
    return config_from_dict(doc)


def apply_override(doc, item):
    if "=" not in item:
        raise InputError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise InputError(f"override {item!r} descends into a non-mapping")
    node[parts[-1]] = yaml.safe_load(value)


def _synthetic_model(doc):
    """Model with a linear drift ``b(x) = A x`` in place of the series drift.

    Lets hand-written files describe fields that break the regularity
    conditions (``A = I`` pushes paths outward).  Shape::

        {"drift": {"kind": "linear", "d": 1, "r": 1.0, "A": [[1.0]]}, "levy": {...}}
    """
    dd = doc["drift"]
    _check_keys(dd, {"kind", "d", "r", "A"}, "drift")
    domain = DomainSpec(int(dd["d"]), float(dd["r"]))
    A = np.array(dd["A"], dtype=float).reshape(domain.d, domain.d)
    drift = DriftField(lambda x: x @ A.T, domain.d,
                       jacobian=lambda x: np.broadcast_to(A, np.shape(x) + (domain.d,)),
                       name="linear:" + json.dumps(A.tolist()))
    levy = LevyMixture.from_json_dict(doc["levy"], domain) if "levy" in doc else LevyMixture.empty(domain)
    return JumpDiffusionModel(domain, drift, levy)


def model_from_file(path):
    """Load a model JSON document, raising :class:`InputError` with the parse location.

    Besides the series form, a drift may be ``{"kind": "linear", ...}``
    (see :func:`_synthetic_model`).
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    if isinstance(doc.get("drift"), dict) and doc["drift"].get("kind") == "linear":
        return _synthetic_model(doc)
    return JumpDiffusionModel.from_json_dict(doc)


def shortest_repr(x):
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def canonical_json(obj):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o))
    return json.dumps(obj, sort_keys=True, default=default)
