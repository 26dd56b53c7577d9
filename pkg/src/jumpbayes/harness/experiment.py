"""End-to-end contraction experiment: data, chains, distances, curve and manifest."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import hashlib
import json
import os
import platform
import time

import numpy as np
import scipy

from .. import __version__
from ..errors import StageError
from ..inference import (
    ContractionCurve, ContractionEntry, chain_to_jsonl, curve_to_csv,
    posterior_weak_distances, run_chain, summarize_distances,
)
from ..simulator import default_rho, default_test_fields, sample_observations, write_series_csv

DEFAULT_EPSILON = 0.05


@dataclass
class ExperimentResult:
    curves: list
    manifest_path: str
    distances: dict = field(default_factory=dict)

    @property
    def curve(self):
        return self.curves[0]


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:       # noqa: BLE001 - re-raised with the stage name
        raise StageError(name, exc) from exc


def _epsilons(cfg):
    eps = cfg.metric.get("epsilon", [DEFAULT_EPSILON])
    return [float(e) for e in (eps if isinstance(eps, (list, tuple)) else [eps])]


def run_repetition(cfg, rep, out_dir):
    """One repetition: nested data, one chain per ``n``, and the posterior distances.

    Returns ``(entries, distances_by_n, files)``.
    """
    os.makedirs(out_dir, exist_ok=True)
    delta = cfg.delta
    nmax = max(cfg.n_schedule)
    data_dt = float(cfg.data.get("dt", 1e-3 * min(1.0, delta)))
    init = cfg.data.get("init", "stationary")
    series = _stage("data", sample_observations, cfg.truth, nmax, delta, dt=data_dt,
                    seed=(cfg.seed, rep, 0), init=init)
    files = []
    path = os.path.join(out_dir, "data.csv")
    write_series_csv(series, path)
    files.append(path)

    priors = _stage("config", cfg.prior_bundle)
    proposal = _stage("config", cfg.proposal)
    iterations = int(cfg.sampler.get("iterations", 2000))
    warmup = int(cfg.sampler.get("warmup", 500))
    rho = default_rho(cfg.domain, int(cfg.metric.get("rho_points", 64)))
    fields = default_test_fields(cfg.domain.d)
    m_reps = int(cfg.metric.get("replicates", 500))
    m_dt = float(cfg.metric.get("dt", 5e-3))
    thin = int(cfg.metric.get("thin", 50))

    entries, dists = [], {}
    for n in cfg.n_schedule:
        chain = _stage(f"chain[n={n}]", run_chain, series.head(n), priors, proposal,
                       iterations, warmup, seed=(cfg.seed, rep, 1, n))
        path = os.path.join(out_dir, f"chain_n{n}.jsonl")
        chain_to_jsonl(chain, path)
        files.append(path)
        # the metric stream is shared across n so that curves compare like with like
        d = _stage(f"metric[n={n}]", posterior_weak_distances, chain, cfg.truth, fields, rho,
                   delta, thin, (cfg.seed, rep, 2), m_reps, m_dt)
        dists[n] = d
        for eps in _epsilons(cfg):
            mass, med, mass_se, med_se = summarize_distances(d, eps)
            entries.append(ContractionEntry(n, mass, med, mass_se, med_se, eps))
    return entries, dists, files


def _run_rep_star(args):
    return run_repetition(*args)


def run_experiment(cfg, threads=1, out_dir=None):
    """Run every repetition and write curves, chains, data and ``manifest.json``.

    Repetitions run in separate processes when ``threads > 1``; every random
    stream is derived from ``(seed, repetition, stage)`` so the numbers do not
    depend on scheduling.
    """
    if cfg.truth is None:
        raise StageError("config", ValueError("experiment config has no truth section"))
    if not cfg.n_schedule:
        raise StageError("config", ValueError("experiment config has an empty n_schedule"))
    out_dir = out_dir or cfg.output
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    jobs = [(cfg, rep, os.path.join(out_dir, f"rep{rep:02d}")) for rep in range(cfg.repetitions)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_rep_star, jobs))
    else:
        results = [run_repetition(*job) for job in jobs]

    curves, files, all_d = [], [], {}
    primary_eps = _epsilons(cfg)[0]
    for rep, (entries, dists, rep_files) in enumerate(results):
        curve = ContractionCurve()
        for e in entries:
            curve.add(e)
        curves.append(curve)
        path = os.path.join(out_dir, f"rep{rep:02d}", "curve.csv")
        curve_to_csv(curve, path)
        files += rep_files + [path]
        all_d[rep] = dists

    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w") as fh:
        fh.write("rep,decreasing," + ",".join(f"median_n{n}" for n in cfg.n_schedule) + "\n")
        for rep, curve in enumerate(curves):
            med = [e.median_weak_distance for e in curve.entries if e.epsilon == primary_eps]
            dec = int(all(b < a for a, b in zip(med, med[1:])))
            fh.write(f"{rep},{dec}," + ",".join(repr(m) for m in med) + "\n")
    files.append(summary)

    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.raw,
        "seed": cfg.seed,
        "repetitions": cfg.repetitions,
        "seeds": {"data": "(seed, rep, 0)", "chain": "(seed, rep, 1, n)", "metric": "(seed, rep, 2)"},
        "versions": {"jumpbayes": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": threads,
        "elapsed_seconds": round(time.time() - started, 3),
        "files": {os.path.relpath(f, out_dir): _sha256(f) for f in files},
    }
    mpath = os.path.join(out_dir, "manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return ExperimentResult(curves, mpath, all_d)
