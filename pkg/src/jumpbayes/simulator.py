"""Euler-Maruyama simulation of unit jump diffusions.

Jump times come from a compound Poisson clock and are inserted into the time
grid exactly; the Brownian increment of a split step is divided with a
Brownian bridge so that the Brownian path does not depend on where the jumps
fall.  All randomness is drawn from a :class:`NoiseSource`, which hands out the
same streams to any model simulated with the same seed (common random
numbers): Brownian normals per base step, and unit-rate Poisson arrivals plus
the uniforms that are mapped to jump sizes.
"""
from dataclasses import dataclass, field
import json
import math
import warnings

import numpy as np

from .errors import InputError, NumericBlowupError
from .model_core import default_test_fields

_ARRIVAL_BLOCK = 8


def default_dt(delta):
    return 1e-3 * min(1.0, delta)


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def child_seed(seed, k):
    """Deterministic child ``k`` of a seed; unlike ``SeedSequence.spawn`` it has no state."""
    ss = _seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(k),))


class NoiseTape:
    """Recorded random draws for ``n_unique`` paths, generated on demand.

    Brownian normals are stored per base step and jump arrivals in fixed
    blocks, so any consumer that reads the tape from the start sees the same
    numbers no matter how far earlier consumers read.
    """

    def __init__(self, seed, n_unique, d):
        bm_ss, jump_ss = child_seed(seed, 0), child_seed(seed, 1)
        self._bm = np.random.default_rng(bm_ss)
        self._jump = np.random.default_rng(jump_ss)
        self.n_unique, self.d = int(n_unique), int(d)
        self._normals = []
        self._reset_arrivals()

    def _reset_arrivals(self):
        n, d = self.n_unique, self.d
        self.gamma = np.zeros((n, 0))
        self.u_atom = np.zeros((n, 0))
        self.u_size = np.zeros((n, 0, d))
        self.eta = np.zeros((n, 0, d))

    def normal(self, i):
        while len(self._normals) <= i:
            self._normals.append(self._bm.standard_normal((self.n_unique, self.d)))
        return self._normals[i]

    def ensure_arrivals(self, level):
        """Extend the unit-rate arrival times until every path has passed ``level``."""
        while self.gamma.shape[1] == 0 or self.gamma[:, -1].min() <= level:
            n, b, d = self.n_unique, _ARRIVAL_BLOCK, self.d
            e = self._jump.standard_exponential((n, b))
            ua = self._jump.random((n, b))
            us = self._jump.random((n, b, d))
            eta = self._jump.standard_normal((n, b, d))
            last = self.gamma[:, -1:] if self.gamma.shape[1] else np.zeros((n, 1))
            self.gamma = np.concatenate([self.gamma, last + np.cumsum(e, axis=1)], axis=1)
            self.u_atom = np.concatenate([self.u_atom, ua], axis=1)
            self.u_size = np.concatenate([self.u_size, us], axis=1)
            self.eta = np.concatenate([self.eta, eta], axis=1)

    def continuation(self, start_step):
        """A tape whose normals continue after ``start_step`` and whose jump clock restarts."""
        tape = NoiseTape.__new__(NoiseTape)
        tape._bm, tape._jump = self._bm, self._jump
        tape.n_unique, tape.d = self.n_unique, self.d
        self.normal(start_step - 1) if start_step else None
        tape._normals = self._normals[start_step:]
        tape._reset_arrivals()
        return tape


class StackedTape:
    """Several tapes read as one batch: path rows are the tapes' rows in order.

    Each row sees exactly the draws of its own tape, so a batch simulated on
    the stack matches the tapes simulated one by one.
    """

    def __init__(self, tapes):
        self.tapes = list(tapes)
        self.d = self.tapes[0].d
        self.n_unique = sum(t.n_unique for t in self.tapes)
        self._normals = []
        self._level = None

    def normal(self, i):
        while len(self._normals) <= i:
            k = len(self._normals)
            self._normals.append(np.concatenate([t.normal(k) for t in self.tapes]))
        return self._normals[i]

    def ensure_arrivals(self, level):
        if self._level is not None and level <= self._level:
            return
        for t in self.tapes:
            t.ensure_arrivals(level)
        width = max(t.gamma.shape[1] for t in self.tapes)

        def stack(name, fill):
            parts = []
            for t in self.tapes:
                a = getattr(t, name)
                pad = [(0, 0), (0, width - a.shape[1])] + [(0, 0)] * (a.ndim - 2)
                parts.append(np.pad(a, pad, constant_values=fill))
            return np.concatenate(parts)

        self.gamma = stack("gamma", np.inf)
        self.u_atom, self.u_size, self.eta = stack("u_atom", 0.0), stack("u_size", 0.0), stack("eta", 0.0)
        self._level = level


class NoiseSource:
    """Random streams for ``n_unique`` paths, repeated ``tile`` times.

    Path ``p`` of the batch uses the streams of replicate ``p % n_unique``,
    so a batch of several start points times ``R`` replicates can share one
    set of ``R`` streams across start points.  Passing an existing ``tape``
    replays its draws instead of generating new ones.
    """

    def __init__(self, seed, n_unique, d, tile=1, tape=None):
        self.tape = NoiseTape(seed, n_unique, d) if tape is None else tape
        if (self.tape.n_unique, self.tape.d) != (int(n_unique), int(d)):
            raise InputError("noise tape does not match the batch shape")
        self.n_unique, self.d, self.tile = int(n_unique), int(d), int(tile)
        self.step = 0

    @property
    def n_paths(self):
        return self.n_unique * self.tile

    def normals(self):
        z = self.tape.normal(self.step)
        self.step += 1
        return np.tile(z, (self.tile, 1)) if self.tile > 1 else z

    def continuation(self):
        return NoiseSource(None, self.n_unique, self.d, self.tile, self.tape.continuation(self.step))

    def jump_schedule(self, levy, horizon):
        """Jump times, sizes and bridge normals on ``[0, horizon]``.

        Returns ``times (P, K+1)`` padded with ``inf``, ``sizes (P, K, d)`` and
        ``eta (P, K, d)``.
        """
        rate = levy.total_mass
        if rate <= 0.0:
            P = self.n_paths
            return np.full((P, 1), np.inf), np.zeros((P, 0, self.d)), np.zeros((P, 0, self.d))
        tp = self.tape
        tp.ensure_arrivals(rate * horizon)
        used = tp.gamma <= rate * horizon
        K = int(used.sum(axis=1).max()) if used.any() else 0
        mask = used[:, :K]
        times = np.where(mask, tp.gamma[:, :K] / rate, np.inf)
        sizes = np.zeros((self.n_unique, K, self.d))
        if mask.any():
            sizes[mask] = levy.sizes_from_uniforms(tp.u_atom[:, :K][mask], tp.u_size[:, :K][mask])
        eta = tp.eta[:, :K]
        times = np.concatenate([times, np.full((self.n_unique, 1), np.inf)], axis=1)
        if self.tile > 1:
            times = np.tile(times, (self.tile, 1))
            sizes = np.tile(sizes, (self.tile, 1, 1))
            eta = np.tile(eta, (self.tile, 1, 1))
        return times, sizes, eta


class Observer:
    """Hooks called by :func:`integrate`; ``idx`` selects the affected paths."""

    def on_step(self, idx, x_before, x_after, h, dW, t_end):
        pass

    def on_jump(self, idx, x_minus, size, t):
        pass


def integrate(model, x0, horizon, dt, noise, observer=None, record_every=None):
    """Integrate a batch of paths to ``horizon``; returns the end states.

    With ``record_every=m`` also returns the states after every ``m``-th base
    step (including time 0) as an array ``(n_records, P, d)``.
    """
    x = np.array(x0, dtype=float, copy=True)
    P, d = x.shape
    if dt <= 0 or not horizon >= dt:
        raise InputError(f"need 0 < dt <= horizon, got dt={dt}, horizon={horizon}")
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    times, sizes, etas = noise.jump_schedule(model.levy, horizon)
    nxt = np.zeros(P, dtype=int)
    rows = np.arange(P)
    drift = model.path_drift
    records = [x.copy()] if record_every else None
    for i in range(n_steps):
        t0 = i * dt
        t1 = horizon if i == n_steps - 1 else (i + 1) * dt
        h = t1 - t0
        dW = noise.normals() * math.sqrt(h)
        jumping = times[rows, nxt] <= t1
        if not jumping.any():
            x_new = x + drift(x) * h + dW
            if observer is not None:
                observer.on_step(slice(None), x, x_new, h, dW, t1)
            x = x_new
        else:
            calm = np.flatnonzero(~jumping)
            if calm.size:
                xc = x[calm]
                xn = xc + drift(xc) * h + dW[calm]
                if observer is not None:
                    observer.on_step(calm, xc, xn, h, dW[calm], t1)
                x[calm] = xn
            idx = np.flatnonzero(jumping)
            cur = np.full(idx.size, t0)
            rem_w = dW[idx]
            xs = x[idx]
            while idx.size:
                tau = times[idx, nxt[idx]]
                hit = tau <= t1
                fin = ~hit
                if fin.any():
                    f, hr = idx[fin], t1 - cur[fin]
                    xf = xs[fin]
                    xn = xf + drift(xf) * hr[:, None] + rem_w[fin]
                    if observer is not None:
                        observer.on_step(f, xf, xn, hr[:, None], rem_w[fin], t1)
                    x[f] = xn
                if not hit.any():
                    break
                ih, xh, rw, ch = idx[hit], xs[hit], rem_w[hit], cur[hit]
                s = tau[hit] - ch
                span = t1 - ch
                frac = np.divide(s, span, out=np.zeros_like(s), where=span > 0)
                spread = np.sqrt(np.maximum(s * (span - s), 0.0) /
                                 np.where(span > 0, span, 1.0))
                part = frac[:, None] * rw + spread[:, None] * etas[ih, nxt[ih]]
                xm = xh + drift(xh) * s[:, None] + part
                if observer is not None:
                    observer.on_step(ih, xh, xm, s[:, None], part, tau[hit])
                J = sizes[ih, nxt[ih]]
                if observer is not None:
                    observer.on_jump(ih, xm, J, tau[hit])
                xs = xm + J
                rem_w = rw - part
                cur = tau[hit]
                nxt[ih] += 1
                idx = ih
        if not np.all(np.isfinite(x)):
            raise NumericBlowupError(i)
        if record_every and (i + 1) % record_every == 0:
            records.append(x.copy())
    if record_every:
        return x, np.stack(records)
    return x


@dataclass
class PathSkeleton:
    """One simulated trajectory on its (jump-refined) time grid.

    ``states[i + 1] = states[i] + (b(states[i]) - m) dt_i + brownian_increments[i]
    + jump_i`` where ``m`` is the model's small-jump compensator and ``jump_i``
    is nonzero only when ``jump_flags[i]`` is set.
    """
    times: np.ndarray
    states: np.ndarray
    brownian_increments: np.ndarray
    jump_flags: np.ndarray
    jumps: list
    dt: float
    seed: object = None
    model_hash: str = ""

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def jump_sizes(self):
        d = self.states.shape[1]
        return np.array([j for _, j in self.jumps]).reshape(-1, d)

    def increments(self):
        """Per-step jump vectors, zero where no jump closes the step."""
        out = np.zeros_like(self.brownian_increments)
        k = 0
        for i in np.flatnonzero(self.jump_flags):
            out[i] = self.jumps[k][1]
            k += 1
        return out


class _Recorder(Observer):
    def __init__(self):
        self.t, self.x, self.dW, self.flag, self.jumps = [], [], [], [], []

    def on_step(self, idx, x_before, x_after, h, dW, t_end):
        self.t.append(float(np.ravel(t_end)[0]))
        self.x.append(np.array(x_after[0]))
        self.dW.append(np.array(dW[0]))
        self.flag.append(False)

    def on_jump(self, idx, x_minus, size, t):
        self.flag[-1] = True
        self.x[-1] = self.x[-1] + size[0]
        self.jumps.append((float(np.ravel(t)[0]), np.array(size[0])))


def simulate_path(model, x0, horizon, dt=1e-3, seed=0):
    """Simulate one path of the jump diffusion and keep every (sub)step.

    Raises :class:`InputError` when ``dt >= horizon`` and
    :class:`NumericBlowupError` if the state stops being finite.
    """
    if not dt < horizon:
        raise InputError(f"dt must be smaller than the horizon (dt={dt}, horizon={horizon})")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.d,):
        raise InputError(f"x0 must have shape ({model.d},)")
    rec = _Recorder()
    noise = NoiseSource(seed, 1, model.d)
    integrate(model, x0[None, :], horizon, dt, noise, observer=rec)
    return PathSkeleton(
        times=np.array([0.0] + rec.t),
        states=np.vstack([x0] + rec.x),
        brownian_increments=np.array(rec.dW).reshape(-1, model.d),
        jump_flags=np.array(rec.flag, dtype=bool),
        jumps=rec.jumps, dt=dt, seed=seed, model_hash=model.fingerprint())


def replay(model, skeleton):
    """Re-integrate a skeleton's increments; returns the reconstructed states."""
    jumps = skeleton.increments()
    dts = np.diff(skeleton.times)
    x = skeleton.states[0][None, :].copy()
    out = [x[0].copy()]
    for i in range(len(dts)):
        x = x + model.path_drift(x) * dts[i] + skeleton.brownian_increments[i][None, :]
        if skeleton.jump_flags[i]:
            x = x + jumps[i]
        out.append(x[0].copy())
    return np.array(out)


def simulate_endpoints(model, x0s, horizon, dt=None, seed=0, tile=1, observer=None):
    """End states of a batch of independent paths started at ``x0s`` (P, d)."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    dt = default_dt(horizon) if dt is None else dt
    P = len(x0s)
    if P % tile:
        raise InputError("batch size must be a multiple of tile")
    noise = NoiseSource(seed, P // tile, model.d, tile=tile)
    return integrate(model, x0s, horizon, dt, noise, observer=observer)


@dataclass
class ObservationSeries:
    """Observations ``x_0, ..., x_n`` taken every ``delta`` time units."""
    delta: float
    observations: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.ndim == 1:
            self.observations = self.observations[:, None]
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if len(self.observations) < 2:
            raise InputError("an observation series needs n >= 1 transitions")
        if not np.all(np.isfinite(self.observations)):
            raise InputError("observations must be finite")

    @property
    def n(self):
        return len(self.observations) - 1

    @property
    def d(self):
        return self.observations.shape[1]

    def head(self, n):
        """The first ``n`` transitions (``n + 1`` points)."""
        return ObservationSeries(self.delta, self.observations[: n + 1].copy(), dict(self.meta))


def sample_stationary(model, burn_in, thin, count, seed=0, dt=0.01, n_chains=None, x0=None):
    """Approximate draws from the stationary law.

    Runs ``n_chains`` independent long paths side by side (one long path when
    ``n_chains=1``), discards ``burn_in`` time units and records every
    ``thin`` time units.
    """
    if count < 1:
        raise InputError("count must be positive")
    c5 = getattr(model.drift, "k", None)
    if c5 is not None and burn_in < 10.0 * (model.domain.r + 1.0) / c5:
        warnings.warn(f"burn_in={burn_in} is short compared with 10 (r + 1) / k = "
                      f"{10.0 * (model.domain.r + 1.0) / c5:.3g}", RuntimeWarning, stacklevel=2)
    n_chains = min(count, 64) if n_chains is None else int(n_chains)
    per_chain = math.ceil(count / n_chains)
    steps_thin = max(1, int(round(thin / dt)))
    dt_eff = thin / steps_thin
    steps_burn = int(math.ceil(burn_in / dt_eff))
    start = np.zeros((n_chains, model.d)) if x0 is None else np.broadcast_to(
        np.asarray(x0, dtype=float), (n_chains, model.d))
    noise = NoiseSource(seed, n_chains, model.d)
    if steps_burn:
        # burn-in and sampling share one noise source so the paths are continuous
        start = integrate(model, start, steps_burn * dt_eff, dt_eff, noise)
    _, rec = integrate(model, start, per_chain * thin, dt_eff, noise.continuation(),
                       record_every=steps_thin)
    samples = rec[1:].transpose(1, 0, 2).reshape(-1, model.d)   # chain-major
    return samples[:count]


def sample_observations(model, n, delta, dt=None, seed=0, init="stationary",
                        burn_in=None, thin=1.0):
    """Observe one path every ``delta`` time units, ``n`` transitions.

    ``init`` is ``"stationary"`` (a draw from :func:`sample_stationary`) or a
    start point.  Longer series from the same seed extend shorter ones.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    dt = default_dt(delta) if dt is None else dt
    if isinstance(init, str):
        if init != "stationary":
            raise InputError(f"unknown init {init!r}")
        k = getattr(model.drift, "k", 1.0)
        burn = 10.0 * (model.domain.r + 1.0) / k if burn_in is None else burn_in
        x0 = sample_stationary(model, burn, thin, 1, seed=child_seed(seed, 7), n_chains=1)[0]
    else:
        x0 = np.atleast_1d(np.asarray(init, dtype=float))
    steps = max(1, int(round(delta / dt)))
    dt_eff = delta / steps
    noise = NoiseSource(seed, 1, model.d)
    _, rec = integrate(model, x0[None, :], n * delta, dt_eff, noise, record_every=steps)
    return ObservationSeries(delta, rec[:, 0, :],
                             meta={"seed": _seed_repr(seed), "dt": dt_eff,
                                   "model_hash": model.fingerprint()})


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return list(np.atleast_1d(seed.entropy).tolist()) + list(seed.spawn_key)
    return seed


def _as_rho(rho_points, d):
    if isinstance(rho_points, tuple) and len(rho_points) == 2 and np.ndim(rho_points[1]) == 1 \
            and np.ndim(rho_points[0]) == 2:
        pts, mass = rho_points
    else:
        pts = np.array([np.atleast_1d(p) for p, _ in rho_points], dtype=float)
        mass = np.array([m for _, m in rho_points], dtype=float)
    pts = np.asarray(pts, dtype=float).reshape(-1, d)
    mass = np.asarray(mass, dtype=float)
    if len(pts) == 0 or np.any(mass <= 0):
        raise InputError("rho needs at least one point and positive masses")
    return pts, mass


def default_rho(domain, n_points=64):
    """Uniform probability measure on a regular grid over the core."""
    per_axis = max(2, int(round(n_points ** (1.0 / domain.d))))
    pts = domain.grid(per_axis)
    return pts, np.full(len(pts), 1.0 / len(pts))


def semigroup_table(model, fields, points, delta, replicates, dt=None, seed=0):
    """Monte Carlo ``P_delta f(x)`` for every field and start point.

    All start points share the same ``replicates`` noise streams.  Returns
    ``(means, stderrs)``, each of shape ``(n_fields, n_points)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(points)
    x0 = np.repeat(points, replicates, axis=0)
    # path p = point (p // R), replicate (p % R): tile the R streams over points
    ends = simulate_endpoints(model, _interleave(x0, m, replicates), delta, dt, seed, tile=m)
    ends = _deinterleave(ends, m, replicates)
    means, errs = [], []
    for f in fields:
        v = f(ends.reshape(-1, model.d)).reshape(m, replicates)
        means.append(v.mean(axis=1))
        errs.append(v.std(axis=1, ddof=1) / math.sqrt(replicates))
    return np.array(means), np.array(errs)


def _interleave(x0, m, R):
    # rows ordered point-major -> tile-major (replicate fastest within each tile)
    return x0.reshape(m, R, -1).reshape(m * R, -1)


def _deinterleave(ends, m, R):
    return ends.reshape(m, R, -1)


class _MartingaleControl(Observer):
    """Accumulates the Brownian and compensated-jump martingale parts of ``f(X)``.

    Both parts have mean zero under the simulated dynamics, so subtracting
    them from ``f(X_delta)`` removes most of the Monte Carlo noise without
    changing the expectation beyond the time discretization.
    """

    def __init__(self, model, f, n_paths, jumps=True):
        self.f, self.model = f, model
        self.acc = np.zeros(n_paths)
        self.jumps = jumps and model.levy.intensity > 0
        self._table = None

    def _jump_integral(self, x):
        from .model_core import jump_integral
        if self.model.d > 1:
            return jump_integral(self.model.levy, self.f, x)
        if self._table is None:
            r = self.model.domain.r
            lo, hi = -4.0 * (r + 1.0), 4.0 * (r + 1.0)
            grid = np.linspace(lo, hi, 4001)
            self._table = (grid, jump_integral(self.model.levy, self.f, grid[:, None]))
        grid, vals = self._table
        return np.interp(x[:, 0], grid, vals)

    def on_step(self, idx, x_before, x_after, h, dW, t_end):
        inc = np.sum(self.f.grad(x_before) * dW, axis=-1)
        if self.jumps:
            inc = inc - np.ravel(np.asarray(h, dtype=float)) * self._jump_integral(x_before)
        self.acc[idx] += inc

    def on_jump(self, idx, x_minus, size, t):
        if self.jumps:
            self.acc[idx] += self.f.value(x_minus + size) - self.f.value(x_minus)


def estimate_semigroup(model, f, x, delta, replicates, dt=None, seed=0, control_variates=False):
    """Monte Carlo estimate of ``E[f(X_delta) | X_0 = x]`` with its standard error.

    With ``control_variates=True`` (``f`` must provide ``grad``) the
    discretized martingale ``sum grad f(X_i) . dW_i`` and the compensated
    jump sum are subtracted from every replicate.
    """
    if replicates < 2:
        raise InputError("replicates must be >= 2")
    if not control_variates:
        means, errs = semigroup_table(model, [f], np.atleast_1d(x)[None, :], delta, replicates, dt, seed)
        return float(means[0, 0]), float(errs[0, 0])
    x0 = np.repeat(np.atleast_1d(np.asarray(x, dtype=float))[None, :], replicates, axis=0)
    obs = _MartingaleControl(model, f, replicates)
    ends = simulate_endpoints(model, x0, delta, dt, seed, observer=obs)
    v = f.value(ends) - obs.acc
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(replicates))


def weak_distance(model_a, model_b, f, rho_points, delta, replicates, seed=0, dt=None):
    """``sum_i rho_i |P_delta^a f(x_i) - P_delta^b f(x_i)|`` with common random numbers.

    ``f`` may be a single field or a list; a list returns one distance per field.
    """
    fields = f if isinstance(f, (list, tuple)) else [f]
    pts, mass = _as_rho(rho_points, model_a.d)
    pa, _ = semigroup_table(model_a, fields, pts, delta, replicates, dt, seed)
    pb, _ = semigroup_table(model_b, fields, pts, delta, replicates, dt, seed)
    dist = np.abs(pa - pb) @ mass
    return dist if isinstance(f, (list, tuple)) else float(dist[0])


def equicontinuity_modulus(models, f, probe_points, gamma, delta, replicates, seed=0, dt=None):
    """Largest ``|P f(x) - P f(y)|`` over models and probe pairs with ``|x - y| < gamma``."""
    pts = np.atleast_2d(np.asarray(probe_points, dtype=float))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    close = (dist < gamma) & ~np.eye(len(pts), dtype=bool)
    if not close.any():
        return 0.0
    worst = 0.0
    for model in models:
        pf, _ = semigroup_table(model, [f], pts, delta, replicates, dt, seed)
        diff = np.abs(pf[0][:, None] - pf[0][None, :])
        worst = max(worst, float(diff[close].max()))
    return worst




# ---------------------------------------------------------------------------
# CSV with a one-line JSON header

def _write_csv(path, header, columns, rows):
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if not isinstance(v, (bool, np.bool_)) else str(int(v))
                              for v in row) + "\n")


def _read_csv(path):
    try:
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise InputError(f"{path}: missing JSON header line")
            header = json.loads(first[2:])
            columns = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return header, columns, data


def write_path_csv(skeleton, path):
    """Columns ``t, x_1..x_d, jump_flag``; the flag marks the row a jump lands on."""
    d = skeleton.states.shape[1]
    flags = np.concatenate([[False], skeleton.jump_flags])
    header = {"kind": "path", "model_hash": skeleton.model_hash, "dt": skeleton.dt,
              "seed": _seed_repr(skeleton.seed), "d": d}
    rows = (np.concatenate([[t], x, [f]]) for t, x, f in zip(skeleton.times, skeleton.states, flags))
    _write_csv(path, header, ["t"] + [f"x_{i + 1}" for i in range(d)] + ["jump_flag"], rows)


def write_series_csv(series, path):
    """Observation series in the same layout; ``jump_flag`` is always 0."""
    d = series.d
    header = {"kind": "observations", "delta": series.delta}
    header.update({k: v for k, v in series.meta.items() if k in ("model_hash", "dt", "seed")})
    t = np.arange(series.n + 1) * series.delta
    rows = (np.concatenate([[ti], x, [0]]) for ti, x in zip(t, series.observations))
    _write_csv(path, header, ["t"] + [f"x_{i + 1}" for i in range(d)] + ["jump_flag"], rows)


def read_series_csv(path, delta=None):
    """Read observations written by :func:`write_series_csv` or :func:`write_path_csv`."""
    header, columns, data = _read_csv(path)
    xcols = [i for i, c in enumerate(columns) if c.startswith("x_")]
    if not xcols:
        raise InputError(f"{path}: no x_ columns")
    if delta is None:
        delta = header.get("delta")
        if delta is None:
            t = data[:, 0]
            delta = float(t[1] - t[0]) if len(t) > 1 else None
    if delta is None:
        raise InputError(f"{path}: cannot infer the sampling interval")
    meta = {k: header[k] for k in ("model_hash", "dt", "seed") if k in header}
    return ObservationSeries(float(delta), data[:, xcols], meta)


__all__ = [
    "NoiseSource", "StackedTape", "Observer", "integrate", "PathSkeleton", "simulate_path", "replay",
    "simulate_endpoints", "ObservationSeries", "sample_stationary", "sample_observations",
    "default_rho", "default_test_fields", "semigroup_table", "estimate_semigroup",
    "weak_distance", "equicontinuity_modulus", "default_dt", "NoiseTape",
    "write_path_csv", "write_series_csv", "read_series_csv",
]
