"""Tensor-product Gauss-Legendre rules on the core box and the unit ball."""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.stats import qmc

from .errors import InputError


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre settings for integrals over the core box.

    ``order`` nodes are placed in each panel; ``panels`` panels per axis.
    With ``panels=None`` the panel count is chosen from the narrowest kernel
    width that has to be resolved, subject to ``max_nodes`` in total.
    """
    order: int = 32
    panels: int | None = None
    max_nodes: int = 200_000

    def __post_init__(self):
        if self.order < 2:
            raise InputError(f"quadrature order must be >= 2, got {self.order}")
        if self.panels is not None and self.panels < 1:
            raise InputError("panels must be a positive integer")

    def panels_for(self, r, d, min_width=None):
        if self.panels is not None:
            return self.panels
        wanted = 1 if min_width is None else math.ceil(2.0 * r / (4.0 * min_width))
        per_axis_cap = max(1, int((self.max_nodes ** (1.0 / d)) // self.order))
        return int(min(max(wanted, math.ceil(2.0 * r)), per_axis_cap, 64))


@lru_cache(maxsize=64)
def _legendre(order):
    return np.polynomial.legendre.leggauss(order)


def interval_rule(a, b, order=32, panels=1):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=32)
def _box_rule_cached(r, d, order, panels):
    x, w = interval_rule(-r, r, order, panels)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrid = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=-1), axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def box_rule(r, d, config=None, min_width=None):
    """Tensor rule on ``[-r, r]^d``; returns ``(nodes (Q, d), weights (Q,))``."""
    config = config or QuadratureConfig()
    panels = config.panels_for(r, d, min_width)
    return _box_rule_cached(float(r), int(d), int(config.order), int(panels))


@lru_cache(maxsize=16)
def _ball_rule_cached(d, r_box, order):
    # points of the closed unit Euclidean ball, clipped to the box [-r_box, r_box]^d
    if d == 1:
        a = min(1.0, r_box)
        nodes, weights = interval_rule(-a, a, order, 2)
        return nodes[:, None], weights
    rho, wrho = interval_rule(0.0, 1.0, order, 1)
    if d == 2:
        m = 2 * order
        phi = 2.0 * np.pi * np.arange(m) / m
        u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        wu = np.full(m, 2.0 * np.pi / m)
    elif d == 3:
        ct, wct = _legendre(order)
        m = 2 * order
        phi = 2.0 * np.pi * np.arange(m) / m
        st = np.sqrt(1.0 - ct ** 2)
        u = np.stack([
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(ct, m),
        ], axis=-1)
        wu = np.outer(wct, np.full(m, 2.0 * np.pi / m)).ravel()
    else:
        # quasi-Monte Carlo directions; sphere area times uniform weights
        g = qmc.Sobol(d, scramble=True, seed=12345).random(2 ** 12)
        from scipy.special import ndtri, gammaln
        z = ndtri(np.clip(g, 1e-12, 1 - 1e-12))
        u = z / np.linalg.norm(z, axis=1, keepdims=True)
        area = 2.0 * np.pi ** (d / 2.0) / np.exp(gammaln(d / 2.0))
        wu = np.full(len(u), area / len(u))
    nodes = (rho[:, None, None] * u[None, :, :]).reshape(-1, d)
    weights = (wrho[:, None] * rho[:, None] ** (d - 1) * wu[None, :]).ravel()
    inside = np.max(np.abs(nodes), axis=1) <= r_box
    return nodes[inside], weights[inside]


def ball_rule(d, r_box, order=32):
    """Rule on the unit Euclidean ball intersected with the box ``[-r_box, r_box]^d``."""
    return _ball_rule_cached(int(d), float(r_box), int(order))
