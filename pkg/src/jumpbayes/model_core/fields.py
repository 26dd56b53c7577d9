"""Scalar test fields with gradients and Hessians, and the process generator."""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..quadrature import QuadratureConfig, box_rule


@dataclass(frozen=True)
class SmoothField:
    """Scalar field on R^d with value, gradient and Hessian evaluators.

    Each evaluator takes points of shape ``(..., d)``.
    """
    value: Callable
    grad: Callable
    hess: Callable
    name: str = "field"
    lipschitz: float = float("inf")

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def constant_field(c):
    return SmoothField(
        value=lambda x: np.full(x.shape[:-1], float(c)),
        grad=lambda x: np.zeros(x.shape),
        hess=lambda x: np.zeros(x.shape + (x.shape[-1],)),
        name=f"const({c})", lipschitz=0.0)


def squared_norm_field():
    return SmoothField(
        value=lambda x: np.sum(x ** 2, axis=-1),
        grad=lambda x: 2.0 * x,
        hess=lambda x: 2.0 * np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],)),
        name="sqnorm")


def coordinate_field(i=0):
    def grad(x):
        g = np.zeros(x.shape)
        g[..., i] = 1.0
        return g
    return SmoothField(
        value=lambda x: x[..., i].copy(),
        grad=grad,
        hess=lambda x: np.zeros(x.shape + (x.shape[-1],)),
        name=f"x{i + 1}", lipschitz=1.0)


def tanh_ridge(alpha, beta=0.0):
    """``tanh(alpha . x + beta)``; Lipschitz with constant ``|alpha|_2``."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))

    def value(x):
        return np.tanh(x @ alpha + beta)

    def grad(x):
        t = np.tanh(x @ alpha + beta)
        return (1.0 - t ** 2)[..., None] * alpha

    def hess(x):
        t = np.tanh(x @ alpha + beta)
        return (-2.0 * t * (1.0 - t ** 2))[..., None, None] * np.outer(alpha, alpha)

    return SmoothField(value, grad, hess, name=f"tanh({list(alpha)},{beta})",
                       lipschitz=float(np.linalg.norm(alpha)))


def default_test_fields(d):
    """Small fixed dictionary of tanh ridge functions."""
    fields = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        fields += [tanh_ridge(e, 0.0), tanh_ridge(2.0 * e, -1.0), tanh_ridge(2.0 * e, 1.0)]
    if d > 1:
        fields.append(tanh_ridge(np.ones(d) / np.sqrt(d), 0.0))
    return fields


def jump_integral(levy, f, x, quad=None):
    """``int [f(x + z) - f(x)] nu(dz)`` for each row of ``x`` by box quadrature."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if levy.intensity == 0.0:
        return np.zeros(len(x))
    nodes, weights = box_rule(levy.domain.r, levy.domain.d, quad, levy.min_width)
    w = weights * levy.density(nodes)
    fx = f.value(x)
    shifted = f.value(x[:, None, :] + nodes[None, :, :])
    return shifted @ w - fx * w.sum()


def apply_generator(model, f, x, quad=None):
    """Generator of the jump diffusion applied to ``f`` at ``x``.

    ``b.grad f + 0.5 lap f + int [f(x+z) - f(x) - 1{|z|<=1} z.grad f(x)] nu(dz)``,
    with the jump integral evaluated by product quadrature over the core box.
    """
    quad = quad or QuadratureConfig()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    g = f.grad(x2)
    lap = np.trace(f.hess(x2), axis1=-2, axis2=-1)
    out = np.sum(model.drift_at(x2) * g, axis=-1) + 0.5 * lap
    if model.levy.intensity > 0:
        out = out + jump_integral(model.levy, f, x2, quad) - g @ model.compensator
    return float(out[0]) if single else out
