"""Inexact solves of the strongly convex proximal subproblem.

The subproblem built at outer step ``t`` is

    F(x) = g(x) + |x - anchor|^2 / (2 gamma) - <linear, x - anchor>

(the constant ``-h(anchor, xi)`` is dropped). Its exact minimizer is
``prox_{gamma g}(anchor + gamma * linear)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidConfig, NumericFailure, RngStream, as_vec, norm2
from .problems import DcProblem

__all__ = ["Subproblem", "solve_exact", "solve_exact_quadratic", "solve_sgd"]


@dataclass(frozen=True)
class Subproblem:
    gamma: float
    anchor: np.ndarray
    linear: np.ndarray
    problem: DcProblem

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidConfig(f"gamma must be positive, got {self.gamma}")

    def value(self, x):
        x = as_vec(x)
        return (self.problem.g_value(x) + norm2(x - self.anchor) / (2.0 * self.gamma)
                - np.sum(self.linear * (x - self.anchor), axis=-1))

    def grad(self, x, rng: RngStream | None = None):
        x = as_vec(x)
        g = self.problem.g_grad(x) if rng is None else self.problem.g_subgrad_stoch(x, rng)
        return g + (x - self.anchor) / self.gamma - self.linear


def solve_exact_quadratic(sub: Subproblem, L: float) -> np.ndarray:
    """Minimizer when ``g = (L/2)|x|^2``: ``(anchor/gamma + linear) / (L + 1/gamma)``."""
    return (sub.anchor / sub.gamma + sub.linear) / (L + 1.0 / sub.gamma)


def solve_exact(sub: Subproblem) -> np.ndarray:
    return sub.problem.prox_g(sub.anchor + sub.gamma * sub.linear, sub.gamma)


def solve_sgd(sub: Subproblem, K: int, rng: RngStream, x_init=None,
              c: float = 1.0, return_path: bool = False):
    """Run ``K`` SGD steps with stepsize ``2 gamma / (k + 1)`` at step ``k = 1..K``.

    Returns the average of the last ``ceil(K/2)`` iterates and a certified
    tolerance: the realized gap divided by ``gamma`` when the subproblem has a
    closed-form minimizer, else ``c * max(log K, 1) / K``. With
    ``return_path`` the raw iterates are returned as a third element.
    """
    if K < 1:
        raise InvalidConfig(f"K must be at least 1, got {K}")
    x = as_vec(sub.anchor if x_init is None else x_init).copy()
    keep_from = K - (K + 1) // 2
    acc = np.zeros_like(x)
    path = [x.copy()] if return_path else None
    for k in range(1, K + 1):
        step = 2.0 * sub.gamma / (k + 1)
        x = x - step * sub.grad(x, rng)
        if not np.all(np.isfinite(x)):
            raise NumericFailure(f"inner SGD diverged at step {k}")
        if k > keep_from:
            acc += x
        if path is not None:
            path.append(x.copy())
    out = acc / (K - keep_from)

    if sub.problem.has_closed_form_prox:
        x_star = solve_exact(sub)
        gap = float(np.max(sub.value(out) - sub.value(x_star)))
        delta = max(gap, 0.0) / sub.gamma
    else:
        delta = c * max(math.log(K), 1.0) / K
    if return_path:
        return out, delta, np.array(path)
    return out, delta
