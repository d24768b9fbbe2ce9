"""Estimators of ``grad h(x_t)``: plain stochastic gradient, heavy-ball and MVR.

States are immutable; every update returns a new :class:`MomentumState`.
Arrays may carry a leading replicate axis, which the Monte-Carlo checks use
to advance many independent chains in lock-step.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np

from .core import InvalidConfig, RngStream, as_vec
from .problems import DcProblem

__all__ = [
    "Estimator",
    "MomentumState",
    "init",
    "update",
    "update_heavy_ball",
    "update_mvr",
    "update_plain",
]

Alpha = Union[float, Callable[[int], float]]


class Estimator(str, Enum):
    PLAIN = "none"
    HEAVY_BALL = "heavy_ball"
    MVR = "mvr"

    @classmethod
    def parse(cls, value) -> "Estimator":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise InvalidConfig(
                f"unknown estimator {value!r}; expected none, heavy_ball or mvr") from None


@dataclass(frozen=True)
class MomentumState:
    m: np.ndarray
    kind: Estimator
    alpha: float
    prev_x: np.ndarray
    t: int = 0


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise InvalidConfig(f"momentum weight must lie in (0, 1], got {alpha}")
    return alpha


def _draw(problem: DcProblem, rng: RngStream, *arrays) -> np.ndarray:
    shapes = {a.shape for a in arrays}
    shape = shapes.pop() if len(shapes) == 1 else np.broadcast_shapes(*(a.shape for a in arrays))
    return problem.sample_h_noise(rng, shape)


def init(problem: DcProblem, x0, rng: RngStream, kind="none", alpha: float = 1.0) -> MomentumState:
    """Start from one stochastic gradient at ``x0``."""
    kind = Estimator.parse(kind)
    alpha = 1.0 if kind is Estimator.PLAIN else _check_alpha(alpha)
    x0 = as_vec(x0)
    m = problem.h_grad_stoch(x0, rng)
    return MomentumState(m=m, kind=kind, alpha=alpha, prev_x=x0)


def update_plain(state: MomentumState, x_next, problem: DcProblem, rng: RngStream) -> MomentumState:
    x_next = as_vec(x_next)
    xi = _draw(problem, rng, x_next, state.m)
    return MomentumState(problem.h_grad_sample(x_next, xi), state.kind, 1.0, x_next, state.t + 1)


def update_heavy_ball(state: MomentumState, x_next, alpha: float, problem: DcProblem,
                      rng: RngStream) -> MomentumState:
    """``m <- (1 - alpha) m + alpha * grad h(x_next, xi)``."""
    alpha = _check_alpha(alpha)
    x_next = as_vec(x_next)
    xi = _draw(problem, rng, x_next, state.m)
    fresh = problem.h_grad_sample(x_next, xi)
    m = (1.0 - alpha) * state.m + alpha * fresh
    return MomentumState(m, state.kind, alpha, x_next, state.t + 1)


def update_mvr(state: MomentumState, x_next, alpha: float, problem: DcProblem,
               rng: RngStream) -> MomentumState:
    """Momentum with the same-sample correction ``grad h(x_next, xi) - grad h(x_prev, xi)``.

    One sample ``xi`` is drawn and used for both evaluations.
    """
    alpha = _check_alpha(alpha)
    x_next = as_vec(x_next)
    xi = _draw(problem, rng, x_next, state.prev_x, state.m)
    g_new = problem.h_grad_sample(x_next, xi)
    g_old = problem.h_grad_sample(state.prev_x, xi)
    m = (1.0 - alpha) * (state.m + g_new - g_old) + alpha * g_new
    return MomentumState(m, state.kind, alpha, x_next, state.t + 1)


def update(state: MomentumState, x_next, problem: DcProblem, rng: RngStream,
           alpha: Alpha | None = None) -> MomentumState:
    """Dispatch on ``state.kind``; ``alpha`` may be a constant or a schedule ``t -> alpha_t``."""
    if state.kind is Estimator.PLAIN:
        return update_plain(state, x_next, problem, rng)
    if alpha is None:
        a = state.alpha
    elif callable(alpha):
        a = alpha(state.t)
    else:
        a = alpha
    if state.kind is Estimator.HEAVY_BALL:
        return update_heavy_ball(state, x_next, a, problem, rng)
    return update_mvr(state, x_next, a, problem, rng)
