"""Double-loop stochastic proximal DC method with momentum.

Each outer step builds the proximal subproblem around ``x_t`` with the
current estimate of ``grad h(x_t)``, solves it exactly or by SGD, and moves
``x_{t+1} = x_t - eta0 (x_t - x~_{t+1}) / gamma``. With ``eta0 = gamma`` this
is the plain proximal DC step ``x_{t+1} = x~_{t+1}``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import momentum as mom
from .core import InvalidConfig, RngStream, as_vec, norm2, stream_id
from .inner_solver import Subproblem, solve_exact, solve_sgd
from .metrics import DivergedError, RunResult, compute_trace, gradient_surrogate
from .problems import DcProblem

__all__ = [
    "DoubleLoopConfig",
    "auto_double_params",
    "draw_x0",
    "gradient_surrogate",
    "run_double_loop",
]


SQRT8 = math.sqrt(8.0)


@dataclass(frozen=True)
class DoubleLoopConfig:
    gamma: float
    T: int
    eta0: float | None = None
    alpha: Union[float, Callable[[int], float]] = 1.0
    estimator: str = "none"
    inner_mode: str = "exact"
    inner_K: int = 100
    seed: int = 0
    run_id: str = ""

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidConfig(f"gamma must be positive, got {self.gamma}")
        if self.T < 0:
            raise InvalidConfig(f"T must be nonnegative, got {self.T}")
        eta0 = self.step
        if eta0 <= 0:
            raise InvalidConfig(f"eta0 must be positive, got {eta0}")
        if eta0 > self.gamma * (1 + 1e-12):
            raise InvalidConfig(f"eta0={eta0} exceeds gamma={self.gamma}")
        if self.inner_mode not in ("exact", "sgd"):
            raise InvalidConfig(f"inner mode must be 'exact' or 'sgd', got {self.inner_mode!r}")
        mom.Estimator.parse(self.estimator)

    @property
    def step(self) -> float:
        return self.gamma if self.eta0 is None else self.eta0


def _ratio(num: float, den: float) -> float:
    return math.inf if den == 0 else num / den


def auto_double_params(problem: DcProblem, estimator, T: int, phi0: float,
                       const: float = SQRT8) -> tuple[float, float]:
    """Theory-tuned ``(gamma, alpha)`` for the double loop (``eta0 = gamma``).

    Heavy-ball (and plain): ``gamma = min(1/(c L_h), sqrt(phi0 / (L_h s2 T)))``
    and ``alpha = c L_h gamma``. MVR: ``gamma = min(1/(8 L_h),
    (phi0 / (L_h^2 s2 T))^(1/3))`` and ``alpha = (8 L_h gamma)^2``. ``s2`` is
    the total noise variance ``d sigma^2``.
    """
    kind = mom.Estimator.parse(estimator)
    L_h = problem.L_h
    s2 = problem.d * problem.sigma**2
    T = max(int(T), 1)
    if kind is mom.Estimator.MVR:
        gamma = min(_ratio(1.0, 8 * L_h), _ratio(phi0, L_h**2 * s2 * T) ** (1 / 3))
        alpha = (8 * L_h * gamma) ** 2
    else:
        gamma = min(_ratio(1.0, const * L_h), math.sqrt(_ratio(phi0, L_h * s2 * T)))
        alpha = const * L_h * gamma
    if not math.isfinite(gamma):
        raise InvalidConfig("auto stepsize is unbounded (L_h = 0 and sigma = 0)")
    if kind is mom.Estimator.PLAIN:
        alpha = 1.0
    return gamma, min(alpha, 1.0)


def draw_x0(problem: DcProblem, seed: int, run_id: str = "") -> np.ndarray:
    """Standard Gaussian start point from the run's dedicated stream."""
    return RngStream(seed, stream_id(run_id, "x0")).normal((problem.d,))


def _alpha_at(alpha, t: int) -> float:
    return alpha(t) if callable(alpha) else alpha


def run_double_loop(problem: DcProblem, cfg: DoubleLoopConfig, x0=None) -> RunResult:
    """Run ``cfg.T`` outer steps and return the full trace.

    Raises :class:`DivergedError` (carrying the partial result) when an
    iterate stops being finite.
    """
    started = time.perf_counter()
    kind = mom.Estimator.parse(cfg.estimator)
    x0 = draw_x0(problem, cfg.seed, cfg.run_id) if x0 is None else as_vec(x0).copy()
    if x0.shape != (problem.d,):
        raise InvalidConfig(f"x0 has shape {x0.shape}, expected ({problem.d},)")
    rng_h = RngStream(cfg.seed, stream_id(cfg.run_id, "h"))
    rng_inner = RngStream(cfg.seed, stream_id(cfg.run_id, "inner"))
    gamma, eta0, T = cfg.gamma, cfg.step, cfg.T

    xs = np.empty((T + 1, problem.d))
    ms = np.empty((T, problem.d))
    inner_delta = np.zeros(T)
    xs[0] = x0
    x = x0
    state = None
    failed_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            if state is None:
                state = mom.init(problem, x, rng_h, kind, _alpha_at(cfg.alpha, 0))
            else:
                state = mom.update(state, x, problem, rng_h, cfg.alpha)
            ms[t] = state.m
            sub = Subproblem(gamma, x, state.m, problem)
            if cfg.inner_mode == "exact":
                x_tilde = solve_exact(sub)
            else:
                x_tilde, inner_delta[t] = solve_sgd(sub, cfg.inner_K, rng_inner)
            x_new = x_tilde if eta0 == gamma else x - (eta0 / gamma) * (x - x_tilde)
            if not np.all(np.isfinite(x_new)):
                failed_at = t
                break
            xs[t + 1] = x_new
            x = x_new

    n = T if failed_at is None else failed_at
    xs, ms, inner_delta = xs[: n + 1], ms[:n], inner_delta[:n]
    alpha_const = state.alpha if state is not None else 1.0
    trace = compute_trace(problem, xs, gamma, ms=ms, potential="double", eta0=eta0,
                          alpha=alpha_const)
    rng_out = RngStream(cfg.seed, stream_id(cfg.run_id, "output"))
    x_out = xs[rng_out.integers(0, n)] if n > 0 else xs[0]
    with np.errstate(over="ignore", invalid="ignore"):
        grad_f_sq = norm2(problem.grad_f(xs))
    result = RunResult(
        x_final=xs[-1], x_out=x_out, trace=trace, iterates=xs,
        wall_time=time.perf_counter() - started, seed=cfg.seed,
        diverged=failed_at is not None, grad_f_sq=grad_f_sq,
        params={"solver": "double", "gamma": gamma, "eta0": eta0, "alpha": alpha_const,
                "estimator": kind.value, "inner_delta": inner_delta},
    )
    if failed_at is not None:
        raise DivergedError(f"non-finite iterate at step {failed_at + 1}", result)
    return result
