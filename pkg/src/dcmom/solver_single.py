"""Single-loop stochastic DC method on the Moreau-smoothed objective.

Only ``g`` is smoothed: the method minimizes ``f_gamma = g_gamma - h`` by
tracking ``prox_{gamma g}(x_t)`` with one stochastic subgradient step per
iteration and pairing it with a momentum estimate of ``grad h``.

Also hosts the reference recursion of the earlier scheme that smooths both
parts, specialised to quadratics, which serves as the second lower-bound
construction.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from . import momentum as mom
from .core import InvalidConfig, RngStream, as_vec, norm2, stream_id
from .metrics import DivergedError, RunResult, compute_trace, moreau_grad
from .problems import DcProblem, QuadraticDc
from .solver_double import SQRT8, draw_x0

__all__ = [
    "SingleLoopConfig",
    "SingleLoopState",
    "auto_single_params",
    "moreau_grad",
    "run_single_loop",
    "run_smag_quadratic",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SingleLoopConfig:
    gamma: float
    eta0: float
    eta1: float
    T: int
    alpha: Union[float, Callable[[int], float]] = 1.0
    estimator: str = "none"
    prox_tracking: str = "sgd"
    seed: int = 0
    run_id: str = ""

    def __post_init__(self):
        for name in ("gamma", "eta0", "eta1"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.T < 0:
            raise InvalidConfig(f"T must be nonnegative, got {self.T}")
        if self.prox_tracking not in ("sgd", "exact"):
            raise InvalidConfig(f"prox tracking must be 'sgd' or 'exact', got {self.prox_tracking!r}")
        mom.Estimator.parse(self.estimator)
        if self.eta1 > self.gamma / 2:
            log.debug("eta1=%g > gamma/2=%g: outside the analysed step-size regime",
                        self.eta1, self.gamma / 2)


@dataclass(frozen=True)
class SingleLoopState:
    x: np.ndarray
    xg: np.ndarray
    momentum: mom.MomentumState


def auto_single_params(problem: DcProblem, estimator, T: int, phi0: float, gamma: float,
                       const: float = SQRT8) -> tuple[float, float, float]:
    """Theory-tuned ``(eta0, eta1, alpha)`` for smoothing parameter ``gamma``.

    ``eta1 = 4 eta0`` and ``eta0 <= min(1/(2 L_gamma), 1/(c L_h), gamma/8)``
    together with the noise-balancing term. Heavy-ball uses
    ``alpha = c L_h eta0``, MVR ``alpha = (8 L_h eta0)^2``. The ``g``-noise
    constant is the total variance ``d sigma_g^2`` of its oracle.
    """
    kind = mom.Estimator.parse(estimator)
    L_h = problem.L_h
    L_gamma = L_h + 1.0 / gamma
    s2 = problem.d * problem.sigma**2
    m2 = problem.d * problem.sigma_g**2
    T = max(int(T), 1)

    def inv(v):
        return math.inf if v == 0 else 1.0 / v

    caps = [1.0 / (2 * L_gamma), gamma / 8]
    if kind is mom.Estimator.MVR:
        caps.append(inv(8 * L_h))
        if m2 > 0:
            caps.append(math.sqrt(phi0 * gamma / (T * m2)))
        if L_h > 0 and s2 > 0:
            caps.append((phi0 / (T * L_h**2 * s2)) ** (1 / 3))
        eta0 = min(caps)
        alpha = (8 * L_h * eta0) ** 2
    else:
        caps.append(inv(const * L_h))
        noise = 48 * m2 + const * L_h * s2
        if noise > 0:
            caps.append(math.sqrt(phi0 / (noise * T)))
        eta0 = min(caps)
        alpha = const * L_h * eta0
    if kind is mom.Estimator.PLAIN:
        alpha = 1.0
    return eta0, 4 * eta0, min(max(alpha, 1e-300), 1.0)


def _alpha_at(alpha, t: int) -> float:
    return alpha(t) if callable(alpha) else alpha


def run_single_loop(problem: DcProblem, cfg: SingleLoopConfig, x0=None, xg0=None) -> RunResult:
    """Run ``cfg.T`` iterations; ``xg`` starts at ``x0`` unless given.

    With ``prox_tracking="exact"`` the tracking step is replaced by the exact
    prox, which isolates the outer update for the descent checks.
    """
    started = time.perf_counter()
    kind = mom.Estimator.parse(cfg.estimator)
    x0 = draw_x0(problem, cfg.seed, cfg.run_id) if x0 is None else as_vec(x0).copy()
    xg = x0.copy() if xg0 is None else as_vec(xg0).copy()
    rng_h = RngStream(cfg.seed, stream_id(cfg.run_id, "h"))
    rng_g = RngStream(cfg.seed, stream_id(cfg.run_id, "g"))
    gamma, eta0, eta1, T = cfg.gamma, cfg.eta0, cfg.eta1, cfg.T

    xs = np.empty((T + 1, problem.d))
    ms = np.empty((T, problem.d))
    xgs = np.empty((T, problem.d))
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
            if cfg.prox_tracking == "exact":
                xg = problem.prox_g(x, gamma)
            else:
                xg = xg - eta1 * (problem.g_subgrad_stoch(xg, rng_g) + (xg - x) / gamma)
            x_new = x - eta0 * ((x - xg) / gamma - state.m)
            ms[t] = state.m
            xgs[t] = xg
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(xg))):
                failed_at = t
                break
            xs[t + 1] = x_new
            x = x_new

    n = T if failed_at is None else failed_at
    xs, ms, xgs = xs[: n + 1], ms[:n], xgs[:n]
    alpha_const = state.alpha if state is not None else 1.0
    trace = compute_trace(problem, xs, gamma, ms=ms, xgs=xgs, potential="single",
                          eta0=eta0, eta1=eta1, alpha=alpha_const)
    rng_out = RngStream(cfg.seed, stream_id(cfg.run_id, "output"))
    x_out = xs[rng_out.integers(0, n)] if n > 0 else xs[0]
    with np.errstate(over="ignore", invalid="ignore"):
        grad_f_sq = norm2(problem.grad_f(xs))
    result = RunResult(
        x_final=xs[-1], x_out=x_out, trace=trace, iterates=xs,
        wall_time=time.perf_counter() - started, seed=cfg.seed,
        diverged=failed_at is not None, grad_f_sq=grad_f_sq,
        params={"solver": "single", "gamma": gamma, "eta0": eta0, "eta1": eta1,
                "alpha": alpha_const, "estimator": kind.value},
    )
    if failed_at is not None:
        raise DivergedError(f"non-finite iterate at step {failed_at + 1}", result)
    return result


def _schedule(v: float | Sequence[float], T: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(T, float(arr))
    if arr.shape != (T,):
        raise InvalidConfig(f"{name} schedule has length {arr.size}, expected {T}")
    return arr


def run_smag_quadratic(L: float, a: float, gamma, eta0, eta1, sigma: float, T: int,
                       seed: int = 0, d: int = 1, x0=None, run_id: str = "") -> RunResult:
    """The both-parts-smoothed recursion on ``g = (L/2)|x|^2``, ``h = (a/2)|x|^2``::

        xg' = xg - eta1 (L xg + (xg - x) / gamma)
        xh' = xh - eta1 (a xh + xi + (xh - x) / gamma)
        x'  = x - (eta0 / gamma) (xh' - xg')

    Step sizes may be constants or length-``T`` schedules. Both inner
    iterates start at ``x0``.
    """
    started = time.perf_counter()
    problem = QuadraticDc(L, a, sigma, d)
    gammas = _schedule(gamma, T, "gamma")
    eta0s = _schedule(eta0, T, "eta0")
    eta1s = _schedule(eta1, T, "eta1")
    if T and (np.any(gammas <= 0) or np.any(eta0s <= 0) or np.any(eta1s <= 0)):
        raise InvalidConfig("step sizes must be positive")
    x0 = draw_x0(problem, seed, run_id) if x0 is None else as_vec(x0).copy()
    rng_h = RngStream(seed, stream_id(run_id, "h"))

    xs = np.empty((T + 1, d))
    xgs = np.empty((T, d))
    xs[0] = x0
    x, xg, xh = x0, x0.copy(), x0.copy()
    failed_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            g_, e0, e1 = gammas[t], eta0s[t], eta1s[t]
            xi = problem.sample_h_noise(rng_h, (d,))
            xg = xg - e1 * (L * xg + (xg - x) / g_)
            xh = xh - e1 * (a * xh + xi + (xh - x) / g_)
            x_new = x - (e0 / g_) * (xh - xg)
            xgs[t] = xg
            if not np.all(np.isfinite(x_new)):
                failed_at = t
                break
            xs[t + 1] = x_new
            x = x_new

    n = T if failed_at is None else failed_at
    xs, xgs = xs[: n + 1], xgs[:n]
    trace_gamma = float(gammas[0]) if T else (float(gamma) if np.ndim(gamma) == 0 else 1.0)
    trace = compute_trace(problem, xs, trace_gamma, xgs=xgs)
    rng_out = RngStream(seed, stream_id(run_id, "output"))
    x_out = xs[rng_out.integers(0, n)] if n > 0 else xs[0]
    with np.errstate(over="ignore", invalid="ignore"):
        grad_f_sq = (L - a) ** 2 * norm2(xs)
    result = RunResult(
        x_final=xs[-1], x_out=x_out, trace=trace, iterates=xs,
        wall_time=time.perf_counter() - started, seed=seed,
        diverged=failed_at is not None, grad_f_sq=grad_f_sq,
        params={"solver": "smag_quadratic", "gamma": trace_gamma, "L": L, "a": a},
    )
    if failed_at is not None:
        raise DivergedError(f"non-finite iterate at step {failed_at + 1}", result)
    return result
