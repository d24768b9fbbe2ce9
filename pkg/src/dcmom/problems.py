"""DC problem instances ``f = g - h``.

Every instance exposes deterministic values and gradients, an unbiased
stochastic gradient oracle for ``h`` (additive Gaussian noise), an optional
noisy subgradient oracle for ``g``, and a proximal map for ``g`` (closed form
when known, otherwise :func:`prox_numeric`).

All evaluation methods broadcast over leading axes: ``x`` may be ``(d,)`` or
``(..., d)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .core import DimensionError, InvalidConfig, NumericFailure, RngStream, as_vec, norm2

__all__ = [
    "DcProblem",
    "L1QuadraticDc",
    "QuadraticDc",
    "make_l1_quadratic",
    "make_problem",
    "make_prop1_counterexample",
    "make_prop2_counterexample",
    "make_quadratic",
    "prox_numeric",
    "prop1_curvature",
    "prop2_curvature",
]


class DcProblem:
    """Base class for ``f = g - h`` with ``g, h`` convex.

    Subclasses implement ``g_value``, ``h_value``, ``g_grad`` and ``h_grad``
    and may override ``prox_g``. Attributes:

    d : dimension
    L_g, L_h : smoothness constants (``inf`` for nonsmooth ``g``)
    sigma : std of the additive noise on ``h``'s gradient, per coordinate
    sigma_g : std of the additive noise on ``g``'s subgradient
    M : second-moment bound of ``h``'s stochastic subgradient, ``inf`` if none
    f_star : minimum of ``f`` or ``None`` when unknown / unbounded
    """

    name = "dc"
    has_closed_form_prox = False

    def __init__(self, d: int, L_g: float, L_h: float, sigma: float,
                 sigma_g: float = 0.0, M: float = math.inf, f_star: float | None = None):
        if d < 1:
            raise DimensionError(f"dimension must be positive, got {d}")
        if sigma < 0 or sigma_g < 0:
            raise InvalidConfig("noise levels must be nonnegative")
        self.d = int(d)
        self.L_g = float(L_g)
        self.L_h = float(L_h)
        self.sigma = float(sigma)
        self.sigma_g = float(sigma_g)
        self.M = float(M)
        self.f_star = f_star

    # deterministic parts -------------------------------------------------
    def g_value(self, x):
        raise NotImplementedError

    def h_value(self, x):
        raise NotImplementedError

    def g_grad(self, x):
        raise NotImplementedError

    def h_grad(self, x):
        raise NotImplementedError

    def f_value(self, x):
        return self.g_value(x) - self.h_value(x)

    def grad_f(self, x):
        return self.g_grad(x) - self.h_grad(x)

    # stochastic oracles --------------------------------------------------
    def sample_h_noise(self, rng: RngStream, shape) -> np.ndarray:
        return rng.normal(shape, self.sigma)

    def h_grad_sample(self, x, xi):
        """Gradient of ``h(., xi)`` at ``x`` for an already drawn sample."""
        return self.h_grad(x) + xi

    def h_grad_stoch(self, x, rng: RngStream):
        x = as_vec(x)
        return self.h_grad_sample(x, self.sample_h_noise(rng, x.shape))

    def g_subgrad_stoch(self, x, rng: RngStream):
        x = as_vec(x)
        g = self.g_grad(x)
        if self.sigma_g > 0:
            g = g + rng.normal(x.shape, self.sigma_g)
        return g

    # proximal map and envelope ------------------------------------------
    def prox_g(self, v, gamma: float):
        """``argmin_y g(y) + |y - v|^2 / (2 gamma)``."""
        v = as_vec(v)
        if v.ndim == 1:
            return prox_numeric(self.g_value, v, gamma, g_subgrad=self.g_grad)
        flat = v.reshape(-1, v.shape[-1])
        out = np.stack([prox_numeric(self.g_value, row, gamma, g_subgrad=self.g_grad)
                        for row in flat])
        return out.reshape(v.shape)

    def g_envelope(self, x, gamma: float):
        """Moreau envelope of ``g`` with parameter ``gamma``."""
        x = as_vec(x)
        p = self.prox_g(x, gamma)
        return self.g_value(p) + norm2(p - x) / (2.0 * gamma)

    def f_gamma(self, x, gamma: float):
        return self.g_envelope(x, gamma) - self.h_value(x)

    def f_gamma_star(self, gamma: float) -> float | None:
        return None


class QuadraticDc(DcProblem):
    """``g = (L/2)|x|^2``, ``h = (a/2)|x|^2`` with Gaussian noise on ``grad h``."""

    name = "quadratic"
    has_closed_form_prox = True

    def __init__(self, L: float, a: float, sigma: float, d: int, sigma_g: float = 0.0):
        if L < 0 or a < 0:
            raise InvalidConfig(f"curvatures must be nonnegative, got L={L}, a={a}")
        f_star = 0.0 if a <= L else None
        super().__init__(d, L_g=L, L_h=a, sigma=sigma, sigma_g=sigma_g, f_star=f_star)
        self.L = float(L)
        self.a = float(a)

    def g_value(self, x):
        return 0.5 * self.L * norm2(x)

    def h_value(self, x):
        return 0.5 * self.a * norm2(x)

    def g_grad(self, x):
        return self.L * as_vec(x)

    def h_grad(self, x):
        return self.a * as_vec(x)

    def prox_g(self, v, gamma: float):
        return as_vec(v) / (1.0 + gamma * self.L)

    def f_gamma_star(self, gamma: float) -> float | None:
        # g_gamma = |x|^2 L / (2 (1 + gamma L)); bounded below iff its curvature dominates a
        return 0.0 if self.L / (1.0 + gamma * self.L) >= self.a else None

    def __repr__(self) -> str:
        return f"QuadraticDc(L={self.L}, a={self.a}, sigma={self.sigma}, d={self.d})"


class L1QuadraticDc(DcProblem):
    """``g = lam |x|_1 + (L/2)|x|^2``, ``h = (a/2)|x|^2``.

    A nonsmooth ``g`` used to exercise the numeric prox. With
    ``closed_form=False`` the soft-threshold formula is hidden and
    :func:`prox_numeric` is used instead.
    """

    name = "l1_quadratic"

    def __init__(self, lam: float, L: float, a: float, sigma: float, d: int,
                 closed_form: bool = True):
        if lam < 0 or L < 0 or a < 0:
            raise InvalidConfig("lam, L and a must be nonnegative")
        super().__init__(d, L_g=math.inf, L_h=a, sigma=sigma,
                         f_star=0.0 if a <= L else None)
        self.lam, self.L, self.a = float(lam), float(L), float(a)
        self.has_closed_form_prox = closed_form

    def g_value(self, x):
        x = as_vec(x)
        return self.lam * np.sum(np.abs(x), axis=-1) + 0.5 * self.L * norm2(x)

    def h_value(self, x):
        return 0.5 * self.a * norm2(x)

    def g_grad(self, x):
        x = as_vec(x)
        return self.lam * np.sign(x) + self.L * x

    def h_grad(self, x):
        return self.a * as_vec(x)

    def prox_g(self, v, gamma: float):
        if not self.has_closed_form_prox:
            return super().prox_g(v, gamma)
        v = as_vec(v)
        shrunk = np.sign(v) * np.maximum(np.abs(v) - gamma * self.lam, 0.0)
        return shrunk / (1.0 + gamma * self.L)

    def f_gamma_star(self, gamma: float) -> float | None:
        return 0.0 if self.L / (1.0 + gamma * self.L) >= self.a else None


def prox_numeric(g_value: Callable, center, gamma: float, budget: int = 10_000,
                 g_subgrad: Callable | None = None, tol: float = 1e-15) -> np.ndarray:
    """Minimize ``g(y) + |y - center|^2 / (2 gamma)`` by subgradient descent.

    The step starts at ``gamma`` and is halved whenever a trial step fails to
    decrease the objective, which gives linear convergence on smooth ``g``
    and still settles on kinks of piecewise-linear ``g``. Without
    ``g_subgrad``, central differences of ``g_value`` are used.
    """
    if gamma <= 0:
        raise InvalidConfig(f"gamma must be positive, got {gamma}")
    c = as_vec(center).copy()

    if g_subgrad is None:
        def g_subgrad(y, _h=1e-7):
            e = np.eye(y.shape[-1]) * _h
            return np.array([(g_value(y + ei) - g_value(y - ei)) / (2 * _h) for ei in e])

    def obj(y):
        return float(g_value(y)) + float(norm2(y - c)) / (2.0 * gamma)

    def direction(y):
        v = np.asarray(g_subgrad(y), dtype=np.float64) + (y - c) / gamma
        if not np.all(np.isfinite(v)):
            raise NumericFailure("non-finite subgradient in prox_numeric")
        return v

    y = c.copy()
    fy = obj(y)
    step = gamma
    for _ in range(budget):
        v = direction(y)
        if not np.any(v):
            return y
        trial = y - step * v
        f_trial = obj(trial)
        if not math.isfinite(f_trial):
            raise NumericFailure("non-finite objective in prox_numeric")
        if f_trial < fy:
            y, fy = trial, f_trial
        else:
            step *= 0.5
            if step < tol * gamma:
                break
    return _coordinate_polish(y, fy, obj, direction, gamma)


def _coordinate_polish(y, fy, obj, direction, gamma, sweeps: int = 20, iters: int = 80):
    """Settle coordinates stuck at kinks by bisecting on each partial subgradient.

    A component of a subgradient of the objective is a subgradient of its
    restriction to that coordinate, which is monotone in the coordinate, and
    1/gamma-strong convexity bounds the minimizer within ``gamma * |v_i|``.
    """
    for _ in range(sweeps):
        moved = 0.0
        for i in range(y.shape[-1]):
            r = gamma * abs(direction(y)[i])
            if r == 0.0:
                continue
            lo, hi = y[i] - r, y[i] + r
            probe = y.copy()
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                probe[i] = mid
                if direction(probe)[i] > 0:
                    hi = mid
                else:
                    lo = mid
            probe[i] = 0.5 * (lo + hi)
            f_probe = obj(probe)
            if f_probe <= fy:
                moved = max(moved, abs(probe[i] - y[i]))
                y, fy = probe, f_probe
        if moved == 0.0:
            break
    return y


def make_quadratic(L: float, a: float, sigma: float, d: int = 10,
                   sigma_g: float = 0.0) -> QuadraticDc:
    if sigma < 0:
        raise InvalidConfig(f"sigma must be nonnegative, got {sigma}")
    return QuadraticDc(L, a, sigma, d, sigma_g=sigma_g)


def prop1_curvature(L: float, gammas: Sequence[float]) -> float:
    gammas = list(gammas)
    if not gammas:
        raise InvalidConfig("stepsize list is empty")
    if any(g <= 0 for g in gammas):
        raise InvalidConfig("stepsizes must be positive")
    return max(2.0 * L + 1.0 / g for g in gammas)


def prop2_curvature(L: float, gammas: Sequence[float], eta0s: Sequence[float],
                    eta1s: Sequence[float]) -> float:
    gammas, eta0s, eta1s = list(gammas), list(eta0s), list(eta1s)
    if not gammas or not (len(gammas) == len(eta0s) == len(eta1s)):
        raise InvalidConfig("step-size schedules must be non-empty and of equal length")
    if any(v <= 0 for v in gammas + eta0s + eta1s):
        raise InvalidConfig("step sizes must be positive")
    return max(2.0 * L + g / (e0 * e1) for g, e0, e1 in zip(gammas, eta0s, eta1s))


def make_prop1_counterexample(L: float, gammas: Sequence[float], sigma: float,
                              d: int = 1) -> QuadraticDc:
    """Quadratic instance on which the momentum-free double loop stalls at the noise level."""
    return QuadraticDc(L, prop1_curvature(L, gammas), sigma, d)


def make_prop2_counterexample(L: float, gammas: Sequence[float], eta0s: Sequence[float],
                              eta1s: Sequence[float], sigma: float, d: int = 1) -> QuadraticDc:
    """Quadratic instance on which the smoothed single-loop scheme stalls at the noise level."""
    return QuadraticDc(L, prop2_curvature(L, gammas, eta0s, eta1s), sigma, d)


def make_l1_quadratic(lam: float, L: float, a: float, sigma: float, d: int = 10,
                      closed_form: bool = True) -> L1QuadraticDc:
    return L1QuadraticDc(lam, L, a, sigma, d, closed_form=closed_form)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def make_problem(name: str, *, L: float = 1.0, a: float | None = None, sigma: float = 1.0,
                 d: int = 10, gammas=None, eta0s=None, eta1s=None, sigma_g: float = 0.0,
                 lam: float = 0.1) -> DcProblem:
    """Build a problem by its config name: quadratic, prop1, prop2 or l1_quadratic."""
    if name == "quadratic":
        if a is None:
            raise InvalidConfig("quadratic problem needs 'a'")
        return make_quadratic(L, a, sigma, d, sigma_g=sigma_g)
    if name == "prop1":
        if gammas is None:
            raise InvalidConfig("prop1 problem needs a gamma schedule")
        return make_prop1_counterexample(L, _as_list(gammas), sigma, d)
    if name == "prop2":
        if gammas is None or eta0s is None or eta1s is None:
            raise InvalidConfig("prop2 problem needs gamma, eta0 and eta1 schedules")
        g, e0, e1 = _as_list(gammas), _as_list(eta0s), _as_list(eta1s)
        n = max(len(g), len(e0), len(e1))
        g, e0, e1 = [(s * n if len(s) == 1 else s) for s in (g, e0, e1)]
        return make_prop2_counterexample(L, g, e0, e1, sigma, d)
    if name == "l1_quadratic":
        if a is None:
            raise InvalidConfig("l1_quadratic problem needs 'a'")
        return make_l1_quadratic(lam, L, a, sigma, d)
    raise InvalidConfig(f"unknown problem {name!r}")
