"""Per-iteration diagnostics, run results and cross-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import InvalidConfig, StatAccumulator, norm2
from .problems import DcProblem

__all__ = [
    "COLUMNS",
    "AggregateCurve",
    "DivergedError",
    "IterateTrace",
    "RunResult",
    "aggregate",
    "compute_trace",
    "heavy_ball_rate_bound",
    "gradient_surrogate",
    "moreau_grad",
    "time_avg_surrogate",
]

COLUMNS = ("gap", "g_surrogate", "moreau_grad_sq", "m_err", "eg_err", "delta", "phi")


def gradient_surrogate(problem: DcProblem, x, gamma: float):
    """Squared proximal-DC displacement ``|x - prox_{gamma g}(x + gamma grad h(x))|^2 / gamma^2``."""
    x = np.asarray(x, dtype=np.float64)
    z = problem.prox_g(x + gamma * problem.h_grad(x), gamma)
    return norm2(x - z) / gamma**2


def moreau_grad(problem: DcProblem, x, gamma: float):
    """Gradient of ``g_gamma - h``: ``(x - prox_{gamma g}(x)) / gamma - grad h(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return (x - problem.prox_g(x, gamma)) / gamma - problem.h_grad(x)


@dataclass(frozen=True)
class IterateTrace:
    """Columnar trace; row ``i`` describes iterate ``x_t`` with ``t = t[i]``.

    Columns that cannot be computed for a run are ``None`` rather than zero.
    """

    t: np.ndarray
    gap: np.ndarray | None = None
    g_surrogate: np.ndarray | None = None
    moreau_grad_sq: np.ndarray | None = None
    m_err: np.ndarray | None = None
    eg_err: np.ndarray | None = None
    delta: np.ndarray | None = None
    phi: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray | None:
        if name not in COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def row(self, i: int) -> dict:
        out = {"t": int(self.t[i])}
        for name in COLUMNS:
            col = getattr(self, name)
            out[name] = None if col is None else float(col[i])
        return out


@dataclass
class RunResult:
    x_final: np.ndarray
    x_out: np.ndarray
    trace: IterateTrace
    iterates: np.ndarray
    wall_time: float
    seed: int
    diverged: bool = False
    grad_f_sq: np.ndarray | None = None
    params: dict = field(default_factory=dict)


class DivergedError(ArithmeticError):
    """A run produced a non-finite iterate; ``result`` holds the partial run."""

    def __init__(self, message: str, result: RunResult):
        super().__init__(message)
        self.result = result


def compute_trace(problem: DcProblem, xs: np.ndarray, gamma: float, *,
                  ms: np.ndarray | None = None, xgs: np.ndarray | None = None,
                  potential: str | None = None, eta0: float | None = None,
                  eta1: float | None = None, alpha: float | None = None) -> IterateTrace:
    """Evaluate every diagnostic column on a stored path.

    ``xs`` holds ``x_0..x_n`` (``n + 1`` rows); the trace has ``n`` rows.
    ``ms[t]`` is the estimate used at step ``t`` and ``xgs[t]`` the tracked
    prox point produced at step ``t``. ``potential`` selects the potential
    weighting: ``"double"`` or ``"single"``.
    """
    n = xs.shape[0] - 1
    x, x_next = xs[:-1], xs[1:]
    t = np.arange(n)
    with np.errstate(over="ignore", invalid="ignore"):
        gap = problem.f_value(x) - problem.f_star if problem.f_star is not None else None
        gs = gradient_surrogate(problem, x, gamma)
        mg = norm2(moreau_grad(problem, x, gamma))
        m_err = norm2(ms[:n] - problem.h_grad(x)) if ms is not None else None
        eg_err = norm2(xgs[:n] - problem.prox_g(x, gamma)) if xgs is not None else None
        delta = norm2(x_next - x)

        phi = None
        if potential == "double" and gap is not None and m_err is not None:
            phi = gap + (2.0 * eta0 / alpha) * m_err
        elif potential == "single" and m_err is not None and eg_err is not None:
            fg_star = problem.f_gamma_star(gamma)
            if fg_star is not None:
                phi = ((problem.f_gamma(x, gamma) - fg_star)
                       + (2.0 * eta0 / (gamma * eta1)) * eg_err
                       + (eta0 / alpha) * m_err)
    return IterateTrace(t=t, gap=gap, g_surrogate=gs, moreau_grad_sq=mg, m_err=m_err,
                        eg_err=eg_err, delta=delta, phi=phi)


@dataclass(frozen=True)
class AggregateCurve:
    column: str
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int


def aggregate(runs: Sequence[RunResult], column: str) -> AggregateCurve:
    """Pointwise mean and standard error across runs.

    Traces are truncated to the shortest one, so runs that diverged early
    still give a well-defined curve. Needs at least two runs.
    """
    if not runs:
        raise InvalidConfig("no runs to aggregate")
    if len(runs) < 2:
        raise InvalidConfig("aggregation needs at least two runs")
    cols = [r.trace.column(column) for r in runs]
    if any(c is None for c in cols):
        raise InvalidConfig(f"column {column!r} is absent from some runs")
    n_t = min(len(c) for c in cols)
    acc = StatAccumulator()
    acc.push_many(np.stack([c[:n_t] for c in cols]))
    mean = np.asarray(acc.mean, dtype=np.float64).reshape(n_t)
    stderr = np.asarray(acc.stderr, dtype=np.float64).reshape(n_t)
    return AggregateCurve(column=column, t=np.arange(n_t), mean=mean, stderr=stderr, n=len(runs))


def time_avg_surrogate(run: RunResult) -> float:
    col = run.trace.g_surrogate
    if col is None or len(col) == 0:
        raise InvalidConfig("empty trace")
    return float(np.mean(col))


def heavy_ball_rate_bound(L_h: float, sigma: float, phi0: float, T: int, C: float = 20.0) -> float:
    """``C * (sqrt(L_h sigma^2 phi0 / T) + L_h phi0 / T)``."""
    return C * (math.sqrt(L_h * sigma**2 * phi0 / T) + L_h * phi0 / T)
