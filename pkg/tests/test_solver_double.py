import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcmom.core import InvalidConfig
from dcmom.metrics import DivergedError
from dcmom.problems import make_prop1_counterexample, make_quadratic
from dcmom.solver_double import (SQRT8, DoubleLoopConfig, auto_double_params, draw_x0,
                                 gradient_surrogate, run_double_loop)


def test_deterministic_contraction_example():
    L, a, gamma, T = 1.0, 0.9, 0.1, 200
    p = make_quadratic(L, a, 0.0, 1)
    run = run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=T), x0=[1.0])
    assert np.all(np.diff(run.trace.gap) < 0)
    rho = (a + 1 / gamma) / (L + 1 / gamma)
    np.testing.assert_allclose(run.iterates[:, 0], rho ** np.arange(T + 1), rtol=1e-12)
    gap_T = 0.5 * (L - a) * run.x_final[0] ** 2
    assert gap_T == pytest.approx(0.05 * rho ** (2 * T), rel=1e-10)
    # contraction rho^2 per step: the 1e-6 level needs ceil(log(2e-5) / (2 log rho)) steps
    T_needed = math.ceil(math.log(1e-6 / 0.05) / (2 * math.log(rho)))
    long = run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=T_needed), x0=[1.0])
    assert 0.5 * (L - a) * long.x_final[0] ** 2 <= 1e-6


def test_zero_steps_returns_start():
    p = make_quadratic(1.0, 0.9, 1.0, 3)
    x0 = np.array([1.0, 2.0, 3.0])
    run = run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=0), x0=x0)
    assert np.array_equal(run.x_out, x0) and np.array_equal(run.x_final, x0)
    assert len(run.trace) == 0


def test_prop1_instance_floor():
    p = make_prop1_counterexample(1.0, [0.1], 1.0, d=1)
    sq = np.stack([run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=30, seed=s)).grad_f_sq[1:]
                   for s in range(200)])
    assert sq.mean(axis=0).min() >= 0.9


def test_surrogate_reexport_example():
    p = make_quadratic(1.0, 0.9, 0.0, 1)
    assert gradient_surrogate(p, np.array([1.0]), 0.1) == pytest.approx(8.264e-3, rel=1e-3)


def _descent_excess(gamma, L=1.0, a=0.9, T=200):
    p = make_quadratic(L, a, 0.0, 2)
    xs = run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=T), x0=[1.0, -1.0]).iterates
    f = 0.5 * (L - a) * np.sum(xs**2, axis=1)
    G = gradient_surrogate(p, xs[:-1], gamma)
    delta = np.sum(np.diff(xs, axis=0) ** 2, axis=1)
    return G, f, delta, xs


def test_descent_bound_margin_matches_closed_form():
    # on the quadratic the per-step bound reduces to 3/4 + gamma (L + a) / 2 >= 1
    L, a = 1.0, 0.9
    for gamma in (0.1, 0.3, 1.0):
        G, f, delta, xs = _descent_excess(gamma)
        rhs = (f[:-1] - f[1:]) / gamma - delta / (4 * gamma**2)
        factor = 0.75 + gamma * (L + a) / 2
        np.testing.assert_allclose(rhs, factor * G, rtol=1e-9, atol=1e-300)
        holds = factor >= 1
        assert bool(np.all(G <= rhs + 1e-12)) == holds
    assert 1 / (2 * (L + a)) == pytest.approx(0.2631578947)


def test_descent_without_displacement_term_always_holds():
    for gamma in (0.01, 0.1, 1.0):
        G, f, _, _ = _descent_excess(gamma)
        assert np.all(G <= (f[:-1] - f[1:]) / gamma + 1e-15)


def test_heavy_ball_potential_nonincreasing():
    p = make_quadratic(1.0, 0.9, 0.0, 5)
    gamma = 0.1
    alpha = SQRT8 * p.L_h * gamma
    assert alpha < 1
    run = run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=200, alpha=alpha,
                                              estimator="heavy_ball", seed=3))
    assert np.all(np.diff(run.trace.phi) <= 1e-12)


def test_momentum_rescue_on_convex_instance():
    p = make_quadratic(1.0, 0.5, 1.0, 10)
    seeds = range(20)
    phi0 = float(np.mean([p.f_value(draw_x0(p, s)) for s in seeds]))
    avg = {}
    for T in (200, 2000):
        gamma, alpha = auto_double_params(p, "heavy_ball", T, phi0)
        assert alpha == pytest.approx(SQRT8 * p.L_h * gamma)
        avg[T] = np.mean([run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=T, alpha=alpha,
                                                              estimator="heavy_ball", seed=s)
                                          ).trace.g_surrogate.mean() for s in seeds])
    assert avg[2000] / avg[200] <= 0.5


def test_alpha_one_heavy_ball_is_bit_identical_to_plain():
    p = make_quadratic(1.0, 0.9, 1.0, 4)
    a = run_double_loop(p, DoubleLoopConfig(gamma=0.2, T=50, seed=9))
    b = run_double_loop(p, DoubleLoopConfig(gamma=0.2, T=50, seed=9, alpha=1.0,
                                            estimator="heavy_ball"))
    assert np.array_equal(a.iterates, b.iterates)
    for name in ("gap", "g_surrogate", "m_err", "delta"):
        assert np.array_equal(a.trace.column(name), b.trace.column(name))


def test_rerun_is_bit_identical():
    p = make_quadratic(1.0, 0.9, 2.0, 3)
    cfg = DoubleLoopConfig(gamma=0.1, T=40, alpha=0.3, estimator="mvr", seed=4,
                           inner_mode="sgd", inner_K=20)
    a, b = run_double_loop(p, cfg), run_double_loop(p, cfg)
    assert np.array_equal(a.iterates, b.iterates) and np.array_equal(a.x_out, b.x_out)
    assert np.array_equal(a.trace.phi, b.trace.phi)


def test_decoupled_step_recursion():
    L, a, gamma, eta0 = 1.0, 0.5, 0.4, 0.1
    p = make_quadratic(L, a, 0.0, 1)
    run = run_double_loop(p, DoubleLoopConfig(gamma=gamma, eta0=eta0, T=10), x0=[2.0])
    x = 2.0
    for t in range(10):
        x_tilde = (x / gamma + a * x) / (L + 1 / gamma)
        x = x - eta0 * (x - x_tilde) / gamma
        assert run.iterates[t + 1, 0] == pytest.approx(x, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(0.01, 2.0), frac=st.floats(0.01, 1.0), seed=st.integers(0, 1000))
def test_iterate_on_segment_to_subproblem_solution(gamma, frac, seed):
    p = make_quadratic(1.0, 0.7, 0.5, 2)
    run = run_double_loop(p, DoubleLoopConfig(gamma=gamma, eta0=frac * gamma, T=3, seed=seed))
    full = run_double_loop(p, DoubleLoopConfig(gamma=gamma, T=1, seed=seed))
    x0, x1, x_tilde = run.iterates[0], run.iterates[1], full.iterates[1]
    np.testing.assert_allclose(x1, x0 + frac * (x_tilde - x0), rtol=1e-9, atol=1e-12)


def test_divergence_carries_partial_result():
    p = make_prop1_counterexample(1.0, [0.1], 1.0, d=1)
    with pytest.raises(DivergedError) as info:
        run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=1500), x0=[1.0])
    res = info.value.result
    assert res.diverged and 0 < len(res.trace) < 1500
    assert np.all(np.isfinite(res.iterates))


def test_sgd_inner_mode_close_to_exact():
    p = make_quadratic(1.0, 0.9, 0.0, 3)
    exact = run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=20), x0=np.ones(3))
    sgd = run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=20, inner_mode="sgd", inner_K=200),
                          x0=np.ones(3))
    assert np.all(sgd.params["inner_delta"] >= 0)
    np.testing.assert_allclose(sgd.iterates, exact.iterates, atol=1e-3)


def test_output_iterate_is_sampled_from_path():
    p = make_quadratic(1.0, 0.9, 1.0, 2)
    outs = set()
    for s in range(30):
        run = run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=5, seed=s))
        idx = [i for i in range(5) if np.array_equal(run.iterates[i], run.x_out)]
        assert idx
        outs.add(idx[0])
    assert len(outs) > 1


def test_auto_params():
    p = make_quadratic(1.0, 0.9, 1.0, 10)
    s2, T, phi0 = 10.0, 100, 2.0
    g, al = auto_double_params(p, "heavy_ball", T, phi0)
    assert g == pytest.approx(min(1 / (SQRT8 * 0.9), math.sqrt(phi0 / (0.9 * s2 * T))))
    assert al == pytest.approx(SQRT8 * 0.9 * g)
    g, al = auto_double_params(p, "mvr", T, phi0)
    assert g == pytest.approx(min(1 / (8 * 0.9), (phi0 / (0.81 * s2 * T)) ** (1 / 3)))
    assert al == pytest.approx(min((8 * 0.9 * g) ** 2, 1.0))
    assert auto_double_params(p, "none", T, phi0)[1] == 1.0
    with pytest.raises(InvalidConfig):
        auto_double_params(make_quadratic(1.0, 0.0, 0.0, 1), "none", T, phi0)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        DoubleLoopConfig(gamma=0.1, T=5, eta0=0.2)
    with pytest.raises(InvalidConfig):
        DoubleLoopConfig(gamma=0.0, T=5)
    with pytest.raises(InvalidConfig):
        DoubleLoopConfig(gamma=0.1, T=5, inner_mode="newton")
    with pytest.raises(InvalidConfig):
        DoubleLoopConfig(gamma=0.1, T=-1)
    assert DoubleLoopConfig(gamma=0.1, T=5).step == 0.1
    p = make_quadratic(1.0, 0.9, 1.0, 3)
    with pytest.raises(InvalidConfig):
        run_double_loop(p, DoubleLoopConfig(gamma=0.1, T=5), x0=np.ones(2))
