import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from tiot import (
    CostPair,
    DualState,
    HBCDConfig,
    InvalidInputError,
    SolverFailure,
    TheoryConstants,
    build_cost_pair,
    combine,
    curvature_sigma,
    dual_objective,
    etaot_distance,
    etiot,
    grad_w,
    hbcd_solve,
    sinkhorn_fixed_cost,
    tiot_exact,
)
from tiot.entropic import etaot_cost

from conftest import measure, random_measure


def one_point_pair():
    return CostPair(np.array([[2.0]]), np.array([[0.0]]))


def test_dual_objective_single_point():
    cp = CostPair(np.zeros((1, 1)), np.zeros((1, 1)))
    one = np.ones(1)
    assert dual_objective(np.zeros(1), np.zeros(1), 0.3, cp, one, one, 0.7) == pytest.approx(0.0)


@pytest.mark.parametrize("c,eps", [(1.5, 0.5), (3.0, 2.0)])
def test_dual_objective_closed_form(c, eps):
    cp = CostPair(np.array([[c]]), np.array([[c]]))
    one = np.ones(1)
    f = dual_objective(np.zeros(1), np.zeros(1), 0.5, cp, one, one, eps)
    assert f == pytest.approx(eps * math.exp(-c / eps) - eps)


def test_dual_objective_large_arguments_finite():
    cp = CostPair(np.array([[1000.0]]), np.array([[0.0]]))
    one = np.ones(1)
    f = dual_objective(np.array([990.0]), np.zeros(1), 1.0, cp, one, one, 0.01)
    assert math.isfinite(f)


def test_grad_and_sigma_closed_form():
    cp = one_point_pair()
    one = np.ones(1)
    state = DualState.from_scalings(one, one, 1.0, 1.0, cp, one, one)
    assert grad_w(state, cp) == pytest.approx(-2 * math.exp(-2), abs=1e-5)
    assert grad_w(state, cp) == pytest.approx(-0.27067, abs=1e-5)
    assert curvature_sigma(state, cp) == pytest.approx(0.54134, abs=1e-5)


def test_grad_zero_when_costs_coincide():
    rng = np.random.default_rng(0)
    g = rng.uniform(size=(3, 4))
    cp = CostPair(g, g.copy())
    a, b = np.full(3, 1 / 3), np.full(4, 1 / 4)
    state = DualState(rng.normal(size=3), rng.normal(size=4), 0.4, 0.5, a, b, combine(cp, 0.4))
    assert grad_w(state, cp) == 0.0
    assert curvature_sigma(state, cp) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_grad_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    alpha, beta = random_measure(rng, 4), random_measure(rng, 5)
    cp = build_cost_pair(alpha, beta)
    eps = 0.5
    u, v, w = rng.normal(size=4) * 0.3, rng.normal(size=5) * 0.3, rng.uniform(0.1, 0.9)
    state = DualState(u, v, w, eps, alpha.weights, beta.weights, combine(cp, w))
    h = 1e-6
    f = lambda ww: dual_objective(u, v, ww, cp, alpha.weights, beta.weights, eps)
    fd = (f(w + h) - f(w - h)) / (2 * h)
    assert grad_w(state, cp) == pytest.approx(fd, rel=1e-6)
    fd2 = (f(w + 1e-4) - 2 * f(w) + f(w - 1e-4)) / 1e-8
    assert curvature_sigma(state, cp) == pytest.approx(fd2, rel=1e-4)


def test_theory_constants_formulas(example_b):
    _, _, cp = example_b
    eps = 2.0
    tc = TheoryConstants.compute(cp, eps)
    e6 = math.exp(6 * 2.0 / eps)
    assert tc.eta_theoretical == pytest.approx(eps / 4.0 / e6)
    assert tc.kappa == pytest.approx(1 / e6 / (2 * eps))
    assert tc.tau == pytest.approx(4.0 * e6 / (2 * eps))
    assert tc.lipschitz_w == pytest.approx(4.0 / eps * e6)
    assert tc.rho1 == pytest.approx((192 * 2 + 216 * 2 + 24) * 4.0 / eps * math.exp(18 * 2.0 / eps))


def test_sinkhorn_one_by_one():
    res = sinkhorn_fixed_cost([[2.5]], [1.0], [1.0], 0.1)
    assert res.value == pytest.approx(2.5)
    assert np.allclose(res.plan.matrix, [[1.0]])


def test_sinkhorn_near_permutation():
    res = sinkhorn_fixed_cost([[0, 1], [1, 0]], [0.5, 0.5], [0.5, 0.5], 0.01)
    assert res.converged
    assert res.value <= 0.01


def test_sinkhorn_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        sinkhorn_fixed_cost([[np.nan]], [1.0], [1.0], 0.1)
    with pytest.raises(InvalidInputError):
        sinkhorn_fixed_cost([[1.0]], [1.0], [1.0], 0.0)
    with pytest.raises(InvalidInputError):
        sinkhorn_fixed_cost([[1.0, 2.0]], [1.0], [1.0], 0.1)


def test_sinkhorn_log_domain_agrees_with_scaling():
    rng = np.random.default_rng(4)
    cost = rng.uniform(size=(6, 7))
    a, b = np.full(6, 1 / 6), np.full(7, 1 / 7)
    r1 = sinkhorn_fixed_cost(cost, a, b, 0.05, marginal_tol=1e-10, log_domain=False)
    r2 = sinkhorn_fixed_cost(cost, a, b, 0.05, marginal_tol=1e-10, log_domain=True)
    assert np.allclose(r1.plan.matrix, r2.plan.matrix, atol=1e-12)


def test_sinkhorn_tiny_epsilon_stays_finite():
    rng = np.random.default_rng(5)
    cost = rng.uniform(0, 10, size=(5, 5))
    a = np.full(5, 0.2)
    res = sinkhorn_fixed_cost(cost, a, a, 1e-3, marginal_tol=1e-3)
    assert res.converged
    assert np.all(np.isfinite(res.plan.matrix))


def test_hbcd_example_b(example_b):
    alpha, beta, cp = example_b
    sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(epsilon=0.01, marginal_tol=0.005))
    assert sol.converged
    assert sol.transport_value == pytest.approx(1.0, abs=0.05)
    assert sol.w == pytest.approx(0.5, abs=0.05)


# the theoretical step is ~eps*exp(-6|C|/eps) and barely moves w; see the theory suite
@pytest.mark.parametrize("rule", ["adaptive_sigma", "adaptive_inverse"])
def test_hbcd_rules_reach_same_optimum(rule):
    rng = np.random.default_rng(11)
    alpha, beta = random_measure(rng, 6, scale=0.5), random_measure(rng, 5, scale=0.5)
    cp = build_cost_pair(alpha, beta)
    ref = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(0.5, marginal_tol=1e-12, freq=1))
    sol = hbcd_solve(
        cp, alpha.weights, beta.weights,
        HBCDConfig(0.5, marginal_tol=1e-9, freq=1, stepsize_rule=rule, max_iters=200_000),
    )
    assert sol.converged
    assert sol.w == pytest.approx(ref.w, abs=1e-3)


def test_hbcd_w_maximizes_entropic_value():
    # at the optimum w, the entropic OT value for fixed w is maximal
    rng = np.random.default_rng(12)
    alpha, beta = random_measure(rng, 5), random_measure(rng, 5)
    cp = build_cost_pair(alpha, beta)
    eps = 0.3
    a, b = alpha.weights, beta.weights

    def entropic_value(w):
        res = sinkhorn_fixed_cost(combine(cp, w), a, b, eps, marginal_tol=1e-12)
        p = res.plan.matrix
        return res.value + eps * float(np.sum(p * np.log(p / np.outer(a, b))))

    best = minimize_scalar(lambda w: -entropic_value(w), bounds=(0, 1), method="bounded", options={"xatol": 1e-10})
    sol = hbcd_solve(cp, a, b, HBCDConfig(eps, marginal_tol=1e-11, freq=1))
    assert sol.w == pytest.approx(best.x, abs=1e-4)
    assert sol.full_objective == pytest.approx(-best.fun, abs=1e-8)


def test_hbcd_large_epsilon_independent_plan():
    rng = np.random.default_rng(6)
    alpha, beta = random_measure(rng, 20), random_measure(rng, 20)
    cp = build_cost_pair(alpha, beta)
    sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(100.0))
    assert np.abs(sol.plan.matrix - np.outer(alpha.weights, beta.weights)).sum() <= 0.01


def test_hbcd_marginal_feasibility():
    rng = np.random.default_rng(8)
    alpha, beta = random_measure(rng, 30), random_measure(rng, 25)
    cp = build_cost_pair(alpha, beta)
    sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(0.05, marginal_tol=1e-4))
    rows, cols = sol.plan.marginal_errors()
    assert rows < 1e-4 and cols < 1e-12


def test_hbcd_value_approaches_exact_as_eps_shrinks():
    rng = np.random.default_rng(9)
    alpha, beta = random_measure(rng, 12, uniform=True), random_measure(rng, 12, uniform=True)
    cp = build_cost_pair(alpha, beta)
    exact = tiot_exact(cp, alpha.weights, beta.weights).value
    devs = []
    for eps in (1.0, 0.1, 0.01, 0.001):
        sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(eps, marginal_tol=1e-6))
        devs.append(abs(sol.transport_value - exact))
    assert devs == sorted(devs, reverse=True)
    assert devs[-1] < 0.01


def test_hbcd_log_domain_matches_scaling():
    rng = np.random.default_rng(10)
    alpha, beta = random_measure(rng, 8), random_measure(rng, 9)
    cp = build_cost_pair(alpha, beta)
    base = dict(epsilon=0.1, marginal_tol=1e-9, freq=1)
    s1 = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(**base, log_domain=False))
    s2 = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(**base, log_domain=True))
    assert s2.log_domain and not s1.log_domain
    assert s1.w == pytest.approx(s2.w, abs=1e-9)
    assert np.allclose(s1.plan.matrix, s2.plan.matrix, atol=1e-10)


def test_hbcd_automatic_log_domain_small_eps():
    rng = np.random.default_rng(13)
    alpha, beta = random_measure(rng, 10, scale=3.0), random_measure(rng, 10, scale=3.0)
    cp = build_cost_pair(alpha, beta)
    sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(1e-3))
    assert sol.log_domain
    assert np.all(np.isfinite(sol.plan.matrix))


def test_hbcd_not_converged_flag():
    rng = np.random.default_rng(14)
    alpha, beta = random_measure(rng, 10), random_measure(rng, 10)
    cp = build_cost_pair(alpha, beta)
    sol = hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(0.01, marginal_tol=1e-12, max_iters=20))
    assert not sol.converged
    assert sol.iterations == 20


def test_hbcd_callback_and_trace():
    rng = np.random.default_rng(17)
    alpha, beta = random_measure(rng, 5), random_measure(rng, 6)
    cp = build_cost_pair(alpha, beta)
    seen = []
    sol = hbcd_solve(
        cp, alpha.weights, beta.weights,
        HBCDConfig(1.0, freq=1, max_iters=30, marginal_tol=1e-300, record_trace=True),
        callback=lambda state, it: seen.append((it, state.w)),
    )
    assert [it for it, _ in seen] == list(range(1, 31))
    assert len(sol.dual_trace) == sol.w_updates
    assert np.all(np.diff(sol.dual_trace) <= 1e-12)


def test_nan_cost_rejected():
    with pytest.raises(InvalidInputError):
        CostPair(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.zeros((2, 2)))


def test_hbcd_nonfinite_iterate_raises(monkeypatch, example_b):
    alpha, beta, cp = example_b
    from tiot import entropic

    real = entropic._Scaling.update_h

    def poisoned(self):
        real(self)
        self.h = self.h * np.nan

    monkeypatch.setattr(entropic._Scaling, "update_h", poisoned)
    with pytest.raises(SolverFailure, match="non-finite"):
        hbcd_solve(cp, alpha.weights, beta.weights, HBCDConfig(0.1, log_domain=False))


def test_hbcd_config_validation():
    with pytest.raises(InvalidInputError):
        HBCDConfig(0.0)
    with pytest.raises(InvalidInputError):
        HBCDConfig(0.1, stepsize_rule="newton")
    with pytest.raises(InvalidInputError):
        HBCDConfig(0.1, freq=0)
    assert HBCDConfig(0.1).subiter_tol(1000, 10) == 1e-2
    assert HBCDConfig(0.1).subiter_tol(999, 10) == 1e-7


def test_etiot_wrapper(example_b):
    alpha, beta, _ = example_b
    sol = etiot(alpha, beta, HBCDConfig(0.01))
    assert sol.distance == pytest.approx(1.0, abs=0.03)


def test_etaot_identical_series():
    rng = np.random.default_rng(15)
    alpha = measure(rng.normal(size=(6, 1)), np.arange(6.0))
    for omega in (0.0, 1.0, 10.0):
        assert etaot_distance(alpha, alpha, omega, 0.01) < 0.01


def test_etaot_omega_zero_is_feature_ot():
    rng = np.random.default_rng(16)
    alpha, beta = random_measure(rng, 5), random_measure(rng, 6)
    cp = build_cost_pair(alpha, beta)
    ref = sinkhorn_fixed_cost(cp.gamma, alpha.weights, beta.weights, 0.1).value
    assert etaot_distance(alpha, beta, 0.0, 0.1) == pytest.approx(ref)


def test_etaot_cost_not_convex_blend(example_b):
    alpha, beta, cp = example_b
    assert np.allclose(etaot_cost(alpha, beta, 2.0), cp.gamma + 2.0 * cp.phi)
    with pytest.raises(InvalidInputError):
        etaot_cost(alpha, beta, -1.0)


@pytest.mark.parametrize("seed", range(3))
def test_etaot_matches_birkhoff_segment(seed):
    # 2x2 uniform couplings are [[t, 1/2 - t], [1/2 - t, t]]; minimize directly over t
    rng = np.random.default_rng(seed)
    alpha, beta = random_measure(rng, 2, uniform=True), random_measure(rng, 2, uniform=True)
    omega, eps = 0.7, 0.2
    C = etaot_cost(alpha, beta, omega)
    ab = 0.25

    def plan(t):
        return np.array([[t, 0.5 - t], [0.5 - t, t]])

    def obj(t):
        p = plan(t)
        return float(np.sum(C * p) + eps * np.sum(p * np.log(p / ab)))

    t = minimize_scalar(obj, bounds=(1e-12, 0.5 - 1e-12), method="bounded", options={"xatol": 1e-12}).x
    expected = float(np.sum(C * plan(t)))
    assert etaot_distance(alpha, beta, omega, eps, marginal_tol=1e-12) == pytest.approx(expected, abs=1e-4)
