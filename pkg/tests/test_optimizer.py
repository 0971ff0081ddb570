import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swanmech.economy import welfare_mots
from swanmech.model import SocialState, generalization_error
from swanmech.optimizer import (
    InfeasibleError,
    check_alignment,
    corners,
    eps_min,
    eps_min_bruteforce,
    find_lambda,
    lagrangian,
    make_context,
    solve,
    solve_bruteforce,
    solve_structured,
    theta,
    welfare_fl_optimum,
)
from swanmech.scenarios import RandomScenarioSpec, random_scenario

from conftest import make_scenario


def one_type(cost, eps_req=math.inf):
    # eps(1) = 1, eps(2) = 0.5; U = eps^-2 so U(1) = 1 and U(0.5) = 4.
    return make_scenario([10], [cost], [2], scale=10.0, a=1.0, b=2.0, eps_req=eps_req)


@pytest.mark.parametrize("cost,k", [(1.0, 2), (3.9, 2), (4.5, 0), (7.0, 0)])
def test_hand_enumeration(cost, k):
    # W(1) = 2 - c, W(2) = 8 - 2c, W(0) = 0
    res = solve_bruteforce(one_type(cost))
    assert res.k_star == (k,)
    assert res.w_star == pytest.approx(max(0.0, 8 - 2 * cost))
    assert solve(one_type(cost))[0].k_star == (k,)


def test_requirement_forces_full_coalition():
    res, ctx = solve(one_type(4.5, eps_req=0.5))
    assert res.k_star == (2,)
    assert res.w_star == pytest.approx(-1.0)
    assert res.binding
    assert ctx.lam > 0


def test_full_dissemination_buyers():
    res = solve_bruteforce(make_scenario([10, 20], [0.0, 1e6], [3, 4], scale=5.0, a=1.0, b=2.0))
    assert res.k_star == (3, 0)
    assert res.b_star == (0, 4)


def test_zero_cost_everyone_joins():
    # equal data sizes, so every newcomer lowers the error
    sc = make_scenario([40, 40, 40], [0, 0, 0], [3, 2, 4], scale=30.0)
    assert solve(sc)[0].k_star == (3, 2, 4)


def test_zero_cost_skips_harmful_type():
    # a small-data type raises the error under iid data, so it stays out
    sc = make_scenario([10, 40, 90], [0, 0, 0], [3, 2, 4], scale=30.0)
    assert solve(sc)[0].k_star == (0, 2, 4)


def test_prohibitive_cost_nobody_joins():
    sc = make_scenario([10, 40], [1e6, 1e6], [3, 2], scale=30.0, a=1.0, b=2.0)
    res, _ = solve(sc)
    assert res.k_star == (0, 0)
    assert res.w_star == 0.0
    assert res.eps_star == math.inf


def test_mnist_golden(mnist):
    res, ctx = solve(mnist)
    assert res.k_star == (0, 5, 5)
    assert res.w_star == pytest.approx(89.6262030779, rel=1e-10)
    assert res.eps_star == pytest.approx(1.14333333333, rel=1e-10)
    assert eps_min(mnist) == pytest.approx(res.eps_star, rel=1e-12)
    assert not res.binding and ctx.lam == 0
    assert solve_bruteforce(mnist).k_star == res.k_star


def test_fl_optimum_below_mots(mnist):
    w_fl, k_fl = welfare_fl_optimum(mnist)
    assert w_fl == pytest.approx(42.713101539, rel=1e-10)
    assert w_fl <= solve(mnist)[0].w_star


def test_infeasible_requirement(mnist):
    with pytest.raises(InfeasibleError):
        solve(mnist.with_eps_req(1.0))
    with pytest.raises(InfeasibleError):
        solve_bruteforce(mnist.with_eps_req(1.0))


def test_eps_min_examples():
    # single type: the full coalition wins; equal to scale/(N D) when s2 = 0
    assert eps_min(make_scenario([50], [0], [4], scale=10.0)) == pytest.approx(10 / 200)
    # high heterogeneity: a lone client can beat the crowd
    sc = make_scenario([10, 1000], [0, 0], [5, 1], scale=10.0, s2=1.0)
    assert eps_min(sc) == pytest.approx(0.01)
    assert eps_min(sc) == eps_min_bruteforce(sc)


SMALL = RandomScenarioSpec(max_types=3, max_population=4, max_grid=200)


@given(st.integers(0, 2**32 - 1))
def test_structured_matches_bruteforce(seed):
    sc = random_scenario(random.Random(seed), SMALL)
    ref = solve_bruteforce(sc)
    res, _ = solve(sc)
    assert res.k_star == ref.k_star
    assert res.w_star == pytest.approx(ref.w_star, rel=1e-9, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_eps_min_matches_enumeration(seed):
    sc = random_scenario(random.Random(seed), SMALL)
    assert eps_min(sc) == pytest.approx(eps_min_bruteforce(sc), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_full_dissemination_when_positive(seed):
    sc = random_scenario(random.Random(seed), SMALL)
    res = solve_bruteforce(sc)
    if res.w_star > 0:
        assert sum(res.k_star) + sum(res.b_star) == sc.total_clients


def test_lagrangian_identity(mnist):
    ctx = make_context(mnist.with_eps_req(1.5), 2.0)
    for k in [(1, 0, 0), (0, 5, 5), (10, 5, 5), (3, 2, 1)]:
        st_ = SocialState.full_dissemination(k, mnist.populations)
        eps = generalization_error(st_, mnist)
        pen = 2.0 * (1 / eps - 1 / 1.5)
        assert lagrangian(k, ctx, mnist) == pytest.approx(welfare_mots(st_, mnist) + pen, rel=1e-12)


def test_lagrangian_no_model_state():
    sc = one_type(1.0, eps_req=0.8)
    ctx = make_context(sc, 3.0)
    assert lagrangian((0,), ctx, sc) == pytest.approx(-3.0 / 0.8)


def test_theta_matches_corners_and_lottery():
    sc = make_scenario([10, 40], [0.2, 1.0], [2, 3], scale=20.0, a=5.0, b=2.0, eps_req=1.0)
    ctx = make_context(sc, 0.5)
    for c in corners(sc.populations):
        assert theta(c, ctx, sc) == pytest.approx(lagrangian(c, ctx, sc), rel=1e-12)
    # interior point: expectation over independent all-or-none draws
    k = (1, 2)
    expect = 0.0
    for x in itertools.product(*[(0, n) for n in sc.populations]):
        prob = 1.0
        for ki, xi, ni in zip(k, x, sc.populations):
            prob *= ki / ni if xi else 1 - ki / ni
        expect += prob * lagrangian(x, ctx, sc)
    assert theta(k, ctx, sc) == pytest.approx(expect, rel=1e-12)
    assert theta(k, ctx, sc) >= ctx.L_floor


def test_theta_is_linear_along_one_type():
    sc = one_type(1.0)
    ctx = make_context(sc, 0.0)
    assert theta((1,), ctx, sc) == pytest.approx(0.5 * (ctx.corner_values[(0,)] + ctx.corner_values[(2,)]))


def test_find_lambda_unconstrained(mnist):
    assert find_lambda(mnist).lam == 0.0


def test_find_lambda_at_floor():
    sc = make_scenario([10, 40, 90], [0.5, 2.0, 5.0], [3, 2, 2], scale=30.0, a=1.0, b=2.0)
    floor = eps_min(sc)
    res, ctx = solve(sc.with_eps_req(floor))
    assert res.eps_star == pytest.approx(floor, rel=1e-9)
    # the error minimiser leaves out the small-data type
    assert res.k_star == (0, 2, 2)


def test_nonbinding_requirement_keeps_zero_multiplier(mnist):
    res, ctx = solve(mnist.with_eps_req(5.0))
    assert ctx.lam == 0.0 and not res.binding


@given(st.integers(0, 2**32 - 1))
def test_constrained_random(seed):
    rng = random.Random(seed)
    sc = random_scenario(rng, SMALL)
    sc = sc.with_eps_req(eps_min(sc) * rng.uniform(1.0, 2.0))
    res, _ = solve(sc)
    ref = solve_bruteforce(sc)
    assert res.eps_star <= sc.eps_req * (1 + 1e-9)
    assert res.k_star == ref.k_star


def test_alignment_zero_cost():
    sc = make_scenario([10, 40, 90], [0, 0, 0], [3, 2, 4], scale=30.0)
    rep = check_alignment(sc)
    assert rep.holds and not rep.failing_witnesses


def test_alignment_fails_with_expensive_type():
    sc = make_scenario([60, 85, 168], [1.0, 100.0, 1e4], [1, 3, 4], scale=172.0, s2=3.4, a=1.0, b=2.0)
    assert not sc.low_heterogeneity
    rep = check_alignment(sc)
    assert not rep.holds
    assert ((0, 0, 1), 2) in rep.failing_witnesses


@pytest.mark.parametrize("s2", [0.0, 0.2])
def test_alignment_makes_requirement_irrelevant(s2):
    sc = make_scenario([10, 40, 90], [0.001, 0.002, 0.004], [3, 2, 2], scale=30.0, s2=s2)
    assert check_alignment(sc).holds
    base = solve(sc)[0].k_star
    floor = eps_min(sc)
    for f in np.linspace(1.0, 3.0, 5):
        assert solve(sc.with_eps_req(floor * f))[0].k_star == base


def test_solve_structured_flags_binding():
    res = solve_structured(one_type(4.5, eps_req=0.5))
    assert res.binding and res.k_star == (2,)


def test_lagrangian_tolerates_sigma_point_without_penalty():
    # eps = sigma^2 for every single-type coalition here
    sc = make_scenario([10, 1000], [0.01, 0.02], [5, 1], scale=10.0, s2=1.0, a=1.0, b=2.0)
    ctx = make_context(sc, 0.0)
    assert lagrangian((2, 0), ctx, sc) == pytest.approx(6 * 1.0 - 2 * 0.01)
