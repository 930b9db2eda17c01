import math

import numpy as np
import pytest

from zdjscc.baselines import (
    GreedyConfig,
    NcrSchedule,
    greedy_descent,
    grid_linear_cost,
    linear_mmse_oracle,
    ncr_run,
    optimal_linear,
    random_smooth_encoder,
)
from zdjscc.cost import DistributedProblem, DistributedSetting, SideInfoProblem, SideInfoSetting
from zdjscc.errors import InvalidParameterError, UnsupportedError
from zdjscc.mapping import DeterministicEncoder
from zdjscc.prob_model import build_gaussian_mixture, build_joint_gaussian, build_noise


def side_info(rho, lam, spacing=0.05, support=5.0):
    joint = build_joint_gaussian(rho, 1.0, spacing, support)
    return SideInfoSetting(SideInfoProblem(joint, build_noise(1.0, spacing, support), lam))


def _rms_gradient(setting, res):
    total = 0.0
    for i, enc in enumerate(res.encoders):
        table = setting.cost_table(res.encoders, res.decoders, i, slope=True)
        grad = table.functional_gradient(enc.values[None, :])[0]
        total += math.fsum(setting.source_weights(i) * grad**2)
    return math.sqrt(total)


def test_point_to_point_linear_example():
    s = side_info(0.0, 0.01)
    sol = optimal_linear(s, powers=[3.0])
    assert sol.distortion == pytest.approx(0.25, rel=1e-12)
    assert 10 * math.log10(1 / sol.distortion) == pytest.approx(6.0206, abs=1e-4)


@pytest.mark.parametrize("p", [0.5, 3.0, 40.0])
def test_oracle_is_classical_mmse(p):
    s = side_info(0.0, 0.01)
    assert linear_mmse_oracle(s, [math.sqrt(p)]) == pytest.approx(1 / (1 + p), rel=1e-12)


def test_oracle_limits():
    s = side_info(0.6, 0.01)
    assert linear_mmse_oracle(s, [0.0]) == pytest.approx(1 - 0.36)
    assert linear_mmse_oracle(s, [1e6]) == pytest.approx(0.0, abs=1e-9)
    joint = build_joint_gaussian(0.6, 1.0, 0.1, 5.0)
    noise = build_noise(1.0, 0.1, 5.0)
    d = DistributedSetting(DistributedProblem(joint, noise, noise, 0.1, 0.1, 1.0))
    assert linear_mmse_oracle(d, [0.0, 0.0]) == pytest.approx(2.0)


def test_oracle_needs_gaussian_source():
    joint = build_gaussian_mixture([(-1, -1), (1, 1)], [0.5, 0.5], np.eye(2), 0.2, 4.0)
    s = SideInfoSetting(SideInfoProblem(joint, build_noise(1.0, 0.2, 5.0), 0.01))
    with pytest.raises(UnsupportedError):
        linear_mmse_oracle(s, [1.0])
    assert optimal_linear(s).method == "numeric"


def test_linear_optimum_is_stationary_in_gain():
    s = side_info(0.9, 2e-3)
    sol = optimal_linear(s)
    a = sol.gains[0]

    def lagr(g):
        return linear_mmse_oracle(s, [g]) + s.lambdas[0] * (g * g - 1.0)

    assert lagr(a) <= lagr(a * 1.01) and lagr(a) <= lagr(a * 0.99)


@pytest.mark.parametrize("rho,lam", [(0.0, 0.01), (0.9, 2e-3)])
def test_numeric_linear_matches_closed_form(rho, lam):
    s = side_info(rho, lam, spacing=0.04)
    closed = optimal_linear(s, method="closed_form")
    numeric = optimal_linear(s, method="numeric")
    assert numeric.gains[0] == pytest.approx(closed.gains[0], rel=1e-3)
    assert numeric.lagrangian == pytest.approx(closed.lagrangian, rel=1e-3)


def test_distributed_numeric_linear_matches_closed_form():
    joint = build_joint_gaussian(0.8, 1.0, 0.05, 5.0)
    noise = build_noise(1.0, 0.1, 5.0)
    s = DistributedSetting(DistributedProblem(joint, noise, noise, 0.01, 0.02, 1.0))
    closed = optimal_linear(s, method="closed_form")
    numeric = optimal_linear(s, method="numeric")
    assert numeric.lagrangian == pytest.approx(closed.lagrangian, rel=1e-3)


def test_linear_needs_positive_lambda():
    with pytest.raises(InvalidParameterError):
        optimal_linear(side_info(0.5, 0.0))


def test_greedy_from_linear_stays_linear():
    s = side_info(0.0, 0.01)
    sol = optimal_linear(s)
    res = greedy_descent(s, [DeterministicEncoder(sol.gains[0] * s.x)])
    assert res.cost.lagrangian == pytest.approx(sol.lagrangian, rel=1e-3)


def test_greedy_descends_monotonically(rng):
    s = side_info(0.95, 2e-3, spacing=0.08)
    h = np.array(greedy_descent(s, [random_smooth_encoder(s.x, rng, 3.0)]).history)
    assert h.size > 2
    assert np.all(np.diff(h) <= 1e-10 * np.abs(h[:-1]))


def test_ncr_descends_within_each_level(rng):
    s = side_info(0.95, 2e-3, spacing=0.08)
    res = ncr_run(s, NcrSchedule(steps=4), [random_smooth_encoder(s.x, rng, 3.0)])
    assert res.cost.lagrangian == pytest.approx(res.history[-1])
    assert len(res.levels) == len(res.history)
    assert res.level_lambdas[-1] == pytest.approx(s.lambdas)
    h = np.array(res.history)
    lv = np.array(res.levels)
    for n in np.unique(lv):
        seg = h[lv == n]
        assert np.all(np.diff(seg) <= 1e-10 * np.abs(seg[:-1]))


def test_ncr_single_step_is_greedy(rng):
    s = side_info(0.95, 2e-3, spacing=0.08)
    init = [random_smooth_encoder(s.x, rng, 3.0)]
    a = greedy_descent(s, init)
    b = ncr_run(s, NcrSchedule(steps=1), init)
    np.testing.assert_array_equal(a.encoders[0].values, b.encoders[0].values)
    assert a.history == b.history


def test_ncr_skips_levels_that_zero_the_encoder(rng):
    # linear power vanishes above lambda ~ (1 - rho^2)^2 ~ 0.0095 here, so the
    # first levels would leave the stationary zero map behind
    s = side_info(0.95, 2e-3, spacing=0.08)
    init = [random_smooth_encoder(s.x, rng, 3.0)]
    res = ncr_run(s, NcrSchedule(lambda_start=1.0, decay=0.5, steps=8), init)
    start_power = s.breakdown(init, s.build_decoders(init)).powers[0]
    assert res.cost.powers[0] > 1e-3 * start_power
    assert any("not adopted" in w for w in res.warnings)
    assert res.cost.lagrangian < optimal_linear(s).lagrangian * (1 + 1e-6)


def test_schedule_arithmetic():
    sched = NcrSchedule(lambda_start=1.0, decay=0.8, steps=50)
    levels = sched.levels([0.8**50])
    assert levels[-1] == (0.8**50,)
    for k, lv in enumerate(levels[:-1], start=1):
        assert lv[0] == pytest.approx(0.8**k, rel=1e-12)
    default = NcrSchedule().levels([1e-3])
    assert default[0][0] == pytest.approx(1e-3 / 0.8**49, rel=1e-12)
    assert default[-1] == (1e-3,)


def test_schedule_validation():
    with pytest.raises(InvalidParameterError):
        NcrSchedule(decay=1.5)
    with pytest.raises(InvalidParameterError):
        NcrSchedule(lambda_start=1e-6).levels([1e-3])


def test_greedy_random_inits_land_in_different_optima():
    s = side_info(0.99, 1.77e-4, spacing=0.04)
    results = [
        greedy_descent(s, [random_smooth_encoder(s.x, np.random.default_rng(seed), 1.0)]).cost.lagrangian
        for seed in (0, 3)
    ]
    assert abs(results[0] - results[1]) > 0.01 * min(results)


def test_greedy_reaches_stationarity(rng):
    s = side_info(0.9, 2e-3, spacing=0.08)
    init = [random_smooth_encoder(s.x, rng, 2.0)]
    start = greedy_descent(s, init, GreedyConfig(max_sweeps=1))
    res = greedy_descent(s, init, GreedyConfig(tol=1e-12, max_sweeps=1000))
    decs0 = s.build_decoders(init)
    table0 = s.cost_table(init, decs0, 0, slope=True)
    g0 = table0.functional_gradient(init[0].values[None, :])[0]
    rms0 = math.sqrt(math.fsum(s.fx * g0**2))
    assert start.sweeps == 1
    assert _rms_gradient(s, res) < 1e-3 * rms0


def test_grid_linear_cost_matches_oracle():
    s = side_info(0.5, 0.01, spacing=0.02)
    cost = grid_linear_cost(s, [2.0])
    assert cost.distortion == pytest.approx(linear_mmse_oracle(s, [2.0]), rel=5e-3)
