import math

import numpy as np
import pytest

from zdjscc.baselines import optimal_linear
from zdjscc.cost import SideInfoProblem, SideInfoSetting
from zdjscc.errors import InvalidParameterError
from zdjscc.experiment.montecarlo import McEstimate, gaussian_sampler, mixture_sampler, monte_carlo_validate
from zdjscc.mapping import DeterministicEncoder
from zdjscc.prob_model import build_joint_gaussian, build_noise


def side_info(rho):
    joint = build_joint_gaussian(rho, 1.0, 0.02, 6.0)
    return SideInfoSetting(SideInfoProblem(joint, build_noise(1.0, 0.02, 6.0), 0.01))


def test_linear_point_to_point():
    s = side_info(0.0)
    encs = [DeterministicEncoder(math.sqrt(3.0) * s.x)]
    est = monte_carlo_validate(encs, s.build_decoders(encs), s, 400_000, seed=1)
    assert abs(est.distortion - 0.25) <= 3 * est.stderr


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_zero_encoder_leaves_conditional_variance(rho):
    s = side_info(rho)
    encs = [DeterministicEncoder(np.zeros_like(s.x))]
    est = monte_carlo_validate(encs, s.build_decoders(encs), s, 400_000, seed=2)
    assert abs(est.distortion - (1 - rho * rho)) <= 3 * est.stderr


def test_stderr_shrinks_like_root_n():
    s = side_info(0.5)
    sol = optimal_linear(s)
    encs = [DeterministicEncoder(sol.gains[0] * s.x)]
    decs = s.build_decoders(encs)
    a = monte_carlo_validate(encs, decs, s, 100_000, seed=3)
    b = monte_carlo_validate(encs, decs, s, 200_000, seed=3)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2), rel=0.2)


def test_same_seed_same_estimate():
    s = side_info(0.5)
    encs = [DeterministicEncoder(s.x)]
    decs = s.build_decoders(encs)
    assert monte_carlo_validate(encs, decs, s, 20_000, seed=9) == monte_carlo_validate(encs, decs, s, 20_000, seed=9)


def test_needs_enough_samples():
    s = side_info(0.5)
    encs = [DeterministicEncoder(s.x)]
    with pytest.raises(InvalidParameterError):
        monte_carlo_validate(encs, s.build_decoders(encs), s, 100)


def test_agreement_rule():
    est = McEstimate(0.1, 0.001, 10_000)
    assert est.agrees_with(0.1025)
    assert est.agrees_with(0.104)  # 0.17 dB away
    assert not est.agrees_with(0.11)


def test_samplers_have_requested_moments():
    rng = np.random.default_rng(0)
    a, b = gaussian_sampler(2.0, 0.7)(rng, 200_000)
    assert np.var(a) == pytest.approx(2.0, rel=0.02)
    assert np.mean(a * b) == pytest.approx(1.4, rel=0.02)
    a, b = mixture_sampler([(-3, -3), (3, 3)], [0.5, 0.5], [[1, 0.95], [0.95, 1]])(rng, 200_000)
    assert np.mean(a * b) == pytest.approx(9.95, rel=0.02)
