import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zdjscc.errors import InvalidParameterError, NumericalDomainError
from zdjscc.prob_model import (
    Grid,
    NoiseModel,
    build_gaussian_mixture,
    build_gaussian_source,
    build_joint_gaussian,
    build_noise,
    expect,
)


def test_grid_rejects_uneven_spacing():
    with pytest.raises(InvalidParameterError):
        Grid(np.array([0.0, 1.0, 2.5]), 1.0)


def test_grid_needs_three_points():
    with pytest.raises(InvalidParameterError):
        Grid(np.array([0.0, 1.0]), 1.0)


def test_lattice_grid_sits_on_multiples():
    g = Grid.lattice(-3, 7, 0.25)
    np.testing.assert_allclose(g.points, 0.25 * np.arange(-3, 4))


def test_scalar_gaussian_moments():
    src = build_gaussian_source(0.0, 2.0, 0.02, 6.0)
    assert expect(src, lambda x: x) == pytest.approx(0.0, abs=1e-12)
    assert expect(src, lambda x: x * x) == pytest.approx(2.0, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(rho=st.floats(-0.95, 0.95), var=st.floats(0.3, 3.0))
def test_joint_gaussian_moments(rho, var):
    src = build_joint_gaussian(rho, var, 0.05, 6.0)
    assert math.fsum(src.weights.ravel()) == pytest.approx(1.0, abs=1e-12)
    assert expect(src, lambda x, z: x * z) == pytest.approx(rho * var, abs=1e-6 * var)
    assert expect(src, lambda x, z: z * z) == pytest.approx(var, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(rho=st.floats(-0.9, 0.9))
def test_conditionals_are_distributions(rho):
    src = build_joint_gaussian(rho, 1.0, 0.1, 7.0)
    cond = src.conditional(given=0)
    np.testing.assert_allclose(cond.sum(axis=1), 1.0, atol=1e-12)
    # the conditional mean of a Gaussian pair is rho * x
    x = src.points(0)
    mid = np.abs(x) < 2
    np.testing.assert_allclose((cond @ src.points(1))[mid], rho * x[mid], atol=1e-6)


def test_conditional_needs_two_axes():
    with pytest.raises(InvalidParameterError):
        build_gaussian_source().conditional()


def test_joint_gaussian_rejects_unit_correlation():
    with pytest.raises(InvalidParameterError):
        build_joint_gaussian(1.0)


def test_noise_has_requested_variance():
    n = build_noise(0.5, 0.01, 6.0)
    assert np.dot(n.weights, n.grid.points**2) == pytest.approx(0.5, rel=1e-6)
    assert n.radius == pytest.approx(n.half_width * n.spacing)
    assert n.sigma == pytest.approx(math.sqrt(0.5))


def test_noise_rejects_too_coarse_grid():
    pts = Grid.centered(0.0, 1, 2.0)
    with pytest.raises(InvalidParameterError):
        NoiseModel(pts, np.array([1.0, 1.0, 1.0]), 1.0)


def test_mixture_is_symmetric_for_symmetric_centers():
    src = build_gaussian_mixture([(-3, -3), (3, 3)], [0.5, 0.5], [[1, 0.95], [0.95, 1]], 0.1, 5.0)
    assert expect(src, lambda x, z: x) == pytest.approx(0.0, abs=1e-9)
    # variance = within-component 1 + between-component 9
    assert expect(src, lambda x, z: x * x) == pytest.approx(10.0, rel=1e-5)
    assert expect(src, lambda x, z: x * z) == pytest.approx(9.95, rel=1e-5)


def test_mixture_validates_weights():
    with pytest.raises(InvalidParameterError):
        build_gaussian_mixture([(0, 0)], [0.5], np.eye(2))


def test_expect_flags_nonfinite_integrand():
    src = build_gaussian_source(0.0, 1.0, 0.5, 3.0)
    with np.errstate(divide="ignore"):
        with pytest.raises(NumericalDomainError):
            expect(src, lambda x: 1.0 / x)
