import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis import strategies as st

from zdjscc.annealer import (
    AnnealConfig,
    AnnealState,
    duplicate_and_perturb,
    free_energy_gradient,
    gibbs_probabilities,
    gibbs_update,
    hard_assignments,
    merge_models,
    model_gradient_step,
    run_da,
    thermal_equilibrium,
    zero_entropy_finalize,
)
from zdjscc.errors import InvalidParameterError, InvalidStateError
from zdjscc.mapping import PiecewiseEncoder

# dyadic values keep cost + shift exact, so only the normalization is under test
dyadic = st.integers(-51_200, 51_200).map(lambda v: v / 1024)
costs_strategy = st.integers(1, 6).flatmap(
    lambda k: st.lists(st.lists(dyadic, min_size=4, max_size=4), min_size=k, max_size=k)
)


def _state(setting, rng, k=3, temperature=0.05):
    encs = []
    for i in range(setting.n_encoders):
        n = setting.source_points(i).size
        a = rng.random((k, n))
        encs.append(PiecewiseEncoder(rng.normal(size=(k, 2)) * (1.5, 0.5), a / a.sum(axis=0)))
    encs = tuple(encs)
    return AnnealState(temperature, encs, setting.build_decoders(encs))


def _free_energy(setting, state):
    return setting.breakdown(state.encoders, state.decoders, state.temperature).free_energy


@settings(max_examples=50, deadline=None)
@given(costs=costs_strategy, temperature=st.floats(1e-3, 1e3), shift=st.lists(dyadic, min_size=4, max_size=4))
def test_gibbs_shift_invariance(costs, temperature, shift):
    c = np.array(costs)
    a = gibbs_probabilities(c, temperature)
    b = gibbs_probabilities(c + np.array(shift)[None, :], temperature)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-12)


def test_gibbs_limits(rng):
    c = rng.normal(size=(5, 40))
    np.testing.assert_allclose(gibbs_probabilities(c, 1e6), 0.2, atol=1e-5)
    hard = gibbs_probabilities(c, 1e-9)
    assert np.all(hard[np.argmin(c, axis=0), np.arange(40)] >= 1 - 1e-6)


def test_gibbs_needs_positive_temperature():
    with pytest.raises(InvalidStateError):
        gibbs_probabilities(np.zeros((2, 2)), 0.0)


@pytest.mark.parametrize("which", ["small_side_info", "small_distributed"])
def test_gibbs_update_minimizes_free_energy(request, which, rng):
    s = request.getfixturevalue(which)
    state = _state(s, rng)
    best = replace(state, encoders=gibbs_update(s, state))
    f_best = _free_energy(s, best)
    strict = 0
    for _ in range(100):
        encs = []
        for e in best.encoders:
            a = np.clip(e.assoc + 0.05 * rng.random(e.assoc.shape), 0, None)
            encs.append(e.replace(assoc=a / a.sum(axis=0)))
        f = _free_energy(s, replace(best, encoders=tuple(encs)))
        assert f >= f_best - 1e-12 * abs(f_best)
        strict += f > f_best
    assert strict >= 95


@pytest.mark.parametrize("which", ["small_side_info", "small_distributed"])
def test_free_energy_gradient_matches_differences(request, which, rng):
    s = request.getfixturevalue(which)
    state = _state(s, rng)
    h = 1e-5
    for i in range(s.n_encoders):
        grad = free_energy_gradient(s, state, i)
        enc = state.encoders[i]
        for k in range(enc.n_models):
            for p in range(2):
                vals = []
                for sign in (1, -1):
                    params = enc.params.copy()
                    params[k, p] += sign * h
                    encs = list(state.encoders)
                    encs[i] = enc.replace(params=params)
                    vals.append(_free_energy(s, replace(state, encoders=tuple(encs))))
                fd = (vals[0] - vals[1]) / (2 * h)
                assert grad[k, p] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_model_step_lowers_its_own_cost(small_side_info, rng):
    s = small_side_info
    state = _state(s, rng)
    before = _free_energy(s, state)
    model = model_gradient_step(s, state, 1)
    params = state.encoders[0].params.copy()
    params[1] = (model.slope, model.intercept)
    after = _free_energy(s, replace(state, encoders=(state.encoders[0].replace(params=params),)))
    assert after <= before


@pytest.mark.parametrize("which", ["small_side_info", "small_distributed"])
def test_equilibrium_is_monotone(request, which, rng):
    s = request.getfixturevalue(which)
    state = thermal_equilibrium(s, _state(s, rng), config=AnnealConfig(max_sweeps=40))
    h = np.array(state.history)
    assert np.all(np.diff(h) <= 1e-10 * np.abs(h[:-1]))


def test_duplicate_and_merge_round_trip(small_side_info, rng):
    state = _state(small_side_info, rng, k=2)
    dup = duplicate_and_perturb(state, 1e-6, rng)
    assert dup.n_models == (4,)
    np.testing.assert_allclose(dup.encoders[0].assoc.sum(axis=0), 1.0)
    merged = merge_models(dup, 1e-3)
    assert merged.n_models == (2,)
    np.testing.assert_allclose(merged.encoders[0].assoc, state.encoders[0].assoc, atol=1e-12)


def test_duplication_respects_model_cap(small_side_info, rng):
    state = _state(small_side_info, rng, k=3)
    assert duplicate_and_perturb(state, 0.1, rng, max_models=4) is state


def test_hard_assignment_is_idempotent(small_side_info, rng):
    s = small_side_info
    state = _state(s, rng)
    once = replace(state, encoders=hard_assignments(s, state))
    twice = hard_assignments(s, once)
    np.testing.assert_array_equal(twice[0].assoc, once.encoders[0].assoc)
    assert set(np.unique(once.encoders[0].assoc)) <= {0.0, 1.0}


def test_finalize_does_not_raise_the_lagrangian(small_side_info, rng):
    s = small_side_info
    state = thermal_equilibrium(s, _state(s, rng, temperature=1e-4), config=AnnealConfig(max_sweeps=30))
    res = zero_entropy_finalize(s, state)
    soft = s.breakdown(state.encoders, s.build_decoders(state.encoders))
    assert res.cost.lagrangian <= soft.lagrangian + 1e-12


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        AnnealConfig(t_max=1.0, t_min=2.0)
    with pytest.raises(InvalidParameterError):
        AnnealConfig(alpha=1.0)


def test_hot_start_merges_back(small_side_info):
    cfg = AnnealConfig(t_max=1e4, t_min=1e4 * 0.5**2.5, alpha=0.5, epsilon=0.01, delta_g=0.05, max_restarts=0)
    seen = []
    run_da(small_side_info, cfg, lambda st: seen.append(st.n_models))
    assert seen == [(1,), (1,), (1,)]


def test_run_is_reproducible_and_entropy_falls(small_side_info):
    cfg = AnnealConfig(t_max=0.05, t_min=1e-4, alpha=0.6, epsilon=0.3, delta_g=0.05, max_models=8, rng_seed=3)
    a = run_da(small_side_info, cfg)
    b = run_da(small_side_info, cfg)
    assert [c.free_energy for c in a.trace] == [c.free_energy for c in b.trace]
    np.testing.assert_array_equal(a.encoders[0].values, b.encoders[0].values)
    ent = [c.entropy for c in a.trace]
    assert all(e2 <= e1 + 1e-9 for e1, e2 in zip(ent, ent[1:]))
