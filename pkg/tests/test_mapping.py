import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zdjscc.errors import InvalidArgumentError, InvalidParameterError
from zdjscc.mapping import (
    DecoderTable,
    DeterministicEncoder,
    LocalAffineModel,
    PiecewiseEncoder,
    build_decoder_distributed,
    build_decoder_side_info,
    channel_likelihood,
    conditional_entropy,
    encoder_power,
    lattice_window,
    lookup,
    to_deterministic,
    write_encoder_csv,
)
from zdjscc.prob_model import Grid, build_joint_gaussian, build_noise


def _node_prob(g, noise):
    """Kernel weights written out node by node."""
    dy, s, r = noise.spacing, noise.sigma, noise.radius
    out = {}
    for j in range(math.floor((g - r) / dy) - 1, math.ceil((g + r) / dy) + 2):
        d = j * dy - g
        if abs(d) < r:
            out[j] = math.exp(-d * d / (2 * s * s)) - math.exp(-r * r / (2 * s * s))
    tot = sum(out.values())
    return {j: v / tot for j, v in out.items()}


def test_local_model_rejects_nan():
    with pytest.raises(InvalidParameterError):
        LocalAffineModel(float("nan"), 0.0)


def test_piecewise_encoder_validates_columns():
    with pytest.raises(InvalidParameterError):
        PiecewiseEncoder(np.zeros((2, 2)), np.full((2, 4), 0.4))


def test_values_and_hard_decision():
    enc = PiecewiseEncoder([[1.0, 0.0], [-1.0, 2.0]], [[0.7, 0.2, 0.5], [0.3, 0.8, 0.5]])
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(enc.values(x), [[0, 1, 2], [2, 1, 0]])
    np.testing.assert_allclose(to_deterministic(enc, x).values, [0.0, 1.0, 2.0])


def test_power_and_entropy():
    joint = build_joint_gaussian(0.5, 1.0, 0.1, 5.0)
    x = joint.points(0)
    enc = PiecewiseEncoder.single(2.0, 0.0, x.size)
    assert encoder_power(enc, joint) == pytest.approx(4.0, rel=1e-4)
    assert conditional_entropy(enc, joint) == 0.0
    uniform = PiecewiseEncoder([[1, 0], [2, 0], [3, 0]], np.full((3, x.size), 1 / 3))
    assert conditional_entropy(uniform, joint) == pytest.approx(math.log(3))


def test_lattice_window_covers_support():
    noise = build_noise(1.0, 0.1, 5.0)
    first, rows = lattice_window(np.array([-1.0, 2.0]), noise)
    assert first * 0.1 > -1.0 - noise.radius
    assert (first + rows - 1) * 0.1 < 2.0 + noise.radius
    assert (first - 1) * 0.1 <= -1.0 - noise.radius + 1e-12


@settings(max_examples=25, deadline=None)
@given(g=st.floats(-3, 3), spacing=st.sampled_from([0.1, 0.2, 0.25]))
def test_channel_likelihood_matches_node_formula(g, spacing):
    noise = build_noise(1.0, spacing, 5.0)
    L, first = channel_likelihood(DeterministicEncoder([g, g, g]), np.zeros(3), noise)
    expected = _node_prob(g, noise)
    got = {first + r: v for r, v in enumerate(L[:, 0]) if v > 0}
    assert set(got) == set(expected)
    for j, v in expected.items():
        assert got[j] == pytest.approx(v, rel=1e-10, abs=1e-15)


def test_side_info_decoder_brute_force(rng):
    joint = build_joint_gaussian(0.7, 1.0, 0.4, 4.0)
    noise = build_noise(1.0, 0.4, 4.0)
    x, z = joint.points(0), joint.points(1)
    enc = PiecewiseEncoder(rng.normal(size=(2, 2)), np.vstack([np.full(x.size, 0.3), np.full(x.size, 0.7)]))
    dec = build_decoder_side_info(enc, joint, noise)
    g = enc.values(x)
    num = {}
    den = {}
    for n in range(x.size):
        for k in range(2):
            for j, pj in _node_prob(g[k, n], noise).items():
                for m in range(z.size):
                    w = joint.weights[n, m] * enc.assoc[k, n] * pj
                    num[j, m] = num.get((j, m), 0.0) + w * x[n]
                    den[j, m] = den.get((j, m), 0.0) + w
    for (j, m), d in den.items():
        if d > 1e-200:
            assert dec.values[j - dec.y_index0, m] == pytest.approx(num[j, m] / d, abs=1e-9)


def test_distributed_decoder_brute_force(rng):
    joint = build_joint_gaussian(0.6, 1.0, 0.5, 3.0)
    noise = build_noise(1.0, 0.5, 4.0)
    x1, x2 = joint.points(0), joint.points(1)
    e1 = DeterministicEncoder(1.5 * x1)
    e2 = DeterministicEncoder(np.sin(x2))
    d1, d2 = build_decoder_distributed(e1, e2, joint, noise, noise)
    (dg,) = build_decoder_distributed(e1, e2, joint, noise, noise, target=lambda a, b: a * b)
    p1 = [_node_prob(v, noise) for v in e1.values]
    p2 = [_node_prob(v, noise) for v in e2.values]
    acc = {}
    for a in range(x1.size):
        for b in range(x2.size):
            f = joint.weights[a, b]
            for j, u in p1[a].items():
                for k, v in p2[b].items():
                    s = acc.setdefault((j, k), np.zeros(4))
                    s += f * u * v * np.array([1.0, x1[a], x2[b], x1[a] * x2[b]])
    for (j, k), s in acc.items():
        if s[0] > 1e-200:
            r, c = j - d1.y_index0, k - d1.z_index0
            assert d1.values[r, c] == pytest.approx(s[1] / s[0], abs=1e-9)
            assert d2.values[r, c] == pytest.approx(s[2] / s[0], abs=1e-9)
            assert dg.values[r, c] == pytest.approx(s[3] / s[0], abs=1e-9)


def test_decoder_rejects_misaligned_grid():
    joint = build_joint_gaussian(0.5, 1.0, 0.2, 3.0)
    noise = build_noise(1.0, 0.2, 4.0)
    enc = DeterministicEncoder(joint.points(0))
    with pytest.raises(InvalidArgumentError):
        build_decoder_side_info(enc, joint, noise, Grid(np.array([0.05, 0.25, 0.45]), 0.2))


def test_lookup_is_bilinear_and_clamped():
    tab = DecoderTable(Grid.lattice(0, 3, 1.0), Grid.lattice(0, 3, 1.0), np.arange(9.0).reshape(3, 3), 0, 0)
    assert lookup(tab, 0.5, 0.5) == pytest.approx(2.0)
    assert lookup(tab, 1.25, 2.0) == pytest.approx(3 * 1.25 + 2)
    assert lookup(tab, -10.0, 10.0) == pytest.approx(2.0)


def test_encoder_csv_is_full_precision(tmp_path):
    path = tmp_path / "enc.csv"
    write_encoder_csv(path, [0.1, 0.2], [1 / 3, 2 / 3])
    rows = path.read_text().splitlines()
    assert rows[0] == "x,g"
    assert float(rows[1].split(",")[1]) == 1 / 3
