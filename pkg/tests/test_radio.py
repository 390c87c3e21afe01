import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secure_lawn._validation import InputError
from secure_lawn.oracles import mrt_beamformer, null_steering_beamformer
from secure_lawn.radio import (
    Pose,
    RadioParams,
    capacity,
    los_channel,
    path_gain,
    received_signal_power,
    secrecy_rate,
    steering_vector,
    step_secrecy,
)

PARAMS = RadioParams()
coord = st.floats(-500, 500, allow_nan=False)
height = st.floats(0, 300, allow_nan=False)


def test_path_gain_examples():
    assert path_gain(1.0, PARAMS) == pytest.approx(1e-3, rel=1e-15)
    assert path_gain(100.0, PARAMS) == pytest.approx(1e-7, rel=1e-15)
    assert path_gain(0.1, PARAMS) == pytest.approx(1e-3, rel=1e-15)
    assert path_gain(0.0, PARAMS) == pytest.approx(1e-3)


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -1.0])
def test_path_gain_rejects(bad):
    with pytest.raises(InputError):
        path_gain(bad, PARAMS)


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_path_gain_monotone(a, b):
    lo, hi = sorted((a, b))
    assert path_gain(hi, PARAMS) <= path_gain(lo, PARAMS)
    assert path_gain(hi, PARAMS) > 0


@given(st.floats(1.0, 1e4))
def test_doubling_distance_quarters_gain(d):
    assert path_gain(2 * d, PARAMS) == pytest.approx(path_gain(d, PARAMS) / 4, rel=1e-12)


@pytest.mark.parametrize(
    "cos_phi, expected",
    [
        (0.0, [1, 1, 1, 1]),
        (0.5, [1, 1j, -1, -1j]),
        (1.0, [1, -1, 1, -1]),
    ],
)
def test_steering_examples(cos_phi, expected):
    np.testing.assert_allclose(steering_vector(4, cos_phi), expected, atol=1e-12)


@given(st.integers(1, 16), st.floats(-1, 1))
def test_steering_unit_modulus(m, c):
    np.testing.assert_allclose(np.abs(steering_vector(m, c)), 1.0, atol=1e-12)


def test_steering_rejects_bad_cosine():
    with pytest.raises(InputError):
        steering_vector(4, 1.5)


def test_los_channel_example():
    h = los_channel(Pose(0, 0, 0), Pose(100, 0, 100), PARAMS)
    # d = 100*sqrt(2), cos_phi = 1/sqrt(2)
    expected_norm_sq = 4 * 1e-3 / 2e4
    assert np.vdot(h, h).real == pytest.approx(expected_norm_sq, rel=1e-12)
    phase = math.pi / math.sqrt(2)
    amp = math.sqrt(1e-3 / 2e4)
    oracle = [amp * cmath.exp(1j * phase * k) for k in range(4)]
    np.testing.assert_allclose(h, oracle, rtol=1e-12)


def test_los_channel_broadside_equal_phases():
    h = los_channel(Pose(0, 0, 0), Pose(0, 0, 100), PARAMS)
    np.testing.assert_allclose(h, np.full(4, h[0]), atol=1e-18)


def test_mirrored_receivers_have_conjugate_channels():
    bs = Pose(0, 0, 0)
    h1 = los_channel(bs, Pose(30, 40, 50), PARAMS)
    h2 = los_channel(bs, Pose(-30, 40, 50), PARAMS)
    np.testing.assert_allclose(h1, np.conj(h2), atol=1e-15)


@given(coord, coord, height, coord, coord, height)
@settings(max_examples=50)
def test_channel_norm_invariant(x1, y1, z1, x2, y2, z2):
    tx, rx = Pose(x1, y1, z1), Pose(x2, y2, z2)
    h = los_channel(tx, rx, PARAMS)
    d = math.dist((x1, y1, z1), (x2, y2, z2))
    assert np.vdot(h, h).real == pytest.approx(path_gain(d, PARAMS) * 4, rel=1e-12)


def test_received_power_examples():
    assert received_signal_power([1, 0, 0, 0], [2, 0, 0, 0]) == 4.0
    assert received_signal_power([1, 1, 0, 0], [1, -1, 0, 0]) == 0.0


def test_received_power_matches_elementwise_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        h = rng.normal(size=4) + 1j * rng.normal(size=4)
        w = rng.normal(size=4) + 1j * rng.normal(size=4)
        total = 0j
        for hk, wk in zip(h, w):
            total += hk.conjugate() * wk
        oracle = total.real**2 + total.imag**2
        assert received_signal_power(h, w) == pytest.approx(oracle, rel=1e-12)


def test_received_power_shape_mismatch():
    with pytest.raises(InputError):
        received_signal_power([1, 0], [1, 0, 0])


def test_power_bound_and_mrt_equality():
    rng = np.random.default_rng(0)
    h = rng.normal(size=4) + 1j * rng.normal(size=4)
    p = 1.0
    bound = p * np.vdot(h, h).real
    for _ in range(1000):
        w = rng.normal(size=4) + 1j * rng.normal(size=4)
        w *= math.sqrt(p) / np.linalg.norm(w)
        assert received_signal_power(h, w) <= bound * (1 + 1e-12)
    assert received_signal_power(h, mrt_beamformer(h, p)) == pytest.approx(bound, rel=1e-12)


def test_capacity_examples():
    assert capacity(1.0, 0.0, 1.0) == 1.0
    assert capacity(0.0, 0.0, 1e-9) == 0.0
    oracle = math.log(1 + 4.8e-5 / (1e-7 + 1e-9)) / math.log(2)
    assert capacity(4.8e-5, 1e-7, 1e-9) == pytest.approx(oracle, rel=1e-12)
    assert capacity(4.8e-5, 1e-7, 1e-9) == pytest.approx(8.896, abs=5e-4)


def test_capacity_rejects_nonpositive_noise():
    with pytest.raises(InputError):
        capacity(1.0, 0.0, 0.0)


positive = st.floats(1e-12, 1e3)


@given(positive, positive, positive, st.floats(1.01, 10))
def test_capacity_monotone(s, i, n, k):
    base = capacity(s, i, n)
    assert capacity(s * k, i, n) >= base
    assert capacity(s, i * k, n) <= base
    assert capacity(s, i, n * k) <= base


def test_secrecy_rate_examples():
    assert secrecy_rate(5, 2) == 3
    assert secrecy_rate(1, 2) == 0
    assert secrecy_rate(2.5, 2.5) == 0


def test_step_secrecy_colocated_eve_no_jammer():
    params = RadioParams(jammer_power=0.0)
    bs, aav = Pose(0, 0, 0), Pose(60, 80, 100)
    w = mrt_beamformer(los_channel(bs, aav, params), params.p_max)
    out = step_secrecy(bs, aav, aav, Pose(10, 10, 0), w, params)
    assert out.c_legit > 0
    assert out.c_sec == 0.0


def test_step_secrecy_nulled_eavesdropper():
    bs, aav, eve, jam = Pose(0, 0, 0), Pose(150, 50, 100), Pose(-60, 120, 80), Pose(40, 150, 0)
    h_b = los_channel(bs, aav, PARAMS)
    h_e = los_channel(bs, eve, PARAMS)
    w = null_steering_beamformer(h_b, h_e, PARAMS.p_max)
    out = step_secrecy(bs, aav, eve, jam, w, PARAMS)
    assert out.c_eve == pytest.approx(0.0, abs=1e-9)
    assert out.c_sec == pytest.approx(out.c_legit, abs=1e-9)


def _oracle_step(bs, aav, eve, jam, w, p):
    """Scalar re-derivation with explicit loops and cmath."""

    def gain(a, b):
        d = max(math.dist(a, b), p.d_min)
        return p.g0 / d**2

    def chan(tx, rx):
        d = math.dist(tx, rx)
        c = (rx[0] - tx[0]) / d
        return [math.sqrt(gain(tx, rx)) * cmath.exp(1j * math.pi * k * c) for k in range(p.num_antennas)]

    def power(h):
        s = sum(hk.conjugate() * wk for hk, wk in zip(h, w))
        return abs(s) ** 2

    cb = math.log2(1 + power(chan(bs, aav)) / (p.jammer_power * gain(aav, jam) + p.noise_power))
    ce = math.log2(1 + power(chan(bs, eve)) / (p.jammer_power * gain(eve, jam) + p.noise_power))
    return cb, ce, max(0.0, cb - ce)


def test_step_secrecy_matches_oracle():
    bs, aav, eve, jam = (100, 0, 0), (70, 120, 100), (150, 100, 80), (40, 150, 0)
    rng = np.random.default_rng(11)
    w = rng.normal(size=4) + 1j * rng.normal(size=4)
    w *= math.sqrt(PARAMS.p_max) / np.linalg.norm(w)
    out = step_secrecy(Pose(*bs), Pose(*aav), Pose(*eve), Pose(*jam), w, PARAMS)
    cb, ce, cs = _oracle_step(bs, aav, eve, jam, list(w), PARAMS)
    assert out.c_legit == pytest.approx(cb, rel=1e-10)
    assert out.c_eve == pytest.approx(ce, rel=1e-10)
    assert out.c_sec == pytest.approx(cs, rel=1e-10, abs=1e-12)


@given(coord, coord, coord, coord, st.integers(0, 2**31))
@settings(max_examples=50)
def test_secrecy_bounded_by_legit(ax, ay, ex, ey, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=4) + 1j * rng.normal(size=4)
    w *= math.sqrt(PARAMS.p_max) / np.linalg.norm(w)
    out = step_secrecy(Pose(0, 0, 0), Pose(ax, ay, 100), Pose(ex, ey, 80), Pose(50, 50, 0), w, PARAMS)
    assert 0.0 <= out.c_sec <= out.c_legit


def test_beamformer_power_constraint():
    with pytest.raises(InputError):
        step_secrecy(Pose(0, 0, 0), Pose(1, 1, 1), Pose(2, 2, 2), Pose(3, 3, 0), np.full(4, 10.0), PARAMS)


def test_pose_validation():
    with pytest.raises(InputError):
        Pose(0, 0, -1)
    with pytest.raises(InputError):
        Pose(float("nan"), 0, 0)


@pytest.mark.parametrize(
    "kwargs",
    [{"num_antennas": 0}, {"p_max": 0}, {"g0": -1}, {"noise_power": 0}, {"jammer_power": -1}, {"d_min": 0}],
)
def test_radio_params_validation(kwargs):
    with pytest.raises(InputError):
        RadioParams(**kwargs)
