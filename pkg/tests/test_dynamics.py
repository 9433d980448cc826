import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from neuroplan import autodiff as ad
from neuroplan.dynamics import (Control, VehicleState, rollout, rollout_traced, scale_controls, step,
                                unscale_controls)


@pytest.mark.parametrize("s,u,expected", [
    ((0, 0, 1, 0), (0, 0), (1, 0, 1, 0)),
    ((0, 0, 0, 0), (1, 0), (1, 0, 1, 0)),
    ((0, 0, 1, 0), (0, math.pi / 2), (0, 1, 1, math.pi / 2)),
])
def test_step_examples(s, u, expected):
    out = step(VehicleState(*map(float, s)), Control(*map(float, u)), 1.0)
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_scale_examples():
    np.testing.assert_allclose(scale_controls([1.0, 1.0], 3.0, math.radians(40)), [3.0, math.radians(40)])
    np.testing.assert_array_equal(scale_controls([0.0, 0.0], 3.0, 1.0), [0.0, 0.0])
    np.testing.assert_allclose(scale_controls([-0.5, 0.25], 3.0, 0.6981), [-1.5, 0.174525])


def test_scale_rejects_out_of_range():
    with pytest.raises(ValueError):
        scale_controls([1.1, 0.0], 3.0, 1.0)


@given(arrays(float, (6, 2), elements=st.floats(-1, 1)))
def test_scale_roundtrip(raw):
    back = unscale_controls(scale_controls(raw, 3.0, math.radians(40)), 3.0, math.radians(40))
    np.testing.assert_allclose(back, raw, rtol=0, atol=1e-12)


def test_rollout_stationary():
    tr = rollout(VehicleState(1.0, 2.0, 0.0, 0.3), np.zeros((10, 2)), 0.1)
    assert (tr.states == tr.states[0]).all()


def test_rollout_constant_acceleration():
    tr = rollout(VehicleState(0.0, 0.0, 0.0, 0.0), np.tile([1.0, 0.0], (10, 1)), 0.1)
    assert tr.v[-1] == pytest.approx(1.0, abs=1e-12)
    assert tr.x[-1] == pytest.approx(0.55, abs=1e-12)
    assert len(tr) == 11


def _resim(s0, u, dt):
    x, y, v, h = s0
    out = [(x, y, v, h)]
    for a, w in u:
        h = math.atan2(math.sin(h + w * dt), math.cos(h + w * dt))
        v = v + a * dt
        x, y = x + v * math.cos(h) * dt, y + v * math.sin(h) * dt
        out.append((x, y, v, h))
    return np.array(out)


def test_rollout_matches_independent_resimulation():
    rng = np.random.default_rng(5)
    u = rng.uniform([-3, -0.7], [3, 0.7], size=(30, 2))
    s0 = (1.0, -2.0, 4.0, 2.9)
    np.testing.assert_allclose(rollout(VehicleState(*s0), u, 0.1).states, _resim(s0, u, 0.1), atol=1e-12)


def test_traced_rollout_matches_numeric():
    rng = np.random.default_rng(6)
    u = rng.uniform(-1, 1, size=(8, 2))
    tape = ad.Tape()
    states = rollout_traced(VehicleState(0.0, 0.0, 2.0, 0.1), tape.var(u), 0.1)
    traced = np.array([[float(getattr(c, "data", c)) for c in s] for s in states])
    np.testing.assert_allclose(traced, rollout(VehicleState(0.0, 0.0, 2.0, 0.1), u, 0.1).states, atol=1e-14)


@given(st.floats(-math.pi, math.pi), st.integers(0, 2**32 - 1))
def test_rotational_equivariance(phi, seed):
    rng = np.random.default_rng(seed)
    u = rng.uniform([-3, -0.7], [3, 0.7], size=(15, 2))
    a = rollout(VehicleState(0.0, 0.0, 3.0, 0.4), u, 0.1).states
    b = rollout(VehicleState(0.0, 0.0, 3.0, 0.4 + phi), u, 0.1).states
    c, s = math.cos(phi), math.sin(phi)
    rotated = a[:, :2] @ np.array([[c, s], [-s, c]])
    np.testing.assert_allclose(b[:, :2], rotated, atol=1e-9)


@given(arrays(float, (12, 2), elements=st.floats(-3, 3)), st.floats(-5, 5))
def test_velocity_is_linear_in_controls(u, v0):
    tr = rollout(VehicleState(0.0, 0.0, v0, 0.0), u, 0.1)
    expected = v0 + 0.1 * np.cumsum(u[:, 0])
    np.testing.assert_allclose(tr.v[1:], expected, rtol=1e-12, atol=1e-12)


def test_reverse_motion_allowed():
    tr = rollout(VehicleState(0.0, 0.0, 0.0, 0.0), np.tile([-2.0, 0.0], (5, 1)), 0.1)
    assert tr.v[-1] < 0 and tr.x[-1] < 0
