import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballistic_annihilation.collision import (
    collide,
    post_collision,
    rate_majorant,
    relative_rate,
    sample_direction,
    sample_directions,
    truncated_mass_fraction,
)
from ballistic_annihilation.core import ModelParams

# keep squares representable: no values so tiny that |v|^2 underflows
coord = st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-100)
vec3 = st.lists(coord, min_size=3, max_size=3).map(np.array)


def test_equal_velocities_are_fixed():
    v = np.array([0.3, -1.0, 2.0])
    vp, vsp = post_collision(v, v, np.array([0.0, 0.0, 1.0]))
    assert np.array_equal(vp, v) and np.array_equal(vsp, v)


def test_identity_collision():
    v, vs = np.array([1.0, 2.0, 0.0]), np.array([-1.0, 0.5, 3.0])
    s = (v - vs) / np.linalg.norm(v - vs)
    vp, vsp = post_collision(v, vs, s)
    assert np.allclose(vp, v, atol=1e-14) and np.allclose(vsp, vs, atol=1e-14)


def test_head_on_example():
    vp, vsp = post_collision([1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0])
    assert np.allclose(vp, [0, 1, 0], atol=1e-15) and np.allclose(vsp, [0, -1, 0], atol=1e-15)


def test_non_unit_sigma_rejected():
    with pytest.raises(ValueError, match="unit"):
        post_collision([1.0, 0, 0], [0, 0, 0], [0, 2.0, 0])


def test_collide_outcome():
    out = collide([1.0, 0, 0], [0, 0, 0], [0, 1.0, 0], annihilate=True)
    assert out.annihilated and out.v_prime is None
    out = collide([1.0, 0, 0], [0, 0, 0], [0, 1.0, 0], annihilate=False)
    assert not out.annihilated and out.v_prime.shape == (3,)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def test_conservation_million_collisions():
    rng = np.random.default_rng(1)
    m = 1_000_000
    v = rng.standard_normal((m, 3)) * rng.exponential(1.0, (m, 1))
    vs = rng.standard_normal((m, 3))
    s = sample_directions(rng, m, 3)
    vp, vsp = post_collision(v, vs, s)
    P0, P1 = v + vs, vp + vsp
    E0 = np.sum(v * v, 1) + np.sum(vs * vs, 1)
    E1 = np.sum(vp * vp, 1) + np.sum(vsp * vsp, 1)
    scale = np.sqrt(E0)  # momentum error relative to the pair's speed scale
    assert np.max(np.abs(P1 - P0).max(axis=1) / scale) <= 1e-12
    assert np.max(_rel(E1, E0)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, st.integers(0, 2**32 - 1))
def test_conservation_property(v, vs, seed):
    s = sample_directions(np.random.default_rng(seed), 1, 3)[0]
    vp, vsp = post_collision(v, vs, s)
    E0 = v @ v + vs @ vs
    scale = max(math.sqrt(E0), 1e-300)
    assert np.all(np.abs(vp + vsp - v - vs) <= 1e-12 * scale + 1e-300)
    assert abs(vp @ vp + vsp @ vsp - E0) <= 1e-12 * max(E0, 1e-300)


def test_relative_rate_examples():
    v, vs = np.array([3.0, 0, 0]), np.array([0, 4.0, 0])
    assert relative_rate(v, vs, ModelParams(gamma=0.0)) == 1.0
    assert relative_rate(v, vs, ModelParams(gamma=1.0)) == pytest.approx(5.0, rel=1e-15)
    assert relative_rate(v, vs, ModelParams(gamma=1.0, trunc_n=2)) == pytest.approx(2.0, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(vec3, vec3, st.floats(0, 1))
def test_relative_rate_symmetric(v, vs, g):
    p = ModelParams(gamma=g)
    assert relative_rate(v, vs, p) == relative_rate(vs, v, p)


def test_majorant_bounds_rates():
    rng = np.random.default_rng(4)
    v = rng.standard_normal((500, 3))
    vmax = np.max(np.linalg.norm(v, axis=1))
    p = ModelParams(gamma=1.0)
    i, j = np.triu_indices(500, 1)
    assert np.max(relative_rate(v[i], v[j], p)) <= rate_majorant(vmax, p)
    assert rate_majorant(3.0, ModelParams(gamma=0.0)) == 1.0
    assert rate_majorant(3.0, ModelParams(gamma=1.0, trunc_n=2)) == 2.0


def test_directions_unit_and_centered():
    rng = np.random.default_rng(5)
    s = sample_direction(rng, ModelParams(), size=1_000_000)
    assert np.allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-14)
    assert np.all(np.abs(s.mean(axis=0)) < 4 / math.sqrt(1e6))
    one = sample_direction(rng, ModelParams(d=5))
    assert one.shape == (5,) and abs(np.linalg.norm(one) - 1) < 1e-14


def test_truncated_directions():
    rng = np.random.default_rng(6)
    p = ModelParams(trunc_n=2)
    ref = np.array([0.0, 0.0, 2.0])
    s = sample_direction(rng, p, reference=ref, size=20000)
    assert np.all(np.abs(s[:, 2]) <= 0.5)
    # in 3D cos(theta) is uniform on [-1, 1]: |t| <= 1/2 keeps half
    assert truncated_mass_fraction(p) == pytest.approx(0.5, abs=1e-12)
    raw = sample_directions(rng, 200000, 3)
    rejected = np.mean(np.abs(raw[:, 2]) > 0.5)
    assert abs(rejected - 0.5) < 4 * math.sqrt(0.25 / 200000)


def test_truncation_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="degenerate"):
        sample_direction(rng, ModelParams(trunc_n=3), reference=np.zeros(3))
    with pytest.raises(ValueError, match="no admissible"):
        sample_direction(rng, ModelParams(trunc_n=1), reference=np.ones(3))
