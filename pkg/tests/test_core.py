import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballistic_annihilation.core import (
    ModelParams,
    MomentRecord,
    ParticleEnsemble,
    RadialProfile,
    average_profiles,
    bulk_quantities,
    gaussian_moment,
    lp_norm_estimate,
    moment,
    moment_record,
    radial_histogram,
)

from conftest import maxwellian


def test_model_params_defaults_and_roundtrip():
    p = ModelParams()
    assert (p.d, p.gamma, p.alpha, p.trunc_n) == (3, 1.0, 0.0, None)
    q = ModelParams(d=2, gamma=0.5, alpha=0.2, trunc_n=4)
    assert ModelParams.from_dict(q.to_dict()) == q


@pytest.mark.parametrize(
    "kw, field",
    [({"d": 1}, "d"), ({"gamma": 1.5}, "gamma"), ({"gamma": -0.1}, "gamma"), ({"alpha": 1.5}, "alpha"),
     ({"trunc_n": 0}, "trunc_n")],
)
def test_model_params_rejects_out_of_range(kw, field):
    with pytest.raises(ValueError, match=field):
        ModelParams(**kw)


def test_non_constant_angular_law_rejected():
    with pytest.raises(ValueError, match="unsupported"):
        ModelParams.from_dict({"angular": {"kind": "tabulated"}})


def test_ensemble_copies_caller_array():
    v = np.zeros((3, 3))
    ens = ParticleEnsemble(v, 0.5)
    v[0, 0] = 7.0
    assert ens.velocities[0, 0] == 0.0
    assert ens.count == 3 and ens.d == 3 and ens.mass == 1.5


def test_ensemble_validation():
    with pytest.raises(ValueError):
        ParticleEnsemble(np.zeros((3, 3)), 0.0)


def test_moment_two_unit_vectors():
    ens = ParticleEnsemble(np.array([[1.0, 0, 0], [-1.0, 0, 0]]), 0.5)
    assert moment(ens, 2)[0] == pytest.approx(1.0, abs=1e-15)


def test_moment_four_speeds():
    v = np.zeros((4, 3))
    v[:, 0] = [1, 2, 3, 4]
    # (1 + 4 + 9 + 16) / 4
    assert moment(ParticleEnsemble(v, 0.25), 2)[0] == pytest.approx(7.5, rel=1e-15)


def test_moment_order_zero_is_mass_exactly(rng):
    ens = maxwellian(rng, 1001, weight=0.37)
    assert moment(ens, 0) == (0.37 * 1001, 0.0)


def test_moment_standard_error_matches_formula(rng):
    ens = maxwellian(rng, 500, weight=0.01)
    x = np.sum(ens.velocities**2, axis=1) ** 1.5
    assert moment(ens, 3)[1] == pytest.approx(0.01 * math.sqrt(500) * x.std(ddof=1), rel=1e-12)


def test_moment_empty_ensemble():
    with pytest.raises(ValueError, match="empty ensemble"):
        moment(ParticleEnsemble(np.zeros((0, 3)), 1.0), 2)


def test_bulk_single_particle_at_rest():
    n, u, th = bulk_quantities(ParticleEnsemble(np.zeros((1, 3)), 1.0))
    assert n == 1.0 and np.all(u == 0) and th == 0.0


def test_bulk_two_unit_vectors():
    n, u, th = bulk_quantities(ParticleEnsemble(np.array([[1.0, 0, 0], [-1.0, 0, 0]]), 0.5))
    assert n == 1.0 and np.allclose(u, 0) and th == pytest.approx(1 / 3, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
def test_bulk_translation(shift, seed):
    ens = maxwellian(np.random.default_rng(seed), 50)
    c = np.array(shift)
    n0, u0, th0 = bulk_quantities(ens)
    n1, u1, th1 = bulk_quantities(ens.with_velocities(ens.velocities + c))
    assert n1 == n0
    assert np.allclose(u1, u0 + c, atol=1e-12)
    assert th1 == pytest.approx(th0, rel=1e-9, abs=1e-12)


def test_histogram_empty_bins_beyond_support():
    v = np.zeros((10, 3))
    v[:, 0] = 0.3
    prof = radial_histogram(ParticleEnsemble(v, 0.1), bins=4, r_max=2.0)
    assert prof.density[1:].tolist() == [0.0, 0.0, 0.0]


def test_histogram_shell_lands_in_one_bin(rng):
    from ballistic_annihilation.collision import sample_directions

    v = 1.3 * sample_directions(rng, 1000, 3)
    prof = radial_histogram(ParticleEnsemble(v, 1e-3), bins=10, r_max=2.0)
    assert np.count_nonzero(prof.density) == 1
    assert prof.density[6] * prof.shell_volumes[6] == pytest.approx(1.0, rel=1e-12)


def test_histogram_mass_conservation_with_overflow(rng):
    ens = maxwellian(rng, 20000)
    with pytest.warns(RuntimeWarning, match="beyond r_max"):
        prof = radial_histogram(ens, bins=8, r_max=2.0)
    assert prof.mass + prof.overflow_mass == pytest.approx(ens.mass, rel=1e-12)


def test_histogram_recovers_theta(rng):
    ens = maxwellian(rng, 200000, theta=0.5)
    prof = radial_histogram(ens, bins=200, r_max=6.0)
    _, _, th = bulk_quantities(ens)
    # binning error at width 0.03 is ~1e-4; MC error of Theta ~ 0.5 * sqrt(2/(3N))
    se = 0.5 * math.sqrt(2 / (3 * ens.count))
    assert abs(prof.theta - th) < 3 * se + 2e-4


def test_histogram_rejects_bad_bins():
    ens = ParticleEnsemble(np.ones((2, 3)), 0.5)
    with pytest.raises(ValueError, match="bin"):
        radial_histogram(ens, bins=[0.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="bins"):
        radial_histogram(ens, bins=0)


def test_profile_invariants():
    with pytest.raises(ValueError, match="start at 0"):
        RadialProfile([0.5, 1.0], [1.0], 3)
    with pytest.raises(ValueError, match="nonnegative"):
        RadialProfile([0.0, 1.0], [-1.0], 3)


def test_lp_norm_two_bins():
    # densities {2, 1} on unit volumes: sqrt(4 + 1)
    r1 = (3 / (4 * math.pi)) ** (1 / 3)
    r2 = (2 * 3 / (4 * math.pi)) ** (1 / 3)
    prof = RadialProfile([0.0, r1, r2], [2.0, 1.0], 3)
    assert np.allclose(prof.shell_volumes, 1.0)
    assert lp_norm_estimate(prof, 2) == pytest.approx(math.sqrt(5), rel=1e-12)


def test_lp_norm_single_bin_and_p_to_one():
    prof = RadialProfile([0.0, 1.3], [0.7], 3)
    V = prof.shell_volumes[0]
    assert lp_norm_estimate(prof, 3) == pytest.approx(0.7 * V ** (1 / 3), rel=1e-12)
    assert lp_norm_estimate(prof, 1 + 1e-9) == pytest.approx(prof.mass, rel=1e-6)
    with pytest.raises(ValueError):
        lp_norm_estimate(prof, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=3, max_size=3), st.lists(st.floats(0, 1), min_size=3, max_size=3),
       st.floats(1.1, 5))
def test_lp_norm_monotone(dens, bump, p):
    e = [0.0, 1.0, 2.0, 3.0]
    lo = lp_norm_estimate(RadialProfile(e, dens, 3), p)
    hi = lp_norm_estimate(RadialProfile(e, np.add(dens, bump), 3), p)
    assert hi >= lo * (1 - 1e-12)


def test_average_profiles_requires_shared_edges():
    a = RadialProfile([0.0, 1.0], [1.0], 3)
    b = RadialProfile([0.0, 2.0], [1.0], 3)
    with pytest.raises(ValueError):
        average_profiles([a, b])
    assert average_profiles([a, a.scaled([3.0])]).density[0] == 2.0


def test_gaussian_moment_values():
    # E|X| for X ~ N(0, I/2) in 3D equals 2/sqrt(pi)
    assert gaussian_moment(1, 3, 0.5) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-14)
    assert gaussian_moment(4, 3, 1.0) == pytest.approx(15.0, rel=1e-14)


def test_moment_record_roundtrip(rng):
    ens = maxwellian(rng, 100)
    rec = moment_record(ens, 0.25, [0.5, 1.5])
    assert sorted(rec.M) == [0.0, 0.5, 1.0, 1.5]
    assert rec.value(0.0) == pytest.approx(ens.mass)
    back = MomentRecord.from_dict(rec.to_dict())
    assert back.t == rec.t and back.M == rec.M
    with pytest.raises(KeyError):
        rec.get(2.0)
