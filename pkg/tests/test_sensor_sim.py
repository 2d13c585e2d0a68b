import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from osmoglove import analysis, sensor_sim as ss
from osmoglove.errors import ConfigError, OutOfRangeError, SingularityError

import oracles

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: v / np.linalg.norm(v))


# --- dipole law ---------------------------------------------------------------

@pytest.mark.parametrize("r", [0.003, 0.01, 0.05])
def test_on_axis_field_matches_closed_form(r):
    d = ss.MagneticDipole([0, 0, 0], [0, 0, 0.01])
    B = ss.dipole_field(d, [0, 0, r])
    np.testing.assert_allclose(B, [0, 0, oracles.dipole_on_axis_ut(0.01, r)], rtol=1e-12, atol=1e-12)


def test_doubling_distance_divides_by_eight():
    d = ss.MagneticDipole([0.01, -0.02, 0.0], [0.003, 0, 0])
    b1 = ss.dipole_field(d, [0.01 + 0.02, -0.02, 0])
    b2 = ss.dipole_field(d, [0.01 + 0.04, -0.02, 0])
    assert np.linalg.norm(b1) / np.linalg.norm(b2) == pytest.approx(8.0, rel=1e-12)


def test_equatorial_field_is_half_and_antiparallel():
    m = np.array([0.0, 0.0, 0.02])
    d = ss.MagneticDipole([0, 0, 0], m)
    axial = ss.dipole_field(d, [0, 0, 0.02])
    eq = ss.dipole_field(d, [0.02, 0, 0])
    assert np.linalg.norm(eq) == pytest.approx(0.5 * np.linalg.norm(axial), rel=1e-12)
    assert np.linalg.norm(eq) == pytest.approx(oracles.dipole_equatorial_ut(0.02, 0.02), rel=1e-12)
    assert eq @ m / (np.linalg.norm(eq) * np.linalg.norm(m)) == pytest.approx(-1.0)


def test_guard_radius_raises():
    d = ss.MagneticDipole([0, 0, 0], [0, 0, 1e-3])
    with pytest.raises(SingularityError):
        ss.dipole_field(d, [5e-5, 0, 0])
    ss.dipole_field(d, [2e-4, 0, 0])


@settings(max_examples=60, deadline=None)
@given(u=unit_vectors, mdir=unit_vectors, dist=st.floats(2e-3, 0.2))
def test_reciprocal_cube_decay(u, mdir, dist):
    d = ss.MagneticDipole([0.01, 0.02, -0.01], 0.005 * mdir)
    near = ss.dipole_field(d, d.position + dist * u)
    far = ss.dipole_field(d, d.position + 2 * dist * u)
    np.testing.assert_allclose(far * 8.0, near, rtol=1e-9, atol=1e-12 * np.abs(near).max())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n_a=st.integers(1, 6), n_b=st.integers(1, 6))
def test_superposition_over_dipole_sets(seed, n_a, n_b):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-0.05, 0.05, (n_a + n_b, 3))
    mom = rng.normal(0, 0.01, (n_a + n_b, 3))
    pts = rng.uniform(0.1, 0.2, (4, 3))
    ambient = rng.normal(0, 40, 3)
    both = ss.superposed_field(pos, mom, pts) + ambient
    a = ss.superposed_field(pos[:n_a], mom[:n_a], pts) + ambient
    b = ss.superposed_field(pos[n_a:], mom[n_a:], pts) + ambient
    np.testing.assert_allclose(both, a + b - ambient, rtol=1e-9, atol=1e-9)


# --- forces -----------------------------------------------------------------

def test_zero_force_leaves_taxel_unchanged(geometry):
    t = geometry.taxels[1]
    moved = ss.apply_force(t, [0, 0, 0])
    np.testing.assert_array_equal(moved.dipole.position, t.rest_dipole_position)


def test_one_newton_gives_calibrated_signal(geometry):
    for t in geometry.taxels:
        moved = ss.apply_force(t, -1.0 * t.normal)
        mag = t.magnetometers[0]
        delta = mag.rotation.T @ (ss.dipole_field(moved.dipole, mag.position) - ss.dipole_field(t.dipole, mag.position))
        change = np.linalg.norm(t.shield.gains * delta)
        assert 200.0 <= change <= 400.0, t.name


def test_force_displacement_is_linear(geometry):
    t = geometry.taxels[2]
    f = np.array([0.3, -0.2, -1.0])
    d1 = ss.apply_force(t, f).dipole.position - t.rest_dipole_position
    d2 = ss.apply_force(t, 2 * f).dipole.position - t.rest_dipole_position
    np.testing.assert_allclose(d2, 2 * d1, rtol=1e-9, atol=1e-15)


def test_force_is_reversible(geometry):
    t = geometry.taxels[3]
    pressed = ss.apply_force(t, -5 * t.normal)
    released = ss.apply_force(pressed, [0, 0, 0])
    np.testing.assert_array_equal(released.dipole.position, t.rest_dipole_position)


def test_force_ceiling(geometry):
    t = geometry.taxels[0]
    ss.apply_force(t, -80.0 * t.normal)
    with pytest.raises(OutOfRangeError):
        ss.apply_force(t, [0, 0, 80.01])


def test_sensing_floor_is_three_sigma(geometry):
    t = geometry.taxels[1]
    f = ss.sensing_floor(t)
    sigma = t.magnetometers[0].noise_floor_sigma
    assert ss.own_signal(t, -f * t.normal) == pytest.approx(3 * sigma, rel=1e-6)
    assert 0 < f < 1.0


# --- glove reads --------------------------------------------------------------

def test_baseline_read_is_deterministic(geometry):
    quiet = geometry.with_noise(0.0)
    a = ss.read_glove(quiet.taxels, np.zeros(3), rng_seed=5)
    b = ss.read_glove(quiet.taxels, np.zeros(3), rng_seed=5)
    np.testing.assert_array_equal(a.readings, b.readings)
    noisy = ss.read_glove(geometry.taxels, np.zeros(3), rng_seed=5)
    np.testing.assert_array_equal(noisy.readings, ss.read_glove(geometry.taxels, np.zeros(3), rng_seed=5).readings)


def test_single_dipole_world_equals_field(geometry):
    quiet = geometry.with_noise(0.0).with_shield(False)
    lonely = [t if t.id == 4 else t.translated([1e4, 1e4 * (t.id + 1), 0]) for t in quiet.taxels]
    frame = ss.read_glove(lonely, np.zeros(3), rng_seed=0)
    t = lonely[4]
    for m, mag in enumerate(t.magnetometers):
        expected = mag.rotation.T @ ss.dipole_field(t.dipole, mag.position)
        np.testing.assert_allclose(frame.readings[4, m], expected, rtol=1e-9, atol=1e-9)


def test_index_press_perturbs_neighbour_less(geometry):
    quiet = geometry.with_noise(0.0)
    i, j = quiet.index_of("index_distal"), quiet.index_of("middle_distal")
    rest = ss.read_glove(quiet.taxels, quiet.earth_field, 0).readings
    taxels = list(quiet.taxels)
    taxels[i] = ss.apply_force(taxels[i], -2.0 * taxels[i].normal)
    pressed = ss.read_glove(taxels, quiet.earth_field, 0).readings
    own = np.linalg.norm(pressed[i] - rest[i])
    neighbour = np.linalg.norm(pressed[j] - rest[j])
    assert neighbour < own
    assert neighbour > 0


def test_shield_scales_sensor_axes(geometry):
    quiet = geometry.with_noise(0.0)
    on = ss.read_glove(quiet.with_shield(True).taxels, quiet.earth_field, 0).readings
    off = ss.read_glove(quiet.with_shield(False).taxels, quiet.earth_field, 0).readings
    np.testing.assert_allclose(on, off * np.array([0.25, 0.25, 1.5]), rtol=1e-12)


# --- scenarios ----------------------------------------------------------------

def test_finger_wave_frame_count_and_clock(geometry):
    frames = ss.simulate_finger_wave(geometry, 60.0, seed=1)
    assert len(frames) == 1500
    ts = np.array([f.timestamp for f in frames])
    assert np.all(np.diff(ts) == 40_000)


def test_finger_wave_without_motion_is_constant_up_to_noise(geometry):
    quiet = geometry.with_noise(0.0)
    s = ss.finger_wave_stream(quiet, 4.0, seed=2, amplitude_m=0.0, wobble_rad=0.0)
    r = s.readings(quiet)
    np.testing.assert_array_equal(r, np.broadcast_to(r[0], r.shape))
    noisy = ss.finger_wave_stream(geometry, 4.0, seed=2, amplitude_m=0.0, wobble_rad=0.0).readings(geometry)
    assert np.std(noisy - r) == pytest.approx(3.0, rel=0.1)


def test_finger_wave_is_deterministic(geometry):
    a = ss.finger_wave_stream(geometry, 2.0, seed=9).readings(geometry)
    b = ss.finger_wave_stream(geometry, 2.0, seed=9).readings(geometry)
    c = ss.finger_wave_stream(geometry, 2.0, seed=10).readings(geometry)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_shield_lowers_inplane_rms_middle_distal(geometry):
    k = geometry.index_of("middle_distal")
    s = ss.finger_wave_stream(geometry, 60.0, seed=3)
    on = analysis.rms_noise(s.readings(geometry.with_shield(True))[:, k, 0, :]).per_axis
    off = analysis.rms_noise(s.readings(geometry.with_shield(False))[:, k, 0, :]).per_axis
    assert on[0] < off[0] and on[1] < off[1]


def test_shield_never_increases_inplane_crosstalk(geometry):
    quiet = geometry.with_noise(0.0)
    s = ss.finger_wave_stream(quiet, 10.0, seed=4)
    on = s.readings(quiet.with_shield(True))
    off = s.readings(quiet.with_shield(False))
    dev_on = np.abs(on - on[0])[..., :2]
    dev_off = np.abs(off - off[0])[..., :2]
    assert np.all(dev_on <= dev_off + 1e-9)


def test_press_sequence_has_ten_peaks(geometry):
    k = geometry.index_of("index_distal")
    frames = ss.simulate_press_sequence(geometry, presses=10, seed=0)
    z = ss.stack_readings(frames)[:, k, 0, 2]
    dev = np.abs(z - np.median(z[:10]))
    peaks, _ = find_peaks(dev, prominence=0.5 * dev.max())
    assert len(peaks) == 10


def test_unloaded_press_equals_static_baseline(geometry):
    s = ss.press_stream(geometry, presses=1, seed=11, force_n=0.0)
    base = ss.static_stream(geometry, len(s.timestamps), seed=11)
    np.testing.assert_array_equal(s.readings(geometry), base.readings(geometry))


def test_press_crosstalk_thumb_below_middle(geometry):
    quiet = geometry.with_noise(0.0)
    r = ss.press_stream(quiet, presses=10, seed=0).readings(quiet)
    thumb = analysis.rms_noise(r[:, geometry.index_of("thumb_distal"), 0, :]).average
    middle = analysis.rms_noise(r[:, geometry.index_of("middle_distal"), 0, :]).average
    assert thumb < middle


def test_rest_noise_statistics(geometry):
    s = ss.static_stream(geometry, 500, seed=8)
    r = s.readings(geometry)
    dev = (r - r.mean(axis=0)).reshape(-1, 3)  # 12 000 samples per axis
    assert dev.shape[0] >= 10_000
    np.testing.assert_allclose(dev.std(axis=0), 3.0, rtol=0.05)
    assert np.all(np.abs(dev.mean(axis=0)) < 0.1)


def test_static_imu_reports_gravity_only(geometry):
    s = ss.static_stream(geometry, 5, seed=0)
    assert s.imu.shape == (5, 12, 6)
    np.testing.assert_allclose(np.linalg.norm(s.imu[..., :3], axis=-1), 9.81, rtol=1e-12)
    np.testing.assert_array_equal(s.imu[..., 3:], 0.0)


# --- config -------------------------------------------------------------------

def test_geometry_file_round_trip(tmp_path, geometry):
    p = tmp_path / "geom.json"
    p.write_text(json.dumps(ss.default_geometry_config()))
    g = ss.load_geometry(p)
    assert g.names == geometry.names
    for a, b in zip(g.taxels, geometry.taxels):
        np.testing.assert_array_equal(a.dipole.position, b.dipole.position)
        assert a.stiffness == b.stiffness


def test_bad_geometry_file(tmp_path):
    p = tmp_path / "geom.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        ss.load_geometry(p)


def test_type_invariants():
    with pytest.raises(ValueError):
        ss.MagnetometerDesc([0, 0, 0], np.diag([1.0, 1.0, 1.001]))
    with pytest.raises(ValueError):
        ss.ShieldDesc(True, 1.2, 1.5)
    with pytest.raises(ValueError):
        ss.ShieldDesc(True, 0.2, 0.9)
    assert np.array_equal(ss.ShieldDesc(False).gains, np.ones(3))
