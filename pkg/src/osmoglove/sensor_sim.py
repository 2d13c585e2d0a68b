"""Point-dipole model of the 12-taxel magnetic glove.

Every taxel is a soft magnet patch (modelled as one point dipole) sitting
above a PCB carrying two 3-axis magnetometers, optionally wrapped by a
MuMetal shield.  All magnetometers see the superposed field of all twelve
magnets plus a uniform ambient (Earth) field, which is where crosstalk
comes from.

Units: metres, A*m^2, newtons, microtesla.  Timestamps are integer
microseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, OutOfRangeError, SingularityError

MU0_OVER_4PI = 1e-7  # T*m/A
TESLA_TO_UT = 1e6
GUARD_RADIUS = 1e-4  # m
MAX_FORCE_N = 80.0
N_TAXELS = 12
FRAME_RATE_HZ = 25.0
GRAVITY = np.array([0.0, 0.0, -9.81])

FINGERTIPS = ("thumb_distal", "index_distal", "middle_distal", "ring_distal", "little_distal")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MagneticDipole:
    position: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float))
        if not np.all(np.isfinite(self.position)):
            raise ValueError("dipole position must be finite")


@dataclass(frozen=True)
class MagnetometerDesc:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    noise_floor_sigma: float = 3.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("magnetometer rotation must be orthonormal")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "rotation", R)


@dataclass(frozen=True)
class ShieldDesc:
    enabled: bool = True
    inplane_attenuation: float = 0.25
    z_concentration: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.inplane_attenuation <= 1.0:
            raise ValueError("inplane_attenuation must lie in [0, 1]")
        if self.z_concentration < 1.0:
            raise ValueError("z_concentration must be >= 1")

    @property
    def gains(self) -> np.ndarray:
        """Per-axis gains applied to a sensor-frame reading."""
        if not self.enabled:
            return np.ones(3)
        a = self.inplane_attenuation
        return np.array([a, a, self.z_concentration])


@dataclass(frozen=True)
class TaxelState:
    id: int
    dipole: MagneticDipole
    rest_dipole_position: np.ndarray
    magnetometers: tuple
    shield: ShieldDesc
    stiffness: float
    name: str = ""

    def __post_init__(self):
        if len(self.magnetometers) != 2:
            raise ValueError("a taxel carries exactly 2 magnetometers")
        if not self.stiffness > 0:
            raise ValueError("stiffness must be positive")
        if np.linalg.norm(self.dipole.moment) <= 0:
            raise ValueError("taxel magnet needs a non-zero moment")
        object.__setattr__(self, "rest_dipole_position",
                           np.asarray(self.rest_dipole_position, dtype=float))

    @property
    def normal(self) -> np.ndarray:
        return self.magnetometers[0].rotation[:, 2]

    def translated(self, offset) -> "TaxelState":
        """Rigidly move magnet, rest position and both magnetometers."""
        offset = np.asarray(offset, dtype=float)
        mags = tuple(replace(m, position=m.position + offset) for m in self.magnetometers)
        return replace(
            self,
            dipole=replace(self.dipole, position=self.dipole.position + offset),
            rest_dipole_position=self.rest_dipole_position + offset,
            magnetometers=mags,
        )


@dataclass
class GloveFrame:
    """One timestamped sample of the whole glove.

    ``readings`` has shape (12, 2, 3): taxel, magnetometer, sensor axis (uT).
    ``imu`` has shape (12, 6): accel xyz (m/s^2) then gyro xyz (rad/s).
    """

    timestamp: int
    readings: np.ndarray
    imu: np.ndarray = field(default_factory=lambda: np.zeros((N_TAXELS, 6)))
    ambient_field: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.timestamp = int(self.timestamp)
        self.readings = np.asarray(self.readings, dtype=float).reshape(N_TAXELS, 2, 3)
        self.imu = np.asarray(self.imu, dtype=float).reshape(N_TAXELS, 6)
        self.ambient_field = np.asarray(self.ambient_field, dtype=float).reshape(3)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GloveGeometry:
    """Rest-pose layout of the glove plus the scenario defaults tied to it."""

    taxels: tuple
    earth_field: np.ndarray
    flex_directions: np.ndarray  # (12, 3) unit vectors, zero for palm taxels
    finger_wave: dict
    press: dict

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.taxels]

    def index_of(self, name_or_id) -> int:
        if isinstance(name_or_id, (int, np.integer)):
            return int(name_or_id)
        try:
            return self.names.index(name_or_id)
        except ValueError:
            raise KeyError(f"no taxel named {name_or_id!r}") from None

    def with_shield(self, enabled: bool) -> "GloveGeometry":
        taxels = tuple(replace(t, shield=replace(t.shield, enabled=enabled)) for t in self.taxels)
        return replace(self, taxels=taxels)

    def with_noise(self, sigma: float) -> "GloveGeometry":
        taxels = tuple(
            replace(t, magnetometers=tuple(replace(m, noise_floor_sigma=sigma) for m in t.magnetometers))
            for t in self.taxels
        )
        return replace(self, taxels=taxels)


def _frame_from_normal(normal) -> np.ndarray:
    """Right-handed rotation whose z column is ``normal``; x stays close to glove x."""
    z = np.asarray(normal, dtype=float)
    z = z / np.linalg.norm(z)
    ref = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = ref - z * (ref @ z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def geometry_from_dict(cfg: dict) -> GloveGeometry:
    try:
        sigma = float(cfg.get("noise_floor_ut", 3.0))
        shield_cfg = cfg.get("shield", {})
        magnet = cfg["magnet"]
        offsets = np.asarray(cfg["magnetometer_offsets"], dtype=float)
        target = float(cfg.get("calibration_signal_ut", 300.0))
        taxel_cfgs = cfg["taxels"]
    except KeyError as exc:
        raise ConfigError(f"geometry config missing key {exc}") from None
    if len(taxel_cfgs) != N_TAXELS:
        raise ConfigError(f"geometry must list {N_TAXELS} taxels, got {len(taxel_cfgs)}")
    if offsets.shape != (2, 3):
        raise ConfigError("magnetometer_offsets must be two 3-vectors")

    taxels, flex = [], []
    for i, tc in enumerate(taxel_cfgs):
        R = np.asarray(tc["rotation"], dtype=float) if "rotation" in tc else _frame_from_normal(
            tc.get("normal", [0, 0, 1]))
        center = np.asarray(tc["center"], dtype=float)
        standoff = float(tc.get("standoff", magnet["standoff"]))
        moment = float(tc.get("moment", magnet["moment"]))
        mpos = center + standoff * R[:, 2]
        mags = tuple(MagnetometerDesc(center + R @ off, R, sigma) for off in offsets)
        sc = {**shield_cfg, **tc.get("shield", {})}
        shield = ShieldDesc(
            enabled=bool(sc.get("enabled", True)),
            inplane_attenuation=float(sc.get("inplane_attenuation", 0.25)),
            z_concentration=float(sc.get("z_concentration", 1.5)),
        )
        provisional = TaxelState(
            id=int(tc.get("id", i)),
            name=str(tc.get("name", f"taxel_{i}")),
            dipole=MagneticDipole(mpos, moment * R[:, 2]),
            rest_dipole_position=mpos,
            magnetometers=mags,
            shield=shield,
            stiffness=1.0,
        )
        k = tc.get("stiffness", "auto")
        k = calibrate_stiffness(provisional, target) if k == "auto" else float(k)
        taxels.append(replace(provisional, stiffness=k))
        fd = np.asarray(tc.get("flex_direction", [0, 0, 0]), dtype=float)
        n = np.linalg.norm(fd)
        flex.append(fd / n if n > 0 else fd)

    ids = sorted(t.id for t in taxels)
    if ids != list(range(N_TAXELS)):
        raise ConfigError("taxel ids must be 0..11")
    taxels.sort(key=lambda t: t.id)
    return GloveGeometry(
        taxels=tuple(taxels),
        earth_field=np.asarray(cfg.get("earth_field_ut", [20.0, 0.0, -45.0]), dtype=float),
        flex_directions=np.array(flex),
        finger_wave=dict(cfg.get("finger_wave", {})),
        press=dict(cfg.get("press", {})),
    )


def default_geometry_config() -> dict:
    text = resources.files("osmoglove.data").joinpath("default_geometry.json").read_text()
    return json.loads(text)


def load_geometry(path: str | Path | None = None) -> GloveGeometry:
    """Load a glove geometry file; ``None`` gives the bundled default."""
    if path is None:
        return geometry_from_dict(default_geometry_config())
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read geometry {path}: {exc}") from None
    return geometry_from_dict(cfg)


# ---------------------------------------------------------------------------
# field model
# ---------------------------------------------------------------------------

def superposed_field(dip_pos, moments, points) -> np.ndarray:
    """Field (uT) at ``points`` (..., P, 3) summed over dipoles (..., D, 3)."""
    r = points[..., :, None, :] - dip_pos[..., None, :, :]  # (..., P, D, 3)
    d2 = np.einsum("...i,...i->...", r, r)
    if np.any(d2 < GUARD_RADIUS**2):
        raise SingularityError(f"evaluation point within {GUARD_RADIUS} m of a dipole")
    inv3 = d2 ** -1.5
    mdotr = np.einsum("...di,...pdi->...pd", moments, r)
    B = 3.0 * np.einsum("...pd,...pdi->...pi", mdotr * inv3 / d2, r) - np.einsum("...pd,...di->...pi", inv3, moments)
    return MU0_OVER_4PI * TESLA_TO_UT * B


def dipole_field(dipole: MagneticDipole, point) -> np.ndarray:
    """Flux density of a point dipole at ``point``, in microtesla."""
    point = np.asarray(point, dtype=float)
    return superposed_field(dipole.position[None], dipole.moment[None], point[None])[0]


def apply_force(taxel: TaxelState, force) -> TaxelState:
    """Displace the taxel's magnet from rest by ``force / stiffness``."""
    force = np.asarray(force, dtype=float)
    if np.linalg.norm(force) > MAX_FORCE_N:
        raise OutOfRangeError(f"|force| = {np.linalg.norm(force):.3g} N exceeds {MAX_FORCE_N} N")
    pos = taxel.rest_dipole_position + force / taxel.stiffness
    return replace(taxel, dipole=replace(taxel.dipole, position=pos))


def _layout(taxels: Sequence[TaxelState]):
    dip_pos = np.array([t.dipole.position for t in taxels])
    moments = np.array([t.dipole.moment for t in taxels])
    sens_pos = np.array([[m.position for m in t.magnetometers] for t in taxels])
    rots = np.array([[m.rotation for m in t.magnetometers] for t in taxels])
    gains = np.array([t.shield.gains for t in taxels])
    sigma = np.array([[m.noise_floor_sigma for m in t.magnetometers] for t in taxels])
    return dip_pos, moments, sens_pos, rots, gains, sigma


def _clean_readings(dip_pos, moments, sens_pos, rots, ambient) -> np.ndarray:
    """Noise-free, pre-shield readings in sensor axes, shape (..., 12, 2, 3).

    Leading batch dims of ``dip_pos``/``sens_pos``/``ambient`` are time.
    """
    lead = sens_pos.shape[:-3]
    pts = sens_pos.reshape(*lead, -1, 3)
    B = superposed_field(dip_pos, moments, pts).reshape(sens_pos.shape)
    B = B + np.asarray(ambient)[..., None, None, :]
    # rotation maps sensor axes -> glove frame, so sensor = R^T B
    return np.einsum("...tkji,...tkj->...tki", rots, B)


def _finish(clean, gains, sigma, rng) -> np.ndarray:
    noise = rng.standard_normal(clean.shape) * sigma[..., None]
    return clean * gains[:, None, :] + noise


def read_glove(taxels: Sequence[TaxelState], ambient, rng_seed=None, timestamp_us: int = 0) -> GloveFrame:
    """Sample all 24 magnetometers once."""
    if len(taxels) != N_TAXELS:
        raise ValueError(f"expected {N_TAXELS} taxels")
    ambient = np.asarray(ambient, dtype=float)
    dip_pos, moments, sens_pos, rots, gains, sigma = _layout(taxels)
    clean = _clean_readings(dip_pos, moments, sens_pos, rots, ambient)
    readings = _finish(clean, gains, sigma, np.random.default_rng(rng_seed))
    return GloveFrame(timestamp_us, readings, np.zeros((N_TAXELS, 6)), ambient)


def own_signal(taxel: TaxelState, force, magnetometer: int = 0) -> float:
    """Norm of the noise-free change of one of the taxel's own readings under ``force``."""
    moved = apply_force(taxel, force)
    mag = taxel.magnetometers[magnetometer]
    d = dipole_field(moved.dipole, mag.position) - dipole_field(taxel.dipole, mag.position)
    return float(np.linalg.norm(taxel.shield.gains * (mag.rotation.T @ d)))


def calibrate_stiffness(taxel: TaxelState, target_ut: float = 300.0) -> float:
    """Spring constant (N/m) so that 1 N of normal load moves reading 0 by ``target_ut``."""
    mag = taxel.magnetometers[0]
    n = taxel.normal
    base = dipole_field(taxel.dipole, mag.position)
    standoff = float(np.linalg.norm(taxel.dipole.position - mag.position))

    def excess(delta):
        p = taxel.dipole.position - delta * n
        d = dipole_field(MagneticDipole(p, taxel.dipole.moment), mag.position) - base
        return np.linalg.norm(taxel.shield.gains * (mag.rotation.T @ d)) - target_ut

    delta = brentq(excess, 1e-12, 0.5 * standoff, xtol=1e-15)
    return 1.0 / delta


def sensing_floor(taxel: TaxelState) -> float:
    """Smallest normal force (N) whose own signal equals three noise sigmas."""
    sigma = taxel.magnetometers[0].noise_floor_sigma
    return brentq(lambda f: own_signal(taxel, -f * taxel.normal) - 3.0 * sigma, 1e-9, MAX_FORCE_N)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _timestamps(n: int, rate_hz: float = FRAME_RATE_HZ) -> np.ndarray:
    return np.round(np.arange(n) * 1e6 / rate_hz).astype(np.int64)


def _rotation_about(axis, angles) -> np.ndarray:
    """Rodrigues rotation matrices, shape (len(angles), 3, 3)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    a = np.asarray(angles, dtype=float)[:, None, None]
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * (K @ K)


@dataclass
class SimStream:
    """Array form of a simulated stream, kept separate from the noise so that
    shield variants of the same scenario can share kinematics and noise draws."""

    timestamps: np.ndarray  # (T,)
    clean: np.ndarray  # (T, 12, 2, 3) pre-shield, noise-free
    noise: np.ndarray  # (T, 12, 2, 3) standard normal draws
    imu: np.ndarray  # (T, 12, 6)
    ambient: np.ndarray  # (T, 3)

    def readings(self, geometry: GloveGeometry) -> np.ndarray:
        _, _, _, _, gains, sigma = _layout(geometry.taxels)
        return self.clean * gains[:, None, :] + self.noise * sigma[..., None]

    def frames(self, geometry: GloveGeometry) -> list[GloveFrame]:
        r = self.readings(geometry)
        return [GloveFrame(int(t), r[i], self.imu[i], self.ambient[i])
                for i, t in enumerate(self.timestamps)]


def _imu_from_motion(offsets, rots_sensor, omega, dt) -> np.ndarray:
    """Accelerometer/gyro channels from finite differences of taxel motion."""
    T = offsets.shape[0]
    if T >= 3:
        acc = np.gradient(np.gradient(offsets, dt, axis=0), dt, axis=0)
    else:
        acc = np.zeros_like(offsets)
    acc = acc - GRAVITY  # specific force
    gyro = np.broadcast_to(omega[:, None, :], acc.shape)
    R = rots_sensor  # (12, 3, 3)
    acc_s = np.einsum("kji,tkj->tki", R, acc)
    gyro_s = np.einsum("kji,tkj->tki", R, gyro)
    return np.concatenate([acc_s, gyro_s], axis=-1)


def _run(geometry: GloveGeometry, offsets, dipole_extra, ambient, omega, rng) -> SimStream:
    """Shared driver: ``offsets`` rigidly moves taxels, ``dipole_extra`` moves magnets only."""
    T = offsets.shape[0]
    dip_pos, moments, sens_pos, rots, _, _ = _layout(geometry.taxels)
    dp = dip_pos[None] + offsets + dipole_extra
    sp = sens_pos[None] + offsets[:, :, None, :]
    clean = _clean_readings(dp, moments, sp, rots, ambient)
    noise = rng.standard_normal(clean.shape)
    imu = _imu_from_motion(offsets, rots[:, 0], omega, 1.0 / FRAME_RATE_HZ)
    return SimStream(_timestamps(T), clean, noise, imu, ambient)


def finger_wave_stream(geometry: GloveGeometry, duration_s: float, seed=None, **overrides) -> SimStream:
    """Array-level finger wave; see :func:`simulate_finger_wave`."""
    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    p = {"amplitude_m": 0.03, "frequency_hz": 0.5, "wobble_rad": 0.6, "wobble_hz": 0.13}
    p.update(geometry.finger_wave)
    p.update(overrides)
    rng = np.random.default_rng(seed)
    phase0 = rng.uniform(0, 2 * np.pi)
    wobble_phase = rng.uniform(0, 2 * np.pi)
    wobble_axis = rng.normal(size=3)

    T = int(round(duration_s * FRAME_RATE_HZ))
    t = np.arange(T) / FRAME_RATE_HZ
    w = 2 * np.pi * p["frequency_hz"]
    offsets = np.zeros((T, N_TAXELS, 3))
    fingers = [i for i in range(N_TAXELS) if np.any(geometry.flex_directions[i])]
    for order, i in enumerate(fingers):
        # sequential wave: each finger lags the previous by 1/len(fingers) of a cycle
        phase = phase0 - order * 2 * np.pi / len(fingers)
        s = 0.5 * (1 - np.cos(w * t + phase))
        offsets[:, i, :] = p["amplitude_m"] * s[:, None] * geometry.flex_directions[i]

    theta = p["wobble_rad"] * np.sin(2 * np.pi * p["wobble_hz"] * t + wobble_phase)
    Rw = _rotation_about(wobble_axis, theta)
    # the hand rotates, so the Earth field seen in the glove frame rotates the other way
    ambient = np.einsum("tji,j->ti", Rw, geometry.earth_field)
    axis = wobble_axis / np.linalg.norm(wobble_axis)
    omega = np.gradient(theta, 1.0 / FRAME_RATE_HZ)[:, None] * axis if T >= 2 else np.zeros((T, 3))
    return _run(geometry, offsets, np.zeros_like(offsets), ambient, omega, rng)


def simulate_finger_wave(geometry: GloveGeometry, duration_s: float, seed=None, **overrides) -> list[GloveFrame]:
    """Contact-free sequential finger wave sampled at 25 Hz.

    Fingertip taxels translate along their configured flex directions with
    raised-cosine profiles staggered in phase, while the whole hand wobbles
    through the Earth field.  ``overrides`` may set ``amplitude_m``,
    ``frequency_hz``, ``wobble_rad`` or ``wobble_hz``.
    """
    return finger_wave_stream(geometry, duration_s, seed, **overrides).frames(geometry)


def trapezoid_profile(presses: int, rate_hz: float = FRAME_RATE_HZ, ramp_s=0.3, hold_s=0.6, rest_s=0.8,
                      lead_s=0.5) -> np.ndarray:
    """Unit-height load profile: ``presses`` trapezoids separated by rests."""
    cycle = np.concatenate([
        np.linspace(0, 1, int(round(ramp_s * rate_hz)) + 1)[1:],
        np.ones(int(round(hold_s * rate_hz))),
        np.linspace(1, 0, int(round(ramp_s * rate_hz)) + 1)[1:],
        np.zeros(int(round(rest_s * rate_hz))),
    ])
    lead = np.zeros(int(round(lead_s * rate_hz)))
    return np.concatenate([lead] + [cycle] * presses)


def press_stream(geometry: GloveGeometry, presses: int = 10, seed=None, **overrides) -> SimStream:
    """Array-level press sequence; see :func:`simulate_press_sequence`."""
    if presses < 1:
        raise ValueError("presses must be >= 1")
    p = {"taxel": "index_distal", "force_n": 3.0}
    p.update(geometry.press)
    p.update(overrides)
    if abs(p["force_n"]) > MAX_FORCE_N:
        raise OutOfRangeError(f"press force {p['force_n']} N exceeds {MAX_FORCE_N} N")
    k = geometry.index_of(p["taxel"])
    taxel = geometry.taxels[k]
    rng = np.random.default_rng(seed)

    load = trapezoid_profile(presses) * p["force_n"]
    T = load.size
    extra = np.zeros((T, N_TAXELS, 3))
    extra[:, k, :] = -(load / taxel.stiffness)[:, None] * taxel.normal
    ambient = np.broadcast_to(geometry.earth_field, (T, 3)).copy()
    return _run(geometry, np.zeros((T, N_TAXELS, 3)), extra, ambient, np.zeros((T, 3)), rng)


def simulate_press_sequence(geometry: GloveGeometry, presses: int = 10, seed=None, **overrides) -> list[GloveFrame]:
    """Repeated trapezoidal normal presses on one taxel (index distal by default).

    The hand is static; only the pressed magnet moves.  ``overrides`` may
    set ``taxel`` and ``force_n``.
    """
    return press_stream(geometry, presses, seed, **overrides).frames(geometry)


def load_stream(geometry: GloveGeometry, loads, seed=None) -> SimStream:
    """Static hand with arbitrary normal loads: ``loads`` is (T, 12) in newtons."""
    loads = np.asarray(loads, dtype=float)
    if loads.ndim != 2 or loads.shape[1] != N_TAXELS:
        raise ValueError(f"loads must have shape (T, {N_TAXELS})")
    if np.any(np.abs(loads) > MAX_FORCE_N):
        raise OutOfRangeError(f"load exceeds {MAX_FORCE_N} N")
    rng = np.random.default_rng(seed)
    T = loads.shape[0]
    stiff = np.array([t.stiffness for t in geometry.taxels])
    normals = np.stack([t.normal for t in geometry.taxels])
    extra = -(loads / stiff)[..., None] * normals
    ambient = np.broadcast_to(geometry.earth_field, (T, 3)).copy()
    return _run(geometry, np.zeros((T, N_TAXELS, 3)), extra, ambient, np.zeros((T, 3)), rng)


def static_stream(geometry: GloveGeometry, n_frames: int, seed=None) -> SimStream:
    """Hand at rest in a constant Earth field."""
    rng = np.random.default_rng(seed)
    z = np.zeros((n_frames, N_TAXELS, 3))
    ambient = np.broadcast_to(geometry.earth_field, (n_frames, 3)).copy()
    return _run(geometry, z, z, ambient, np.zeros((n_frames, 3)), rng)


def stack_readings(frames: Iterable[GloveFrame]) -> np.ndarray:
    """(T, 12, 2, 3) array from a frame sequence."""
    frames = list(frames)
    if not frames:
        return np.zeros((0, N_TAXELS, 2, 3))
    return np.stack([f.readings for f in frames])
