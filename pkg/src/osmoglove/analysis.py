"""Crosstalk metrics: RMS noise, differential sensing, configuration tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import sensor_sim as ss
from .errors import ConfigError, TooShortError

AXES = ("X-Axis", "Y-Axis", "Z-Axis")
SCENARIO_KINDS = ("finger-wave", "press", "static")


@dataclass(frozen=True)
class RmsReport:
    per_axis: np.ndarray
    taxel_id: int | None = None
    config_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "per_axis", np.atleast_1d(np.asarray(self.per_axis, dtype=float)))

    @property
    def average(self) -> float:
        return float(np.mean(self.per_axis))

    def row(self) -> list[str]:
        return [self.config_label] + [_fmt(v) for v in self.per_axis] + [f"{self.average:.2f}"]


@dataclass
class DifferentialFrame:
    timestamp: int
    diff: np.ndarray  # (12, 3)


def _fmt(v: float) -> str:
    # four significant figures
    return f"{v:.4g}"


def rms_noise(series, taxel_id=None, config_label: str = "") -> RmsReport:
    """RMS deviation about the mean, per axis, for a (T, 3) series."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise TooShortError("need at least two samples for an RMS estimate")
    # shifting by the first sample first keeps constant series exactly zero
    x = x - x[0]
    dev = x - x.mean(axis=0)
    return RmsReport(np.sqrt(np.mean(dev * dev, axis=0)), taxel_id, config_label)


def differential(frame: ss.GloveFrame) -> DifferentialFrame:
    """Magnetometer 0 minus magnetometer 1, per taxel and axis."""
    r = frame.readings
    return DifferentialFrame(frame.timestamp, r[:, 0, :] - r[:, 1, :])


def differential_array(readings) -> np.ndarray:
    """Vectorised :func:`differential` over a (..., 12, 2, 3) array."""
    r = np.asarray(readings)
    return r[..., 0, :] - r[..., 1, :]


# ---------------------------------------------------------------------------
# configuration comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorConfig:
    shielded: bool
    n_magnetometers: int

    def __post_init__(self):
        if self.n_magnetometers not in (1, 2):
            raise ValueError("n_magnetometers must be 1 or 2")

    @property
    def label(self) -> str:
        shield = "Shielded" if self.shielded else "Unshielded"
        mags = "1 mag" if self.n_magnetometers == 1 else "2 mags"
        return f"{shield} + {mags}"


TABLE_CONFIGS = (
    SensorConfig(shielded=False, n_magnetometers=1),
    SensorConfig(shielded=False, n_magnetometers=2),
    SensorConfig(shielded=True, n_magnetometers=2),
)


@dataclass
class Scenario:
    """Reproducible experiment: ``kind`` is ``finger-wave``, ``press`` or ``static``."""

    kind: str = "finger-wave"
    duration_s: float = 60.0
    trials: int = 5
    seed: int = 0
    presses: int = 10
    monitored: tuple = ("thumb_distal", "middle_distal")
    noise_floor_ut: float | None = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")
        if not self.duration_s > 0 or self.trials < 1 or self.presses < 1:
            raise ConfigError("duration_s, trials and presses must be positive")
        self.monitored = tuple(self.monitored)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["monitored"] = list(self.monitored)
        return d

    def trial_seeds(self) -> list:
        return np.random.SeedSequence(self.seed).spawn(self.trials)

    def stream(self, geometry: ss.GloveGeometry, trial_seed) -> ss.SimStream:
        if self.kind == "finger-wave":
            return ss.finger_wave_stream(geometry, self.duration_s, trial_seed, **self.overrides)
        if self.kind == "press":
            return ss.press_stream(geometry, self.presses, trial_seed, **self.overrides)
        if self.kind == "static":
            n = int(round(self.duration_s * ss.FRAME_RATE_HZ))
            return ss.static_stream(geometry, n, trial_seed)
        raise ValueError(f"unknown scenario kind {self.kind!r}")


def load_scenario(path: str | Path) -> Scenario:
    """Scenario from a JSON file whose keys match the :class:`Scenario` fields."""
    try:
        return Scenario.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None


def config_series(readings: np.ndarray, taxel: int, cfg: SensorConfig) -> np.ndarray:
    """(T, 3) signal a given configuration reports for one taxel."""
    if cfg.n_magnetometers == 1:
        return readings[:, taxel, 0, :]
    return readings[:, taxel, 0, :] - readings[:, taxel, 1, :]


def compare_configurations(scenario: Scenario, configs: Sequence[SensorConfig] = TABLE_CONFIGS,
                           geometry: ss.GloveGeometry | None = None) -> list[RmsReport]:
    """One report per (monitored taxel, config), averaged over trials.

    All configurations see the same kinematics and the same noise draws; only
    the shield gains and the magnetometer combination differ.
    """
    geometry = geometry or ss.load_geometry()
    if scenario.noise_floor_ut is not None:
        geometry = geometry.with_noise(scenario.noise_floor_ut)
    variants = {s: geometry.with_shield(s) for s in {c.shielded for c in configs}}
    taxels = [geometry.index_of(m) for m in scenario.monitored]
    acc = np.zeros((len(taxels), len(configs), 3))
    for trial_seed in scenario.trial_seeds():
        stream = scenario.stream(geometry, trial_seed)
        readings = {s: stream.readings(g) for s, g in variants.items()}
        for i, k in enumerate(taxels):
            for j, cfg in enumerate(configs):
                acc[i, j] += rms_noise(config_series(readings[cfg.shielded], k, cfg)).per_axis
    acc /= scenario.trials
    return [RmsReport(acc[i, j], k, cfg.label)
            for i, k in enumerate(taxels) for j, cfg in enumerate(configs)]


def rms_from_frames(frames: Iterable[ss.GloveFrame], taxel: int, cfg: SensorConfig) -> RmsReport:
    r = ss.stack_readings(frames)
    return rms_noise(config_series(r, taxel, cfg), taxel, cfg.label)


def format_table(reports: Sequence[RmsReport], names: Sequence[str] | None = None, title: str = "") -> str:
    """Aligned text table grouped by taxel, one block per monitored taxel."""
    groups: dict = {}
    for r in reports:
        groups.setdefault(r.taxel_id, []).append(r)
    lines = []
    if title:
        lines.append(title)
    width = max([len(r.config_label) for r in reports] + [14])
    for taxel, rows in groups.items():
        name = names[taxel] if names is not None and taxel is not None else f"taxel {taxel}"
        header = [name.replace("_", " ").title()] + list(AXES) + ["Avg"]
        lines.append(f"{header[0]:<{width}}" + "".join(f"{h:>10}" for h in header[1:]))
        for r in rows:
            cells = r.row()
            lines.append(f"{cells[0]:<{width}}" + "".join(f"{c:>10}" for c in cells[1:]))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def to_csv(reports: Sequence[RmsReport], names: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["taxel_id", "taxel", "config", "x_ut", "y_ut", "z_ut", "avg_ut"])
    for r in reports:
        name = names[r.taxel_id] if names is not None and r.taxel_id is not None else ""
        w.writerow([r.taxel_id, name, r.config_label, *(repr(float(v)) for v in r.per_axis), repr(r.average)])
    return buf.getvalue()
