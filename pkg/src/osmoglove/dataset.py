"""Demonstration datasets: frames, normalisation, action chunks, storage.

A human dataset holds camera image references plus fingertip tactile data;
the robot dataset swaps the IR images for retargeted joint positions.
Tactile arrays are (3, 2, 5): axis, magnetometer, fingertip (thumb first),
in microtesla.

On disk a dataset is a directory::

    manifest.json           counts, checksums, normalisation stats
    manifest.sha256         sha256 of manifest.json
    trajectories/<id>.rec   one binary record file per trajectory
    images/<aa>/<sha256>    content-addressed image blobs

See ``docs/dataset_format.md`` for the byte layout of ``.rec`` files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (ChecksumError, ConfigError, DegenerateChannelError, EmptyTrajectoryError,
                     LengthMismatchError, ShapeError)

TACTILE_SHAPE = (3, 2, 5)
FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")
AXIS_NAMES = ("x", "y", "z")
HUMAN, ROBOT = "human", "robot"
MAGIC = b"OSMOTRJ\x00"
FORMAT_VERSION = 1
_KIND_CODE = {HUMAN: 1, ROBOT: 2}
_HEADER = struct.Struct("<8sHBBII")
_NO_REF = bytes(32)
MANIFEST_SUM = "manifest.sha256"


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def _check_tactile(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.shape != TACTILE_SHAPE:
        raise ShapeError(f"tactile must have shape {TACTILE_SHAPE}, got {t.shape}")
    return t


@dataclass(eq=False)
class DemoFrame:
    timestamp: int
    rgb_ref: str | None
    ir_left_ref: str | None
    ir_right_ref: str | None
    tactile: np.ndarray

    def __post_init__(self):
        self.timestamp = int(self.timestamp)
        self.tactile = _check_tactile(self.tactile)

    def __eq__(self, other):
        return (isinstance(other, DemoFrame) and self.timestamp == other.timestamp
                and (self.rgb_ref, self.ir_left_ref, self.ir_right_ref)
                == (other.rgb_ref, other.ir_left_ref, other.ir_right_ref)
                and np.array_equal(self.tactile, other.tactile))


@dataclass(eq=False)
class RobotFrame:
    timestamp: int
    rgb_ref: str | None
    q: np.ndarray
    tactile: np.ndarray

    def __post_init__(self):
        self.timestamp = int(self.timestamp)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.q.shape != (13,):
            raise ShapeError(f"q must have 13 entries, got shape {self.q.shape}")
        self.tactile = _check_tactile(self.tactile)

    def __eq__(self, other):
        return (isinstance(other, RobotFrame) and self.timestamp == other.timestamp
                and self.rgb_ref == other.rgb_ref and np.array_equal(self.q, other.q)
                and np.array_equal(self.tactile, other.tactile))


@dataclass
class Trajectory:
    id: str
    frames: list
    source_demo: str = ""
    rate_hz: float = 25.0

    def __post_init__(self):
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"trajectory {self.id!r}: timestamps must strictly increase")

    def __len__(self):
        return len(self.frames)

    @property
    def kind(self) -> str:
        if self.frames and isinstance(self.frames[0], RobotFrame):
            return ROBOT
        return HUMAN

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames], dtype=np.int64)

    @property
    def tactile(self) -> np.ndarray:
        return np.stack([f.tactile for f in self.frames]) if self.frames else np.zeros((0,) + TACTILE_SHAPE)

    @property
    def q(self) -> np.ndarray:
        return np.stack([f.q for f in self.frames])


@dataclass
class Dataset:
    trajectories: list
    kind: str = HUMAN
    normalization: "NormalizationStats | None" = None
    joint_names: list = field(default_factory=list)

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_frames(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __getitem__(self, key):
        if isinstance(key, str):
            for t in self.trajectories:
                if t.id == key:
                    return t
            raise KeyError(key)
        return self.trajectories[key]


def tactile_from_readings(readings, fingertip_ids: Sequence[int] = (0, 1, 2, 3, 4)) -> np.ndarray:
    """Fingertip slice of a glove reading: (12, 2, 3) -> (3, 2, 5)."""
    r = np.asarray(readings, dtype=np.float64)
    return np.transpose(r[..., list(fingertip_ids), :, :], (*range(r.ndim - 3), -1, -2, -3))


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def preprocess_tactile(tactile) -> np.ndarray:
    """Differential signal magnetometer 0 minus 1: (..., 3, 2, 5) -> (..., 3, 5)."""
    t = np.asarray(tactile, dtype=np.float64)
    if t.shape[-3:] != TACTILE_SHAPE:
        raise ShapeError(f"tactile must end in shape {TACTILE_SHAPE}, got {t.shape}")
    return t[..., :, 0, :] - t[..., :, 1, :]


def channel_names(joint_names: Sequence[str] | None = None) -> list[str]:
    joints = list(joint_names) if joint_names else [f"q{i}" for i in range(13)]
    return joints + [f"d_{f}_{a}" for a in AXIS_NAMES for f in FINGER_NAMES]


def state_channels(trajectory: Trajectory) -> np.ndarray:
    """(M, 28): joints followed by the 15 differential tactile values."""
    d = preprocess_tactile(trajectory.tactile).reshape(len(trajectory), -1)
    return np.concatenate([trajectory.q, d], axis=1)


@dataclass
class NormalizationStats:
    names: list
    lo: np.ndarray  # 2nd percentile per channel
    hi: np.ndarray  # 98th percentile per channel
    degenerate: np.ndarray
    centered: bool = False  # default mode for normalize()

    def to_dict(self) -> dict:
        return {"names": list(self.names), "p02": self.lo.tolist(), "p98": self.hi.tolist(),
                "degenerate": self.degenerate.tolist(), "centered": self.centered}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(list(d["names"]), np.array(d["p02"], dtype=float), np.array(d["p98"], dtype=float),
                   np.array(d["degenerate"], dtype=bool), bool(d.get("centered", False)))


def fit_channels(x, names: Sequence[str], eps: float = 1e-9, min_samples: int = 50,
                 on_degenerate: str = "raise") -> NormalizationStats:
    """Per-column 2nd/98th percentiles (linear interpolation between order statistics)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(names):
        raise ShapeError("expected (samples, channels) matching the channel names")
    if x.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} samples per channel, got {x.shape[0]}")
    lo, hi = np.percentile(x, [2.0, 98.0], axis=0, method="linear")
    degenerate = (hi - lo) < eps
    if degenerate.any() and on_degenerate == "raise":
        i = int(np.flatnonzero(degenerate)[0])
        raise DegenerateChannelError(names[i], float(lo[i]), float(hi[i]))
    return NormalizationStats(list(names), lo, hi, degenerate)


def fit_normalization(dataset: Dataset, eps: float = 1e-9, min_samples: int = 50,
                      on_degenerate: str = "raise") -> NormalizationStats:
    """Fit stats over every frame of a robot dataset (joints + differential tactile)."""
    if dataset.kind != ROBOT or not dataset.trajectories:
        raise ValueError("fit_normalization needs a non-empty robot dataset")
    x = np.concatenate([state_channels(t) for t in dataset.trajectories])
    return fit_channels(x, channel_names(dataset.joint_names), eps, min_samples, on_degenerate)


def normalize(x, stats: NormalizationStats, centered: bool | None = None, channels=None) -> np.ndarray:
    """Map channel values with y = clip(2 (x - p02) / (p98 - p02), -1.5, 1.5).

    ``centered`` subtracts 1 before clipping, sending the fitted band to
    [-1, 1]; it defaults to the mode stored with the stats.  ``channels``
    selects a subset of the fitted channels.
    """
    if centered is None:
        centered = stats.centered
    sel = slice(None) if channels is None else channels
    lo, hi, bad = stats.lo[sel], stats.hi[sel], stats.degenerate[sel]
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        name = np.asarray(stats.names)[sel]
        raise DegenerateChannelError(str(np.atleast_1d(name)[i]))
    y = 2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo)
    if centered:
        y = y - 1.0
    return np.minimum(np.maximum(-1.5, y), 1.5)


# ---------------------------------------------------------------------------
# action chunking
# ---------------------------------------------------------------------------

@dataclass
class ActionChunks:
    obs_index: np.ndarray  # (T,) observation frame of each sample
    actions: np.ndarray  # (T, horizon, A)
    schedule: list  # [(start, stop)] executed at deployment


def deployment_schedule(n_steps: int, exec_steps: int = 4) -> list[tuple[int, int]]:
    """Chunk boundaries when the first ``exec_steps`` actions of each chunk run."""
    return [(s, min(s + exec_steps, n_steps)) for s in range(0, n_steps, exec_steps)]


def chunk_actions(actions, horizon: int = 16, exec_steps: int = 4) -> ActionChunks:
    """One training sample per frame: observation at t, actions t..t+horizon-1.

    Windows running past the end repeat the final action.
    """
    a = np.asarray(actions)
    if a.ndim == 1:
        a = a[:, None]
    T = a.shape[0]
    if T < 1:
        raise EmptyTrajectoryError("cannot chunk an empty trajectory")
    idx = np.minimum(np.arange(T)[:, None] + np.arange(horizon)[None, :], T - 1)
    return ActionChunks(np.arange(T), a[idx], deployment_schedule(T, exec_steps))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def build_robot_dataset(demos: Dataset, joints: Mapping[str, np.ndarray], joint_names=None) -> Dataset:
    """Pair each human frame's RGB reference and tactile array with its joint target."""
    trajs = []
    for t in demos.trajectories:
        q = np.asarray(joints[t.id], dtype=np.float64)
        if q.shape[0] != len(t):
            raise LengthMismatchError(f"trajectory {t.id!r}: {len(t)} frames but {q.shape[0]} joint rows")
        frames = [RobotFrame(f.timestamp, f.rgb_ref, q[k], f.tactile) for k, f in enumerate(t.frames)]
        trajs.append(Trajectory(t.id, frames, t.source_demo or t.id, t.rate_hz))
    return Dataset(trajs, ROBOT, None, list(joint_names or demos.joint_names))


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

class ImageStore:
    """Content-addressed blobs under ``root``; refs are sha256 hex digests."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, ref: str) -> Path:
        return self.root / ref[:2] / ref

    def put(self, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        p = self.path(ref)
        if not p.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
            tmp = p.with_name(f"{ref}.{os.getpid()}.tmp")
            tmp.write_bytes(data)
            os.replace(tmp, p)
        return ref

    def get(self, ref: str, verify: bool = True) -> bytes:
        data = self.path(ref).read_bytes()
        if verify and hashlib.sha256(data).hexdigest() != ref:
            raise ChecksumError(f"image {ref} is corrupt")
        return data

    def __contains__(self, ref: str) -> bool:
        return self.path(ref).exists()


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _ref_bytes(ref: str | None) -> bytes:
    return _NO_REF if ref is None else bytes.fromhex(ref)


def _ref_str(b: bytes) -> str | None:
    return None if b == _NO_REF else b.hex()


def encode_trajectory(traj: Trajectory, kind: str) -> bytes:
    meta = json.dumps({"id": traj.id, "source_demo": traj.source_demo, "rate_hz": traj.rate_hz},
                      sort_keys=True).encode()
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, _KIND_CODE[kind], 0, len(traj), len(meta)), meta]
    for f in traj.frames:
        if kind == HUMAN:
            body = b"".join([struct.pack("<Q", f.timestamp), _ref_bytes(f.rgb_ref), _ref_bytes(f.ir_left_ref),
                             _ref_bytes(f.ir_right_ref), f.tactile.astype("<f8").tobytes()])
        else:
            body = b"".join([struct.pack("<Q", f.timestamp), _ref_bytes(f.rgb_ref), struct.pack("<H", f.q.size),
                             f.q.astype("<f8").tobytes(), f.tactile.astype("<f8").tobytes()])
        parts.append(struct.pack("<I", len(body)))
        parts.append(body)
    return b"".join(parts)


def decode_trajectory(data: bytes) -> tuple[Trajectory, str]:
    try:
        magic, version, code, _, n, meta_len = _HEADER.unpack_from(data, 0)
    except struct.error:
        raise ConfigError("truncated trajectory header") from None
    if magic != MAGIC or version != FORMAT_VERSION:
        raise ConfigError("not a version-1 trajectory record file")
    kind = {v: k for k, v in _KIND_CODE.items()}[code]
    off = _HEADER.size
    meta = json.loads(data[off:off + meta_len])
    off += meta_len
    frames = []
    for _ in range(n):
        (length,) = struct.unpack_from("<I", data, off)
        body = data[off + 4: off + 4 + length]
        off += 4 + length
        (ts,) = struct.unpack_from("<Q", body, 0)
        if kind == HUMAN:
            refs = [_ref_str(body[8 + 32 * i: 40 + 32 * i]) for i in range(3)]
            tac = np.frombuffer(body, "<f8", 30, 104).reshape(TACTILE_SHAPE).copy()
            frames.append(DemoFrame(ts, *refs, tac))
        else:
            rgb = _ref_str(body[8:40])
            (nq,) = struct.unpack_from("<H", body, 40)
            q = np.frombuffer(body, "<f8", nq, 42).copy()
            tac = np.frombuffer(body, "<f8", 30, 42 + 8 * nq).reshape(TACTILE_SHAPE).copy()
            frames.append(RobotFrame(ts, rgb, q, tac))
    if off != len(data):
        raise ConfigError("trailing bytes after the last record")
    return Trajectory(meta["id"], frames, meta.get("source_demo", ""), meta.get("rate_hz", 25.0)), kind


def _referenced_images(ds: Dataset) -> set:
    refs = set()
    for t in ds.trajectories:
        for f in t.frames:
            for r in (f.rgb_ref, getattr(f, "ir_left_ref", None), getattr(f, "ir_right_ref", None)):
                if r is not None:
                    refs.add(r)
    return refs


def write_dataset(ds: Dataset, root: str | Path, images: ImageStore | None = None) -> dict:
    """Write trajectories, copy referenced images, then the manifest (last)."""
    root = Path(root)
    (root / "trajectories").mkdir(parents=True, exist_ok=True)
    entries = []
    for t in ds.trajectories:
        data = encode_trajectory(t, ds.kind)
        rel = f"trajectories/{t.id}.rec"
        (root / rel).write_bytes(data)
        entries.append({"id": t.id, "source_demo": t.source_demo, "file": rel, "n_frames": len(t),
                        "rate_hz": t.rate_hz, "sha256": hashlib.sha256(data).hexdigest()})
    refs = sorted(_referenced_images(ds))
    dest = ImageStore(root / "images")
    if images is not None and images.root.resolve() != dest.root.resolve():
        for ref in refs:
            if ref in images and ref not in dest:
                dest.path(ref).parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(images.path(ref), dest.path(ref))
    manifest = {
        "format": "osmoglove-dataset",
        "version": FORMAT_VERSION,
        "kind": ds.kind,
        "n_trajectories": len(ds),
        "n_frames": ds.n_frames,
        "joint_names": list(ds.joint_names),
        "tactile_layout": "float64 (3 axes, 2 magnetometers, 5 fingertips thumb..little), microtesla",
        "trajectories": entries,
        "images": {"dir": "images", "count": sum(ref in dest for ref in refs)},
        "normalization": ds.normalization.to_dict() if ds.normalization is not None else None,
    }
    raw = (json.dumps(manifest, indent=2) + "\n").encode()
    (root / "manifest.json").write_bytes(raw)
    # the sidecar guards the manifest itself, so every byte of the dataset is covered
    (root / MANIFEST_SUM).write_text(hashlib.sha256(raw).hexdigest() + "\n")
    return manifest


def _verify_images(root: Path, expected: int) -> None:
    blobs = [p for p in (root / "images").glob("*/*") if p.is_file()]
    if len(blobs) != expected:
        raise ChecksumError(f"manifest lists {expected} images, found {len(blobs)}")
    for p in blobs:
        if hashlib.sha256(p.read_bytes()).hexdigest() != p.name:
            raise ChecksumError(f"image {p.name} is corrupt")


def read_dataset(root: str | Path, verify: bool = True) -> Dataset:
    """Load a dataset directory; with ``verify`` every file is checked against its checksum."""
    root = Path(root)
    try:
        raw = (root / "manifest.json").read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest in {root}: {exc}") from None
    if verify:
        try:
            want = (root / MANIFEST_SUM).read_text().strip()
        except OSError:
            raise ChecksumError(f"{root / MANIFEST_SUM} is missing") from None
        if hashlib.sha256(raw).hexdigest() != want:
            raise ChecksumError("manifest.json does not match its checksum")
    try:
        manifest = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse manifest in {root}: {exc}") from None
    if verify:
        _verify_images(root, manifest["images"]["count"])
    trajs = []
    for e in manifest["trajectories"]:
        data = (root / e["file"]).read_bytes()
        if verify and hashlib.sha256(data).hexdigest() != e["sha256"]:
            raise ChecksumError(f"{e['file']} does not match its manifest checksum")
        t, kind = decode_trajectory(data)
        if kind != manifest["kind"] or len(t) != e["n_frames"] or t.id != e["id"]:
            raise ChecksumError(f"{e['file']} disagrees with the manifest")
        trajs.append(t)
    if len(trajs) != manifest["n_trajectories"] or sum(map(len, trajs)) != manifest["n_frames"]:
        raise ChecksumError("manifest counts do not match contents")
    norm = manifest.get("normalization")
    return Dataset(trajs, manifest["kind"], NormalizationStats.from_dict(norm) if norm else None,
                   manifest.get("joint_names", []))


def export_csv(ds: Dataset, path: str | Path) -> int:
    """Flat CSV of joints and differential tactile values, one row per frame."""
    if ds.kind != ROBOT:
        raise ValueError("CSV export needs a robot dataset")
    names = channel_names(ds.joint_names)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "frame", "t_us", *names])
        for t in ds.trajectories:
            for k, (ts, row) in enumerate(zip(t.timestamps, state_channels(t))):
                w.writerow([t.id, k, int(ts), *(repr(float(v)) for v in row)])
                rows += 1
    return rows
