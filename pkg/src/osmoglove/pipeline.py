"""Demo bundle processing: refine, smooth, retarget, align, assemble.

Stages can be run one at a time (the CLI exposes each) or chained by
:func:`process_bundle`.  Per-demonstration work is independent, so
``workers > 1`` spreads demonstrations over processes.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import handpose as hp
from . import retarget as rt
from .errors import ConfigError, DegenerateNeighborhoodError, EmptyCloudError, EmptyStreamError, LengthMismatchError
from .wire import StreamStats, read_stream, timestamp_align

log = logging.getLogger(__name__)

STAGING = ".image-staging"  # scratch image store inside the output dir, removed once datasets are written

DEFAULTS = {
    "paths": {"geometry": None, "chain": None, "environment": None, "extrinsics": None, "scenario": None},
    "seed": None,
    "rate_hz": 25.0,
    "workers": 1,
    "refine": {"k": 50, "radius": 0.05},
    "smoothing": {"window": 9, "polyorder": 3},
    "ik": {"damping": 1e-2, "step_scale": 1.0, "tol": 1e-4, "max_iter": 200, "max_step": 0.5, "min_step": 1e-10,
           "max_halvings": 10, "init_max_iter": 1000},
    "weights": [1.0] * 7,
    "safety": {"max_wrist_speed": 1.0, "collision_margin": 0.0},
    "normalization": {"centered": False, "eps": 1e-9, "min_samples": 50, "on_degenerate": "flag"},
}


def merge_config(base: dict, override: dict, where: str = "") -> dict:
    """Recursive merge; keys absent from ``base`` are rejected."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = merge_config(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            cfg = merge_config(cfg, json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    if overrides:
        cfg = merge_config(cfg, overrides)
    return cfg


def retarget_config(cfg: dict) -> rt.RetargetConfig:
    ik = dict(cfg["ik"])
    init_max_iter = ik.pop("init_max_iter")
    try:
        return rt.RetargetConfig(rt.IkParams(**ik), rt.SafetyConfig(**cfg["safety"]),
                                 np.asarray(cfg["weights"], dtype=float), init_max_iter=init_max_iter)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver/safety parameters: {exc}") from None


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

@dataclass
class RefinedDemo:
    hand: hp.HandTrajectory  # robot frame, smoothed
    images: list  # per frame {kind: path relative to the demo dir}
    refine_failures: list  # frames left unrefined


def read_pose_file(path: str | Path):
    """Pose records plus their optional clouds and image paths."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    poses, clouds, images = [], [], []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pose, cloud = hp.parse_pose_record(rec)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad pose record ({exc})") from None
        poses.append(pose)
        clouds.append(cloud)
        images.append(rec.get("images", {}))
    return poses, clouds, images


def read_demo_records(demo_dir: str | Path):
    return read_pose_file(Path(demo_dir) / "hand.jsonl")


def refine_demo(demo_dir: str | Path, extrinsics: hp.Extrinsics, cfg: dict) -> RefinedDemo:
    """Depth-correct each camera-frame pose, move to the robot frame, smooth."""
    demo_dir = Path(demo_dir)
    poses, clouds, images = read_demo_records(demo_dir)
    failures = []
    refined = []
    for k, (p, c) in enumerate(zip(poses, clouds)):
        if c is not None:
            try:
                p = hp.refine_wrist_depth(p, c, **cfg["refine"])
            except (DegenerateNeighborhoodError, EmptyCloudError) as exc:
                failures.append(k)
                log.warning("%s frame %d: depth not refined (%s)", demo_dir.name, k, exc)
        refined.append(p)
    traj = hp.to_robot_frame(hp.HandTrajectory.from_frames(refined), extrinsics)
    traj = hp.smooth_hand_trajectory(traj, **cfg["smoothing"])
    return RefinedDemo(traj, images, failures)


def write_refined(path: str | Path, refined: RefinedDemo) -> None:
    with open(path, "w") as fh:
        for f, img in zip(refined.hand.frames(), refined.images):
            rec = hp.pose_record(f)
            rec["images"] = img
            fh.write(json.dumps(rec) + "\n")


def read_refined(path: str | Path) -> RefinedDemo:
    poses, _, images = read_pose_file(path)
    traj = hp.HandTrajectory.from_frames(poses)
    if traj.frame_id != hp.ROBOT:
        raise ConfigError(f"{path}: refined poses must be in the robot frame")
    return RefinedDemo(traj, images, [])


def write_joints(path: str | Path, timestamps, result: rt.RetargetResult, joint_names) -> None:
    skipped = set(result.skipped)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", *joint_names, "residual", "skipped"])
        for k, (t, q) in enumerate(zip(timestamps, result.q)):
            w.writerow([int(t), *(repr(float(v)) for v in q), repr(float(result.residuals[k])), int(k in skipped)])


def read_joints(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read joints {path}: {exc}") from None
    body = rows[1:]
    ts = np.array([int(r[0]) for r in body], dtype=np.int64)
    q = np.array([[float(v) for v in r[1:14]] for r in body]).reshape(len(body), 13)
    return ts, q


@dataclass
class Assembled:
    trajectory: ds.Trajectory
    q: np.ndarray
    glove_stats: StreamStats
    dropped_frames: int


def assemble_demo(demo_dir: str | Path, demo_id: str, timestamps, q, images, store: ds.ImageStore,
                  rate_hz: float = 25.0) -> Assembled:
    """Align the glove stream to the camera frames and emit human frames.

    Camera frames without a glove sample inside half a period are dropped
    (together with their joint rows).
    """
    demo_dir = Path(demo_dir)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    q = np.asarray(q, dtype=float)
    if len(q) != len(timestamps) or len(images) != len(timestamps):
        raise LengthMismatchError(f"{demo_id}: {len(timestamps)} frames, {len(q)} joint rows, "
                                  f"{len(images)} image sets")
    glove, stats = read_stream(demo_dir / "glove.osmo")
    if not glove:
        raise EmptyStreamError(f"{demo_id}: glove stream has no valid packets")
    if stats.crc_failures or stats.packets_dropped:
        log.warning("%s: glove stream had %d CRC failures, %d dropped packets", demo_id, stats.crc_failures,
                    stats.packets_dropped)
    g_ts = np.array([f.timestamp for f in glove], dtype=np.int64)
    table = timestamp_align({"camera": (timestamps, np.arange(len(timestamps))), "glove": (g_ts, np.arange(len(g_ts)))},
                            rate_hz, start_us=int(timestamps[0]))
    both = table.complete()
    cam_idx = table.index["camera"][both]
    glove_idx = table.index["glove"][both]
    frames = []
    for ci, gi in zip(cam_idx, glove_idx):
        refs = {}
        for kind in ("rgb", "ir_left", "ir_right"):
            rel = images[ci].get(kind)
            refs[kind] = store.put((demo_dir / rel).read_bytes()) if rel else None
        tactile = ds.tactile_from_readings(glove[gi].readings)
        frames.append(ds.DemoFrame(int(timestamps[ci]), refs["rgb"], refs["ir_left"], refs["ir_right"], tactile))
    dropped = len(timestamps) - len(frames)
    if dropped:
        log.warning("%s: %d camera frames had no glove sample and were dropped", demo_id, dropped)
    return Assembled(ds.Trajectory(demo_id, frames, demo_id, rate_hz), q[cam_idx], stats, dropped)


# ---------------------------------------------------------------------------
# whole bundle
# ---------------------------------------------------------------------------

@dataclass
class DemoReport:
    id: str
    frames_in: int
    frames_out: int
    skipped: list
    refine_failures: list
    glove: StreamStats
    max_residual: float


def demo_dirs(bundle: str | Path) -> list[Path]:
    root = Path(bundle) / "demos"
    dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not dirs:
        raise ConfigError(f"no demonstrations under {root}")
    return dirs


def resolve_extrinsics(bundle: str | Path, cfg: dict) -> hp.Extrinsics:
    path = cfg["paths"]["extrinsics"] or Path(bundle) / "extrinsics.json"
    if not Path(path).is_file():
        raise ConfigError(f"extrinsics file not found: {path}")
    return hp.load_extrinsics(path)


def _process_one(args):
    demo_dir, extrinsics, chain, env, cfg, image_root = args
    demo_id = demo_dir.name
    refined = refine_demo(demo_dir, extrinsics, cfg)
    result = rt.retarget_hand_trajectory(refined.hand, chain, env, retarget_config(cfg), label=demo_id)
    store = ds.ImageStore(image_root)
    asm = assemble_demo(demo_dir, demo_id, refined.hand.timestamps, result.q, refined.images, store, cfg["rate_hz"])
    report = DemoReport(demo_id, len(refined.hand), len(asm.trajectory), list(result.skipped),
                        refined.refine_failures, asm.glove_stats, float(result.residuals.max()))
    return asm, report


def process_bundle(bundle: str | Path, out: str | Path, cfg: dict | None = None, human_out: str | Path | None = None):
    """Bundle of raw demonstrations -> robot-ready dataset written to ``out``.

    Returns ``(robot_dataset, human_dataset, reports)``.
    """
    cfg = cfg or load_config()
    out = Path(out)
    extrinsics = resolve_extrinsics(bundle, cfg)
    chain = rt.load_chain(cfg["paths"]["chain"])
    env = rt.load_environment(cfg["paths"]["environment"])
    retarget_config(cfg)  # validate before any work starts
    dirs = demo_dirs(bundle)
    image_root = out / STAGING
    jobs = [(d, extrinsics, chain, env, cfg, image_root) for d in dirs]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            results = list(pool.map(_process_one, jobs))
    else:
        results = [_process_one(j) for j in jobs]
    return finish_dataset(results, out, cfg, human_out, chain)


def finish_dataset(results, out: Path, cfg: dict, human_out, chain: rt.KinematicChain):
    reports = [r for _, r in results]
    human = ds.Dataset([a.trajectory for a, _ in results], ds.HUMAN, None, list(chain.joint_names))
    robot = ds.build_robot_dataset(human, {a.trajectory.id: a.q for a, _ in results}, chain.joint_names)
    ncfg = cfg["normalization"]
    stats = ds.fit_normalization(robot, ncfg["eps"], ncfg["min_samples"], ncfg["on_degenerate"])
    stats.centered = bool(ncfg["centered"])
    if stats.degenerate.any():
        log.warning("degenerate channels flagged: %s", [n for n, d in zip(stats.names, stats.degenerate) if d])
    robot.normalization = stats
    staging = Path(out) / STAGING
    store = ds.ImageStore(staging)
    ds.write_dataset(robot, out, store)
    if human_out is not None:
        ds.write_dataset(human, human_out, store)
    # each dataset now holds copies of exactly the images it references
    shutil.rmtree(staging, ignore_errors=True)
    return robot, human, reports


def build_from_joints(bundle: str | Path, joints_dir: str | Path, out: str | Path, cfg: dict | None = None,
                      human_out=None):
    """Assemble the dataset from per-demo joint CSVs produced by the retarget stage."""
    cfg = cfg or load_config()
    chain = rt.load_chain(cfg["paths"]["chain"])
    store = ds.ImageStore(Path(out) / STAGING)
    results = []
    for d in demo_dirs(bundle):
        path = Path(joints_dir) / f"{d.name}.csv"
        ts, q = read_joints(path)
        poses, _, images = read_demo_records(d)
        cam_ts = np.array([p.timestamp for p in poses], dtype=np.int64)
        if not np.array_equal(ts, cam_ts):
            raise LengthMismatchError(f"{path}: joint rows do not match the {len(cam_ts)} camera frames of {d.name}")
        asm = assemble_demo(d, d.name, ts, q, images, store, cfg["rate_hz"])
        results.append((asm, DemoReport(d.name, len(ts), len(asm.trajectory), [], [], asm.glove_stats, float("nan"))))
    return finish_dataset(results, Path(out), cfg, human_out, chain)
