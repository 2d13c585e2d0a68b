"""Post-processing of external hand-pose estimates.

The estimator itself (segmentation, keypoint regression, stereo depth) runs
elsewhere; this module consumes its per-frame output: 21 keypoints, a wrist
pose and optionally a hand point cloud, all in the camera frame.  Keypoints
follow the usual 21-point hand layout (0 wrist, tips at 4, 8, 12, 16, 20).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.signal import savgol_coeffs, savgol_filter

from .errors import (BadWindowError, ConfigError, DegenerateNeighborhoodError, EmptyCloudError,
                     FrameMismatchError, TooShortError)

N_KEYPOINTS = 21
WRIST = 0
FINGERTIP_IDX = (4, 8, 12, 16, 20)  # thumb, index, middle, ring, little
CAMERA, ROBOT = "camera", "robot"
DEPTH_AXIS = 2


def _check_rotation(R, tol):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0):
        raise ValueError("rotation must be a 3x3 orthonormal matrix")
    return R


def make_transform(R=None, t=None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


def invert_transform(T) -> np.ndarray:
    R, t = T[:3, :3], T[:3, 3]
    return make_transform(R.T, -R.T @ t)


@dataclass
class HandPoseFrame:
    timestamp: int
    keypoints: np.ndarray  # (21, 3)
    wrist_pose: np.ndarray  # (4, 4)
    confidence: float = 1.0
    frame_id: str = CAMERA

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=float)
        if self.keypoints.shape != (N_KEYPOINTS, 3):
            raise ValueError(f"expected {N_KEYPOINTS}x3 keypoints, got {self.keypoints.shape}")
        self.wrist_pose = np.asarray(self.wrist_pose, dtype=float)
        _check_rotation(self.wrist_pose[:3, :3], 1e-6)


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    frame_id: str = CAMERA

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud coordinates must be finite")


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform taking camera-frame coordinates to the robot base frame."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        _check_rotation(M[:3, :3], 1e-6)
        object.__setattr__(self, "matrix", M)

    @property
    def rotation(self):
        return self.matrix[:3, :3]

    @property
    def translation(self):
        return self.matrix[:3, 3]

    def inverse(self) -> "Extrinsics":
        return Extrinsics(invert_transform(self.matrix))


@dataclass
class HandTrajectory:
    """Per-frame hand estimate over a whole demonstration."""

    timestamps: np.ndarray  # (M,) int64 us
    keypoints: np.ndarray  # (M, 21, 3)
    wrist: np.ndarray  # (M, 4, 4)
    confidence: np.ndarray | None = None
    frame_id: str = CAMERA

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.keypoints = np.asarray(self.keypoints, dtype=float)
        self.wrist = np.asarray(self.wrist, dtype=float)
        if self.confidence is None:
            self.confidence = np.ones(len(self.timestamps))

    def __len__(self):
        return len(self.timestamps)

    @property
    def fingertips(self) -> np.ndarray:
        return self.keypoints[:, FINGERTIP_IDX, :]

    @classmethod
    def from_frames(cls, frames: Iterable[HandPoseFrame]) -> "HandTrajectory":
        frames = list(frames)
        ids = {f.frame_id for f in frames}
        if len(ids) > 1:
            raise FrameMismatchError("frames mix coordinate frames")
        return cls(
            np.array([f.timestamp for f in frames], dtype=np.int64),
            np.stack([f.keypoints for f in frames]) if frames else np.zeros((0, N_KEYPOINTS, 3)),
            np.stack([f.wrist_pose for f in frames]) if frames else np.zeros((0, 4, 4)),
            np.array([f.confidence for f in frames]),
            ids.pop() if ids else CAMERA,
        )

    def frames(self) -> list[HandPoseFrame]:
        return [HandPoseFrame(int(t), k, w, float(c), self.frame_id)
                for t, k, w, c in zip(self.timestamps, self.keypoints, self.wrist, self.confidence)]


# ---------------------------------------------------------------------------
# frame transforms
# ---------------------------------------------------------------------------

def _apply(T, pts):
    return pts @ T[:3, :3].T + T[:3, 3]


def _transform(obj, T, source: str, target: str):
    if obj.frame_id != source:
        raise FrameMismatchError(f"input is in the {obj.frame_id!r} frame, expected {source!r}")
    if isinstance(obj, PointCloud):
        return PointCloud(_apply(T, obj.points), target)
    if isinstance(obj, HandPoseFrame):
        return HandPoseFrame(obj.timestamp, _apply(T, obj.keypoints), T @ obj.wrist_pose, obj.confidence, target)
    if isinstance(obj, HandTrajectory):
        return HandTrajectory(obj.timestamps.copy(), _apply(T, obj.keypoints), T @ obj.wrist, obj.confidence.copy(),
                              target)
    raise TypeError(f"cannot transform {type(obj).__name__}")


def to_robot_frame(obj, extrinsics: Extrinsics):
    """Map a point cloud, pose frame or trajectory from camera to robot frame."""
    return _transform(obj, extrinsics.matrix, CAMERA, ROBOT)


def to_camera_frame(obj, extrinsics: Extrinsics):
    """Inverse of :func:`to_robot_frame`."""
    return _transform(obj, invert_transform(extrinsics.matrix), ROBOT, CAMERA)


# ---------------------------------------------------------------------------
# depth refinement
# ---------------------------------------------------------------------------

def refine_wrist_depth(pose: HandPoseFrame, cloud: PointCloud, k: int = 50, radius: float = 0.05) -> HandPoseFrame:
    """Snap the hand's depth to the median depth of the cloud around the wrist.

    The ``k`` cloud points nearest to the wrist keypoint in the image plane
    (x, y) are selected; their median depth replaces the wrist depth and the
    whole hand is shifted along the depth axis by the same amount.  At least
    half of those points must lie within ``radius`` (planar) of the wrist.
    """
    if pose.frame_id != cloud.frame_id:
        raise FrameMismatchError(f"pose in {pose.frame_id!r} but cloud in {cloud.frame_id!r}")
    pts = cloud.points
    if pts.shape[0] == 0:
        raise EmptyCloudError("point cloud is empty")
    if k < 1:
        raise ValueError("k must be positive")
    wrist = pose.keypoints[WRIST]
    d = np.hypot(pts[:, 0] - wrist[0], pts[:, 1] - wrist[1])
    kk = min(k, pts.shape[0])
    near = np.argpartition(d, kk - 1)[:kk]
    inside = np.count_nonzero(d[near] <= radius)
    if inside < k / 2:
        raise DegenerateNeighborhoodError(
            f"only {inside} of the {k} nearest points lie within {radius} m of the wrist")
    shift = float(np.median(pts[near, DEPTH_AXIS])) - wrist[DEPTH_AXIS]
    kp = pose.keypoints.copy()
    kp[:, DEPTH_AXIS] += shift
    wp = pose.wrist_pose.copy()
    wp[DEPTH_AXIS, 3] += shift
    return replace(pose, keypoints=kp, wrist_pose=wp)


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------

def _check_window(window: int, polyorder: int):
    if window < 1 or window % 2 == 0:
        raise BadWindowError(f"window must be a positive odd count, got {window}")
    if not 0 <= polyorder < window:
        raise BadWindowError(f"polyorder must satisfy 0 <= polyorder < window ({polyorder}, {window})")


def savgol_weights(window: int, polyorder: int) -> np.ndarray:
    """Interior smoothing weights, oldest sample first."""
    _check_window(window, polyorder)
    return savgol_coeffs(window, polyorder, use="dot")


def smooth_trajectory(series, window: int = 9, polyorder: int = 3) -> np.ndarray:
    """Savitzky-Golay smoothing along axis 0.

    Edge samples come from the polynomial fitted to the first/last full window.
    """
    _check_window(window, polyorder)
    x = np.asarray(series, dtype=float)
    if x.shape[0] < window:
        raise TooShortError(f"series of length {x.shape[0]} is shorter than the window ({window})")
    return savgol_filter(x, window, polyorder, axis=0, mode="interp")


def project_to_rotation(M) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition), batched."""
    U, _, Vt = np.linalg.svd(M)
    D = np.ones(U.shape[:-1])
    D[..., -1] = np.sign(np.linalg.det(U @ Vt))
    return (U * D[..., None, :]) @ Vt


def smooth_hand_trajectory(traj: HandTrajectory, window: int = 9, polyorder: int = 3) -> HandTrajectory:
    """Smooth keypoints and wrist pose; wrist rotations are re-orthonormalised."""
    kp = smooth_trajectory(traj.keypoints, window, polyorder)
    wrist = traj.wrist.copy()
    wrist[:, :3, 3] = smooth_trajectory(traj.wrist[:, :3, 3], window, polyorder)
    wrist[:, :3, :3] = project_to_rotation(smooth_trajectory(traj.wrist[:, :3, :3], window, polyorder))
    return HandTrajectory(traj.timestamps.copy(), kp, wrist, traj.confidence.copy(), traj.frame_id)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def load_extrinsics(path: str | Path) -> Extrinsics:
    """Read ``{"R": 3x3, "t": [x, y, z]}`` or ``{"matrix": 4x4}``."""
    try:
        cfg = json.loads(Path(path).read_text())
        if "matrix" in cfg:
            return Extrinsics(np.asarray(cfg["matrix"], dtype=float))
        return Extrinsics(make_transform(cfg["R"], cfg["t"]))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load extrinsics {path}: {exc}") from None


def save_extrinsics(path: str | Path, extrinsics: Extrinsics) -> None:
    M = extrinsics.matrix
    Path(path).write_text(json.dumps({"R": M[:3, :3].tolist(), "t": M[:3, 3].tolist()}, indent=2) + "\n")


def pose_record(pose: HandPoseFrame, cloud: PointCloud | None = None) -> dict:
    rec = {
        "t_us": int(pose.timestamp),
        "frame": pose.frame_id,
        "confidence": float(pose.confidence),
        "keypoints": pose.keypoints.tolist(),
        "wrist": {"R": pose.wrist_pose[:3, :3].tolist(), "t": pose.wrist_pose[:3, 3].tolist()},
    }
    if cloud is not None:
        rec["cloud"] = cloud.points.tolist()
    return rec


def parse_pose_record(rec: dict) -> tuple[HandPoseFrame, PointCloud | None]:
    frame = rec.get("frame", CAMERA)
    pose = HandPoseFrame(
        int(rec["t_us"]),
        rec["keypoints"],
        make_transform(rec["wrist"]["R"], rec["wrist"]["t"]),
        float(rec.get("confidence", 1.0)),
        frame,
    )
    cloud = PointCloud(rec["cloud"], frame) if "cloud" in rec else None
    return pose, cloud


def write_keypoint_file(path: str | Path, poses: Iterable[HandPoseFrame], clouds=None) -> None:
    poses = list(poses)
    clouds = list(clouds) if clouds is not None else [None] * len(poses)
    with open(path, "w") as fh:
        for p, c in zip(poses, clouds):
            fh.write(json.dumps(pose_record(p, c)) + "\n")


def read_keypoint_file(path: str | Path) -> list[tuple[HandPoseFrame, PointCloud | None]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_pose_record(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad keypoint record ({exc})") from None
    return out
