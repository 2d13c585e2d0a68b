"""Synthetic demonstration bundles for exercising the processing pipeline.

Hand motion is generated in joint space on the robot chain and pushed
through forward kinematics, so every frame is reachable by construction.
Keypoints then pick up an estimator-like error: a per-frame depth offset
along the camera axis (which the point cloud can correct) plus small
isotropic jitter.  Tactile data comes from the glove simulator under
fingertip loads that follow finger flexion.

Bundle layout::

    <bundle>/extrinsics.json
    <bundle>/demos/<id>/hand.jsonl    camera-frame pose records with clouds
    <bundle>/demos/<id>/glove.osmo    packet stream
    <bundle>/demos/<id>/images/       opaque per-frame image blobs
    <bundle>/demos/<id>/truth.npz     generating joint trajectory and errors
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sensor_sim as ss
from .handpose import (CAMERA, FINGERTIP_IDX, N_KEYPOINTS, Extrinsics, HandPoseFrame, PointCloud, invert_transform,
                       make_transform, pose_record, save_extrinsics)
from .retarget import (FINGERTIP_FRAMES, WRIST_FRAME, Environment, KinematicChain, SafetyConfig, _node_frames,
                       collisions)
from .wire import PACKET_LEN, encode_packets

FRAME_PERIOD_US = 40_000
FINGER_NODES = (("thumb_rotator", "thumb_flexor"), ("index_flexor",), ("middle_flexor",), ("ring_flexor",),
                ("little_flexor",))
IMAGE_KINDS = ("rgb", "ir_left", "ir_right")


def look_at_extrinsics(camera_pos=(1.1, 0.0, 0.7), target=(0.35, 0.0, 0.35)) -> Extrinsics:
    """Camera-to-robot transform for a camera at ``camera_pos`` looking at ``target``
    (optical axis +z, image y pointing down)."""
    pos = np.asarray(camera_pos, dtype=float)
    z = np.asarray(target, dtype=float) - pos
    z /= np.linalg.norm(z)
    x = np.cross(z, [0.0, 0.0, 1.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Extrinsics(make_transform(np.column_stack([x, y, z]), pos))


def keypoints_from_frames(chain: KinematicChain, frames) -> np.ndarray:
    """21 keypoints from node frames: wrist, then four points per finger ending at the tip."""
    pos = frames[..., :3, 3]
    idx = chain.node_index
    kp = np.empty(pos.shape[:-2] + (N_KEYPOINTS, 3))
    kp[..., 0, :] = pos[..., idx(WRIST_FRAME), :]
    for f, (nodes, tip) in enumerate(zip(FINGER_NODES, FINGERTIP_FRAMES)):
        base = 4 * f + 1
        tip_p = pos[..., idx(tip), :]
        if len(nodes) == 2:
            a, b = pos[..., idx(nodes[0]), :], pos[..., idx(nodes[1]), :]
            pts = [a, b, 0.5 * (b + tip_p)]
        else:
            a = pos[..., idx(nodes[0]), :]
            pts = [a, a + (tip_p - a) / 3, a + 2 * (tip_p - a) / 3]
        for j, p in enumerate(pts + [tip_p]):
            kp[..., base + j, :] = p
    return kp


@dataclass
class DemoSpec:
    seconds: float = 8.0
    arm_amplitude: tuple = (0.04, 0.12)  # rad
    arm_frequency: tuple = (0.08, 0.2)  # Hz
    max_wrist_speed: float = 0.1  # m/s, motions faster than this are redrawn
    depth_error_m: float = 0.03
    keypoint_noise_m: float = 5e-5
    glove_offset_us: int = 7_000
    glove_drop: tuple = ()  # glove packet indices to leave out
    teleport_frames: tuple = ()
    teleport_m: float = 0.5
    max_load_n: float = 3.0


@dataclass
class SynthDemo:
    id: str
    q: np.ndarray
    timestamps: np.ndarray
    wrist_camera: np.ndarray  # true wrist poses, camera frame
    depth_error: np.ndarray
    loads: np.ndarray
    extra: dict = field(default_factory=dict)


def joint_motion(chain: KinematicChain, n: int, rng, spec: DemoSpec, env: Environment | None = None) -> np.ndarray:
    """Slow random arm sway around home plus rhythmic finger curling."""
    t = np.arange(n) / ss.FRAME_RATE_HZ
    env = env or Environment()
    for _ in range(50):
        amp = rng.uniform(*spec.arm_amplitude, 7)
        freq = rng.uniform(*spec.arm_frequency, 7)
        phase = rng.uniform(0, 2 * np.pi, 7)
        q = np.zeros((n, chain.n_joints))
        q[:, :7] = amp * np.sin(2 * np.pi * freq * t[:, None] + phase)
        ph = rng.uniform(0, 2 * np.pi, 6)
        q[:, 7] = -0.6 + 0.3 * np.sin(2 * np.pi * 0.3 * t + ph[0])
        q[:, 8] = 0.6 + 0.3 * np.sin(2 * np.pi * 0.35 * t + ph[1])
        for j in range(4):
            q[:, 9 + j] = 0.8 + 0.5 * np.sin(2 * np.pi * 0.4 * t + ph[2 + j])
        q = np.clip(q, chain.lower, chain.upper)
        frames = _node_frames(chain, q)
        w = frames[:, chain.node_index(WRIST_FRAME), :3, 3]
        speed = np.linalg.norm(np.diff(w, axis=0), axis=1) * ss.FRAME_RATE_HZ
        exempt = SafetyConfig().exempt_pairs
        if speed.max(initial=0) <= spec.max_wrist_speed and not any(
                collisions(chain, f, env, 0.0, exempt) for f in frames[:: max(1, n // 20)]):
            return q
    raise RuntimeError("could not draw a safe demonstration motion")


def fingertip_loads(q: np.ndarray, max_load_n: float) -> np.ndarray:
    """(T, 12) normal loads: fingertips press once flexed past a threshold."""
    loads = np.zeros((q.shape[0], ss.N_TAXELS))
    loads[:, 0] = np.clip((q[:, 8] - 0.7) * 10, 0, 1) * max_load_n
    for j in range(4):
        loads[:, 1 + j] = np.clip((q[:, 9 + j] - 1.0) * 4, 0, 1) * max_load_n
    return loads


def _wrist_cloud(wrist_cam, kp_cam, rng) -> np.ndarray:
    r = 0.02 * np.sqrt(rng.uniform(size=60))
    a = rng.uniform(0, 2 * np.pi, 60)
    wrist_pts = np.column_stack([wrist_cam[0] + r * np.cos(a), wrist_cam[1] + r * np.sin(a),
                                 wrist_cam[2] + rng.normal(0, 1e-3, 60)])
    hand_pts = np.repeat(kp_cam[1:], 3, axis=0) + rng.normal(0, 3e-3, (3 * (N_KEYPOINTS - 1), 3))
    bg = np.column_stack([wrist_cam[0] + rng.uniform(-0.2, 0.2, 40), wrist_cam[1] + rng.uniform(-0.2, 0.2, 40),
                          np.full(40, wrist_cam[2] + 0.3)])
    return np.vstack([wrist_pts, hand_pts, bg])


def make_demo(demo_dir: str | Path, demo_id: str, chain: KinematicChain, extrinsics: Extrinsics,
              geometry: ss.GloveGeometry, spec: DemoSpec, rng, t0_us: int = 0,
              env: Environment | None = None) -> SynthDemo:
    demo_dir = Path(demo_dir)
    (demo_dir / "images").mkdir(parents=True, exist_ok=True)
    n = int(round(spec.seconds * ss.FRAME_RATE_HZ))
    q = joint_motion(chain, n, rng, spec, env)
    frames = _node_frames(chain, q)
    kp_robot = keypoints_from_frames(chain, frames)
    wrist_robot = frames[:, chain.node_index(WRIST_FRAME)]

    cam_from_robot = invert_transform(extrinsics.matrix)
    kp_true = kp_robot @ cam_from_robot[:3, :3].T + cam_from_robot[:3, 3]
    wrist_true = cam_from_robot @ wrist_robot
    depth_err = rng.normal(0, spec.depth_error_m, n)
    kp_est = kp_true + rng.normal(0, spec.keypoint_noise_m, kp_true.shape)
    kp_est[..., 2] += depth_err[:, None]
    wrist_est = wrist_true.copy()
    wrist_est[:, 2, 3] += depth_err
    for k in spec.teleport_frames:
        kp_est[k, :, 0] += spec.teleport_m
        wrist_est[k, 0, 3] += spec.teleport_m
    # the wrist keypoint and wrist pose share a position estimate
    wrist_est[:, :3, 3] = kp_est[:, 0]

    ts = t0_us + np.arange(n, dtype=np.int64) * FRAME_PERIOD_US
    with open(demo_dir / "hand.jsonl", "w") as fh:
        for k in range(n):
            rec = pose_record(HandPoseFrame(int(ts[k]), kp_est[k], wrist_est[k], 1.0, CAMERA),
                              PointCloud(_wrist_cloud(wrist_true[k, :3, 3], kp_true[k], rng)))
            rec["images"] = {}
            for kind in IMAGE_KINDS:
                rel = f"images/{k:06d}_{kind}.bin"
                (demo_dir / rel).write_bytes(b"SYNTHIMG" + kind.encode() + rng.bytes(96))
                rec["images"][kind] = rel
            fh.write(json.dumps(rec) + "\n")

    loads = fingertip_loads(q, spec.max_load_n)
    stream = ss.load_stream(geometry, loads, seed=rng.integers(2**32))
    glove = [ss.GloveFrame(int(t + spec.glove_offset_us), f.readings, f.imu, f.ambient_field)
             for t, f in zip(ts, stream.frames(geometry))]
    # drop whole packets after encoding, so the sequence numbers show the gap
    raw = encode_packets(glove)
    drop = set(spec.glove_drop)
    (demo_dir / "glove.osmo").write_bytes(b"".join(
        raw[i * PACKET_LEN:(i + 1) * PACKET_LEN] for i in range(len(glove)) if i not in drop))
    np.savez(demo_dir / "truth.npz", q=q, timestamps=ts, depth_error=depth_err, wrist_camera=wrist_true,
             loads=loads, tactile_clean=stream.readings(geometry))
    return SynthDemo(demo_id, q, ts, wrist_true, depth_err, loads)


def make_bundle(root: str | Path, n_demos: int = 10, seed: int = 0, chain: KinematicChain | None = None,
                geometry: ss.GloveGeometry | None = None, extrinsics: Extrinsics | None = None,
                spec: DemoSpec | None = None, teleports: dict | None = None) -> list[SynthDemo]:
    """Write ``n_demos`` demonstrations under ``root``.

    ``teleports`` maps a demo index to frame indices whose estimate jumps
    sideways by ``spec.teleport_m``.
    """
    from .retarget import load_chain, load_environment

    root = Path(root)
    chain = chain or load_chain()
    geometry = geometry or ss.load_geometry()
    extrinsics = extrinsics or look_at_extrinsics()
    spec = spec or DemoSpec()
    env = load_environment()
    root.mkdir(parents=True, exist_ok=True)
    save_extrinsics(root / "extrinsics.json", extrinsics)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_demos)]
    demos = []
    for i in range(n_demos):
        s = spec
        if teleports and i in teleports:
            s = DemoSpec(**{**spec.__dict__, "teleport_frames": tuple(teleports[i])})
        demo_id = f"demo_{i:03d}"
        demos.append(make_demo(root / "demos" / demo_id, demo_id, chain, extrinsics, geometry, s, rngs[i],
                               t0_us=1_000_000 + i * 100_000_000, env=env))
    return demos
