"""Retargeting a wiping motion, with one bad hand-pose estimate.

The wrist traces an ellipse above the table while the fingers stay curled.
Frame 60 carries a pose estimate that jumps 30 cm sideways.  The safety
filter refuses it and repeats the previous command.
"""
import logging

import numpy as np

from osmoglove import retarget as rt

logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")


def main():
    chain, env = rt.load_chain(), rt.load_environment()
    n = 150
    t = np.arange(n) / 25
    home = rt.forward_kinematics(chain, chain.home())
    wrist = np.tile(home[rt.WRIST_FRAME], (n, 1, 1))
    centre = np.array([0.45, 0.0, 0.35])
    wrist[:, :3, 3] = centre + np.stack([0.075 * np.cos(0.8 * t), 0.04 * np.sin(0.8 * t), 0 * t], axis=1)
    offsets = np.array([home[f][:3, 3] - home[rt.WRIST_FRAME][:3, 3] for f in rt.FINGERTIP_FRAMES])
    tips = wrist[:, None, :3, 3] + offsets[None]

    wrist[60, 1, 3] += 0.3
    tips[60, :, 1] += 0.3

    out = rt.retarget_trajectory(wrist, tips, (t * 1e6).astype(np.int64), chain, env, label="wipe")
    frames = rt._node_frames(chain, out.q)
    w = frames[:, chain.node_index(rt.WRIST_FRAME), :3, 3]
    speed = np.linalg.norm(np.diff(w, axis=0), axis=1) * 25
    good = np.setdiff1d(np.arange(n), out.skipped)
    err = np.linalg.norm(w[good] - wrist[good, :3, 3], axis=1)
    print(f"{n} frames in, {len(out.q)} commands out, repeated: {out.skipped}")
    print(f"wrist tracking error on accepted frames: median {np.median(err) * 1000:.2f} mm")
    print(f"fastest commanded wrist motion: {speed.max():.3f} m/s")


if __name__ == "__main__":
    main()
