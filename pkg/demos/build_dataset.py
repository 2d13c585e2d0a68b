"""From raw demonstrations to training samples.

Writes a small synthetic bundle, processes it into a robot dataset, reads
it back and turns one trajectory into normalised observations and action
chunks.

    python3 demos/build_dataset.py OUTDIR
"""
import sys
from pathlib import Path

import numpy as np

from osmoglove import dataset as ds
from osmoglove import pipeline as pl
from osmoglove import synthetic


def main(out: Path):
    demos = synthetic.make_bundle(out / "bundle", n_demos=3, seed=0, spec=synthetic.DemoSpec(seconds=4.0))
    print(f"bundle: {len(demos)} demonstrations under {out / 'bundle'}")

    robot, human, reports = pl.process_bundle(out / "bundle", out / "robot", human_out=out / "human")
    for r in reports:
        print(f"  {r.id}: {r.frames_out}/{r.frames_in} frames, max IK residual {r.max_residual:.1e}")

    data = ds.read_dataset(out / "robot")
    traj = data.trajectories[0]
    x = ds.state_channels(traj)
    y = ds.normalize(x, data.normalization)
    print(f"{traj.id}: state {x.shape}, normalised range [{y.min():.2f}, {y.max():.2f}]")

    centred = ds.normalize(x, data.normalization, centered=True)
    for name, v in (("default", y), ("centered", centred)):
        print(f"  {name:8s} mapping saturates {np.mean(np.abs(v) == 1.5):.1%} of values")

    chunks = ds.chunk_actions(traj.q)
    print(f"action chunks: {chunks.actions.shape}, executed in {len(chunks.schedule)} blocks of 4")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out"))
