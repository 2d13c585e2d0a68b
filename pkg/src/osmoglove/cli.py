"""``osmoglove`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 data-quality failure, 2 usage or configuration error.
Settings come from built-in defaults, then ``--config FILE``, then flags.
The seed falls back to the ``OSMO_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import analysis as an
from . import dataset as ds
from . import pipeline as pl
from . import retarget as rt
from . import sensor_sim as ss
from . import synthetic
from .errors import ConfigError, OsmoError
from .handpose import load_extrinsics
from .wire import read_stream, write_stream

log = logging.getLogger("osmoglove")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def resolve_seed(flag, cfg: dict) -> int:
    if flag is not None:
        return flag
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    env = os.environ.get("OSMO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"OSMO_SEED must be an integer, got {env!r}") from None
    return 0


def _overrides(args) -> dict:
    """Nested config overrides from whichever flags were given."""
    spec = {
        "geometry": ("paths", "geometry"), "chain": ("paths", "chain"), "environment": ("paths", "environment"),
        "extrinsics": ("paths", "extrinsics"), "workers": ("workers",),
        "damping": ("ik", "damping"), "max_iter": ("ik", "max_iter"), "tol": ("ik", "tol"),
        "max_wrist_speed": ("safety", "max_wrist_speed"), "collision_margin": ("safety", "collision_margin"),
        "window": ("smoothing", "window"), "polyorder": ("smoothing", "polyorder"),
        "k": ("refine", "k"), "radius": ("refine", "radius"), "centered": ("normalization", "centered"),
    }
    out: dict = {}
    for attr, keys in spec.items():
        v = getattr(args, attr, None)
        if v is None:
            continue
        d = out
        for k in keys[:-1]:
            d = d.setdefault(k, {})
        d[keys[-1]] = str(v) if isinstance(v, Path) else v
    return out


def _config(args) -> dict:
    cfg = pl.load_config(args.config, _overrides(args))
    # referenced files must exist and parse before any stage runs
    paths = cfg["paths"]
    if paths["geometry"]:
        ss.load_geometry(paths["geometry"])
    if paths["chain"]:
        rt.load_chain(paths["chain"])
    if paths["environment"]:
        rt.load_environment(paths["environment"])
    if paths["extrinsics"]:
        if not Path(paths["extrinsics"]).is_file():
            raise ConfigError(f"extrinsics file not found: {paths['extrinsics']}")
        load_extrinsics(paths["extrinsics"])
    pl.retarget_config(cfg)
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _geometry(cfg, args) -> ss.GloveGeometry:
    g = ss.load_geometry(cfg["paths"]["geometry"])
    if getattr(args, "shield", None) is not None:
        g = g.with_shield(args.shield)
    if getattr(args, "noise", None) is not None:
        g = g.with_noise(args.noise)
    return g


def _check_taxels(geometry: ss.GloveGeometry, names) -> None:
    unknown = [n for n in names if n not in geometry.names]
    if unknown:
        raise ConfigError(f"unknown taxel(s) {unknown}; known: {', '.join(geometry.names)}")


def _scenario(args, cfg, seed, geometry: ss.GloveGeometry) -> an.Scenario:
    base = {}
    path = args.scenario_file or cfg["paths"]["scenario"]
    if path:
        base = an.load_scenario(path).to_dict()
    for key, attr in (("kind", "scenario"), ("duration_s", "seconds"), ("presses", "presses"),
                      ("trials", "trials")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    base["seed"] = seed
    if getattr(args, "taxel", None) is not None:
        _check_taxels(geometry, [args.taxel])
        base.setdefault("overrides", {})["taxel"] = args.taxel
    if getattr(args, "force", None) is not None:
        base.setdefault("overrides", {})["force_n"] = args.force
    sc = an.Scenario.from_dict(base)
    _check_taxels(geometry, sc.monitored)
    return sc


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = resolve_seed(args.seed, cfg)
    geometry = _geometry(cfg, args)
    sc = _scenario(args, cfg, seed, geometry)
    frames = sc.stream(geometry, seed).frames(geometry)
    n = write_stream(args.out, frames)
    print(f"wrote {n} packets ({sc.kind}, {n / ss.FRAME_RATE_HZ:g} s, seed {seed}) to {args.out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    frames, stats = read_stream(args.stream)
    print(f"packets ok {stats.packets_ok}  dropped {stats.packets_dropped}  crc failures {stats.crc_failures}  "
          f"resyncs {stats.resyncs}")
    if args.csv:
        cols = [f"t{t}_m{m}_{a}" for t in range(ss.N_TAXELS) for m in range(2) for a in "xyz"]
        r = ss.stack_readings(frames).reshape(len(frames), -1)
        with open(args.csv, "w") as fh:
            fh.write(",".join(["t_us", *cols]) + "\n")
            for f, row in zip(frames, r):
                fh.write(",".join([str(f.timestamp), *(f"{v:.2f}" for v in row)]) + "\n")
    if not frames:
        print("no valid packets", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _parse_stream_arg(text: str):
    head, sep, tag = text.rpartition(":")
    if sep and tag in ("shielded", "unshielded"):
        return Path(head), tag == "shielded"
    return Path(text), None


def cmd_analyze(args) -> int:
    cfg = _config(args)
    geometry = _geometry(cfg, args)
    names = geometry.names
    title = "RMS crosstalk noise (uT)"
    if not args.streams:
        seed = resolve_seed(args.seed, cfg)
        sc = _scenario(args, cfg, seed, geometry)
        if args.taxels:
            _check_taxels(geometry, args.taxels)
            sc = an.Scenario.from_dict({**sc.to_dict(), "monitored": args.taxels})
        reports = an.compare_configurations(sc, an.TABLE_CONFIGS, geometry)
        title += f", simulated {sc.kind}, {sc.trials} x {sc.duration_s:g} s, seed {seed}"
    else:
        _check_taxels(geometry, args.taxels or [])
        taxels = [geometry.index_of(t) for t in (args.taxels or ["thumb_distal", "middle_distal"])]
        rows = []
        for text in args.streams:
            path, shielded = _parse_stream_arg(text)
            if not path.is_file():
                raise ConfigError(f"stream file not found: {path}")
            frames, stats = read_stream(path)
            print(f"{path.name}: {stats.packets_ok} packets ok, {stats.packets_dropped} dropped, "
                  f"{stats.crc_failures} crc failures, {stats.resyncs} resyncs")
            if len(frames) < 2:
                print(f"{path.name}: too few packets to analyse", file=sys.stderr)
                return EXIT_DATA
            r = ss.stack_readings(frames)
            for n_mag in (1, 2):
                if shielded is True and n_mag == 1:
                    continue
                c = an.SensorConfig(bool(shielded), n_mag)
                label = c.label if shielded is not None else f"{path.stem} + {'1 mag' if n_mag == 1 else '2 mags'}"
                order = (an.TABLE_CONFIGS.index(c) if c in an.TABLE_CONFIGS else 9, len(rows))
                for k in taxels:
                    rows.append((k, order, an.rms_noise(an.config_series(r, k, c), k, label)))
        rows.sort(key=lambda x: (taxels.index(x[0]), x[1]))
        reports = [rep for _, _, rep in rows]
    print(an.format_table(reports, names, title), end="")
    if args.csv:
        Path(args.csv).write_text(an.to_csv(reports, names))
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    demo = Path(args.demo)
    ext = pl.resolve_extrinsics(demo.parent.parent, cfg)
    refined = pl.refine_demo(demo, ext, cfg)
    pl.write_refined(args.out, refined)
    print(f"{demo.name}: {len(refined.hand)} frames refined and smoothed, "
          f"{len(refined.refine_failures)} left unrefined -> {args.out}")
    return EXIT_OK


def cmd_retarget(args) -> int:
    cfg = _config(args)
    chain = rt.load_chain(cfg["paths"]["chain"])
    env = rt.load_environment(cfg["paths"]["environment"])
    refined = pl.read_refined(args.hand)
    res = rt.retarget_hand_trajectory(refined.hand, chain, env, pl.retarget_config(cfg), label=Path(args.hand).stem)
    pl.write_joints(args.out, refined.hand.timestamps, res, chain.joint_names)
    print(f"{len(res.q)} frames retargeted, {len(res.skipped)} repeated by the safety filter, "
          f"max residual {res.residuals.max():.3g} -> {args.out}")
    return EXIT_OK


def _print_reports(reports, robot) -> None:
    for r in reports:
        print(f"{r.id}: {r.frames_in} frames in, {r.frames_out} out, {len(r.skipped)} skipped, "
              f"{len(r.refine_failures)} unrefined, glove crc failures {r.glove.crc_failures}")
    print(f"dataset: {len(robot)} trajectories, {robot.n_frames} frames")


def cmd_process(args) -> int:
    cfg = _config(args)
    robot, _, reports = pl.process_bundle(args.bundle, args.out, cfg, args.human_out)
    _print_reports(reports, robot)
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    cfg = _config(args)
    robot, _, reports = pl.build_from_joints(args.bundle, args.joints, args.out, cfg, args.human_out)
    _print_reports(reports, robot)
    return EXIT_OK


def cmd_export_csv(args) -> int:
    data = ds.read_dataset(args.dataset)
    n = ds.export_csv(data, args.out)
    print(f"{n} rows -> {args.out}")
    return EXIT_OK


def cmd_show_config(args) -> int:
    cfg = _config(args)
    paths = cfg["paths"]
    sections = {
        "pipeline": cfg,
        "geometry": json.loads(Path(paths["geometry"]).read_text()) if paths["geometry"]
        else ss.default_geometry_config(),
        "chain": json.loads(Path(paths["chain"]).read_text()) if paths["chain"] else rt.default_chain_config(),
        "environment": json.loads(Path(paths["environment"]).read_text()) if paths["environment"]
        else rt.default_environment_config(),
        "scenario": an.Scenario().to_dict(),
    }
    out = sections if args.section == "all" else sections[args.section]
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_synth_demos(args) -> int:
    cfg = _config(args)
    seed = resolve_seed(args.seed, cfg)
    teleports: dict = {}
    for t in args.teleport or []:
        try:
            d, f = (int(x) for x in t.split(":"))
        except ValueError:
            raise ConfigError(f"--teleport expects DEMO:FRAME, got {t!r}") from None
        teleports.setdefault(d, []).append(f)
    spec = synthetic.DemoSpec(seconds=args.seconds)
    synthetic.make_bundle(args.out, args.demos, seed, rt.load_chain(cfg["paths"]["chain"]),
                          ss.load_geometry(cfg["paths"]["geometry"]), spec=spec, teleports=teleports)
    print(f"wrote {args.demos} synthetic demonstrations to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_solver_flags(p):
    g = p.add_argument_group("solver and safety")
    g.add_argument("--chain", type=Path, help="chain config JSON")
    g.add_argument("--environment", type=Path, help="environment JSON (planes, boxes)")
    g.add_argument("--damping", type=float)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--max-wrist-speed", type=float, help="m/s")
    g.add_argument("--collision-margin", type=float, help="m")


def _add_refine_flags(p):
    g = p.add_argument_group("refinement and smoothing")
    g.add_argument("--extrinsics", type=Path, help="camera-to-robot extrinsics JSON")
    g.add_argument("--k", type=int, help="cloud neighbours for depth refinement")
    g.add_argument("--radius", type=float, help="neighbourhood radius, m")
    g.add_argument("--window", type=int, help="Savitzky-Golay window (odd)")
    g.add_argument("--polyorder", type=int)


def _add_sim_flags(p, analyze: bool = False):
    p.add_argument("--scenario", choices=an.SCENARIO_KINDS, help="default: finger-wave")
    p.add_argument("--scenario-file", type=Path)
    p.add_argument("--seconds", type=float)
    p.add_argument("--presses", type=int)
    p.add_argument("--taxel" if not analyze else "--press-taxel", dest="taxel")
    p.add_argument("--force", type=float, help="press force, N")
    p.add_argument("--geometry", type=Path, help="glove geometry JSON")
    p.add_argument("--shield", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--noise", type=float, help="magnetometer noise sigma, uT")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osmoglove", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="random seed (default: config, then $OSMO_SEED, then 0)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a glove scenario to a packet stream")
    _add_sim_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", parents=[common], help="decode a packet stream, report statistics")
    p.add_argument("stream", type=Path)
    p.add_argument("--csv", type=Path, help="write decoded magnetometer values")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", parents=[common], help="RMS crosstalk table from streams or a simulation")
    p.add_argument("streams", nargs="*", help="stream files, optionally suffixed :shielded or :unshielded")
    _add_sim_flags(p, analyze=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--taxels", nargs="+", help="monitored taxel names")
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("refine", parents=[common], help="depth-refine and smooth one demo's hand poses")
    p.add_argument("demo", type=Path, help="demo directory containing hand.jsonl")
    _add_refine_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("retarget", parents=[common], help="retarget refined hand poses to joint commands")
    p.add_argument("hand", type=Path, help="robot-frame pose file from 'refine'")
    _add_solver_flags(p)
    p.add_argument("--out", type=Path, required=True, help="joint CSV")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("build-dataset", parents=[common], help="assemble a robot dataset from joint CSVs")
    p.add_argument("bundle", type=Path)
    p.add_argument("--joints", type=Path, required=True, help="directory of <demo>.csv from 'retarget'")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--human-out", type=Path, help="also write the human dataset here")
    p.add_argument("--centered", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--chain", type=Path)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("process", parents=[common], help="run every stage on a demo bundle")
    p.add_argument("bundle", type=Path)
    _add_refine_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--human-out", type=Path)
    p.add_argument("--centered", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("export-csv", parents=[common], help="flatten a robot dataset to CSV")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_csv)

    p = sub.add_parser("show-config", parents=[common], help="print effective defaults as JSON")
    p.add_argument("--section", choices=("all", "pipeline", "geometry", "chain", "environment", "scenario"),
                   default="all")
    for flag in ("--geometry", "--chain", "--environment"):
        p.add_argument(flag, type=Path)
    p.set_defaults(func=cmd_show_config)

    p = sub.add_parser("synth-demos", parents=[common], help="write a synthetic demonstration bundle")
    p.add_argument("out", type=Path)
    p.add_argument("--demos", type=int, default=10)
    p.add_argument("--seconds", type=float, default=8.0)
    p.add_argument("--teleport", action="append", metavar="DEMO:FRAME", help="inject a pose jump")
    p.add_argument("--chain", type=Path)
    p.add_argument("--geometry", type=Path)
    p.set_defaults(func=cmd_synth_demos)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"osmoglove: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OsmoError, ValueError) as exc:
        print(f"osmoglove: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"osmoglove: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
