"""Command-line front end.

Exit codes: 0 success, 1 error (one JSON line on stderr), 2 finished without
converging (results are still written). Every command that writes an output
file also writes ``<output>.manifest.json`` next to it.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import evaluation
from .errors import InvalidArgumentError, SchemaMismatchError
from .ingest import load_config, read_cloud, read_trajectory, read_transform, write_trajectory, write_transform
from .innerprod import exact_cosine, indicator
from .pointcloud import check_same_schema
from .registration import register, register_sequence
from .se3 import Isometry

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the error exit code instead of argparse's default 2
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def tool_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output, argv, config_digest, inputs, started, summary) -> None:
    manifest = {
        "command_line": list(argv),
        "config_hash": config_digest,
        "inputs": {str(p): file_sha256(p) for p in inputs},
        "tool_version": tool_version(),
        "wall_time_s": time.perf_counter() - started,
        "result": summary,
    }
    evaluation.write_json(str(output) + ".manifest.json", manifest)


def _load(args):
    cfg = load_config(args.config)
    reg = replace(cfg.registration, threads=args.threads)
    return cfg, reg


def _cloud(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"cannot read cloud file {path}")
    return read_cloud(p)


def _pair(source_path, target_path, channels):
    """Read both clouds and reduce them to the configured channels."""
    source = _cloud(source_path)
    target = _cloud(target_path)
    names = set(channels)
    if not names <= set(source.schema.names) or not names <= set(target.schema.names):
        raise SchemaMismatchError(f"source {source.schema}", f"target {target.schema} (config needs {list(channels)})")
    source = source.select_channels(channels)
    target = target.select_channels(channels)
    check_same_schema(source, target)
    return source, target


def cmd_register(args, argv, started) -> int:
    cfg, reg = _load(args)
    source, target = _pair(args.source, args.target, cfg.channels)
    initial = read_transform(args.initial) if args.initial else None
    res = register(target, source, initial, cfg.kernel, reg)
    write_transform(args.output, res.transform)
    if args.trace:
        evaluation.write_csv(args.trace, ["iteration", "lengthscale", "F", "indicator", "step", "twist_norm"],
                             res.trace_rows())
    inputs = [args.source, args.target] + ([args.initial] if args.initial else [])
    summary = {
        "converged": res.converged,
        "iterations": res.iterations,
        "final_indicator": res.final_indicator,
        "final_lengthscale": res.lengthscale_trace[-1] if res.lengthscale_trace else None,
        "transform": Path(args.output).read_text().strip(),
    }
    write_manifest(args.output, argv, cfg.digest, inputs, started, summary)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _stamp(path: Path, k: int) -> float:
    try:
        return float(path.stem)
    except ValueError:
        return float(k)


def cmd_sequence(args, argv, started) -> int:
    cfg, reg = _load(args)
    paths = sorted(Path(p) for p in glob.glob(str(Path(args.dir) / args.pattern)))
    if len(paths) < 2:
        raise CliError(f"pattern {args.pattern!r} matched {len(paths)} file(s) in {args.dir}; need at least 2")
    frames = []
    for p in paths:
        if not p.is_file():
            raise CliError(f"missing frame file {p}")
        frames.append(read_cloud(p).select_channels(cfg.channels))
    seq = register_sequence(frames, cfg.kernel, reg)
    stamps = [_stamp(p, k) for k, p in enumerate(paths)]
    write_trajectory(args.output, seq.trajectory, args.traj_format, stamps)
    converged = [r.converged if r is not None else False for r in seq.results]
    summary = {
        "frames": [p.name for p in paths],
        "fallback_frames": [paths[k + 1].name for k, f in enumerate(seq.fallback) if f],
        "unconverged_frames": [paths[k + 1].name for k, c in enumerate(converged)
                               if not c and not seq.fallback[k]],
        "trajectory": Path(args.output).read_text().splitlines(),
    }
    write_manifest(args.output, argv, cfg.digest, paths, started, summary)
    return EXIT_OK if all(converged) else EXIT_NOT_CONVERGED


def cmd_indicator(args, argv, started) -> int:
    cfg, reg = _load(args)
    source, target = _pair(args.source, args.target, cfg.channels)
    T = read_transform(args.transform) if args.transform else Isometry.identity()
    value = indicator(target, source, T, cfg.kernel, reg.cutoff_multiplier, reg.c_min, reg.threads)
    lines = [f"indicator {evaluation.format_number(value)}"]
    summary = {"indicator": value}
    if args.exact:
        cos = exact_cosine(target, source, T, cfg.kernel)
        lines.append(f"exact_cosine {evaluation.format_number(cos)}")
        summary["exact_cosine"] = cos
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text, encoding="ascii")
        inputs = [args.source, args.target] + ([args.transform] if args.transform else [])
        write_manifest(args.output, argv, cfg.digest, inputs, started, summary)
    return EXIT_OK


def cmd_sweep(args, argv, started) -> int:
    cfg, reg = _load(args)
    cloud = _cloud(args.cloud).select_channels(cfg.channels)
    axis = [float(v) for v in args.axis.split(",")] if args.axis else None
    magnitude = math.radians(args.max) if args.kind == "rotation" else args.max
    rows = evaluation.indicator_sweep(cloud, cfg.kernel, args.kind, magnitude, args.steps, axis, reg.threads)
    if args.kind == "rotation":
        header = ["angle_deg", "indicator"]
        rows = [(math.degrees(m), v) for m, v in rows]
    else:
        header = ["distance_m", "indicator"]
    evaluation.write_csv(args.output, header, rows)
    peak = max(range(len(rows)), key=lambda k: rows[k][1])
    write_manifest(args.output, argv, cfg.digest, [args.cloud], started,
                   {"rows": len(rows), "peak_row": peak, "peak_indicator": rows[peak][1]})
    return EXIT_OK


def cmd_bench(args, argv, started) -> int:
    color = args.mode == "color"
    if args.scenario == "ring":
        report = evaluation.ring_bench(args.seed, args.trials, color, threads=args.threads)
    else:
        report = evaluation.synth_bench(
            seed=args.seed, n_points=args.points, noise_frac=args.noise, rotation_max_deg=args.rot_max,
            translation_max_frac=args.trans_max, trials=args.trials, color=color, threads=args.threads,
        )
    header, rows = report.rows()
    evaluation.write_csv(args.output, header, rows)
    summary = report.summary()
    summary.update(scenario=args.scenario, mode=args.mode, seed=args.seed)
    evaluation.write_json(str(args.output) + ".summary.json", summary)
    write_manifest(args.output, argv, None, [], started, summary)
    return EXIT_OK


def cmd_eval(args, argv, started) -> int:
    est = read_trajectory(args.est, args.metric)
    gt = read_trajectory(args.gt, args.metric)
    if args.metric == "kitti":
        report = evaluation.kitti_drift([T for _, T in est], [T for _, T in gt], frame_dt=args.frame_dt)
        summary = report.to_dict()
        if args.csv:
            rows = [(L, s["translation_percent"], s["rotation_deg_per_m"], s["segments"])
                    for L, s in report.per_length.items() if s is not None]
            evaluation.write_csv(args.csv, ["length_m", "translation_percent", "rotation_deg_per_m", "segments"],
                                 rows)
    else:
        report = evaluation.tum_rpe(est, gt, delta=args.delta)
        summary = report.to_dict()
        if args.csv:
            evaluation.write_csv(args.csv, ["timestamp", "trans_m_per_s", "rot_deg_per_s"], report.residuals)
    evaluation.write_json(args.output, summary)
    write_manifest(args.output, argv, None, [args.est, args.gt], started, summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rkhsreg", description="Kernel-based point cloud registration.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="config JSON or a shipped profile name")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("register", help="register --source onto --target")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--initial")
    p.add_argument("--output", required=True)
    p.add_argument("--trace")
    common(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("sequence", help="frame-to-frame odometry over a directory of clouds")
    p.add_argument("--dir", required=True)
    p.add_argument("--pattern", default="*.ply")
    p.add_argument("--traj-format", choices=("tum", "kitti"), default="kitti")
    p.add_argument("--output", required=True)
    common(p)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("indicator", help="alignment indicator of two clouds")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--transform")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--output")
    common(p)
    p.set_defaults(func=cmd_indicator)

    p = sub.add_parser("sweep", help="indicator against a rotated or translated copy")
    p.add_argument("--cloud", required=True)
    p.add_argument("--kind", choices=("rotation", "translation"), required=True)
    p.add_argument("--max", type=float, required=True, help="degrees for rotation, meters for translation")
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--axis", help="comma-separated axis, e.g. 0,0,1")
    p.add_argument("--output", required=True)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="synthetic recovery benchmark")
    p.add_argument("--scenario", choices=("box", "ring"), default="box")
    p.add_argument("--mode", choices=("geometric", "color"), default="geometric")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.005, help="noise sigma as a fraction of the diameter")
    p.add_argument("--rot-max", type=float, default=10.0, help="degrees")
    p.add_argument("--trans-max", type=float, default=0.05, help="fraction of the diameter")
    p.add_argument("--output", required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="trajectory drift (kitti) or RPE (tum)")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metric", choices=("kitti", "tum"), required=True)
    p.add_argument("--delta", type=float, default=1.0, help="RPE interval in seconds")
    p.add_argument("--frame-dt", type=float, default=0.1, help="seconds per frame for kitti speed bins")
    p.add_argument("--output", required=True)
    p.add_argument("--csv")
    common(p, config=False)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise InvalidArgumentError(f"--threads must be >= 1, got {args.threads}")
        return args.func(args, argv, started)
    except SystemExit as exc:
        # --help and friends
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - every failure maps to one exit code
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
