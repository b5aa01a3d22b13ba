"""Command-line entry point.

Subcommands::

    run             run a batch and write results.csv, summary.json, manifest.json
    measures        print all measures of a serialized loop joint
    validate-track  check a track file
    replay          recompute measures from an experience log

Settings are resolved in increasing priority: the bundled reference config,
``--config FILE``, ``SENSORIMOTOR_<KEY>`` environment variables, flags.

Exit codes: 0 success, 1 runtime failure or invalid input data,
2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, fields
from importlib import metadata, resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agent import LogFormatError, build_measure_joints, read_experience_log, replay_entries
from .env import TrackError, corridor_width, load_track, validate_track
from .harness import MEASURE_MAX_ITER, ExperimentConfig, run_batch, write_outputs
from .measures import MEASURES, LoopJoint, evaluate
from .prob import UNITS

logger = logging.getLogger("sensorimotor")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
ENV_PREFIX = "SENSORIMOTOR_"
FULL_RUNS, FULL_STEPS = 1000, 20_000

# key -> (section, parser)
_KEYS = {
    "variants": ("experiment", "list"),
    "sensor_lengths": ("experiment", "floats"),
    "runs": ("experiment", "int"),
    "steps": ("experiment", "int"),
    "horizons": ("experiment", "horizons"),
    "seed": ("experiment", "int"),
    "noise_sigma": ("learning", "float"),
    "projections": ("learning", "int"),
    "track": ("world", "path"),
    "body_radius": ("world", "float"),
    "out": ("output", "str"),
    "workers": ("output", "int"),
    "log_dir": ("output", "path"),
}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _split(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _horizon(text: str) -> Optional[int]:
    return None if text.lower() in ("full", "none") else int(text)


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "path": lambda v: v or None,
    "list": lambda v: tuple(_split(v)),
    "floats": lambda v: tuple(float(x) for x in _split(v)),
    "horizons": lambda v: tuple(_horizon(x) for x in _split(v)),
}


def _parse_value(key: str, raw: str, where: str):
    kind = _KEYS[key][1]
    try:
        return _PARSERS[kind](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {raw!r} for {key!r} ({exc})") from None


def reference_config_text() -> str:
    return resources.files("sensorimotor").joinpath("data/reference.ini").read_text(encoding="utf-8")


def read_config(text: str, source: str) -> dict:
    """Parse INI text into ``{key: value}``; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        where = source if lineno is None else f"{source}, line {lineno}"
        raise ConfigError(f"{where}: {str(exc).splitlines()[0]}") from None
    out = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key not in _KEYS:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            if _KEYS[key][0] != section:
                raise ConfigError(f"{source}: key {key!r} belongs in section [{_KEYS[key][0]}], not [{section}]")
            out[key] = _parse_value(key, raw, f"{source} [{section}]")
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in _KEYS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = _parse_value(key, environ[name], f"environment {name}")
    return out


def resolve_config(args: argparse.Namespace, environ=None) -> ExperimentConfig:
    values = read_config(reference_config_text(), "reference.ini")
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(read_config(text, str(path)))
    values.update(env_overrides(environ))
    if args.full:
        values.update(runs=FULL_RUNS, steps=FULL_STEPS)
    for key in _KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _parse_value(key, flag, f"--{key.replace('_', '-')}") if isinstance(flag, str) else flag
    known = {f.name for f in fields(ExperimentConfig)}
    try:
        return ExperimentConfig(**{k: v for k, v in values.items() if k in known})
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def manifest(cfg: ExperimentConfig, argv: Sequence[str]) -> dict:
    return {
        "config": asdict(cfg),
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "units": UNITS,
        "argv": list(argv),
        "versions": {
            "sensorimotor": _version("artifact"),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args, argv) -> int:
    cfg = resolve_config(args)
    total = len(cfg.cells()) * cfg.runs
    logger.info("running %d runs (%d steps each) with %d worker(s)", total, cfg.steps, cfg.workers)
    if cfg.steps >= FULL_STEPS and cfg.runs >= FULL_RUNS:
        logger.warning("full-scale batch: expect many CPU-hours")
    start = time.monotonic()

    def progress(done, n, res):
        logger.info("[%d/%d] %s success=%.4f%s", done, n, res.run_id, res.success_rate,
                    "" if res.error is None else f" FAILED: {res.error}")

    results = run_batch(cfg, progress=progress)
    failed = [r for r in results if r.error is not None]
    paths = write_outputs(results, cfg.out, manifest(cfg, argv))
    logger.info("finished in %.1f s", time.monotonic() - start)
    for p in paths.values():
        print(p)
    if failed:
        print(f"{len(failed)} of {len(results)} runs failed; see log", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _print_values(values: dict, step: Optional[int] = None) -> None:
    prefix = "" if step is None else f"step={step} "
    for name in MEASURES:
        v = values.get(name)
        print(f"{prefix}{name} {'' if v is None else repr(float(v))}".rstrip())


def cmd_measures(args, argv) -> int:
    try:
        joint = LoopJoint.from_json(Path(args.joint_file).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load joint {args.joint_file}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rec = evaluate(joint, max_iter=MEASURE_MAX_ITER)
    if args.json:
        print(json.dumps(rec.values(), sort_keys=True))
    else:
        _print_values(rec.values())
    return EXIT_OK


def cmd_validate_track(args, argv) -> int:
    try:
        track = load_track(args.track)
    except (OSError, TrackError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    problems = validate_track(track)
    for p in problems:
        print(f"problem: {p}")
    if problems:
        return EXIT_RUNTIME
    print(f"ok: {track.name}: {len(track.outer)} outer and {len(track.inner)} inner vertices, "
          f"corridor width {corridor_width(track):.4f}")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        meta, entries = read_experience_log(Path(args.log_file).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {args.log_file}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    except LogFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    lwm = meta.get("variant", "").startswith("lwm")
    dump = Path(args.dump_joints) if args.dump_joints else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    for step, m in replay_entries(meta, entries):
        joint = build_measure_joints(m)
        values = evaluate(joint, max_iter=MEASURE_MAX_ITER).values()
        if not lwm:
            values["psi_synp"] = None
        if dump:
            (dump / f"joint_{step:06d}.json").write_text(joint.to_json() + "\n", encoding="utf-8")
        _print_values(values, step)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorimotor",
        description="Simulate embodied agents and measure information flows in their sensorimotor loop.",
        epilog=f"Environment overrides: {ENV_PREFIX}<KEY> for every config key, e.g. {ENV_PREFIX}SEED=3. "
               "Exit codes: 0 ok, 1 runtime failure, 2 configuration error.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    # lets -v appear after the subcommand too
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                        help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment batch")
    run.add_argument("--config", help="INI file overriding the reference config")
    run.add_argument("--seed", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--variants", help="comma-separated variant names")
    run.add_argument("--sensor-lengths", dest="sensor_lengths", help="comma-separated lengths in [0.5, 2]")
    run.add_argument("--horizons", help="comma-separated PWM sampling horizons or 'full'")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int)
    run.add_argument("--log-dir", dest="log_dir", help="write per-run experience logs here")
    run.add_argument("--full", action="store_true",
                     help=f"{FULL_RUNS} runs x {FULL_STEPS} steps per cell (many CPU-hours)")
    run.set_defaults(func=cmd_run)

    meas = sub.add_parser("measures", parents=[common], help="evaluate a serialized loop joint")
    meas.add_argument("joint_file")
    meas.add_argument("--json", action="store_true", help="print one JSON object")
    meas.set_defaults(func=cmd_measures)

    val = sub.add_parser("validate-track", parents=[common], help="check a track file (default: bundled track)")
    val.add_argument("track", nargs="?")
    val.set_defaults(func=cmd_validate_track)

    rep = sub.add_parser("replay", parents=[common], help="recompute measures from an experience log")
    rep.add_argument("log_file")
    rep.add_argument("--dump-joints", dest="dump_joints", help="also write each loop joint as JSON here")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level diagnostic
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
