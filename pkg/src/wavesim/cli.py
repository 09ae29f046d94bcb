"""wave-sim command line: run, sweep and validate scenario configs.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
Flag precedence: command-line flags > config file > built-in defaults.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from . import __version__
from .engine import SimulationError
from .metrics import SERIES_CATALOG
from .scenario import ConfigError, ScenarioConfig, load_config, run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _apply_flags(config: ScenarioConfig, args) -> ScenarioConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    if args.out is not None:
        overrides["out_dir"] = args.out
    return replace(config, **overrides) if overrides else config


def _summary_table(result) -> str:
    lines = [f"{'series':<24} {'count':>7} {'mean':>14} unit"]
    recorder = result.recorder
    for series, (shape, unit) in SERIES_CATALOG.items():
        if shape == "sample":
            rows = recorder.samples[series]
        else:
            rows = recorder.events[series]
        if shape == "sample":
            count = len(rows)
            mean = (sum(v for _, v in rows) / count) if count else None
        else:
            total = sum(w for _, w in rows)
            count = len(rows)
            mean = total / result.config.duration_s if count else None
        mean_s = f"{mean:.6g}" if mean is not None else "-"
        lines.append(f"{series:<24} {count:>7} {mean_s:>14} {unit}")
    return "\n".join(lines)


def _cmd_run(args) -> int:
    config = _apply_flags(load_config(args.config), args)
    result = run(config)
    print(f"scenario={config.scenario} seed={config.seed} "
          f"duration={config.duration_s}s events={result.events_processed}")
    print(_summary_table(result))
    print(f"wrote {len(result.out_paths)} files to {config.out_dir}")
    return EXIT_OK


def _parse_sweep_param(text: str) -> tuple[str, list[str]]:
    if "=" not in text:
        raise ConfigError("--param expects key=v1,v2,...")
    key, _, values = text.partition("=")
    items = [v for v in values.split(",") if v != ""]
    if not key or not items:
        raise ConfigError("--param expects key=v1,v2,...")
    return key, items


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _override_key(raw: dict, dotted: str, value) -> dict:
    parts = dotted.split(".")
    cursor = raw
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
        if not isinstance(cursor, dict):
            raise ConfigError(f"cannot override {dotted!r}: {part!r} is not a block")
    cursor[parts[-1]] = value
    return raw


def _sweep_worker(payload):
    from .scenario import config_from_dict
    raw, out_dir = payload
    raw = dict(raw)
    raw["out_dir"] = out_dir
    config = config_from_dict(raw)
    result = run(config)
    return out_dir, result.events_processed


def _cmd_sweep(args) -> int:
    config = _apply_flags(load_config(args.config), args)
    key, values = _parse_sweep_param(args.param)
    base = config.to_dict()
    jobs = []
    for value in values:
        raw = json.loads(json.dumps(base))  # deep copy
        _override_key(raw, key, _coerce(value))
        out_dir = os.path.join(config.out_dir, f"{key.replace('.', '_')}={value}")
        jobs.append((raw, out_dir))
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1:
        results = [_sweep_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    for out_dir, events in results:
        print(f"{out_dir}: {events} events")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"OK: scenario={config.scenario} seed={config.seed} "
          f"duration={config.duration_s}s nodes="
          f"{len(config.nodes) if config.scenario == 'custom' else 'builtin'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wave-sim",
        description="Deterministic IEEE 802.11p/WAVE vehicular network simulator")
    parser.add_argument("--version", action="version",
                        version=f"wave-sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--duration", type=float, help="seconds")
    p_run.add_argument("--out")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one scenario per parameter value")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, help="key=v1,v2,...")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--duration", type=float)
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(fn=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
