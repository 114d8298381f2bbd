"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from searchtta.bench import SuiteConfig, episode_from_dict, format_table, rmse, run_episode, run_suite
from searchtta.errors import FormatError, ParameterError, SearchError
from searchtta.priors import ScenarioParams, load_params, load_score_map, map_quality, save_score_map, synth_scenario
from searchtta.world import load_world, save_world

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def cmd_run_episode(args) -> int:
    doc = _read_json(args.config)
    try:
        cfg = episode_from_dict(doc, base_dir=Path(args.config).parent)
    except (ParameterError, FormatError, KeyError, TypeError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    result = run_episode(cfg)
    row = result.to_row()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episode.json").write_text(json.dumps(row, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        save_score_map(result.final_map, out / "final_map.csv")
    summary = {k: row[k] for k in ("id", "found_fraction", "targets_found", "targets_total", "steps_to_first", "rmse_at", "tta_event_steps")}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_run_suite(args) -> int:
    doc = _read_json(args.suite)
    try:
        suite = SuiteConfig.from_dict(doc)
        # validate every template once before spending time on episodes
        for template in suite.templates:
            episode_from_dict(template, base_dir=Path(args.suite).parent, seed=suite.seeds[0])
    except (ParameterError, FormatError, KeyError, TypeError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    report = run_suite(suite, args.out, jobs=args.jobs, base_dir=Path(args.suite).parent)
    print(format_table(report["table"]))
    return EXIT_OK


def cmd_gen_scenarios(args) -> int:
    try:
        params = load_params(args.params)
    except (ParameterError, FormatError, TypeError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        p = ScenarioParams.from_dict(dict(params.to_dict(), seed=params.seed + i))
        world, base, features = synth_scenario(p)
        stem = f"scenario_{p.seed:05d}"
        save_world(world, out / f"{stem}_world.json")
        save_score_map(base, out / f"{stem}_base.csv")
        np.savetxt(out / f"{stem}_features.csv", features.vectors, delimiter=",", fmt="%.17g")
        (out / f"{stem}_params.json").write_text(json.dumps(p.to_dict()) + "\n", encoding="utf-8")
        episode = {
            "name": stem,
            "world": f"{stem}_world.json",
            "base_map": f"{stem}_base.csv",
            "features": f"{stem}_features.csv",
            "seed": p.seed,
        }
        (out / f"{stem}_episode.json").write_text(json.dumps(episode, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.count} scenarios to {out}")
    return EXIT_OK


def cmd_inspect_map(args) -> int:
    try:
        score_map = load_score_map(args.map)
        world = load_world(args.world)
    except (FormatError, ParameterError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from None
    v = score_map.values
    stats = {
        "n": score_map.n,
        "quality": map_quality(score_map, world),
        "min": float(v.min()),
        "max": float(v.max()),
        "mean": float(v.mean()),
        "targets": world.total_targets,
        "target_cells": len(world.targets),
        "rmse_vs_ground_truth": rmse(score_map, world.gt_score_map),
    }
    for key, value in stats.items():
        print(f"{key:22s} {value:.6g}" if isinstance(value, float) else f"{key:22s} {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="searchtta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-episode", help="run one search episode")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run_episode)

    p = sub.add_parser("run-suite", help="run paired TTA / no-TTA episodes over a seed range")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run_suite)

    p = sub.add_parser("gen-scenarios", help="write synthetic worlds, prior maps and features")
    p.add_argument("--params", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenarios)

    p = sub.add_parser("inspect-map", help="score a map against a world")
    p.add_argument("--map", required=True)
    p.add_argument("--world", required=True)
    p.set_defaults(func=cmd_inspect_map)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
