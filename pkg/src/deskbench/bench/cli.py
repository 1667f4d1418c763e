"""``deskbench`` command line: run, score, replay, validate-map."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DeskbenchError, LogParseError
from ..mapkit import DESK_MAPS, build_vector_map, check_map, desk_map_path, load_map, parse_opendrive
from ..sim import loads_episode_log
from .config import config_to_dict, default_config_text, load_config
from .plot import plot_episode
from .runner import run_benchmark, score_texts

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2


def _planner_list(values):
    if not values:
        return None
    names = []
    for v in values:
        names.extend(n.strip() for n in v.split(",") if n.strip())
    return names


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="YAML config layered over the packaged defaults")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deskbench", description=__doc__)
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the fully resolved default config and exit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="run the planner x scenario matrix and score it")
    _common(run)
    run.add_argument("--planner", metavar="NAME", action="append",
                     help="rule, mpc or external-replay; repeat or comma-separate for several")
    run.add_argument("--seed", metavar="N", type=int, help="global seed")
    run.add_argument("--jobs", metavar="N", type=int, help="worker processes")
    run.add_argument("--filter", metavar="SCENARIO_GLOB",
                     help="only routes whose id or scenario template matches")
    run.add_argument("--no-plots", action="store_true", help="skip the SVG plots")

    score = sub.add_parser("score", help="re-score existing episode logs")
    _common(score)
    score.add_argument("logs", nargs="+", metavar="LOG", help="log files or directories of *.jsonl")

    replay = sub.add_parser("replay", help="draw a top-down SVG of one episode log")
    replay.add_argument("log", metavar="LOG")
    replay.add_argument("--out", metavar="FILE", help="SVG path (default: LOG with .svg suffix)")
    replay.add_argument("--map", metavar="PATH", help="map file; default from the log header")
    replay.add_argument("--config", metavar="PATH", help="config whose maps resolve the header map")

    vm = sub.add_parser("validate-map", help="parse maps and check sampled geometry")
    vm.add_argument("maps", nargs="+", metavar="MAP", help=".xodr files or desk map names")
    vm.add_argument("--tolerance", type=float, default=1e-3,
                    help="allowed relative road length error (default 1e-3)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config, planners=_planner_list(args.planner), seed=args.seed,
                         jobs=args.jobs, out=args.out, filter_glob=args.filter)
    if args.no_plots:
        config = dataclasses.replace(config, plots=False)
    result = run_benchmark(config, config_to_dict(config))
    sys.stdout.write(result.report.to_text())
    for o in result.failures:
        print(f"cell failed: {o.cell.planner} {o.cell.route_id}: {o.error}", file=sys.stderr)
    print(f"wrote {len(result.artifacts)} artifacts to {result.out}", file=sys.stderr)
    return EXIT_FAILURES if result.failures else EXIT_OK


def _log_files(entries) -> list:
    files = []
    for e in entries:
        p = Path(e)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.jsonl")))
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigError(f"no such log file or directory: {p}")
    if not files:
        raise ConfigError("no episode logs found")
    return files


def _cmd_score(args) -> int:
    config = load_config(args.config)
    texts = []
    for p in _log_files(args.logs):
        text = p.read_text()
        try:
            loads_episode_log(text)
        except LogParseError as exc:
            raise LogParseError(f"{p}: {exc}") from exc
        texts.append(text)
    report = score_texts(texts, config.penalties)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.to_text())
        (out / "report.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _replay_map(args, header):
    if args.map:
        return load_map(args.map)
    name = header.get("map")
    if args.config:
        maps = load_config(args.config).maps
        if name in maps:
            return load_map(maps[name])
    if name in DESK_MAPS:
        return load_map(desk_map_path(name))
    return None


def _cmd_replay(args) -> int:
    path = Path(args.log)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read log {path}: {exc}") from exc
    try:
        log = loads_episode_log(text)
    except LogParseError as exc:
        raise LogParseError(f"{path}: {exc}") from exc
    out = Path(args.out) if args.out else path.with_suffix(".svg")
    plot_episode(log, out, _replay_map(args, log.header))
    print(out)
    return EXIT_OK


def _cmd_validate_map(args) -> int:
    ok = True
    for entry in args.maps:
        path = desk_map_path(entry) if entry in DESK_MAPS else Path(entry)
        try:
            network = parse_opendrive(path.read_bytes())
            vmap = build_vector_map(network)
        except OSError as exc:
            raise ConfigError(f"cannot read map {path}: {exc}") from exc
        except DeskbenchError as exc:
            print(f"{path}: {exc}")
            ok = False
            continue
        check = check_map(network, vmap, tolerance=args.tolerance)
        print(f"{path}")
        print(check.summary())
        ok = ok and check.ok
    return EXIT_OK if ok else EXIT_FAILURES


COMMANDS = {"run": _cmd_run, "score": _cmd_score, "replay": _cmd_replay,
            "validate-map": _cmd_validate_map}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.print_default_config:
            sys.stdout.write(default_config_text())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"deskbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeskbenchError as exc:
        print(f"deskbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
