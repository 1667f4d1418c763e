"""Planner x scenario matrix execution, scoring and persisted outputs."""

from __future__ import annotations

import fnmatch
import functools
import hashlib
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import DeskbenchError
from ..mapkit import load_map
from ..score import PenaltyTable, decompose_and_aggregate, score_log
from ..sim import load_scenario_file, loads_episode_log, read_scenario_file, run_episode
from .config import BenchConfig
from .planners import make_planner
from .plot import plot_episode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cell:
    planner: str
    scenario: str  # scenario file path
    route_id: str


@dataclass
class CellOutcome:
    cell: Cell
    log_text: str | None = None
    error: str | None = None


@dataclass
class RunResult:
    report: object  # ScoreReport
    outcomes: list
    out: Path
    artifacts: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [o for o in self.outcomes if o.error is not None]


@functools.lru_cache(maxsize=16)
def _cached_map(path: str):
    return load_map(path)


def _map_path(sfile, config: BenchConfig) -> Path:
    return Path(config.maps[sfile.map]) if sfile.map in config.maps else sfile.map_path()


def _matches(sfile, pattern: str) -> bool:
    names = [sfile.id] + [s.template for s in sfile.scenarios]
    return any(fnmatch.fnmatchcase(n, pattern) for n in names)


def plan_cells(config: BenchConfig) -> list:
    """Cells in deterministic (planner, route id) order; ``config.filter`` matches ids or templates."""
    files = [read_scenario_file(p) for p in config.scenarios]
    seen = {}
    for sf in files:
        if sf.id in seen:
            raise DeskbenchError(f"duplicate route id {sf.id!r} in {seen[sf.id]} and {sf.path}")
        seen[sf.id] = sf.path
    chosen = sorted((sf for sf in files if _matches(sf, config.filter)), key=lambda sf: sf.id)
    return [Cell(p, str(sf.path), sf.id) for p in sorted(config.planners) for sf in chosen]


def run_cell(config: BenchConfig, cell: Cell) -> CellOutcome:
    """Load, run and serialize one cell; failures are captured, never raised."""
    try:
        sf = read_scenario_file(cell.scenario)
        vmap = _cached_map(str(_map_path(sf, config)))
        world = load_scenario_file(sf, config.sim, vmap, config.seed)
        planner = make_planner(cell.planner, config, vmap, world.route, sf.id, world.dt)
        header = {"route_id": sf.id, "map": sf.map, "planner": cell.planner, "seed": config.seed,
                  "scenario_file": Path(cell.scenario).name}
        episode = run_episode(world, planner, sf.max_steps, header)
        return CellOutcome(cell, log_text=episode.dumps())
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the matrix
        log.debug("cell %s failed:\n%s", cell, traceback.format_exc())
        return CellOutcome(cell, error=f"{type(exc).__name__}: {exc}")


def execute(config: BenchConfig, cells: list) -> list:
    """Run cells serially or in a process pool; results come back in cell order."""
    if config.jobs == 1 or len(cells) <= 1:
        return [run_cell(config, c) for c in cells]
    with ProcessPoolExecutor(max_workers=config.jobs) as pool:
        return list(pool.map(run_cell, [config] * len(cells), cells))


def score_texts(texts, table: PenaltyTable):
    """Score serialized logs into a report."""
    return decompose_and_aggregate([score_log(loads_episode_log(t), table) for t in texts])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, files, failures=()) -> Path:
    """``manifest.json`` listing every artifact under ``out`` with size and sha256."""
    entries = []
    for p in sorted(files, key=lambda q: q.relative_to(out).as_posix()):
        entries.append({"path": p.relative_to(out).as_posix(), "bytes": p.stat().st_size,
                        "sha256": _sha256(p)})
    doc = {"artifacts": entries,
           "failures": [{"planner": o.cell.planner, "route_id": o.cell.route_id, "error": o.error}
                        for o in failures]}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def run_benchmark(config: BenchConfig, resolved_config: dict | None = None) -> RunResult:
    """Run every cell, then persist logs, report, plots and a manifest under ``config.out``."""
    cells = plan_cells(config)
    outcomes = execute(config, cells)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    texts = []
    for o in outcomes:
        if o.log_text is None:
            continue
        p = out / "logs" / o.cell.planner / f"{o.cell.route_id}.jsonl"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(o.log_text)
        files.append(p)
        texts.append(o.log_text)
    report = score_texts(texts, config.penalties)
    for name, text in (("report.txt", report.to_text()), ("report.csv", report.to_csv())):
        p = out / name
        p.write_text(text)
        files.append(p)
    if resolved_config is not None:
        p = out / "config.yaml"
        p.write_text(yaml.safe_dump(resolved_config, sort_keys=True))
        files.append(p)
    if config.plots:
        for o in outcomes:
            if o.log_text is None:
                continue
            sf = read_scenario_file(o.cell.scenario)
            vmap = _cached_map(str(_map_path(sf, config)))
            files.append(plot_episode(loads_episode_log(o.log_text),
                                      out / "plots" / o.cell.planner / f"{o.cell.route_id}.svg", vmap))
    failures = [o for o in outcomes if o.error is not None]
    if failures:
        p = out / "failures.txt"
        p.write_text("".join(f"{o.cell.planner}\t{o.cell.route_id}\t{o.error}\n" for o in failures))
        files.append(p)
    write_manifest(out, files, failures)
    return RunResult(report, outcomes, out, files)
