"""Benchmark configuration: YAML file on top of packaged defaults."""

from __future__ import annotations

import copy
import dataclasses
import glob
import typing
from dataclasses import dataclass
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..mapkit import DESK_MAPS, desk_map_path
from ..planner_mpc import MpcPlannerConfig
from ..planner_rule import RulePlannerConfig
from ..score import PenaltyTable
from ..sim import SimSettings, desk_scenario_paths

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "data" / "default_config.yaml"
PLANNERS = ("rule", "mpc", "external-replay")
_TOP_KEYS = {"seed", "jobs", "out", "plots", "planners", "maps", "scenarios", "penalties", "sim",
             "planner"}


@dataclass(frozen=True)
class BenchConfig:
    scenarios: tuple  # scenario file paths, sorted
    maps: dict  # map name -> path
    planners: tuple
    rule: RulePlannerConfig
    mpc: MpcPlannerConfig
    replay_logs: Path | None
    penalties: PenaltyTable
    sim: SimSettings
    jobs: int = 1
    out: Path = Path("runs/deskbench")
    seed: int = 0
    plots: bool = True
    filter: str = "*"


# -- generic dataclass <-> mapping -------------------------------------------

def build_dataclass(cls, data, where: str):
    """Instantiate ``cls`` from a mapping, recursing into nested dataclass fields."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(hints[key], value, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _coerce(hint, value, where):
    if dataclasses.is_dataclass(hint):
        return build_dataclass(hint, value, where)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if hint is int and float(value) != int(value):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return hint(value)
    if hint is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return tuple(value)
    return value


def dataclass_to_dict(obj) -> dict:
    def plain(v):
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v
    return plain(dataclasses.asdict(obj))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# -- loading -----------------------------------------------------------------------

def _read_yaml(path: Path) -> dict:
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def raw_config(path=None) -> tuple:
    """Merged mapping (defaults + file) and the directory relative paths resolve against."""
    data = _read_yaml(DEFAULT_CONFIG_PATH)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        user = _read_yaml(path)
        unknown = sorted(set(user) - _TOP_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
        data = _merge(data, user)
        base = path.resolve().parent
    return data, base


def _resolve_maps(entries, base: Path) -> dict:
    maps = {}
    for entry in entries or []:
        if entry == "desk":
            for name in DESK_MAPS:
                maps[name] = desk_map_path(name)
            continue
        p = Path(entry)
        p = p if p.is_absolute() else base / p
        if not p.is_file():
            raise ConfigError(f"map file not found: {p}")
        maps[p.stem] = p
    return maps


def _resolve_scenarios(entries, base: Path) -> tuple:
    paths = set()
    for entry in entries or []:
        if entry == "desk":
            paths.update(desk_scenario_paths())
            continue
        pattern = entry if Path(entry).is_absolute() else str(base / entry)
        hits = [Path(p) for p in glob.glob(pattern)]
        if not hits:
            raise ConfigError(f"scenario path matches nothing: {entry}")
        paths.update(hits)
    if not paths:
        raise ConfigError("no scenario files configured")
    return tuple(sorted(paths, key=lambda p: str(p)))


def load_config(path=None, planners=None, seed=None, jobs=None, out=None,
                filter_glob=None) -> BenchConfig:
    """Load and validate a config; keyword arguments override file values."""
    data, base = raw_config(path)
    if planners is not None:
        data["planners"] = list(planners)
    for key, value in (("seed", seed), ("jobs", jobs)):
        if value is not None:
            data[key] = value
    names = data.get("planners") or []
    if isinstance(names, str):
        names = [names]
    for name in names:
        if name not in PLANNERS:
            raise ConfigError(f"unknown planner {name!r}; choose from {', '.join(PLANNERS)}")
    if not names:
        raise ConfigError("no planners selected")
    jobs_v = _coerce(int, data.get("jobs", 1), "jobs")
    if jobs_v < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs_v}")
    seed_v = _coerce(int, data.get("seed", 0), "seed")
    sim_data = dict(data.get("sim") or {})
    if "dt" in sim_data:
        raise ConfigError("sim.dt is fixed at 0.05 s and cannot be configured")
    sections = data.get("planner") or {}
    unknown = sorted(set(sections) - set(PLANNERS))
    if unknown:
        raise ConfigError(f"planner: unknown section(s) {', '.join(unknown)}")
    replay = sections.get("external-replay") or {}
    logs = replay.get("logs")
    replay_logs = None
    if logs is not None:
        replay_logs = Path(logs) if Path(logs).is_absolute() else base / logs
    if "external-replay" in names and (replay_logs is None or not replay_logs.is_dir()):
        raise ConfigError(f"external-replay needs planner.external-replay.logs to be a directory "
                          f"(got {logs!r})")
    penalties = data.get("penalties") or {}
    try:
        table = PenaltyTable(dict(penalties))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"penalties: {exc}") from exc
    if out is not None:
        out_p = Path(out).resolve()  # command-line paths are relative to the working directory
    else:
        out_p = Path(data.get("out", "runs/deskbench"))
        out_p = out_p if out_p.is_absolute() else base / out_p
    return BenchConfig(
        scenarios=_resolve_scenarios(data.get("scenarios"), base),
        maps=_resolve_maps(data.get("maps"), base),
        planners=tuple(names),
        rule=build_dataclass(RulePlannerConfig, sections.get("rule"), "planner.rule"),
        mpc=build_dataclass(MpcPlannerConfig, sections.get("mpc"), "planner.mpc"),
        replay_logs=replay_logs,
        penalties=table,
        sim=build_dataclass(SimSettings, sim_data, "sim"),
        jobs=jobs_v,
        out=out_p,
        seed=seed_v,
        plots=_coerce(bool, data.get("plots", True), "plots"),
        filter=filter_glob or "*",
    )


def default_config_text() -> str:
    """The packaged defaults with every planner and simulator parameter spelled out."""
    data, _ = raw_config(None)
    sections = data.get("planner") or {}
    resolved = {
        "seed": data["seed"],
        "jobs": data["jobs"],
        "out": data["out"],
        "plots": data["plots"],
        "planners": list(data["planners"]),
        "maps": list(data["maps"]),
        "scenarios": list(data["scenarios"]),
        "penalties": dict(data["penalties"]),
        "sim": {k: v for k, v in dataclass_to_dict(build_dataclass(SimSettings, data.get("sim"), "sim")).items()
                if k != "dt"},
        "planner": {
            "rule": dataclass_to_dict(build_dataclass(RulePlannerConfig, sections.get("rule"), "planner.rule")),
            "mpc": dataclass_to_dict(build_dataclass(MpcPlannerConfig, sections.get("mpc"), "planner.mpc")),
            "external-replay": dict(sections.get("external-replay") or {"logs": None}),
        },
    }
    return yaml.safe_dump(resolved, sort_keys=False, default_flow_style=False)


def config_to_dict(config: BenchConfig) -> dict:
    """The resolved settings of a run, for ``config.yaml`` in its output directory."""
    return {
        "seed": config.seed,
        "jobs": config.jobs,
        "plots": config.plots,
        "filter": config.filter,
        "planners": list(config.planners),
        "maps": {k: str(v) for k, v in sorted(config.maps.items())},
        "scenarios": [str(p) for p in config.scenarios],
        "penalties": dict(config.penalties.coefficients),
        "sim": {k: v for k, v in dataclass_to_dict(config.sim).items() if k != "dt"},
        "planner": {
            "rule": dataclass_to_dict(config.rule),
            "mpc": dataclass_to_dict(config.mpc),
            "external-replay": {"logs": None if config.replay_logs is None else str(config.replay_logs)},
        },
    }
