"""Deterministic closed-loop world, scenario templates and episode logs."""

from .episode import EpisodeLog, StepRecord, loads_episode_log, run_episode
from .scenarios import (
    TEMPLATE_DEFAULTS,
    TEMPLATES,
    ScenarioFile,
    ScenarioSpec,
    build_route,
    desk_scenario_paths,
    load_scenario,
    load_scenario_file,
    mix_seed,
    parse_scenario_file,
    read_scenario_file,
)
from .world import (
    DT,
    EVENT_KINDS,
    TERMINATIONS,
    Actor,
    ActorView,
    InfractionEvent,
    LightView,
    Observation,
    ScriptedPath,
    SimSettings,
    SimWorld,
    TrafficLight,
    Trigger,
    dumps_world,
    world_to_dict,
)

__all__ = [
    "DT", "EVENT_KINDS", "TEMPLATES", "TEMPLATE_DEFAULTS", "TERMINATIONS", "Actor", "ActorView",
    "EpisodeLog", "InfractionEvent", "LightView", "Observation", "ScenarioFile", "ScenarioSpec",
    "ScriptedPath", "SimSettings", "SimWorld", "StepRecord", "TrafficLight", "Trigger",
    "build_route", "desk_scenario_paths", "dumps_world", "load_scenario", "load_scenario_file",
    "loads_episode_log", "mix_seed", "parse_scenario_file", "read_scenario_file", "run_episode",
    "world_to_dict",
]
