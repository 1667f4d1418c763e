"""Planner construction for benchmark cells, including log replay."""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError, LogParseError
from ..models import ControlInput
from ..planner_mpc import MpcPlanner
from ..planner_rule import RulePlanner
from ..sim import loads_episode_log


class ReplayPlanner:
    """Feeds back the controls recorded in an episode log, then brakes.

    Lets a planner that runs outside this package be scored: it writes an
    episode log with its controls and the benchmark replays them in the
    same world.
    """

    name = "external-replay"

    def __init__(self, controls, brake: float = -6.0):
        self.controls = [ControlInput(float(u[0]), float(u[1])) for u in controls]
        self.brake = ControlInput(0.0, brake)
        self.k = 0

    @classmethod
    def from_log(cls, path, brake: float = -6.0) -> "ReplayPlanner":
        path = Path(path)
        try:
            log = loads_episode_log(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read replay log {path}: {exc}") from exc
        except LogParseError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls([st.control for st in log.steps], brake)

    def plan(self, obs) -> ControlInput:
        u = self.controls[self.k] if self.k < len(self.controls) else self.brake
        self.k += 1
        return u

    __call__ = plan


def make_planner(name: str, config, vmap, route, route_id: str, dt: float):
    """Fresh planner instance for one cell."""
    if name == "rule":
        return RulePlanner(vmap, route, config.rule, dt)
    if name == "mpc":
        return MpcPlanner(vmap, route, config.mpc, dt)
    if name == "external-replay":
        return ReplayPlanner.from_log(Path(config.replay_logs) / f"{route_id}.jsonl",
                                      config.mpc.params.bicycle.accel_min)
    raise ConfigError(f"unknown planner {name!r}")
