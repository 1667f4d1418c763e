"""Episode loop and the line-record episode log."""

from __future__ import annotations

import json
import logging
import math
import numbers
from dataclasses import dataclass, field

from ..errors import LogParseError
from ..models import ControlInput, EgoState
from .world import TERMINATIONS, InfractionEvent, SimWorld

log = logging.getLogger(__name__)

LOG_FORMAT = "deskbench.episode"
LOG_VERSION = 1


def _r(v, nd=6):
    return round(float(v), nd)


def _clean(v):
    """JSON-safe copy of a diagnostics value: floats rounded, non-finite to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, numbers.Integral):
        return int(v)
    f = float(v)
    return _r(f) if math.isfinite(f) else None


@dataclass(frozen=True)
class StepRecord:
    step: int
    ego: EgoState
    control: ControlInput
    distance: float
    actors: tuple = ()  # (id, x, y, heading, v) of present actors


@dataclass
class EpisodeLog:
    header: dict
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    extensions: list = field(default_factory=list)
    termination: str = "timeout"
    detail: str = ""
    distance: float = 0.0

    @property
    def route_length(self) -> float:
        return float(self.header["route_length"])

    def records(self) -> list:
        recs = [{"type": "header", "format": LOG_FORMAT, "version": LOG_VERSION, **self.header}]
        for st in self.steps:
            recs.append({
                "type": "step", "k": st.step, "ego": [_r(v) for v in st.ego],
                "u": [_r(v) for v in st.control], "d": _r(st.distance),
                "actors": [[a[0]] + [_r(v) for v in a[1:]] for a in st.actors],
            })
        for ev in self.events:
            recs.append({"type": "event", "kind": ev.kind, "k": ev.step,
                         "pos": [_r(v) for v in ev.position], "actor": ev.actor_id,
                         "s": _r(ev.s)})
        for ext in self.extensions:
            recs.append({"type": "ext", **_clean(ext)})
        recs.append({"type": "footer", "termination": self.termination, "detail": self.detail,
                     "distance": _r(self.distance), "steps": len(self.steps)})
        return recs

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def loads_episode_log(text: str) -> EpisodeLog:
    """Parse a log; any malformed or missing record raises with its line number."""
    lines = text.splitlines()
    if not lines:
        raise LogParseError("empty log", 1)
    result, footer = None, None
    for n, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
            kind = rec["type"]
            if footer is not None:
                raise LogParseError("record after footer", n)
            if n == 1:
                if kind != "header" or rec.get("format") != LOG_FORMAT:
                    raise LogParseError("first record must be an episode header", n)
                header = {k: v for k, v in rec.items() if k not in ("type", "format", "version")}
                result = EpisodeLog(header)
            elif kind == "step":
                actors = tuple((a[0], *a[1:]) for a in rec["actors"])
                result.steps.append(StepRecord(rec["k"], EgoState(*rec["ego"]),
                                               ControlInput(*rec["u"]), rec["d"], actors))
            elif kind == "event":
                result.events.append(InfractionEvent(rec["kind"], rec["k"], tuple(rec["pos"]),
                                                     rec["actor"], rec["s"]))
            elif kind == "ext":
                result.extensions.append({k: v for k, v in rec.items() if k != "type"})
            elif kind == "footer":
                if rec["termination"] not in TERMINATIONS:
                    raise LogParseError(f"unknown termination {rec['termination']!r}", n)
                if rec["steps"] != len(result.steps):
                    raise LogParseError(
                        f"footer declares {rec['steps']} steps, found {len(result.steps)}", n)
                footer = rec
            else:
                raise LogParseError(f"unknown record type {kind!r}", n)
        except LogParseError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise LogParseError(f"malformed record: {exc}", n) from exc
    if footer is None:
        raise LogParseError("log truncated: no footer record", len(lines) + 1)
    result.termination = footer["termination"]
    result.detail = footer["detail"]
    result.distance = footer["distance"]
    return result


def _plan(planner, obs):
    fn = getattr(planner, "plan", planner)
    return fn(obs)


def run_episode(world: SimWorld, planner, max_steps: int, header: dict | None = None) -> EpisodeLog:
    """Drive ``world`` with ``planner`` until it terminates or ``max_steps`` elapse.

    ``planner`` is a callable ``Observation -> ControlInput`` or an object with
    a ``plan`` method.  If it exposes ``last_diagnostics`` (a dict), that dict
    is written as an extension record for every step.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be > 0")
    meta = dict(header or {})
    meta.update({
        "dt": world.dt,
        "route_length": _r(world.route.total_length),
        "route": [[_r(v, 3) for v in p[:2]] for p in world.route.points],
        "ego_box": [world.ego_length, world.ego_width],
        "actors": [{"id": a.id, "kind": a.kind, "length": a.length, "width": a.width}
                   for a in world.actors.values()],
        "scenarios": [{"template": s.template, "anchor": _r(s.anchor),
                       "trigger_distance": _r(s.trigger_distance), "extent": _r(s.extent)}
                      for s in world.scenario_specs],
    })
    out = EpisodeLog(meta)
    obs = world.observe()
    for _ in range(max_steps):
        try:
            control = _plan(planner, obs)
            control = ControlInput(float(control[0]), float(control[1]))
        except Exception as exc:  # noqa: BLE001 - any planner failure ends the episode
            log.warning("planner failed at step %d: %s", world.clock, exc)
            out.termination = "planner-error"
            out.detail = f"{type(exc).__name__}: {exc}"
            break
        obs, _ = world.step(control)
        out.steps.append(StepRecord(
            world.clock, world.ego, control, world.progress,
            tuple((a.id, a.state.x, a.state.y, a.state.heading, a.state.v) for a in obs.actors)))
        diag = getattr(planner, "last_diagnostics", None)
        if diag:
            out.extensions.append({"k": world.clock, **diag})
        if world.terminated:
            out.termination = world.termination
            break
    else:
        out.termination = "timeout"
    out.events = list(world.events)
    out.distance = world.progress
    return out
