"""OpenDRIVE subset parsing, lane-graph sampling and route extraction."""

from pathlib import Path

from .opendrive import RoadNetwork, parse_opendrive
from .route import Route, extract_route, lane_components, route_room
from .validate import MapCheck, RoadCheck, check_map, sample_reference_line
from .vectormap import (
    DEFAULT_SPEED_LIMIT,
    Lane,
    VectorMap,
    build_vector_map,
    dumps_vector_map,
    loads_vector_map,
)

DESK_MAP_DIR = Path(__file__).resolve().parent.parent / "data" / "maps"
DESK_MAPS = ("straight", "curve", "junction")


def desk_map_path(name: str) -> Path:
    return DESK_MAP_DIR / f"{name}.xodr"


def load_map(path, spacing: float = 0.5) -> VectorMap:
    """Parse an ``.xodr`` file and sample it into a :class:`VectorMap`."""
    text = Path(path).read_bytes()
    return build_vector_map(parse_opendrive(text), spacing)


__all__ = [
    "DEFAULT_SPEED_LIMIT", "DESK_MAPS", "Lane", "MapCheck", "RoadCheck", "RoadNetwork", "Route",
    "VectorMap", "build_vector_map", "check_map", "desk_map_path", "dumps_vector_map",
    "extract_route", "lane_components", "load_map", "loads_vector_map", "parse_opendrive",
    "route_room", "sample_reference_line",
]
