"""Static top-down episode plots written as SVG."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_KIND_COLORS = {"vehicle": "tab:orange", "pedestrian": "tab:purple", "static": "tab:brown"}
_EVENT_COLORS = {"collision-pedestrian": "red", "collision-vehicle": "red", "collision-static": "red",
                 "red-light": "darkorange", "stop-sign": "darkorange",
                 "route-deviation": "magenta", "agent-blocked": "gray"}


def plot_episode(log, path, vmap=None, title: str | None = None) -> Path:
    """Draw lanes, route, ego and actor traces and infraction markers to ``path``.

    The SVG carries no timestamp and a fixed hash salt, so identical logs give
    identical files.
    """
    path = Path(path)
    h = log.header
    with plt.rc_context({"svg.hashsalt": "deskbench", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 6))
        if vmap is not None:
            for lid in sorted(vmap.lanes):
                pts = vmap.lanes[lid].points
                ax.plot(pts[:, 0], pts[:, 1], color="0.8", lw=0.6, zorder=1)
        route = h.get("route") or []
        if route:
            xs, ys = zip(*route)
            ax.plot(xs, ys, color="tab:blue", lw=3, alpha=0.3, zorder=2, label="route")
        if log.steps:
            ax.plot([st.ego[0] for st in log.steps], [st.ego[1] for st in log.steps],
                    color="black", lw=1.2, zorder=4, label="ego")
        kinds = {a["id"]: a["kind"] for a in h.get("actors", [])}
        traces = defaultdict(list)
        for st in log.steps:
            for a in st.actors:
                traces[a[0]].append((a[1], a[2]))
        for aid in sorted(traces):
            xy = traces[aid]
            color = _KIND_COLORS.get(kinds.get(aid), "tab:green")
            ax.plot([p[0] for p in xy], [p[1] for p in xy], color=color, lw=1.0, zorder=3)
            ax.plot(xy[-1][0], xy[-1][1], "o", color=color, ms=3, zorder=3)
        for ev in log.events:
            ax.plot(ev.position[0], ev.position[1], "x", color=_EVENT_COLORS.get(ev.kind, "red"),
                    ms=9, mew=2, zorder=5)
            ax.annotate(ev.kind, (ev.position[0], ev.position[1]), textcoords="offset points",
                        xytext=(5, 5), fontsize=7)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title is None:
            title = f"{h.get('route_id', '')} / {h.get('planner', '')}: {log.termination}"
        ax.set_title(title, fontsize=9)
        ax.legend(loc="best", fontsize=7)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
