import hashlib
import json

import pytest
import yaml

from deskbench.bench import load_config, plan_cells
from deskbench.bench.cli import main
from deskbench.mapkit import desk_map_path, extract_route, load_map
from deskbench.models import ControlInput, EgoState
from deskbench.sim import Actor, SimWorld, loads_episode_log, run_episode
from xodr import document, lane, line, road

LANE = "1:0:-1"


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def empty_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "a"
    code = main(["run", "--planner", "rule", "--filter", "straight_empty", "--out", str(out)])
    return code, out


def test_print_default_config(capsys):
    code, out, _ = run(["--print-default-config"], capsys)
    assert code == 0
    data = yaml.safe_load(out)
    assert data["planners"] == ["rule", "mpc"]
    assert data["planner"]["rule"]["speed_cap_ratio"] == 0.72
    assert data["planner"]["mpc"]["params"]["horizon"] == 20


def test_no_command(capsys):
    code, _, err = run([], capsys)
    assert code == 2 and "usage" in err


class TestRun:
    def test_outputs(self, empty_run):
        code, out = empty_run
        assert code == 0
        log = loads_episode_log((out / "logs" / "rule" / "straight_empty.jsonl").read_text())
        assert log.termination == "completed" and log.events == []
        assert (out / "plots" / "rule" / "straight_empty.svg").is_file()
        assert "straight_empty" in (out / "report.txt").read_text()
        assert not (out / "failures.txt").exists()

    def test_manifest_hashes(self, empty_run):
        _, out = empty_run
        doc = json.loads((out / "manifest.json").read_text())
        paths = {e["path"] for e in doc["artifacts"]}
        assert {"logs/rule/straight_empty.jsonl", "report.txt", "report.csv", "config.yaml"} <= paths
        for e in doc["artifacts"]:
            data = (out / e["path"]).read_bytes()
            assert e["sha256"] == hashlib.sha256(data).hexdigest()
            assert e["bytes"] == len(data)
        assert doc["failures"] == []

    def test_rerun_identical(self, empty_run, tmp_path, capsys):
        _, first = empty_run
        second = tmp_path / "b"
        code, _, _ = run(["run", "--planner", "rule", "--filter", "straight_empty", "--out", str(second)],
                         capsys)
        assert code == 0
        for name in ("logs/rule/straight_empty.jsonl", "report.txt", "report.csv",
                     "plots/rule/straight_empty.svg", "manifest.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_jobs_independent(self, tmp_path, capsys):
        outs = []
        for jobs in (1, 4):
            out = tmp_path / f"j{jobs}"
            code, _, _ = run(["run", "--planner", "rule", "--filter", "straight_[ce]*", "--jobs", str(jobs),
                              "--no-plots", "--out", str(out)], capsys)
            assert code == 0
            outs.append(out)
        logs = sorted(p.name for p in (outs[0] / "logs" / "rule").iterdir())
        assert logs == ["straight_construction.jsonl", "straight_crossing.jsonl", "straight_empty.jsonl"]
        for name in ["report.txt", "report.csv"] + [f"logs/rule/{n}" for n in logs]:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_filter_by_template(self):
        config = load_config(planners=["rule"], filter_glob="DynamicObjectCrossing")
        assert [c.route_id for c in plan_cells(config)] == ["straight_crossing"]


class TestReplayPlanner:
    def test_reproduces_logged_run(self, empty_run, tmp_path, capsys):
        _, first = empty_run
        cfg = tmp_path / "replay.yaml"
        cfg.write_text(yaml.safe_dump({"planner": {"external-replay": {"logs": str(first / "logs" / "rule")}}}))
        out = tmp_path / "r"
        code, _, _ = run(["run", "--config", str(cfg), "--planner", "external-replay",
                          "--filter", "straight_empty", "--no-plots", "--out", str(out)], capsys)
        assert code == 0
        a = loads_episode_log((first / "logs" / "rule" / "straight_empty.jsonl").read_text())
        b = loads_episode_log((out / "logs" / "external-replay" / "straight_empty.jsonl").read_text())
        # logged controls are rounded, so the replayed trace matches closely, not bit for bit
        assert len(a.steps) == len(b.steps)
        drift = max(abs(p - q) for sa, sb in zip(a.steps, b.steps) for p, q in zip(sa.ego, sb.ego))
        assert drift <= 1e-3
        assert b.termination == a.termination and b.events == a.events

    def test_missing_log_is_cell_failure(self, empty_run, tmp_path, capsys):
        _, first = empty_run
        cfg = tmp_path / "replay.yaml"
        cfg.write_text(yaml.safe_dump({"planner": {"external-replay": {"logs": str(first / "logs" / "rule")}}}))
        out = tmp_path / "r"
        code, _, err = run(["run", "--config", str(cfg), "--planner", "external-replay",
                            "--filter", "straight_[ep]*", "--no-plots", "--out", str(out)], capsys)
        assert code == 1
        assert "straight_parked" in err
        assert "straight_parked" in (out / "failures.txt").read_text()
        assert (out / "logs" / "external-replay" / "straight_empty.jsonl").is_file()
        doc = json.loads((out / "manifest.json").read_text())
        assert [f["route_id"] for f in doc["failures"]] == ["straight_parked", "straight_parking_exit"]


class TestConfigErrors:
    @pytest.mark.parametrize("text,needle", [
        ("jobs: 0\n", "jobs"),
        ("planners: [fancy]\n", "fancy"),
        ("penalties: {red-light: 1.5}\n", "red-light"),
        ("sim: {dt: 0.1}\n", "dt"),
        ("planner: {rule: {no_such_knob: 1}}\n", "no_such_knob"),
        ("scenarios: [nowhere/*.yaml]\n", "nowhere"),
        ("seed: [1\n", ""),
    ])
    def test_bad_config_exits_2(self, tmp_path, capsys, text, needle):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(text)
        code, _, err = run(["run", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 2
        assert "config error" in err and needle in err

    def test_replay_without_logs(self, tmp_path, capsys):
        code, _, err = run(["run", "--planner", "external-replay", "--out", str(tmp_path)], capsys)
        assert code == 2 and "external-replay" in err


class TestScore:
    def test_matches_run_report(self, empty_run, tmp_path, capsys):
        _, first = empty_run
        code, out, _ = run(["score", str(first / "logs"), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert out == (first / "report.txt").read_text()
        assert (tmp_path / "report.csv").read_text() == (first / "report.csv").read_text()

    def test_corrupt_log(self, empty_run, tmp_path, capsys):
        _, first = empty_run
        lines = (first / "logs" / "rule" / "straight_empty.jsonl").read_text().splitlines(keepends=True)
        bad = tmp_path / "bad.jsonl"
        bad.write_text("".join(lines[:7]) + lines[7][:15])
        code, _, err = run(["score", str(bad)], capsys)
        assert code == 2 and "line 8" in err and "bad.jsonl" in err

    def test_missing_path(self, tmp_path, capsys):
        code, _, err = run(["score", str(tmp_path / "none")], capsys)
        assert code == 2 and "none" in err


@pytest.fixture(scope="module")
def collision_log(tmp_path_factory):
    vmap = load_map(desk_map_path("straight"))
    route = extract_route(vmap, (LANE, 10.0), (LANE, 210.0))
    x, y, _ = route.pose_at(20.0)
    ped = Actor("ped", "pedestrian", "static", EgoState(x, y, 0.0, 0.0), 0.5, 0.5)
    x0, y0, h0 = route.points[0]
    world = SimWorld(vmap, route, EgoState(x0, y0, h0, 10.0), [ped], [])
    log = run_episode(world, lambda obs: ControlInput(0.0, 0.0), 60, {"route_id": "hit", "map": "straight"})
    path = tmp_path_factory.mktemp("logs") / "hit.jsonl"
    path.write_text(log.dumps())
    return path


class TestReplay:
    def test_svg_with_event_marker(self, collision_log, tmp_path, capsys):
        svg = tmp_path / "hit.svg"
        code, out, _ = run(["replay", str(collision_log), "--out", str(svg)], capsys)
        assert code == 0 and out.strip() == str(svg)
        text = svg.read_text()
        assert text.startswith("<?xml") and "collision-pedestrian" in text

    def test_default_output_next_to_log(self, collision_log, capsys):
        code, _, _ = run(["replay", str(collision_log)], capsys)
        assert code == 0 and collision_log.with_suffix(".svg").is_file()

    def test_truncated_log_names_line(self, collision_log, tmp_path, capsys):
        lines = collision_log.read_text().splitlines(keepends=True)
        cut = tmp_path / "cut.jsonl"
        cut.write_text("".join(lines[:12]))
        code, _, err = run(["replay", str(cut)], capsys)
        assert code == 2 and "line 13" in err


class TestValidateMap:
    def test_desk_maps(self, capsys):
        code, out, _ = run(["validate-map", "straight", "curve", "junction"], capsys)
        assert code == 0 and "junction.xodr" in out

    def test_tolerance_failure(self, capsys):
        code, _, _ = run(["validate-map", "junction", "--tolerance", "1e-9"], capsys)
        assert code == 1

    def test_unparseable(self, tmp_path, capsys):
        bad = tmp_path / "bad.xodr"
        bad.write_text("<OpenDRIVE><road")
        code, out, _ = run(["validate-map", str(bad)], capsys)
        assert code == 1 and "bad.xodr" in out

    def test_custom_map(self, tmp_path, capsys):
        good = tmp_path / "one.xodr"
        good.write_text(document(road(1, 80, line(0, 0, 0, 80), right=[lane(-1)])))
        code, _, _ = run(["validate-map", str(good)], capsys)
        assert code == 0

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["validate-map", str(tmp_path / "none.xodr")], capsys)
        assert code == 2 and "none.xodr" in err
