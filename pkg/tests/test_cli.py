import csv
import json

import pytest

from uav_see import cli

from conftest import DESK


def run_cli(*argv):
    return cli.main(list(argv))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def ftrj_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ftrj_run")
    code = run_cli("run", "--scenario", DESK, "--scheme", "ftrj",
                   "--out", str(out))
    return code, out


class TestRun:
    def test_outputs_and_exit_code(self, ftrj_run):
        code, out = ftrj_run
        assert code == 0
        for name in ("trace.csv", "solution.json", "summary.json",
                     "blocks.json"):
            assert (out / name).exists()
        blocks = read_json(out / "blocks.json")
        assert set(blocks) <= {"p1", "p2", "p3", "p4"}
        assert all(rows for rows in blocks.values())

    def test_summary_fields(self, ftrj_run):
        _, out = ftrj_run
        summary = read_json(out / "summary.json")
        for key in ("msee", "masr", "afpc_w", "afpcr", "iters", "runtime_s"):
            assert key in summary
        assert summary["msee"] > 0

    def test_trace_columns(self, ftrj_run):
        _, out = ftrj_run
        with open(out / "trace.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0].keys()) == list(cli.TRACE_COLUMNS)
        assert rows[0]["block_committed"] == "init"

    def test_solution_matches_summary(self, ftrj_run):
        _, out = ftrj_run
        solution = read_json(out / "solution.json")
        summary = read_json(out / "summary.json")
        assert solution["metrics"]["msee_mbit_per_joule"] == \
            pytest.approx(summary["msee"], rel=1e-12)
        assert solution["audit_passed"]

    def test_frozen_trajectory_solution_is_the_initializer(self, ftrj_run,
                                                           tmp_path):
        _, out = ftrj_run
        code = run_cli("run", "--scenario", DESK, "--scheme", "initial",
                       "--out", str(tmp_path))
        assert code == 0
        init_solution = read_json(tmp_path / "solution.json")
        solution = read_json(out / "solution.json")
        assert solution["plan"] == init_solution["plan"]

    def test_improves_over_initial(self, ftrj_run, tmp_path):
        _, out = ftrj_run
        run_cli("run", "--scenario", DESK, "--scheme", "initial",
                "--out", str(tmp_path))
        assert read_json(out / "summary.json")["msee"] > \
            read_json(tmp_path / "summary.json")["msee"]

    def test_malformed_scenario_exit_1_names_field(self, tmp_path):
        bad = tmp_path / "bad.json"
        doc = read_json(DESK)
        doc.pop("bandwidth_hz")
        bad.write_text(json.dumps(doc))
        out = tmp_path / "out"
        code = run_cli("run", "--scenario", str(bad), "--scheme", "ftrj",
                       "--out", str(out))
        assert code == 1
        err = read_json(out / "error.json")
        assert "bandwidth_hz" in err["message"]

    def test_unknown_scheme_exit_1(self, tmp_path):
        code = run_cli("run", "--scenario", DESK, "--scheme", "bogus",
                       "--out", str(tmp_path))
        assert code == 1
        assert (tmp_path / "error.json").exists()

    def test_byte_identical_reruns(self, ftrj_run, tmp_path):
        _, out = ftrj_run
        code = run_cli("run", "--scenario", DESK, "--scheme", "ftrj",
                       "--out", str(tmp_path))
        assert code == 0
        assert (tmp_path / "solution.json").read_bytes() == \
            (out / "solution.json").read_bytes()

    def test_seed_override_changes_layout(self, ftrj_run, tmp_path):
        _, out = ftrj_run
        code = run_cli("run", "--scenario", DESK, "--scheme", "ftrj",
                       "--out", str(tmp_path), "--seed", "12345")
        assert code == 0
        assert (tmp_path / "solution.json").read_bytes() != \
            (out / "solution.json").read_bytes()


class TestSweep:
    def test_single_value_sweep_reduces_to_run(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"axis": "absorption_af", "values": [0.005],
                                    "schemes": ["initial"]}))
        out = tmp_path / "sweep"
        code = run_cli("sweep", "--scenario", DESK, "--spec", str(spec),
                       "--out", str(out))
        assert code == 0
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        cell_dir = out / "absorption_af=0.005_initial"
        cell_summary = read_json(cell_dir / "summary.json")
        assert float(rows[0]["msee"]) == pytest.approx(cell_summary["msee"],
                                                       rel=1e-12)

    def test_cell_isolation_reproduces_row(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"axis": "flight_power_limit",
                                    "values": [200.0, 250.0],
                                    "schemes": ["initial"]}))
        out = tmp_path / "sweep"
        code = run_cli("sweep", "--scenario", DESK, "--spec", str(spec),
                       "--out", str(out))
        assert code == 0
        lone = cli.run_cell(DESK, "flight_power_limit", 250.0, "initial",
                            str(tmp_path / "lone"))
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            rows = {r["value"]: r for r in csv.DictReader(fh)}
        assert float(rows["250.0"]["msee"]) == pytest.approx(lone["msee"],
                                                             rel=1e-12)

    def test_parallel_jobs(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"axis": "absorption_af",
                                    "values": [0.005, 0.01],
                                    "schemes": ["initial"]}))
        out = tmp_path / "sweep"
        code = run_cli("sweep", "--scenario", DESK, "--spec", str(spec),
                       "--out", str(out), "--jobs", "2")
        assert code == 0
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            assert len(list(csv.DictReader(fh))) == 2

    def test_bad_axis_rejected(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"axis": "wat", "values": [1]}))
        code = run_cli("sweep", "--scenario", DESK, "--spec", str(spec),
                       "--out", str(tmp_path / "o"))
        assert code == 1

    def test_infeasible_cell_recorded_and_exit_2(self, tmp_path):
        # mission_time below the cyclic minimum: the cell fails, sweep carries on
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"axis": "mission_time",
                                    "values": [2.0, 10.0],
                                    "schemes": ["initial"]}))
        out = tmp_path / "sweep"
        code = run_cli("sweep", "--scenario", DESK, "--spec", str(spec),
                       "--out", str(out))
        assert code == 2
        with open(out / "sweep.csv", newline="", encoding="utf-8") as fh:
            rows = {r["value"]: r for r in csv.DictReader(fh)}
        assert rows["2.0"]["ok"] == "False"
        assert "InfeasibleMissionError" in rows["2.0"]["error"]
        assert rows["10.0"]["ok"] == "True"

    def test_avg_power_scale_split(self, desk_config):
        cfg = cli.apply_axis(desk_config, "avg_power_scale", 2.0)
        assert cfg.ue_avg_power == pytest.approx(0.2)
        assert cfg.jam_avg_power == pytest.approx(1.0)
        assert cfg.relay_avg_power == pytest.approx(0.8)
        assert cfg.ue_peak_power == pytest.approx(4 * cfg.ue_avg_power)

    def test_cell_seed_deterministic_and_distinct(self):
        a = cli.cell_seed(7, "absorption_af", 0.005, "msee_mi")
        b = cli.cell_seed(7, "absorption_af", 0.005, "msee_mi")
        c = cli.cell_seed(7, "absorption_af", 0.010, "msee_mi")
        assert a == b
        assert a != c

    def test_trend_checks(self):
        rows = [{"ok": True, "scheme": "msee_mi", "value": v, "msee": m,
                 "afpcr": r}
                for v, m, r in ((0.005, 50.0, 0.7), (0.010, 48.0, 0.7),
                                (0.015, 49.0, 0.7))]
        warn = cli.check_trends("absorption_af", rows)
        assert warn and "not non-increasing" in warn[0]
        rows[2]["msee"] = 47.0
        assert cli.check_trends("absorption_af", rows) == []
        rows2 = [{"ok": True, "scheme": "msee_seq", "value": v, "msee": 1.0,
                  "afpcr": r}
                 for v, r in ((150.0, 0.99), (200.0, 0.80), (250.0, 0.85))]
        warn = cli.check_trends("flight_power_limit", rows2)
        assert warn and "afpcr" in warn[0]
        # rate-only schemes are exempt from the efficiency trends
        rows3 = [dict(r, scheme="masr_seq") for r in rows2]
        assert cli.check_trends("flight_power_limit", rows3) == []


class TestCheck:
    def test_check_ok(self, capsys):
        assert run_cli("check", "--scenario", DESK) == 0
        assert "scenario ok" in capsys.readouterr().out

    def test_check_bad_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert run_cli("check", "--scenario", str(bad)) == 1
