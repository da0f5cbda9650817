import json

import pytest

from selfreg.cli import main


def _run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


SMALL = ["--agents", "7", "--plans", "2"]


def test_run_writes_outputs(tmp_path, capsys):
    code, out, _ = _run(["run", *SMALL, "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    summary = json.loads(out[out.index("{") :])
    assert "ub2" in summary and "response" in summary["ub2"]
    assert (tmp_path / "r" / "signals.csv").exists()


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"agents": 5, "plans": 2, "selection": "min-cost", "seed": 3}))
    code, _, _ = _run(["run", "--config", str(cfg), "--agents", "4", "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    written = json.loads((tmp_path / "r" / "config.json").read_text())
    assert written["agents"] == 4
    assert written["selection"] == "min-cost"
    assert written["seed"] == 3


def test_invalid_config_exits_2(capsys):
    code, _, err = _run(["run", "--agents", "0"], capsys)
    assert code == 2
    assert "error" in err


def test_unknown_scheme(capsys):
    code, _, err = _run(["run", "--scheme", "rotate:3"], capsys)
    assert code == 2


def test_diff(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("agent_id,selected_plan_index\n1,0\n2,1\n3,2\n4,3\n")
    b.write_text("agent_id,selected_plan_index\n1,0\n2,0\n3,2\n4,0\n")
    code, out, _ = _run(["diff", str(a), str(b)], capsys)
    assert code == 0
    assert float(out) == 0.5


def test_grid_and_correlate(tmp_path, capsys):
    out_dir = tmp_path / "g"
    code, out, _ = _run(
        [
            "grid",
            *SMALL,
            "--scheme",
            "shuffle",
            "swap:15",
            "--scenario",
            "ramp-down",
            "max-entropy",
            "--out",
            str(out_dir),
            "--grid-workers",
            "2",
        ],
        capsys,
    )
    assert code == 0
    assert out.startswith("12 runs, 0 failures")
    code, out, _ = _run(["correlate", str(out_dir / "summary.csv")], capsys)
    assert code == 0
    assert set(json.loads(out)) == {"aspects", "pooled"}


def test_grid_from_file(tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text(
        json.dumps(
            {
                "agents": 4,
                "plans": 2,
                "grid": {"schemes": ["shift:10"], "selections": ["min-cost"], "scenarios": ["ramp-down"], "replications": 2},
            }
        )
    )
    code, out, _ = _run(["grid", "--config", str(cfg), "--out", str(tmp_path / "g")], capsys)
    assert code == 0
    assert out.startswith("2 runs")


def test_entropy_scan(tmp_path, capsys):
    series = tmp_path / "s.csv"
    values = [1.0 + (t * 7919 % 13) for t in range(400)]
    values[100:150] = [2.0] * 50
    series.write_text("t,value\n" + "".join(f"{t},{v}\n" for t, v in enumerate(values)))
    code, out, _ = _run(["entropy-scan", str(series), "--horizon", "50", "--out", str(tmp_path / "e")], capsys)
    assert code == 0
    assert json.loads(out)["max_start"] == 100
    assert (tmp_path / "e" / "max_entropy_tis.csv").exists()


def test_entropy_scan_synthetic(capsys):
    code, out, _ = _run(["entropy-scan", "--length", "500", "--horizon", "48"], capsys)
    assert code == 0
    assert json.loads(out)["length"] == 500


def test_diversity(tmp_path, capsys):
    code, out, _ = _run(
        ["diversity", "--scheme", "shift:20", "--samples", "10", "--out", str(tmp_path / "d.csv")], capsys
    )
    assert code == 0
    assert "4960.00" in out
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "scheme,diversity" and len(lines) == 11


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
