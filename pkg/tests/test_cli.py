import json
from pathlib import Path

import pytest

from dobc.cli import (
    EXIT_GAP,
    EXIT_INFEASIBLE,
    EXIT_OPTIMAL,
    EXIT_TIME,
    main,
)


def run(argv):
    return main([str(a) for a in argv])


def test_generate_grid_counts(tmp_path):
    out = tmp_path / "grid"
    code = run(["generate", "-n", "5,10", "-m", "5", "-p", "2,5",
                "--rho", "small", "--reps", "5", "--out", out])
    assert code == EXIT_OPTIMAL
    files = list(out.glob("dobc_*.json"))
    assert len(files) == 2 * 1 * 2 * 1 * 5
    names = {f.name for f in files}
    assert any(n.startswith("dobc_n5_m5_p2_rhosmall_") for n in names)


def test_generate_rejects_p_above_m(tmp_path, capsys):
    code = run(["generate", "-n", "10", "-m", "5", "-p", "10",
                "--out", tmp_path / "x"])
    assert code == 1
    assert "exceeds" in capsys.readouterr().err


def test_generate_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["generate", "-n", "3", "-m", "2", "-p", "1",
                    "--seed", "7", "--out", out]) == EXIT_OPTIMAL
    fa = sorted(a.glob("*.json"))
    fb = sorted(b.glob("*.json"))
    assert [f.name for f in fa] == [f.name for f in fb]
    for x, y in zip(fa, fb):
        assert x.read_bytes() == y.read_bytes()


@pytest.fixture
def tiny_dir(tmp_path):
    out = tmp_path / "tiny"
    assert run(["generate", "-n", "2,3", "-m", "1", "-p", "1", "--alpha", "1",
                "--rho", "medium", "--reps", "1", "--seed", "3",
                "--out", out]) == EXIT_OPTIMAL
    return out


def test_solve_writes_solution_and_exit_code(tiny_dir, capsys):
    instance = sorted(tiny_dir.glob("*.json"))[0]
    code = run(["solve", instance, "--kp", "2", "--gap", "0.0001",
                "--json-log"])
    assert code == EXIT_OPTIMAL
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    events = {l["event"] for l in lines}
    assert {"solve", "result", "validation", "written"} <= events
    result = next(l for l in lines if l["event"] == "result")
    assert result["status"] == "optimal"
    assert result["cuts_phase1"] >= 0 and result["nodes"] >= 1
    validation = next(l for l in lines if l["event"] == "validation")
    assert validation["ok"] is True
    sol_path = Path(next(l for l in lines if l["event"] == "written")["path"])
    assert sol_path.exists()
    doc = json.loads(sol_path.read_text())
    assert doc["walk"]


def test_solve_infeasible_exit(tmp_path):
    from dobc.instance import load_instance, min_required_visits
    out = tmp_path / "scarce"
    # a capacity at the lowest demand quantile cannot cover the peak in one go
    assert run(["generate", "-n", "3", "-m", "1", "-p", "1", "--rho", "q5",
                "--seed", "12", "--out", out]) == EXIT_OPTIMAL
    instance = sorted(out.glob("*.json"))[0]
    assert min_required_visits(load_instance(instance)) > 1
    code = run(["solve", instance, "--kp", "1"])
    assert code == EXIT_INFEASIBLE


def test_solve_time_limit_exit(tmp_path):
    out = tmp_path / "big"
    assert run(["generate", "-n", "20", "-m", "5", "-p", "2", "--alpha", "1",
                "--out", out, "--seed", "1"]) == EXIT_OPTIMAL
    instance = sorted(out.glob("*.json"))[0]
    code = run(["solve", instance, "--kp", "1", "--timelimit", "1"])
    assert code == EXIT_TIME


def test_bench_produces_stable_csv(tiny_dir):
    from dobc.instance import load_instance, min_required_visits
    code = run(["bench", tiny_dir, "--variants", "inf-1-P;inf-2-P",
                "--gap", "0.001"])
    assert code == EXIT_OPTIMAL
    csv_path = tiny_dir / "bench.csv"
    lines = csv_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:9] == ["instance", "variant", "status", "objective", "gap",
                          "time", "nodes", "cuts_p1", "cuts_p2"]
    detail = [l.split(",") for l in lines[1:] if not l.startswith("agg:")]
    aggregates = [l.split(",") for l in lines[1:] if l.startswith("agg:")]
    assert len(detail) == 2 * 2       # two instances, two variants
    assert len(aggregates) == 2       # one per (n, m, p) cell
    # statuses agree with the visit-count feasibility rule per instance
    status_idx = header.index("status")
    for row in detail:
        inst = load_instance(tiny_dir / row[0])
        k = 1 if row[1] == "inf-1-P" else 2
        expect = "infeasible" if k < min_required_visits(inst) else "optimal"
        assert row[status_idx] == expect, row
    # aggregate percentages recompute from the detail rows
    for agg in aggregates:
        cell = agg[0].removeprefix("agg:")
        group = [r for r in detail if r[0].startswith("dobc_" + cell)]
        n_inf = sum(1 for r in group if r[status_idx] == "infeasible")
        want = f"{100.0 * n_inf / len(group):.1f}"
        assert agg[header.index("pct_inf")] == want


def test_bench_oracle_check_mode(tiny_dir):
    code = run(["bench", tiny_dir, "--variants", "inf-2-P", "--gap", "0.000001",
                "--oracle-check", "--csv", tiny_dir / "oracle.csv"])
    assert code == EXIT_OPTIMAL
    lines = (tiny_dir / "oracle.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    idx = header.index("oracle_match")
    detail = [l.split(",") for l in lines[1:] if not l.startswith("agg:")]
    assert detail and all(row[idx] == "true" for row in detail)
