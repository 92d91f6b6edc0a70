"""Command line interface: generate instances, solve, validate, benchmark.

Exit codes for ``solve``: 0 optimal, 2 gap target reached, 3 time limit,
4 infeasible, 1 usage or internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .instance import (
    CAPACITY_CLASSES,
    GeneratorConfig,
    InstanceError,
    ProblemVariant,
    generate_instance,
    load_instance,
    min_required_visits,
    save_instance,
)
from .milp import MIP_GAP_REACHED, MIP_INFEASIBLE, MIP_OPTIMAL, MIP_TIME_LIMIT, SolveOptions
from .oracle import solve_full_enumeration
from .solution import export, validate
from .solver import solve_dobc

EXIT_OPTIMAL = 0
EXIT_ERROR = 1
EXIT_GAP = 2
EXIT_TIME = 3
EXIT_INFEASIBLE = 4

_STATUS_EXIT = {
    MIP_OPTIMAL: EXIT_OPTIMAL,
    MIP_GAP_REACHED: EXIT_GAP,
    MIP_TIME_LIMIT: EXIT_TIME,
    MIP_INFEASIBLE: EXIT_INFEASIBLE,
}


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _rho_list(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok in CAPACITY_CLASSES:
            out.append(tok)
        elif tok.startswith("q"):
            out.append(float(tok[1:]) / 100.0)
        else:
            out.append(float(tok))
    return out


def _cell_seed(base: int, n: int, m: int, p: int, rho, rep: int) -> int:
    text = f"{base}|{n}|{m}|{p}|{rho}|{rep}"
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _rho_tag(rho) -> str:
    if isinstance(rho, str):
        return rho
    return f"q{rho:g}".replace(".", "_")


def cmd_generate(args) -> int:
    base_seed = args.seed
    if os.environ.get("DOBC_SEED"):
        base_seed = int(os.environ["DOBC_SEED"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lo, hi = (int(t) for t in args.demand_range.split(","))
    written = []
    for n in args.n:
        for m in args.m:
            if m > n:
                print(f"error: m={m} exceeds n={n}", file=sys.stderr)
                return EXIT_ERROR
            for p in args.p:
                if p > m:
                    print(f"error: p={p} exceeds m={m}", file=sys.stderr)
                    return EXIT_ERROR
                for rho in args.rho:
                    for rep in range(args.reps):
                        seed = _cell_seed(base_seed, n, m, p, rho, rep)
                        cfg = GeneratorConfig(
                            n=n, m=m, p=p, capacity_class=rho,
                            alpha=args.alpha, demand_range=(lo, hi),
                            coordinate_box=args.box, seed=seed)
                        inst = generate_instance(cfg)
                        name = (f"dobc_n{n}_m{m}_p{p}_rho{_rho_tag(rho)}"
                                f"_s{seed}.json")
                        save_instance(inst, out_dir / name)
                        written.append(name)
    print(f"wrote {len(written)} instance(s) to {out_dir}")
    return EXIT_OPTIMAL


def _variant_from_args(args) -> ProblemVariant:
    kd = None if args.kd == "inf" else int(args.kd)
    kp = args.kp if args.kp == "per-node" else int(args.kp)
    return ProblemVariant(dropoff_visit_limit=kd, pickup_visit_limit=kp,
                          topology=args.topology)


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    if args.alpha is not None:
        from dataclasses import replace
        instance = replace(instance, alpha=args.alpha)
    variant = _variant_from_args(args)
    options = SolveOptions(gap=args.gap, time_limit=args.timelimit,
                           deterministic=args.deterministic)

    def log(record: dict):
        if args.json_log:
            print(json.dumps(record))
        else:
            print(" ".join(f"{k}={v}" for k, v in record.items()))

    log({"event": "solve", "instance": str(args.instance),
         "variant": variant.label(),
         "min_required_visits": min_required_visits(instance)})
    res = solve_dobc(instance, variant, options)
    log({"event": "result", "status": res.status,
         "objective": res.objective, "bound": res.bound,
         "gap": None if res.objective is None else round(res.gap, 6),
         "nodes": res.node_count, "cuts_phase1": res.cuts_phase1,
         "cuts_phase2": res.cuts_phase2,
         "wall_time": round(res.wall_time, 3)})

    if res.solution is not None:
        report = validate(instance, variant, res.solution, res.walk)
        log({"event": "validation", "ok": report.ok,
             "violations": [f"{t}: {msg}" for t, msg in report.violations]})
        out = Path(args.output) if args.output else Path(args.instance).with_suffix(".solution.json")
        out.write_text(export(res.solution, res.walk, "json"))
        log({"event": "written", "path": str(out)})
        if args.dot:
            Path(args.dot).write_text(export(res.solution, res.walk, "dot",
                                             instance=instance))
    return _STATUS_EXIT.get(res.status, EXIT_ERROR)


BENCH_COLUMNS = ["instance", "variant", "status", "objective", "gap", "time",
                 "nodes", "cuts_p1", "cuts_p2", "oracle_match",
                 "pct_inf", "pct_tl", "mean_gap"]


def _bench_one(task):
    path, variant_text, gap, timelimit, oracle_check = task
    instance = load_instance(path)
    variant = ProblemVariant.parse(variant_text)
    options = SolveOptions(gap=gap, time_limit=timelimit)
    row = {"instance": Path(path).name, "variant": variant_text}
    try:
        res = solve_dobc(instance, variant, options)
        row.update(status=res.status,
                   objective="" if res.objective is None else f"{res.objective:.6f}",
                   gap="" if res.objective is None else f"{res.gap:.6f}",
                   time=f"{res.wall_time:.3f}", nodes=res.node_count,
                   cuts_p1=res.cuts_phase1, cuts_p2=res.cuts_phase2)
        if oracle_check:
            ora = solve_full_enumeration(instance, variant)
            if res.objective is None or ora.objective is None:
                match = res.feasible == ora.feasible
            else:
                scale = max(1.0, abs(ora.objective))
                match = abs(res.objective - ora.objective) <= 1e-6 * scale
            row["oracle_match"] = str(bool(match)).lower()
    except Exception as exc:  # per-instance failures are data, not crashes
        row.update(status=f"error: {exc}", objective="", gap="", time="",
                   nodes="", cuts_p1="", cuts_p2="")
    return row


def cmd_bench(args) -> int:
    paths = sorted(Path(args.directory).glob("*.json"))
    paths = [p for p in paths if not p.name.endswith(".solution.json")]
    if not paths:
        print("no instances found", file=sys.stderr)
        return EXIT_ERROR
    variants = [v for v in args.variants.split(";") if v]
    tasks = [(str(p), v, args.gap, args.timelimit, args.oracle_check)
             for p in paths for v in variants]

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_bench_one, tasks))
    else:
        rows = [_bench_one(t) for t in tasks]
    rows.sort(key=lambda r: (r["instance"], r["variant"]))

    # aggregate per (n, m, p) parsed from the canonical file names
    def cell_of(name: str):
        parts = name.split("_")
        try:
            return tuple(part for part in parts[1:4])
        except IndexError:
            return ("?",) * 3

    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault(cell_of(row["instance"]), []).append(row)
    agg_rows = []
    for cell in sorted(cells):
        group = cells[cell]
        n_total = len(group)
        n_inf = sum(1 for r in group if r["status"] == MIP_INFEASIBLE)
        n_tl = sum(1 for r in group if r["status"] == MIP_TIME_LIMIT)
        gaps = [float(r["gap"]) for r in group if r["gap"] != ""]
        agg_rows.append({
            "instance": "agg:" + "_".join(cell), "variant": "*",
            "status": "", "objective": "", "gap": "", "time": "",
            "nodes": "", "cuts_p1": "", "cuts_p2": "",
            "pct_inf": f"{100.0 * n_inf / n_total:.1f}",
            "pct_tl": f"{100.0 * n_tl / n_total:.1f}",
            "mean_gap": f"{sum(gaps) / len(gaps):.6f}" if gaps else "",
        })

    out_path = Path(args.csv) if args.csv else Path(args.directory) / "bench.csv"
    with out_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, restval="")
        writer.writeheader()
        for row in rows + agg_rows:
            writer.writerow(row)
    print(f"wrote {len(rows)} detail rows + {len(agg_rows)} aggregate rows "
          f"to {out_path}")
    return EXIT_OPTIMAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dobc",
        description="Budget-constrained pickup routing with selectable "
                    "drop-off facilities: generator, exact solver, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances")
    g.add_argument("-n", type=_int_list, required=True, help="pickup counts, comma list")
    g.add_argument("-m", type=_int_list, required=True, help="drop-off counts, comma list")
    g.add_argument("-p", type=_int_list, required=True, help="affordable facility counts, comma list")
    g.add_argument("--rho", type=_rho_list, default=["medium"],
                   help="capacity classes: small|medium|large|qNN (comma list)")
    g.add_argument("--alpha", type=float, default=0.5)
    g.add_argument("--demand-range", default="10,100")
    g.add_argument("--box", type=float, default=1000.0)
    g.add_argument("--reps", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="instances")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--kd", choices=["1", "inf"], default="inf",
                   help="drop-off visit limit")
    s.add_argument("--kp", default="per-node",
                   help="pickup visit limit: integer or per-node")
    s.add_argument("--topology", choices=["C", "P"], default="P")
    s.add_argument("--alpha", type=float, default=None,
                   help="override the instance's objective weight")
    s.add_argument("--gap", type=float, default=0.005)
    s.add_argument("--timelimit", type=float, default=7200.0)
    s.add_argument("--deterministic", action="store_true", default=True)
    s.add_argument("--json-log", action="store_true")
    s.add_argument("-o", "--output", default=None)
    s.add_argument("--dot", default=None, help="also write a DOT rendering")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="solve a directory of instances")
    b.add_argument("directory")
    b.add_argument("--variants", default="inf-1-P",
                   help="semicolon list of kd-kp-T specs, e.g. '1-1-C;inf-2-P'")
    b.add_argument("--gap", type=float, default=0.005)
    b.add_argument("--timelimit", type=float, default=7200.0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--oracle-check", action="store_true",
                   help="cross-check each result against full enumeration")
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
