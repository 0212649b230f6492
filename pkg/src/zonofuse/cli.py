"""Command-line front end: ``zonofuse run`` and ``zonofuse compare``."""
from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import PAPER_LITERAL_MULTIPLIERS, ConfigError, load_config
from .scenario import FaultInjection, run_scenario, summarize

SUMMARY_COLUMNS = ("scenario", "pedestrian", "sensors", "avg_speed", "detection_distance",
                   "min_separation", "collisions")
TABLE_COLUMNS = ("scenario", "shared_awareness", "pedestrian", "local_sensor", "connected_vehicle",
                 "road_side_unit_1", "road_side_unit_2", "average_speed", "runs")
BUILTIN = ("scenario1", "scenario2", "scenario3")


class UsageError(ValueError):
    """Bad flag value; reported with exit status 2."""


# ---------------------------------------------------------------- parsing

def parse_seeds(text: str) -> list[int]:
    """``"7"`` or an inclusive range ``"0..99"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"seed range {text!r}: expected N or A..B") from None
    if lo < 0 or hi < lo:
        raise UsageError(f"seed range {text!r} is empty or negative")
    return list(range(lo, hi + 1))


def parse_fault(text: str) -> FaultInjection:
    """``sensor=rsu1,bias=10,onset=5``; a vector bias is colon separated (``bias=10:0``)."""
    fields = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"fault spec {text!r}: {part!r} is not key=value")
        fields[key.strip()] = value.strip()
    unknown = set(fields) - {"sensor", "bias", "onset"}
    if unknown:
        raise UsageError(f"fault spec {text!r}: unknown keys {sorted(unknown)}")
    if "sensor" not in fields or "bias" not in fields:
        raise UsageError(f"fault spec {text!r}: sensor and bias are required")
    try:
        bias = tuple(float(b) for b in fields["bias"].split(":"))
        onset = int(fields.get("onset", 0))
    except ValueError:
        raise UsageError(f"fault spec {text!r}: bias must be numbers, onset an integer") from None
    if onset < 0:
        raise UsageError(f"fault spec {text!r}: onset must be >= 0")
    return FaultInjection(fields["sensor"], bias, onset)


def _configure(config: str, seed: int, pedestrian: str | None, paper_literal: bool):
    cfg = load_config(config)
    changes = {"seed": seed}
    if pedestrian is not None:
        changes["pedestrian_present"] = pedestrian == "on"
    if paper_literal:
        changes["multipliers"] = PAPER_LITERAL_MULTIPLIERS
    return cfg.with_overrides(**changes)


# ---------------------------------------------------------------- csv io

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def write_summary_csv(path, rows, columns=SUMMARY_COLUMNS) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])
    return path


def read_summary_csv(path) -> list[dict]:
    """Inverse of :func:`write_summary_csv` for the summary columns (plus ``seed``)."""
    parsers = {
        "seed": int, "scenario": int, "collisions": int, "sensors": str,
        "pedestrian": lambda s: s == "true",
        "avg_speed": float,
        "detection_distance": lambda s: float(s) if s else None,
        "min_separation": lambda s: float(s) if s else None,
    }
    with Path(path).open(newline="") as fh:
        return [{k: parsers.get(k, str)(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# ---------------------------------------------------------------- execution

def _simulate(job):
    config, seed, pedestrian, paper_literal, faults, trace = job
    cfg = _configure(config, seed, pedestrian, paper_literal)
    return run_scenario(cfg, faults=faults, trace=trace)


def _run_all(jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_simulate, jobs))
    return [_simulate(j) for j in jobs]


def _write_run(report, out: Path, figures: bool) -> dict:
    from . import plotting

    out.mkdir(parents=True, exist_ok=True)
    (out / "log.ndjson").write_text(report.to_ndjson())
    summary = summarize(report)
    write_summary_csv(out / "summary.csv", [summary])
    plotting.write_csv(out / "speed.csv", plotting.speed_series(report), plotting.SPEED_COLUMNS)
    plotting.write_csv(out / "hulls.csv", plotting.hull_series(report), plotting.HULL_COLUMNS)
    if figures:
        plotting.plot_levels(report, out / "speed.png")
        plotting.plot_hulls(report, out / "hulls.png")
    return summary


def cmd_run(args) -> int:
    seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
    faults = tuple(parse_fault(f) for f in args.fault)
    load_config(args.config)  # fail fast on a bad file before spawning work
    jobs = [(args.config, s, args.pedestrian, args.paper_literal_speeds, faults, not args.no_trace)
            for s in seeds]
    out = Path(args.out)
    rows = []
    for seed, report in zip(seeds, _run_all(jobs, args.jobs)):
        summary = _write_run(report, out / f"seed-{seed:04d}", not args.no_figures)
        rows.append({"seed": seed, **summary})
        failed = ",".join(summary["failed_sensors"]) or "-"
        print(f"seed {seed}: avg_speed {summary['avg_speed']:.2f} m/s, "
              f"collisions {summary['collisions']}, failed sensors {failed}")
    write_summary_csv(out / "summary.csv", rows, ("seed",) + SUMMARY_COLUMNS)
    return 0


def comparison_table(reports) -> list[dict]:
    """One row per (scenario, pedestrian) cell, averaged over the runs in that cell."""
    cells: dict = {}
    for rep in reports:
        cells.setdefault((rep.scenario_id, rep.pedestrian), []).append(rep)
    rows = []
    for (sid, ped), reps in sorted(cells.items(), key=lambda kv: (kv[0][0], not kv[0][1])):
        mounts = set(reps[0].sensors)
        rows.append({
            "scenario": sid,
            "shared_awareness": len(mounts - {"ego"}) > 0,
            "pedestrian": ped,
            "local_sensor": "ego" in mounts,
            "connected_vehicle": "cv" in mounts,
            "road_side_unit_1": "rsu1" in mounts,
            "road_side_unit_2": "rsu2" in mounts,
            "average_speed": float(np.mean([summarize(r)["avg_speed"] for r in reps])),
            "runs": len(reps),
        })
    return rows


def format_table(rows) -> str:
    def mark(b):
        return "x" if b else "-"

    head = ["Scenario", "Shared", "Pedestrian", "Local", "CV", "RSU1", "RSU2", "Avg speed"]
    body = [[str(r["scenario"]), mark(r["shared_awareness"]), mark(r["pedestrian"]),
             mark(r["local_sensor"]), mark(r["connected_vehicle"]), mark(r["road_side_unit_1"]),
             mark(r["road_side_unit_2"]), f"{r['average_speed']:.1f}"] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    rule = "-" * len(line(head))
    return "\n".join([rule, line(head), rule, *map(line, body), rule])


def cmd_compare(args) -> int:
    configs = args.config or list(BUILTIN)
    for c in configs:
        load_config(c)
    seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
    peds = ("on", "off") if args.pedestrian == "both" else (args.pedestrian,)
    jobs = [(c, s, p, args.paper_literal_speeds, (), False) for c in configs for p in peds for s in seeds]
    reports = _run_all(jobs, args.jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = [{"seed": r.seed, **summarize(r)} for r in reports]
    write_summary_csv(out / "runs.csv", runs, ("seed",) + SUMMARY_COLUMNS)
    table = comparison_table(reports)
    write_summary_csv(out / "table.csv", table, TABLE_COLUMNS)
    text = format_table(table)
    (out / "table.txt").write_text(text + "\n")
    print(text)

    if not args.no_figures:
        from . import plotting

        first = seeds[0]
        for ped in (True, False):
            chosen = {f"scenario {r.scenario_id}": r for r in reports if r.pedestrian == ped and r.seed == first}
            if chosen:
                tag = "with" if ped else "without"
                plotting.plot_speed(chosen, out / f"speed_{tag}_pedestrian.png")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zonofuse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--seeds", help="inclusive range A..B")
        sp.add_argument("--paper-literal-speeds", action="store_true",
                        help="use the verbatim speed percentages instead of the monotone default")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for seed sweeps")

    r = sub.add_parser("run", help="simulate one configuration over one or more seeds")
    r.add_argument("--config", required=True, help="JSON file or built-in name (scenario1..3)")
    r.add_argument("--pedestrian", choices=("on", "off"))
    r.add_argument("--fault", action="append", default=[], metavar="SPEC",
                   help="sensor=ID,bias=B[:B2],onset=K (repeatable)")
    r.add_argument("--no-trace", action="store_true", help="omit per-step estimator traces from the log")
    common(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="average-speed table over scenarios, with and without pedestrian")
    c.add_argument("--config", action="append", help="repeatable; defaults to the three built-ins")
    c.add_argument("--pedestrian", choices=("on", "off", "both"), default="both")
    common(c)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface any runtime failure as exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
