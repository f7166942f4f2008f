"""Command-line entry point: ``jetmpc run | compare | selftest``.

``run`` writes, per run directory::

    config.json   resolved configuration (after --set, --ablation, --seed)
    log.csv       one row per 1 ms simulation step
    metrics.json  status, MAE per component, recovery times, solve times
    summary.txt   the same, human-readable

Log verbosity is read from ``JETMPC_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .config import apply_overrides, build_scenario, dump_config, parse_config
from .errors import ConfigError
from .mpc import MODES
from .sim import COMPLETED, COMPONENTS, simulate

log = logging.getLogger("jetmpc")

BUNDLED = ("hover", "disturbance", "minjerk", "ablation-nojet")
TABLE_COLUMNS = (("X", "x"), ("Y", "y"), ("Z", "z"), ("Roll", "roll"), ("Pitch", "pitch"),
                 ("Yaw", "yaw"))
SOLVE_COLUMNS = (("mean ms", "mean"), ("max ms", "max"), ("std ms", "std"))


def scenario_document(name_or_path):
    """Decoded JSON of a scenario file, or of a bundled scenario by name."""
    path = Path(name_or_path)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    elif name_or_path in BUNDLED:
        text = resources.files("jetmpc").joinpath("scenarios", f"{name_or_path}.json") \
            .read_text(encoding="utf-8")
    else:
        raise FileNotFoundError(f"no scenario file or bundled scenario named {name_or_path!r}"
                                f" (bundled: {', '.join(BUNDLED)})")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{name_or_path}: invalid JSON ({exc})") from exc


def run_one(document, out_dir):
    """Simulate one resolved configuration and write its artifacts.

    Returns the metrics dictionary written to ``metrics.json``.
    """
    spec = parse_config(document)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_config(spec), encoding="utf-8")
    result = simulate(build_scenario(spec))
    metrics = {"scenario": spec.scenario.name, "mode": spec.mpc.mode,
               "seed": spec.scenario.seed, **result.metrics.to_dict()}
    (out / "log.csv").write_text(result.log.to_csv(), encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    (out / "summary.txt").write_text(summary_text(metrics), encoding="utf-8")
    return metrics


def _run_job(job):
    document, out_dir = job
    return out_dir, run_one(document, out_dir)


def summary_text(m):
    lines = [f"scenario: {m['scenario']}  mode: {m['mode']}  seed: {m['seed']}",
             f"status: {m['status']}"]
    if m["status"] != COMPLETED:
        lines.append(f"crash: {m['crash_reason']} at t = {m['crash_time']:.3f} s")
    lines.append("MAE: " + "  ".join(
        f"{c} {m['mae'][c]:.4f}{' m' if c in 'xyz' else ' rad'}" for c in COMPONENTS))
    lines.append(f"max position error: {m['max_position_error']:.4f} m, "
                 f"max attitude error: {m['max_attitude_error_deg']:.2f} deg")
    for i, r in enumerate(m["recovery_times"]):
        lines.append(f"recovery after disturbance {i}: "
                     + ("not recovered" if r is None else f"{r:.3f} s"))
    st = m["solve_time_ms"]
    if st["mean"] is not None:
        lines.append(f"solve time: mean {st['mean']:.2f} ms, max {st['max']:.2f} ms, "
                     f"std {st['std']:.2f} ms, p99 {st['p99']:.2f} ms")
    lines.append(f"MPC steps: {m['mpc_steps']}, degraded: {m['degraded_steps']}")
    return "\n".join(lines) + "\n"


def load_metrics(run_dirs):
    """``[(label, metrics)]`` for readable dirs; unreadable ones are logged and skipped."""
    rows = []
    for d in run_dirs:
        path = Path(d) / "metrics.json"
        try:
            m = json.loads(path.read_text(encoding="utf-8"))
            float(m["mae"]["x"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("skipping %s: %s", d, exc)
            continue
        rows.append((str(d), m))
    return rows


def comparison(rows):
    """Table data: per-column values and winners (lowest value, ties share).

    With fewer than two rows nothing is marked.
    """
    columns = [(label, ("mae", key)) for label, key in TABLE_COLUMNS]
    columns += [(label, ("solve_time_ms", key)) for label, key in SOLVE_COLUMNS]
    table = {"columns": [c[0] for c in columns], "rows": []}
    values = []
    for name, m in rows:
        vals = []
        for _, (section, key) in columns:
            v = m.get(section, {}).get(key)
            vals.append(None if v is None else float(v))
        values.append(vals)
    winners = [[False] * len(columns) for _ in rows]
    if len(rows) > 1:
        for j in range(len(columns)):
            col = [v[j] for v in values if v[j] is not None]
            if not col:
                continue
            best = min(col)
            for i, v in enumerate(values):
                winners[i][j] = v[j] is not None and math.isclose(v[j], best, rel_tol=1e-12,
                                                                 abs_tol=0.0)
    for (name, m), vals, win in zip(rows, values, winners):
        table["rows"].append({"run": name, "mode": m.get("mode"), "status": m.get("status"),
                              "values": dict(zip(table["columns"], vals)),
                              "winner": [c for c, w in zip(table["columns"], win) if w]})
    return table


def format_table(table):
    header = ["run", "status"] + table["columns"]
    body = []
    for row in table["rows"]:
        cells = [row["run"], str(row["status"])]
        for c in table["columns"]:
            v = row["values"][c]
            mark = "*" if c in row["winner"] else ""
            cells.append("-" if v is None else f"{v:.4f}{mark}")
        body.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    if len(body) > 1:
        lines.append("* lowest value in column")
    return "\n".join(lines) + "\n"


def cmd_run(args):
    try:
        base = scenario_document(args.scenario)
        base = apply_overrides(base, args.set)
        if args.seed is not None:
            base = apply_overrides(base, [f"scenario.seed={args.seed}"])
        modes = args.ablation or [None]
        jobs = []
        out_root = Path(args.out or Path("runs") / base.get("scenario", {}).get("name", "run"))
        for mode in modes:
            doc = base if mode is None else apply_overrides(base, [f"mpc.mode={json.dumps(mode)}"])
            for rep in range(args.repeat):
                d = doc
                if args.repeat > 1:
                    seed = d.get("scenario", {}).get("seed", 0) + rep
                    d = apply_overrides(d, [f"scenario.seed={seed}"])
                parse_config(d)  # fail early on schema errors
                sub = out_root
                if len(modes) > 1:
                    sub = sub / mode
                if args.repeat > 1:
                    sub = sub / f"rep{rep}"
                jobs.append((d, str(sub)))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    for out_dir, m in results:
        print(f"== {out_dir}")
        print(summary_text(m), end="")
    if len(results) > 1:
        table = comparison([(d, m) for d, m in results])
        print(format_table(table), end="")
        (out_root / "comparison.json").write_text(json.dumps(table, indent=2) + "\n",
                                                  encoding="utf-8")
    return 0 if all(m["status"] == COMPLETED for _, m in results) else 1


def cmd_compare(args):
    rows = load_metrics(args.dirs)
    if not rows:
        print("error: no readable metrics.json in the given directories", file=sys.stderr)
        return 2
    table = comparison(rows)
    print(format_table(table), end="")
    if args.json:
        Path(args.json).write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest

    return 0 if run_selftest(verbose=not args.quiet) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="jetmpc", description="Multi-rate MPC flight simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("--scenario", required=True,
                   help=f"scenario JSON file or bundled name ({', '.join(BUNDLED)})")
    r.add_argument("--ablation", action="append", choices=MODES,
                   help="controller mode; repeat to run several and compare")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry by dotted path, e.g. mpc.weights.du_jet=5")
    r.add_argument("--out", help="output directory (default runs/<scenario name>)")
    r.add_argument("--seed", type=int)
    r.add_argument("--repeat", type=int, default=1, help="runs per mode with seeds seed, seed+1, ...")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate metrics of finished runs")
    c.add_argument("dirs", nargs="+")
    c.add_argument("--json", help="also write the table as JSON to this file")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("selftest", help="finite-difference and QP oracle checks")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    level = os.environ.get("JETMPC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "repeat", 1) < 1 or getattr(args, "jobs", 1) < 1:
        print("error: --repeat and --jobs must be at least 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
