"""Command-line front end.

    uav-see run   --scenario F --scheme S --out D [--seed N]
    uav-see sweep --scenario F --spec F --out D [--jobs N] [--strict]
    uav-see check --scenario F

Exit codes: 0 success/converged, 1 error, 2 flagged non-convergence (run) or
failed cells (sweep), 3 trend violation under --strict.  SEE_OPT_LOG sets the
log level.  All CSV output is UTF-8 with a header row and '.' decimals.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor

from . import orchestrator, scenario, subproblems

log = logging.getLogger("uav_see")

TRACE_COLUMNS = ("iter", "block_committed", "msee", "masr", "afpc", "afpcr",
                 "wall_ms")
SWEEP_AXES = ("absorption_af", "mission_time", "avg_power_scale",
              "flight_power_limit")


def _setup_logging():
    level = os.environ.get("SEE_OPT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_trace(path: str, rows):
    import io
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    _atomic_write(path, buf.getvalue())


def _error_payload(exc: Exception) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def _run_one(config, scheme: str):
    layout = scenario.place_users(config)
    return orchestrator.run_scheme(config, layout, scheme)


def cmd_run(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    try:
        config = scenario.load_scenario(args.scenario)
        if args.seed is not None:
            config = scenario.replace(config, rng_seed=args.seed)
        if args.scheme not in orchestrator.SCHEMES:
            raise ValueError(f"unknown scheme {args.scheme}; "
                             f"choose from {orchestrator.SCHEMES}")
        report = _run_one(config, args.scheme)
    except Exception as exc:  # mapped to exit 1 with a machine-readable payload
        log.error("run failed: %s", exc)
        _write_json(os.path.join(args.out, "error.json"), _error_payload(exc))
        partial = getattr(exc, "partial_report", None)
        if partial is not None and partial.iterations:
            _write_trace(os.path.join(args.out, "trace.csv"), partial.iterations)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_trace(os.path.join(args.out, "trace.csv"), report.iterations)
    _write_json(os.path.join(args.out, "solution.json"), report.solution_dict())
    _write_json(os.path.join(args.out, "summary.json"), report.summary_dict())
    _write_json(os.path.join(args.out, "blocks.json"),
                {name: rows for name, rows in sorted(report.block_traces.items())})
    print(f"{args.scheme}: msee={report.metrics.msee / 1e6:.4f} Mbit/J "
          f"masr={report.metrics.masr / 1e6:.2f} Mbps afpc={report.metrics.afpc:.2f} W "
          f"iters={report.outer_iterations} converged={report.converged}")
    if report.flags:
        for flag in report.flags:
            log.warning("flag: %s", flag)
    return 0 if report.converged and not report.flags else 2


def load_sweep_spec(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    axis = spec.get("axis")
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = spec.get("values")
    if not values:
        raise ValueError("sweep spec needs a non-empty 'values' list")
    schemes = spec.get("schemes") or ["msee_mi"]
    for s in schemes:
        if s not in orchestrator.SCHEMES:
            raise ValueError(f"unknown scheme {s} in sweep spec")
    return {"axis": axis, "values": [float(v) for v in values], "schemes": schemes}


def apply_axis(config, axis: str, value: float):
    if axis == "absorption_af":
        return scenario.replace(config, absorption=value)
    if axis == "mission_time":
        return scenario.replace(config, mission_time=value)
    if axis == "flight_power_limit":
        return scenario.replace(config, flight_power_limit=value)
    if axis == "avg_power_scale":
        # total network average budget split 0.1/0.5/0.4, peaks at 4x
        return scenario.replace(
            config,
            ue_avg_power=0.1 * value, ue_peak_power=0.4 * value,
            jam_avg_power=0.5 * value, jam_peak_power=2.0 * value,
            relay_avg_power=0.4 * value, relay_peak_power=1.6 * value)
    raise ValueError(f"unknown axis {axis}")


def cell_seed(base_seed: int, axis: str, value: float, scheme: str) -> int:
    token = f"{axis}={value:.12g}|{scheme}".encode()
    return (int(base_seed) ^ zlib.crc32(token)) & 0x7FFFFFFF


def run_cell(scenario_path: str, axis: str, value: float, scheme: str,
             out_dir: str) -> dict:
    """One independent sweep cell; returns its summary row."""
    config = scenario.load_scenario(scenario_path)
    config = apply_axis(config, axis, value)
    config = scenario.replace(
        config, rng_seed=cell_seed(config.rng_seed, axis, value, scheme))
    t0 = time.perf_counter()
    try:
        report = _run_one(config, scheme)
    except Exception as exc:
        return {"axis": axis, "value": value, "scheme": scheme, "ok": False,
                "error": f"{type(exc).__name__}: {exc}",
                "runtime_s": time.perf_counter() - t0}
    cell_dir = os.path.join(out_dir, f"{axis}={value:.12g}_{scheme}")
    os.makedirs(cell_dir, exist_ok=True)
    _write_trace(os.path.join(cell_dir, "trace.csv"), report.iterations)
    _write_json(os.path.join(cell_dir, "solution.json"), report.solution_dict())
    _write_json(os.path.join(cell_dir, "summary.json"), report.summary_dict())
    row = {"axis": axis, "value": value, "scheme": scheme, "ok": True,
           "msee": report.metrics.msee / 1e6, "masr": report.metrics.masr / 1e6,
           "afpc_w": report.metrics.afpc, "afpcr": report.metrics.afpcr,
           "iters": report.outer_iterations, "converged": report.converged,
           "runtime_s": report.runtime_s}
    return row


def check_trends(axis: str, rows) -> list[str]:
    """Soft monotonicity expectations along the sweep axis (warnings only)."""
    warnings = []
    by_scheme = {}
    for row in rows:
        if row.get("ok"):
            by_scheme.setdefault(row["scheme"], []).append(row)
    for scheme, srows in by_scheme.items():
        srows = sorted(srows, key=lambda r: r["value"])
        if axis == "absorption_af" and scheme.startswith("msee"):
            vals = [r["msee"] for r in srows]
            if any(b > a + 1e-9 for a, b in zip(vals, vals[1:])):
                warnings.append(
                    f"{scheme}: msee not non-increasing in absorption: {vals}")
        if axis == "flight_power_limit" and scheme.startswith("msee"):
            vals = [r["afpcr"] for r in srows]
            if any(b > a + 1e-9 for a, b in zip(vals, vals[1:])):
                warnings.append(
                    f"{scheme}: afpcr not non-increasing in the power limit: {vals}")
    return warnings


def cmd_sweep(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    try:
        spec = load_sweep_spec(args.spec)
        scenario.load_scenario(args.scenario)  # fail early on a bad scenario
    except Exception as exc:
        _write_json(os.path.join(args.out, "error.json"), _error_payload(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cells = [(value, scheme) for value in spec["values"]
             for scheme in spec["schemes"]]
    rows = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_cell, args.scenario, spec["axis"], value,
                                   scheme, args.out) for value, scheme in cells]
            rows = [f.result() for f in futures]
    else:
        for value, scheme in cells:
            rows.append(run_cell(args.scenario, spec["axis"], value, scheme,
                                 args.out))
    fields = ["axis", "value", "scheme", "ok", "msee", "masr", "afpc_w",
              "afpcr", "iters", "converged", "runtime_s", "error"]
    import io
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    _atomic_write(os.path.join(args.out, "sweep.csv"), buf.getvalue())
    warnings = check_trends(spec["axis"], rows)
    for w in warnings:
        log.warning("trend: %s", w)
        print(f"trend warning: {w}", file=sys.stderr)
    failed = [r for r in rows if not r.get("ok")]
    for r in failed:
        log.warning("cell failed: %s", r)
    print(f"sweep: {len(rows) - len(failed)}/{len(rows)} cells ok "
          f"-> {os.path.join(args.out, 'sweep.csv')}")
    if failed:
        return 2
    if warnings and args.strict:
        return 3
    return 0


def cmd_check(args) -> int:
    try:
        config = scenario.load_scenario(args.scenario)
        layout = scenario.place_users(config)
        plan, alloc = orchestrator.initialize_feasible(config, layout)
        audit = subproblems.audit_constraints(config, layout, plan, alloc)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"scenario ok: N={config.n_slots} K={config.num_users} "
          f"users placed, initial point audited")
    print(audit)
    return 0 if audit.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uav-see",
        description="Secrecy-energy-efficiency co-design of an untrusted UAV relay")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one optimization scheme")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--scheme", required=True,
                       help=f"one of {', '.join(orchestrator.SCHEMES)}")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(func=cmd_run)
    p_sweep = sub.add_parser("sweep", help="parameter sweep over one axis")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--strict", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)
    p_check = sub.add_parser("check", help="validate a scenario and audit its "
                                           "initial point")
    p_check.add_argument("--scenario", required=True)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
