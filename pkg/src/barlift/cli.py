"""Command line front end.

Subcommands:
  run       simulate a scenario file; writes <name>_log.csv and
            <name>_metrics.json into --out-dir
  plan      grid route: barlift plan grid.txt --start "x y th" --goal "x y th"
  traj      fit and sample a trajectory through a waypoint file (lines "x y t")
  validate  parse a scenario file and report whether it is well formed

Exit codes: 0 success, 2 bad input (config, arguments, files), 3 no path
through the grid.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from barlift.engine import run_scenario
from barlift.planning import (
    NoPathError,
    PlannerConfig,
    evaluate_trajectory,
    generate_min_snap,
    load_grid,
    plan_waypoints,
)
from barlift.recording import metrics_to_json, write_log_csv
from barlift.scenario import ScenarioConfig, _parse_pose, _parse_waypoints, parse_scenario

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NO_PATH = 3


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="barlift")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario")
    run_p.add_argument("scenario")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--out-dir", default=".")

    plan_p = sub.add_parser("plan", help="plan waypoints through an occupancy grid")
    plan_p.add_argument("grid")
    plan_p.add_argument("--start", required=True, help='"x y theta"')
    plan_p.add_argument("--goal", required=True, help='"x y theta"')
    plan_p.add_argument("--speed", type=float, default=0.5)
    plan_p.add_argument("--rho-min", type=float, default=1.0)
    plan_p.add_argument("--format", choices=("csv", "json"), default="csv")
    plan_p.add_argument("--out", default=None, help="write here instead of stdout")

    traj_p = sub.add_parser("traj", help="fit a trajectory through waypoints")
    traj_p.add_argument("waypoints", help='file of "x y t" lines')
    traj_p.add_argument("--format", choices=("csv", "json"), default="csv")
    traj_p.add_argument("--rate", type=float, default=100.0, help="sample rate for csv output")
    traj_p.add_argument("--out", default=None)

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("scenario")
    return ap


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="ascii") as fh:
            fh.write(text)


def _cmd_run(args) -> int:
    cfg = parse_scenario(args.scenario)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    metrics, buf = run_scenario(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, f"{cfg.name}_log.csv")
    metrics_path = os.path.join(args.out_dir, f"{cfg.name}_metrics.json")
    write_log_csv(buf, log_path)
    with open(metrics_path, "w", encoding="ascii") as fh:
        fh.write(metrics_to_json(metrics))
    status = f"fault: {metrics.fault}" if metrics.fault else "ok"
    print(f"{cfg.name}: {metrics.samples} ticks, {status}")
    print(f"wrote {log_path}")
    print(f"wrote {metrics_path}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    grid = load_grid(args.grid)
    start = _parse_pose(args.start)
    goal = _parse_pose(args.goal)
    wps = plan_waypoints(
        grid, start, goal, PlannerConfig(rho_min=args.rho_min, speed=args.speed)
    )
    if args.format == "json":
        text = json.dumps(
            {"waypoints": [{"x": w.x, "y": w.y, "t": w.t} for w in wps]},
            indent=2, sort_keys=True,
        ) + "\n"
    else:
        text = "x,y,t\n" + "".join(f"{w.x:.6g},{w.y:.6g},{w.t:.6g}\n" for w in wps)
    _emit(text, args.out)
    return EXIT_OK


def _cmd_traj(args) -> int:
    with open(args.waypoints, "r", encoding="ascii") as fh:
        wps = _parse_waypoints(fh.read())
    spec = generate_min_snap(list(wps))
    if args.format == "json":
        segs = []
        for sx, sy in zip(spec.x_segments, spec.y_segments):
            segs.append(
                {
                    "t_start": sx.t_start,
                    "t_end": sx.t_end,
                    "x_coeffs": list(sx.a),
                    "y_coeffs": list(sy.a),
                }
            )
        text = json.dumps({"generation": spec.generation, "segments": segs}, indent=2) + "\n"
    else:
        lines = ["t,x,y,xdot,ydot,xddot,yddot\n"]
        n = int(round((spec.t1 - spec.t0) * args.rate))
        for k in range(n + 1):
            t = min(spec.t0 + k / args.rate, spec.t1)
            p = evaluate_trajectory(spec, t)
            v = evaluate_trajectory(spec, t, 1)
            a = evaluate_trajectory(spec, t, 2)
            lines.append(
                f"{t:.6g},{p[0]:.6g},{p[1]:.6g},{v[0]:.6g},{v[1]:.6g},{a[0]:.6g},{a[1]:.6g}\n"
            )
        text = "".join(lines)
    _emit(text, args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = parse_scenario(args.scenario)
    route = "waypoints" if cfg.waypoints is not None else f"grid {cfg.grid_file}"
    print(f"{args.scenario}: ok ({cfg.name}, {cfg.duration:.3g} s, {route})")
    return EXIT_OK


def cli_main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "plan": _cmd_plan,
        "traj": _cmd_traj,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except NoPathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    raise SystemExit(cli_main())
