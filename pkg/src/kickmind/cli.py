"""Command line: solve, play, localize, cluster, export, genlog.

Exit codes: 0 success, 2 bad input or configuration, 3 value iteration did
not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .clustering import select_k, serialize_belief
from .field import FieldSpec, wrap_angle
from .io import VALUE_MAGIC, PlannerConfig, load_snapshot, load_value, save_value, value_to_csv
from .localization import NoiseConfig, ParticleFilter, ParticleSet, read_log, write_log
from .planner import KickPlanner, NoConvergence
from .sim import (
    PolicyConfig,
    Scenario,
    SensorNoise,
    TrajectoryScript,
    generate_localization_log,
    read_truth_csv,
    run_batch,
    write_truth_csv,
)
from .svg import episode_svg, value_heatmap_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3


def _field(path) -> FieldSpec:
    return FieldSpec.load(path) if path else FieldSpec()


def _planner_config(path) -> PlannerConfig:
    return PlannerConfig.load(path) if path else PlannerConfig()


def _planner(field: FieldSpec, cfg: PlannerConfig) -> KickPlanner:
    return KickPlanner(field, cfg.kicks, cfg.approach, cfg.reward, cfg.n_dirs, cfg.quadrature_points)


def cmd_solve(args, out) -> int:
    field = _field(args.field)
    planner = _planner(field, _planner_config(args.kicks))
    value = planner.solve(args.epsilon, args.max_iters)
    save_value(value, args.out)
    if args.csv:
        Path(args.csv).write_text(value_to_csv(value), encoding="utf-8")
    print(json.dumps({"iterations": value.iterations, "residual": value.residual, "cells": field.n_cells}), file=out)
    return EXIT_OK


def cmd_play(args, out) -> int:
    scenario = Scenario.load(args.scenario)
    value = load_value(args.value)
    if not value.compatible_with(scenario.field):
        raise ValueError(f"value grid {value.n_cols}x{value.n_rows} does not match the scenario field")
    planner = _planner(scenario.field, _planner_config(args.kicks))
    start = scenario.rng_seed if args.seed is None else args.seed
    seeds = range(start, start + args.seeds)
    logs = run_batch(scenario, value, planner, seeds, PolicyConfig(args.policy, args.max_kicks))
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            for log in logs:
                f.write(log.to_jsonl())
    if len(logs) == 1:
        out.write(logs[0].to_jsonl())
        return EXIT_OK
    for log in logs:
        print(json.dumps(log.summary()), file=out)
    times = np.array([log.total_time_s for log in logs])
    scored = np.array([log.scored for log in logs])
    print(json.dumps({
        "kind": "aggregate",
        "policy": args.policy,
        "episodes": len(logs),
        "goals": int(scored.sum()),
        "mean_time_s": float(times.mean()),
        "stddev_time_s": float(times.std(ddof=1)),
        "mean_time_to_goal_s": float(times[scored].mean()) if scored.any() else None,
    }), file=out)
    return EXIT_OK


def _parse_pose(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"pose must be x,y,theta, got {text!r}")
    return parts


def cmd_localize(args, out) -> int:
    field = _field(args.field)
    records = read_log(args.log)
    if args.prior:
        poses = [_parse_pose(p) for p in args.prior]
        particles = ParticleSet.around(poses, args.particles, args.prior_sigma_xy, args.prior_sigma_theta, args.seed)
    else:
        particles = ParticleSet.uniform(field, args.particles, args.seed)
    pf = ParticleFilter(field, particles, NoiseConfig(), seed=args.seed)
    truth = read_truth_csv(args.truth) if args.truth else None
    truth_t = np.array([row[0] for row in truth]) if truth else None
    rows = []
    n_obs = 0
    for rec in pf.run(records):
        if rec.obs is None:
            continue
        n_obs += 1
        if n_obs % args.every:
            continue
        result = select_k(pf.particles, seed=args.seed)
        best = result.best
        line = {"t": rec.t, "k": result.k, "best": best.to_dict(), "var_p": result.var_p, "var_o": result.var_o}
        if truth:
            # The truth row at or just before the observation time.
            i = max(0, int(np.searchsorted(truth_t, rec.t, side="right")) - 1)
            _, tx, ty, tth = truth[i]
            err_xy = math.hypot(best.mean_xy[0] - tx, best.mean_xy[1] - ty)
            err_th = abs(float(wrap_angle(best.mean_theta - tth)))
            line["error_xy_m"], line["error_theta_rad"] = err_xy, err_th
            rows.append((rec.t, *best.mean_xy, best.mean_theta, tx, ty, tth, err_xy, err_th))
        print(json.dumps(line), file=out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write("t,x,y,theta,true_x,true_y,true_theta,error_xy_m,error_theta_rad\n")
            for r in rows:
                f.write(",".join(repr(float(v)) for v in r) + "\n")
    return EXIT_OK


def cmd_cluster(args, out) -> int:
    particles = load_snapshot(args.snapshot).normalized()
    result = select_k(particles, seed=args.seed)
    gm = particles.weights @ particles.xy
    print(json.dumps({
        **result.to_dict(),
        "global_mean_xy": [float(gm[0]), float(gm[1])],
        "belief_hex": serialize_belief(result).hex(),
    }), file=out)
    return EXIT_OK


def cmd_export(args, out) -> int:
    field = _field(args.field)
    data = Path(args.input).read_bytes()
    if data[:4] == VALUE_MAGIC:
        svg = value_heatmap_svg(load_value(args.input), field)
    else:
        # Plot the first episode of the log (up to its summary line).
        events = []
        for line in data.decode("utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event.get("kind") == "summary":
                break
            events.append(event)
        svg = episode_svg(events, field)
    Path(args.svg).write_text(svg, encoding="utf-8")
    print(json.dumps({"svg": str(args.svg)}), file=out)
    return EXIT_OK


def cmd_genlog(args, out) -> int:
    scenario = Scenario.load(args.scenario)
    script = TrajectoryScript(kind=args.script, duration_s=args.duration)
    sensor = SensorNoise()
    records, truth = generate_localization_log(scenario, script, sensor, seed=args.seed)
    write_log(records, args.out)
    if args.truth:
        write_truth_csv(truth, args.truth)
    n_obs = sum(1 for r in records if r.obs is not None)
    print(json.dumps({"records": len(records), "observation_lines": n_obs}), file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kickmind", description="Kick planning and localization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="value iteration for a field and kick catalog")
    s.add_argument("--field", help="field JSON (default field if omitted)")
    s.add_argument("--kicks", help="kick catalog JSON")
    s.add_argument("--out", required=True, help="value-function dump (KVF1)")
    s.add_argument("--csv", help="also write col,row,value CSV")
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--max-iters", type=int, default=10_000)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("play", help="simulate episodes of a scenario")
    s.add_argument("scenario")
    s.add_argument("--value", required=True)
    s.add_argument("--kicks")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--seed", type=int, help="first seed (scenario rng_seed by default)")
    s.add_argument("--policy", choices=["online", "offline"], default="online")
    s.add_argument("--max-kicks", type=int, default=PolicyConfig().max_kicks)
    s.add_argument("--log", help="write every episode log here")
    s.set_defaults(func=cmd_play)

    s = sub.add_parser("localize", help="run the particle filter over a log")
    s.add_argument("log")
    s.add_argument("--field")
    s.add_argument("--truth", help="ground-truth CSV (t,x,y,theta)")
    s.add_argument("--csv", help="write the error-vs-truth CSV here")
    s.add_argument("--particles", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--prior", action="append", help="x,y,theta hypothesis (repeatable); uniform if omitted")
    s.add_argument("--prior-sigma-xy", type=float, default=0.3)
    s.add_argument("--prior-sigma-theta", type=float, default=0.2)
    s.add_argument("--every", type=int, default=10, help="report a belief every N observation lines")
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("cluster", help="cluster a particle snapshot")
    s.add_argument("snapshot")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("export", help="SVG of a value dump or an episode log")
    s.add_argument("input")
    s.add_argument("--svg", required=True)
    s.add_argument("--field")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("genlog", help="synthetic localization log from a scenario")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.add_argument("--script", choices=["move_scan", "sideline_reentry"], default="move_scan")
    s.add_argument("--duration", type=float, default=120.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_genlog)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "localize" and args.every < 1:
            raise ValueError("--every must be >= 1")
        return args.func(args, out)
    except NoConvergence as e:
        print(f"kickmind: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (OSError, ValueError, KeyError, TypeError) as e:
        print(f"kickmind: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
