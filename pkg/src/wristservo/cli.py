"""Command-line front end.

    wristservo bench compare [--n N]
    wristservo bench fig3
    wristservo sim episode [--controller NAME] [--index I]
    wristservo sim session --events LOG
    wristservo annotate --input FILE --object MESH --out DIR
    wristservo gen-viewpoints [--bins B --per-bin P]
    wristservo gen-object [--kind bottle|ball]

Global flags (--config, --seed, --out, --format, --workers, --events) go
before the subcommand. Without --out, results go to stdout. Every output
is a deterministic function of seed and config.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench
from .annotation import annotate_sequence, load_annotation_input, write_annotations
from .config import RunConfig, load_run_config
from .pipeline import load_events, run_session
from .scenes import make_ball_on_stand, make_bottle
from .servo import Controller, simulate_episode
from .vision import load_scene_object
from .wrist import JointState


def _emit(args, name: str, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _scene(args):
    if getattr(args, "object", None):
        return load_scene_object(args.object)
    return bench.default_bench_scene()


def _seed(args, default: int) -> int:
    return default if args.seed is None else args.seed


# ---------------------------------------------------------------- bench

def cmd_bench_compare(args, cfg: RunConfig) -> int:
    seed = _seed(args, 7)
    sampler = cfg.make_sampler(bench.comparison_sampler(seed, args.radius), seed)
    report = bench.run_comparison(args.n, scene=_scene(args), params=cfg.wrist, cfg=cfg.controller,
                                  seed=seed, intrinsics=cfg.intrinsics, workers=args.workers,
                                  sampler=sampler)
    if args.format == "json":
        _emit(args, "comparison.json", report.to_json() + "\n")
    else:
        _emit(args, "comparison.csv", report.to_csv())
    table = report.format_table() + "\n"
    if args.out is None:
        sys.stderr.write(table)
    else:
        _emit(args, "summary.txt", table)
        sys.stdout.write(table)
    return 0


def _fig3_rows(result) -> list[dict]:
    return [{"controller": t.controller, "initial_wfe_deg": t.initial_wfe_deg,
             "first_wps_sign": t.first_wps_sign, "iterations": t.result.iterations,
             "converged": t.result.converged, "natural": t.result.natural} for t in result.traces]


def cmd_bench_fig3(args, cfg: RunConfig) -> int:
    result = bench.run_fig3_scenario(cfg.wrist, cfg.controller, _scene(args), cfg.intrinsics)
    rows = _fig3_rows(result)
    if args.format == "json":
        doc = {"traces": rows,
               "signs": {c.value: list(result.signs(c)) for c in Controller},
               "trajectories": [t.result.to_dict()["trajectory"] for t in result.traces]}
        _emit(args, "fig3.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "converged": int(r["converged"]), "natural": int(r["natural"])})
        _emit(args, "fig3.csv", buf.getvalue())
        if args.out is not None:
            for t in result.traces:
                _emit(args, f"trace_{t.controller}_{t.initial_wfe_deg:+.0f}.csv", t.result.trace_csv())
    text = result.format() + "\n"
    (sys.stdout if args.out is not None else sys.stderr).write(text)
    return 0


# ---------------------------------------------------------------- sim

def cmd_sim_episode(args, cfg: RunConfig) -> int:
    seed = _seed(args, 7)
    scene = _scene(args)
    sampler = cfg.make_sampler(bench.comparison_sampler(seed, args.radius), seed)
    sampler = replace(sampler, center=tuple(float(c) for c in scene.centroid_world()))
    stream = bench.iter_viewpoints(sampler, scene, cfg.wrist, cfg.intrinsics)
    vp = None
    for _ in range(args.index + 1):
        vp = next(stream)
    q0 = vp.q0
    if args.wfe is not None or args.wps is not None:
        q0 = JointState(math.radians(args.wfe) if args.wfe is not None else q0.q_wfe,
                        math.radians(args.wps) if args.wps is not None else q0.q_wps)
    res = simulate_episode(args.controller, scene, vp.hand_pose, q0, cfg.wrist, cfg.intrinsics, cfg.controller)
    if args.format == "json":
        _emit(args, "episode.json", res.to_json() + "\n")
    else:
        _emit(args, "trace.csv", res.trace_csv())
    msg = (f"{res.controller}: converged={res.converged} iterations={res.iterations} "
           f"natural={res.natural} final_error={res.final_error_norm:.3g}\n")
    (sys.stdout if args.out is not None else sys.stderr).write(msg)
    return 0


def cmd_sim_session(args, cfg: RunConfig) -> int:
    events_path = args.session_events or args.events
    if events_path is None:
        raise SystemExit("sim session needs --events <file>")
    events = load_events(events_path)
    scene = make_ball_on_stand() if args.scene == "ball" else _scene(args)
    c = scene.centroid_world()
    e = math.radians(args.elevation)
    pos = c + args.distance * np.array([math.cos(e), 0.0, math.sin(e)])
    hand = bench.place_hand(pos, c, 0.0, cfg.wrist, JointState(0.0, 0.0))
    q0 = JointState.from_degrees(args.wfe, args.wps)
    result = run_session(events, scene, hand, q0, cfg.wrist, cfg.controller, cfg.intrinsics, cfg.pipeline)
    _emit(args, "commands.jsonl", result.to_jsonl())
    msg = "phases: " + " -> ".join(p.value for p in result.phases()) + "\n"
    (sys.stdout if args.out is not None else sys.stderr).write(msg)
    return 0


# ---------------------------------------------------------------- data

def cmd_annotate(args, cfg: RunConfig) -> int:
    inp = load_annotation_input(args.input, args.object)
    result = annotate_sequence(inp, on_discard=args.on_discard)
    out = args.out or "annotations"
    manifest = write_annotations(result, inp, out)
    sys.stdout.write(f"{len(result.frames)} frames annotated; manifest: {manifest}\n")
    if result.gaps:
        sys.stdout.write(f"chain gaps at frames {result.gaps}\n")
    return 0


def cmd_gen_viewpoints(args, cfg: RunConfig) -> int:
    seed = _seed(args, 0)
    base = bench.HemisphereSampler(radius_range=(args.rmin, args.rmax), radius_bins=args.bins,
                                   points_per_bin=args.per_bin, seed=seed)
    sampler = cfg.make_sampler(base, seed)
    scene = _scene(args) if args.object else None
    vps = bench.sample_hemisphere(sampler, scene, cfg.wrist, cfg.intrinsics)
    rows = []
    for i, vp in enumerate(vps):
        rows.append({"index": i, "bin": vp.radius_bin, "radius": vp.radius,
                     "dx": float(vp.direction[0]), "dy": float(vp.direction[1]), "dz": float(vp.direction[2]),
                     "roll": vp.roll, "q_wfe": vp.q0.q_wfe, "q_wps": vp.q0.q_wps,
                     "rotation": [float(x) for x in vp.hand_pose.rotation.ravel()],
                     "translation": [float(x) for x in vp.hand_pose.translation]})
    if args.format == "json":
        _emit(args, "viewpoints.json", json.dumps({"sampler": sampler.to_dict(), "viewpoints": rows},
                                                  indent=1, sort_keys=True) + "\n")
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["index", "bin", "radius", "dx", "dy", "dz", "roll", "q_wfe", "q_wps"]
        w.writerow(head + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"])
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], int) else repr(r[k]) for k in head]
                       + [repr(x) for x in r["rotation"]] + [repr(x) for x in r["translation"]])
        _emit(args, "viewpoints.csv", buf.getvalue())
    return 0


def cmd_gen_object(args, cfg: RunConfig) -> int:
    obj = make_ball_on_stand() if args.kind == "ball" else make_bottle()
    _emit(args, f"{args.kind}.json", json.dumps(obj.to_dict(), sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wristservo", description="Wrist visual-servoing simulator.")
    p.add_argument("--config", help="JSON or TOML run configuration")
    p.add_argument("--seed", type=int, help="random seed (command-specific default)")
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--events", help="JSON-lines trigger log for session replay")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="benchmarks").add_subparsers(dest="bench_command", required=True)
    bc = b.add_parser("compare", help="s-IBVS vs pp-IBVS over hemisphere starts")
    bc.add_argument("--n", type=int, default=20)
    bc.add_argument("--radius", type=float, default=0.35)
    bc.add_argument("--object", help="SceneObject JSON (default: two-part bottle)")
    bc.set_defaults(func=cmd_bench_compare)
    bf = b.add_parser("fig3", help="two flexion starts, both controllers")
    bf.add_argument("--object")
    bf.set_defaults(func=cmd_bench_fig3)

    s = sub.add_parser("sim", help="single runs").add_subparsers(dest="sim_command", required=True)
    se = s.add_parser("episode", help="one servo episode from a sampled start")
    se.add_argument("--controller", type=Controller, default=Controller.PPIBVS,
                    choices=list(Controller), metavar="{s-IBVS,pp-IBVS}")
    se.add_argument("--index", type=int, default=0, help="which sampled start to use")
    se.add_argument("--radius", type=float, default=0.35)
    se.add_argument("--wfe", type=float, help="override initial WFE (deg)")
    se.add_argument("--wps", type=float, help="override initial WPS (deg)")
    se.add_argument("--object")
    se.set_defaults(func=cmd_sim_episode)
    ss = s.add_parser("session", help="replay a trigger log through the grasp pipeline")
    ss.add_argument("--events", dest="session_events")
    ss.add_argument("--scene", choices=("ball", "bottle"), default="ball")
    ss.add_argument("--object")
    ss.add_argument("--distance", type=float, default=0.35)
    ss.add_argument("--elevation", type=float, default=45.0, help="hand elevation above the object (deg)")
    ss.add_argument("--wfe", type=float, default=20.0)
    ss.add_argument("--wps", type=float, default=40.0)
    ss.set_defaults(func=cmd_sim_session)

    a = sub.add_parser("annotate", help="pose-chained part-mask annotation")
    a.add_argument("--input", required=True)
    a.add_argument("--object", required=True)
    a.add_argument("--on-discard", choices=("compose", "break"), default="compose")
    a.set_defaults(func=cmd_annotate)

    g = sub.add_parser("gen-viewpoints", help="stratified hemisphere viewpoints")
    g.add_argument("--bins", type=int, default=6)
    g.add_argument("--per-bin", type=int, default=400)
    g.add_argument("--rmin", type=float, default=0.2)
    g.add_argument("--rmax", type=float, default=1.0)
    g.add_argument("--object", help="place starts so this object is in view")
    g.set_defaults(func=cmd_gen_viewpoints)

    o = sub.add_parser("gen-object", help="write a built-in object mesh as JSON")
    o.add_argument("--kind", choices=("bottle", "ball"), default="bottle")
    o.set_defaults(func=cmd_gen_object)
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_run_config(args.config)
    return args.func(args, cfg)


if __name__ == "__main__":
    raise SystemExit(main())
