"""Command-line entry points: run, replay, eval."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import tracking  # registers the centroid tracker
from .engine import Engine, SimConfig
from .floor import FloorConfig, build_floor, load_floor_config
from .gateway import DEFAULT_PORT, EngineRunner, Gateway, Hub
from .physics import Scenario, load_scenario
from .radio import RadioConfig
from .tracking import evaluate, truth_lookup
from . import traceio


def _setup_logging():
    level = os.environ.get("CORRIDOR_SIM_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _parse_params(items: list[str]) -> dict:
    params = {}
    for item in items or []:
        key, _, val = item.partition("=")
        if not _:
            raise SystemExit(f"--param expects key=value, got {item!r}")
        params[key] = val
    return params


def _parse_serve(spec: str) -> tuple[str, int]:
    host, _, port = spec.rpartition(":")
    return host or "127.0.0.1", int(port) if port else DEFAULT_PORT


def _load_world(args):
    if args.floor:
        floor_cfg, radio_over = load_floor_config(args.floor)
    else:
        floor_cfg, radio_over = FloorConfig(), {}
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    if getattr(args, "truth", False):
        scenario.truth_export = True
    radio_cfg = RadioConfig().with_overrides({**radio_over, **scenario.radio_overrides})
    scenario.radio_overrides = {}
    topo = build_floor(floor_cfg, radio_cfg.radio_radius_m)
    return topo, scenario, radio_cfg


def _serve_until_done(runner: EngineRunner, gateway: Gateway):
    runner.start()
    try:
        while True:
            runner.finished.wait(timeout=1.0)
    except KeyboardInterrupt:
        pass
    finally:
        gateway.stop()
        runner.stop()


def cmd_run(args) -> int:
    topo, scenario, radio_cfg = _load_world(args)
    sim_cfg = SimConfig(
        sample_rate_hz=args.rate, duration_s=args.duration, seed=args.seed
    )
    engine = Engine(
        topo, scenario, sim_cfg, radio_cfg,
        algorithm=args.algorithm, algo_params=_parse_params(args.param),
        keep_streams=not args.no_streams,
    )
    writer = None
    if args.record:
        header = traceio.TraceHeader(
            version=traceio.FORMAT_VERSION,
            tiles_x=topo.config.tiles_x,
            tiles_y=topo.config.tiles_y,
            rate_hz=sim_cfg.sample_rate_hz,
            seed=sim_cfg.seed,
            model_digest=traceio.model_digest(engine.models),
            end_t_us=engine.end_t_us,
        )
        writer = traceio.TraceWriter(args.record, header)
        writer.attach(engine)
    try:
        if args.serve:
            host, port = _parse_serve(args.serve)
            hub = Hub()
            runner = EngineRunner(engine, hub, pace=args.pace)
            gateway = Gateway(runner, host, port)
            gateway.start()
            print(f"serving on {gateway.host}:{gateway.port}", flush=True)
            _serve_until_done(runner, gateway)
        else:
            engine.run()
    finally:
        if writer:
            writer.close()
    print(
        f"run complete: {engine.sample_count} samples, "
        f"{len(engine.pir_events)} pir events, {len(engine.actuations)} actuations, "
        f"{len(engine.track_obs)} track observations"
    )
    print(f"stream_digest={engine.stream_digest()}")
    return 0


def _replay_engine(args, records, header):
    if args.floor:
        floor_cfg, radio_over = load_floor_config(args.floor)
    else:
        floor_cfg, radio_over = FloorConfig(
            tiles_x=header.tiles_x, tiles_y=header.tiles_y, seed=header.seed
        ), {}
    radio_cfg = RadioConfig().with_overrides(radio_over)
    topo = build_floor(floor_cfg, radio_cfg.radio_radius_m)
    sim_cfg = SimConfig(
        sample_rate_hz=header.rate_hz, duration_s=0.0, seed=header.seed
    )
    engine = Engine(
        topo, Scenario(), sim_cfg, radio_cfg,
        algorithm=args.algorithm, algo_params=_parse_params(getattr(args, "param", [])),
    )
    header.validate_against(topo, engine.models)
    return engine, topo


def cmd_replay(args) -> int:
    header, records = traceio.read_trace(args.trace, lenient=args.lenient)
    engine, topo = _replay_engine(args, records, header)
    writer = None
    if args.record:
        writer = traceio.TraceWriter(args.record, header)
        writer.attach(engine)
    try:
        if args.serve:
            host, port = _parse_serve(args.serve)
            hub = Hub()
            runner = EngineRunner(
                engine, hub, pace=args.pace, replay_records=records,
                replay_end_us=header.end_t_us,
            )
            gateway = Gateway(runner, host, port)
            gateway.start()
            print(f"serving on {gateway.host}:{gateway.port}", flush=True)
            _serve_until_done(runner, gateway)
        else:
            engine.run_replay(records, header.end_t_us)
    finally:
        if writer:
            writer.close()
    print(
        f"replay complete: {engine.sample_count} samples, "
        f"{len(engine.actuations)} actuations, {len(engine.track_obs)} track observations"
    )
    print(f"stream_digest={engine.stream_digest()}")
    return 0


def cmd_eval(args) -> int:
    header, records = traceio.read_trace(args.trace)
    truth = [(t, wid, x, y) for kind, t, wid, x, y in
             (r for r in records if r[0] == "T")]
    if not truth:
        print("trace carries no ground-truth (T) records; cannot evaluate", file=sys.stderr)
        return 1
    engine, topo = _replay_engine(args, records, header)
    engine.run_replay(records, header.end_t_us)
    t0 = min(t for t, *_ in truth)
    t1 = max(t for t, *_ in truth)
    frame = int(args.frame_ms * 1000)
    metrics = evaluate(
        engine.track_obs, truth_lookup(engine.truth, frame), t0, t1, frame
    )
    print(metrics.as_text())
    print(metrics.as_kv())
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="corridor-sim",
        description="Digital twin of the instrumented hallway sensor floor",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a live simulation")
    p_run.add_argument("--floor", help="floor config file (key=value lines)")
    p_run.add_argument("--scenario", help="scenario file (walkers, overrides)")
    p_run.add_argument("--algorithm", default="centroid-tracker")
    p_run.add_argument("--rate", type=float, default=8.0, choices=None,
                       help="sample rate in Hz (8 or 800 on the real floor)")
    p_run.add_argument("--duration", type=float, default=10.0)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--record", metavar="OUT.trace")
    p_run.add_argument("--serve", nargs="?", const=f":{DEFAULT_PORT}", default=None,
                       metavar="[HOST]:PORT")
    p_run.add_argument("--pace", type=float, default=None,
                       help="pace sim time at this multiple of real time")
    p_run.add_argument("--truth", action="store_true",
                       help="export ground-truth walker positions")
    p_run.add_argument("--param", action="append", default=[],
                       metavar="KEY=VALUE", help="algorithm parameter")
    p_run.add_argument("--no-streams", action="store_true",
                       help="do not keep full streams in memory")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("replay", help="replay a recorded trace")
    p_rep.add_argument("trace")
    p_rep.add_argument("--algorithm", default="centroid-tracker")
    p_rep.add_argument("--floor", help="floor config file; default from header")
    p_rep.add_argument("--record", metavar="OUT.trace")
    p_rep.add_argument("--serve", nargs="?", const=f":{DEFAULT_PORT}", default=None)
    p_rep.add_argument("--pace", type=float, default=None)
    p_rep.add_argument("--lenient", action="store_true",
                       help="use records before the first malformed line")
    p_rep.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p_rep.set_defaults(func=cmd_replay)

    p_eval = sub.add_parser("eval", help="evaluate a trace against its ground truth")
    p_eval.add_argument("trace")
    p_eval.add_argument("--algorithm", default="centroid-tracker")
    p_eval.add_argument("--floor")
    p_eval.add_argument("--frame-ms", type=float, default=125.0)
    p_eval.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p_eval.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
