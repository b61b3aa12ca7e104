"""Command-line entry point: ``evsim <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 invalid configuration, 3 runtime
failure. Failures print one JSON line on standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    HEX_AREA_FINE,
    hex_aggregate,
    low_soc_categories,
    node_mean_soc,
    node_observations,
    risk_areas,
    validation_curve,
)
from .clustering import cluster_drivers
from .config import RunConfig, calibration_values, with_rl
from .errors import EvsimError, InvalidConfig
from .io import atomic_write_text, dump_json, read_json
from .orchestrator import (
    CampaignConfig,
    UsagePattern,
    load_results,
    run_campaign,
    simulate,
)
from .rl_core import load_checkpoint
from .scenario import SCHEMA_VERSION, Scenario, generate_scenario

log = logging.getLogger("evsim")

LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _fail(code: int, kind: str, message: str, **extra) -> int:
    line = {"code": code, "error": kind, "message": message, **{k: v for k, v in extra.items() if v is not None}}
    sys.stderr.write(json.dumps(line, sort_keys=True) + "\n")
    return code


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        data = read_json(path)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}", field="config") from None
    return RunConfig.from_dict(data)


def resolve_seed(seed: int | None) -> int:
    if seed is None:
        seed = int.from_bytes(os.urandom(4), "little")
        log.warning("no --seed given; using derived seed %d", seed)
    return seed


def _campaign_cfg(run: RunConfig, args) -> CampaignConfig:
    d = run.campaign.to_dict()
    if getattr(args, "episodes", None) is not None:
        d["episodes"] = args.episodes
    d["seed"] = args.seed
    return CampaignConfig(**d)


# -- subcommands --------------------------------------------------------------------

def cmd_gen(args) -> int:
    run = load_config(args.config)
    scen = generate_scenario(run.scenario, args.seed)
    scen.save(args.out)
    log.info("wrote %s (%d agents, %d chargers)", args.out, len(scen.agents), len(scen.chargers))
    return 0


def cmd_train(args) -> int:
    run = load_config(args.config)
    cfg = _campaign_cfg(run, args)
    scen = Scenario.load(args.scenario)

    def progress(res, dt):
        log.info("episode %d eps=%.3f %.2fs", res.episode, res.epsilon, dt)

    run_campaign(cfg, scen, args.out, resume=not args.no_resume, progress=progress)
    return 0


def cmd_simulate(args) -> int:
    run = load_config(args.config)
    cfg = _campaign_cfg(run, args)
    scen = Scenario.load(args.scenario)
    policies, extra = load_checkpoint(args.checkpoint)
    out = simulate(scen, policies, cfg, episode=int(extra.get("next_episode", 0)))
    res = out["result"]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "result.json", dump_json(res.to_dict()))
    atomic_write_text(out_dir / "usage.json", dump_json(res.usage))
    atomic_write_text(out_dir / "traces.ndjson", "".join(json.dumps(t, sort_keys=True) + "\n" for t in res.traces))
    return 0


def _reference_usage(args, results):
    if args.reference:
        return UsagePattern.from_dict(read_json(args.reference))
    ep = args.reference_episode if args.reference_episode is not None else results[-1].episode
    for r in results:
        if r.episode == ep:
            return UsagePattern.from_dict(r.usage)
    raise InvalidConfig(f"campaign has no episode {ep}", field="reference_episode")


def cmd_validate(args) -> int:
    results = load_results(args.campaign)
    if not results:
        raise InvalidConfig(f"no episodes under {args.campaign}", field="campaign")
    scen = Scenario.load(args.scenario)
    ref = _reference_usage(args, results)
    ids = [c.charger_id for c in scen.chargers]
    curve = validation_curve([(r.episode, UsagePattern.from_dict(r.usage)) for r in results], ref, ids,
                             interval=args.interval, max_lag=args.max_lag)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "spatial_r", "temporal_r_peak", "lag"])
    for p in curve:
        w.writerow([p.episode, repr(p.spatial_r), repr(p.temporal_r_peak), p.lag])
    atomic_write_text(args.out, buf.getvalue())
    return 0


def _episode(args):
    results = load_results(args.campaign)
    if not results:
        raise InvalidConfig(f"no episodes under {args.campaign}", field="campaign")
    ep = results[-1].episode if args.episode is None else args.episode
    for r in results:
        if r.episode == ep:
            return r
    raise InvalidConfig(f"campaign has no episode {ep}", field="episode")


def cmd_analyze(args) -> int:
    scen = Scenario.load(args.scenario)
    if args.what == "clusters":
        groups = cluster_drivers(scen.agents, args.seed)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent_id", "cluster", "label", "purpose", "total_distance", "initial_soc", "tcd", "cd"])
        for a in scen.agents:
            c = groups.cluster_of[a.agent_id]
            w.writerow([a.agent_id, c, groups.labels[c], a.purpose, repr(a.total_distance), repr(a.soc), repr(a.tcd), repr(a.cd)])
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "assignments.csv", buf.getvalue())
        atomic_write_text(out / "centroids.json", dump_json({
            "schema_version": SCHEMA_VERSION, "features": list(groups.features.columns),
            "labels": {str(c): n for c, n in groups.labels.items()},
            "centroids_raw": {str(c): v for c, v in groups.centroids_raw().items()},
            "centroids_normalized": {str(c): v for c, v in groups.centroids_normalized().items()},
            "group_sizes": {f"{c}-{p}": len(ids) for (c, p), ids in sorted(groups.groups.items())},
        }))
        return 0
    res = _episode(args)
    if args.what == "soc":
        hexmap = hex_aggregate(node_observations(scen.graph, res.soc_observations), args.cell_area)
        try:
            labels = low_soc_categories(hexmap).labels
        except EvsimError:
            labels = None
        doc = hexmap.to_geojson(labels)
        doc["schema_version"] = SCHEMA_VERSION
        doc["episode"] = res.episode
        atomic_write_text(args.out, dump_json(doc))
        return 0
    report = risk_areas(node_mean_soc(res.soc_observations), scen.chargers, scen.graph, args.buffer, args.seed)
    doc = report.to_dict()
    doc["schema_version"] = SCHEMA_VERSION
    doc["episode"] = res.episode
    atomic_write_text(args.out, dump_json(doc))
    return 0


def _calibration_run(job):
    cfg_dict, scen_path, param, value, seed = job
    cfg = with_rl(CampaignConfig(**cfg_dict), **{param: value})
    cfg = CampaignConfig(**{**cfg.to_dict(), "seed": seed, "write_traces": False})
    scen = Scenario.load(scen_path)
    results, _ = run_campaign(cfg, scen, None)
    return param, value, seed, [sum(r.train_reward.values()) for r in results]


def delta_variance(rewards) -> float:
    """Variance of episode-to-episode changes in a reward curve."""
    return float(np.var(np.diff(np.asarray(rewards, dtype=float))))


def cmd_calibrate(args) -> int:
    run = load_config(args.config)
    values = calibration_values(args.param)
    cfg = _campaign_cfg(run, args)
    if args.episodes is None:
        cfg = CampaignConfig(**{**cfg.to_dict(), "episodes": run.calibrate.episodes})
    seeds = [args.seed] if args.seeds is None else args.seeds
    jobs = [(cfg.to_dict(), args.scenario, args.param, v, s) for v in values for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            outs = list(ex.map(_calibration_run, jobs))
    else:
        outs = [_calibration_run(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "seed", "episode", "train_reward"])
    summary = []
    for param, value, seed, curve in outs:
        for e, r in enumerate(curve):
            w.writerow([param, repr(value), seed, e, repr(r)])
        summary.append({"param": param, "value": value, "seed": seed,
                        "delta_variance": delta_variance(curve), "mean_reward": float(np.mean(curve))})
    atomic_write_text(out / "curves.csv", buf.getvalue())
    atomic_write_text(out / "summary.json", dump_json({"schema_version": SCHEMA_VERSION, "param": args.param,
                                                        "values": list(values), "runs": summary}))
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evsim", description="EV charging agent simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, scenario=True):
        sp.add_argument("--config", help="run configuration JSON")
        sp.add_argument("--seed", type=int, help="seed for every random draw")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON")

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    common(g, scenario=False)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="run a training campaign")
    common(t)
    t.add_argument("--episodes", type=int)
    t.add_argument("--out", required=True, help="campaign directory")
    t.add_argument("--no-resume", action="store_true", help="ignore an existing checkpoint")

    s = sub.add_parser("simulate", help="simulation phase only, under a checkpoint")
    common(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)

    v = sub.add_parser("validate", help="correlation curves against a reference usage pattern")
    common(v)
    v.add_argument("--campaign", required=True)
    ref = v.add_mutually_exclusive_group()
    ref.add_argument("--reference", help="usage JSON file")
    ref.add_argument("--reference-episode", type=int)
    v.add_argument("--interval", type=float, default=15.0)
    v.add_argument("--max-lag", type=int, default=8)
    v.add_argument("--out", required=True)

    a = sub.add_parser("analyze", help="clusters, hexagonal SOC map or risk areas")
    a_sub = a.add_subparsers(dest="what", parser_class=_Parser)
    ac = a_sub.add_parser("clusters")
    common(ac)
    ac.add_argument("--out", required=True, help="output directory")
    asoc = a_sub.add_parser("soc")
    common(asoc)
    asoc.add_argument("--campaign", required=True)
    asoc.add_argument("--episode", type=int)
    asoc.add_argument("--cell-area", type=float, default=HEX_AREA_FINE)
    asoc.add_argument("--out", required=True)
    ar = a_sub.add_parser("risk")
    common(ar)
    ar.add_argument("--campaign", required=True)
    ar.add_argument("--episode", type=int)
    ar.add_argument("--buffer", type=float, default=1000.0, choices=[500.0, 1000.0, 1500.0])
    ar.add_argument("--out", required=True)

    c = sub.add_parser("calibrate", help="sweep one hyperparameter over its calibration grid")
    common(c)
    c.add_argument("--param", required=True)
    c.add_argument("--episodes", type=int)
    c.add_argument("--seeds", type=int, nargs="+")
    c.add_argument("--out", required=True)
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "simulate": cmd_simulate, "validate": cmd_validate,
            "analyze": cmd_analyze, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    level = LEVELS.get(os.environ.get("EVSIM_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
        if args.command == "analyze" and args.what is None:
            parser.error("analyze needs one of: clusters, soc, risk")
    except UsageError as exc:
        first, _, usage = str(exc).partition("\n")
        sys.stderr.write(usage + "\n")
        return _fail(1, "UsageError", first)
    args.seed = resolve_seed(args.seed)
    try:
        return COMMANDS[args.command](args)
    except InvalidConfig as exc:
        return _fail(2, exc.kind_name, str(exc), field=exc.field)
    except EvsimError as exc:
        return _fail(3, exc.kind_name, str(exc))
    except (OSError, ValueError, KeyError) as exc:
        return _fail(3, type(exc).__name__, str(exc))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
