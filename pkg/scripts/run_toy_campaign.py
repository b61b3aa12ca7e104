#!/usr/bin/env python3
"""Run the bundled toy campaign and print its learning-trend summary.

    python3 scripts/run_toy_campaign.py [--config configs/toy.json] [--out runs/toy]
"""

import argparse
import json
import logging
import time
from pathlib import Path

from evsim.clustering import cluster_drivers
from evsim.config import RunConfig
from evsim.io import read_json
from evsim.orchestrator import learning_summary, run_campaign
from evsim.scenario import generate_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "toy.json"))
    ap.add_argument("--out", help="campaign directory; omit to keep results in memory")
    ap.add_argument("--episodes", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    run = RunConfig.from_dict(read_json(args.config))
    cfg = run.campaign
    if args.episodes:
        cfg = type(cfg)(**{**cfg.to_dict(), "episodes": args.episodes})
    scenario = generate_scenario(run.scenario, run.scenario_seed)
    t0 = time.perf_counter()

    def progress(res, dt):
        if res.episode % 10 == 0:
            logging.info("episode %3d  eps %.3f  %.2fs", res.episode, res.epsilon, dt)

    results, _ = run_campaign(cfg, scenario, args.out, progress=progress)
    summary = learning_summary(results, cluster_drivers(scenario.agents, cfg.seed), scenario)
    summary["seconds"] = round(time.perf_counter() - t0, 1)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
