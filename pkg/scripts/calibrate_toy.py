#!/usr/bin/env python3
"""Sweep one hyperparameter grid on the toy scenario and rank the settings by
the variance of episode-to-episode reward changes.

    python3 scripts/calibrate_toy.py --param learning_rate [--episodes 150] [--jobs 1]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from evsim.cli import main as evsim
from evsim.io import read_json

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--param", default="learning_rate")
    ap.add_argument("--config", default=str(ROOT / "configs" / "toy.json"))
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    out = Path(args.out or tempfile.mkdtemp(prefix="evsim-cal-"))
    out.mkdir(parents=True, exist_ok=True)
    run = read_json(args.config)
    scen = out / "scenario.json"
    rc = evsim(["gen", "--config", args.config, "--seed", str(run.get("scenario_seed", 0)), "--out", str(scen)])
    if rc:
        sys.exit(rc)
    cmd = ["calibrate", "--config", args.config, "--scenario", str(scen), "--param", args.param,
           "--seed", str(run.get("campaign", {}).get("seed", 0)), "--jobs", str(args.jobs), "--out", str(out / "cal")]
    if args.episodes:
        cmd += ["--episodes", str(args.episodes)]
    rc = evsim(cmd)
    if rc:
        sys.exit(rc)
    summary = read_json(out / "cal" / "summary.json")
    for r in sorted(summary["runs"], key=lambda r: r["delta_variance"]):
        print(f"{r['param']}={r['value']:<8} seed={r['seed']}  delta variance {r['delta_variance']:.4f}  "
              f"mean reward {r['mean_reward']:.3f}")
    print(f"curves: {out / 'cal' / 'curves.csv'}")
    print(json.dumps({"out": str(out)}))


if __name__ == "__main__":
    main()
