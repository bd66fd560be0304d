#!/usr/bin/env python3
"""Multi-instance searcher versus a single instance, over several seeds.

Prints win share, success rate and repeated-transaction rate per searcher.
"""

import argparse
from pathlib import Path

from latwar.io import load_config
from latwar.latency.simulate import parse_config, simulate

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "latency_war.json"))
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--opportunities", type=int)
    args = ap.parse_args()
    raw = load_config(args.config)
    if args.opportunities:
        raw["n_opportunities"] = args.opportunities
    print(f"{'seed':>4} {'searcher':>8} {'inst':>4} {'win_share':>9} {'success':>8} {'repeated':>8}")
    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = parse_config({**raw, "seed": seed}, Path(args.config).parent)
        outcome = simulate(cfg)
        for sid, s in outcome.summary()["searchers"].items():
            print(f"{seed:>4} {sid:>8} {s['n_instances']:>4} {s['win_share']:>9.4f} "
                  f"{s['success_rate']:>8.4f} {s['repeated_tx_rate']:>8.3f}")


if __name__ == "__main__":
    main()
