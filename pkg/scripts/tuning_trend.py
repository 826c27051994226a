"""Median validation win rate of NTBEA-tuned BMRH against a frozen opponent, per tuning budget.

    python scripts/tuning_trend.py --budgets 50 200 1000 --repetitions 10 --turn-budget 100 --out trend.csv
"""

import argparse
import csv
import logging

from r2.harness import TuningTarget, resolve_agent, tuning_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--budgets", type=int, nargs="+", default=[50, 200, 1000])
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--validation-games", type=int, default=100)
    ap.add_argument("--opponent", default="BMRH", help="built-in name, shipped agent or spec file")
    ap.add_argument("--mapping", default=None, help="tune EF weights too: hc or id")
    ap.add_argument("--mixer", default="linear")
    ap.add_argument("--degree", type=int, default=1)
    ap.add_argument("--turn-budget", type=int, default=100)
    ap.add_argument("--seed", type=int, default=6)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="trend.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    target = TuningTarget(args.mapping, args.mixer, args.degree)
    points = tuning_trend(args.budgets, args.repetitions, args.validation_games, resolve_agent(args.opponent),
                          target, seed=args.seed, turn_budget=args.turn_budget, jobs=args.jobs,
                          progress=logging.info)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ntbea_budget", "repetition", "win_pct"])
        for p in points:
            for rep, rate in enumerate(p.win_rates):
                w.writerow([p.ntbea_budget, rep, f"{100 * rate:.4f}"])
    for p in points:
        print(f"budget {p.ntbea_budget:>6}: median {100 * p.median:5.1f}%")


if __name__ == "__main__":
    main()
