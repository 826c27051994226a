"""Tune BMRH(score) against OSLA with NTBEA and freeze the result as BMRH*.

    python scripts/make_bmrh_star.py --ntbea-budget 500 --turn-budget 1000 --out src/r2/data/bmrh_star.json
"""

import argparse
import json
import logging
from pathlib import Path

from r2.harness import TuningTarget, resolve_agent, tune, validate
from r2.ntbea import NTBEAConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--ntbea-budget", type=int, default=500)
    ap.add_argument("--turn-budget", type=int, default=1000)
    ap.add_argument("--validation-games", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="src/r2/data/bmrh_star.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    osla = resolve_agent("OSLA")
    [run] = tune(TuningTarget(), osla, NTBEAConfig(budget=args.ntbea_budget), 1, seed=args.seed,
                 budget=args.turn_budget, jobs=args.jobs)
    spec = run.spec
    spec.name = "BMRH*"
    spec.seed = 0
    v, _ = validate(spec, osla, args.validation_games, seed=args.seed + 1, budget=args.turn_budget, jobs=args.jobs)
    logging.info("BMRH* vs OSLA: %.1f%% +- %.1f over %d games", 100 * v.win_rate, 100 * v.half_width, v.games)
    data = spec.to_json()
    data["provenance"] = {
        "opponent": "OSLA",
        "ntbea_budget": args.ntbea_budget,
        "turn_budget": args.turn_budget,
        "seed": args.seed,
        "validation": {"games": v.games, "win_pct": round(100 * v.win_rate, 2)},
    }
    Path(args.out).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
