"""Sanity ladder: OSLA and BMRH(score) against RND, and BMRH against OSLA.

    python scripts/ladder.py --games 400 --turn-budget 1000
"""

import argparse

from r2.harness import resolve_agent, validate

PAIRS = (("OSLA", "RND", 60), ("BMRH", "RND", 80), ("BMRH", "OSLA", 55))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--games", type=int, default=400)
    ap.add_argument("--turn-budget", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for cand, opp, floor in PAIRS:
        v, results = validate(resolve_agent(cand), resolve_agent(opp), args.games, seed=args.seed,
                              budget=args.turn_budget, jobs=args.jobs)
        mark = "ok" if 100 * v.win_rate >= floor else "BELOW FLOOR"
        print(f"{cand:>5} vs {opp:<5} {100 * v.win_rate:5.1f}% +- {100 * v.half_width:4.1f} "
              f"(floor {floor}%) {mark}; max budget used {max(r.max_budget_used for r in results)}")


if __name__ == "__main__":
    main()
