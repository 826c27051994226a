"""``r2 play|tune|validate|roundrobin|multi --spec <json> --out <dir> --seed <int> [--jobs <int>]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from r2 import harness
from r2.harness import (
    DEFAULT_TURN_BUDGET,
    MatchResult,
    TuningTarget,
    resolve_agent,
    resolve_params,
)
from r2.ntbea import NTBEAConfig

log = logging.getLogger("r2")

COMMANDS = ("play", "tune", "validate", "roundrobin", "multi")


def fmt(x: Any) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.4f}"
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_results(path: Path, results: Sequence[MatchResult]) -> None:
    players = max(len(r.points) for r in results) if results else 0
    header = ["game", "seed", *[f"agent{i}" for i in range(players)], *[f"points{i}" for i in range(players)],
              "winner", "tie", "turns", "capped", "stalled", "max_budget_used", "illegal_actions"]
    rows = []
    for r in results:
        rows.append([r.game, r.seed, *r.agents, *r.points, r.winner, r.tie, r.turns, r.capped, r.stalled,
                     r.max_budget_used, r.illegal_actions])
    write_csv(path, header, rows)


def write_validation(path: Path, vals: Sequence[harness.Validation]) -> None:
    rows = [[v.candidate, v.opponent, v.games, v.wins, v.ties, v.losses, 100 * v.win_rate, 100 * v.half_width]
            for v in vals]
    write_csv(path, ["candidate", "opponent", "games", "wins", "ties", "losses", "win_pct", "ci95_half_width"], rows)


def cmd_play(spec: dict, out: Path, seed: int, jobs: int, base: Path) -> None:
    params = resolve_params(spec.get("params"), base)
    agents = [resolve_agent(a, base) for a in spec["agents"]]
    n = int(spec.get("games", 1))
    budget = int(spec.get("turn_budget", DEFAULT_TURN_BUDGET))
    tasks = [
        harness.GameTask(g, [a.to_json() for a in agents], params.to_json(), harness.derive_seed(seed, "play", g),
                         budget, spec.get("determinize", True))
        for g in range(n)
    ]
    results = harness.run_tasks(tasks, jobs)
    write_results(out / "results.csv", results)
    for r in results:
        log.info("game %d: points %s winner %s turns %d", r.game, r.points, r.winner, r.turns)


def cmd_validate(spec: dict, out: Path, seed: int, jobs: int, base: Path) -> None:
    params = resolve_params(spec.get("params"), base)
    cand = resolve_agent(spec["candidate"], base)
    opp = resolve_agent(spec["opponent"], base)
    budget = int(spec.get("turn_budget", DEFAULT_TURN_BUDGET))
    v, results = harness.validate(cand, opp, int(spec["games"]), params, seed, budget, jobs)
    write_results(out / "results.csv", results)
    write_validation(out / "validation.csv", [v])
    log.info("%s vs %s: %.1f%% +- %.1f over %d games", v.candidate, v.opponent, 100 * v.win_rate,
             100 * v.half_width, v.games)


def cmd_roundrobin(spec: dict, out: Path, seed: int, jobs: int, base: Path) -> None:
    params = resolve_params(spec.get("params"), base)
    agents = [resolve_agent(a, base) for a in spec["agents"]]
    budget = int(spec.get("turn_budget", DEFAULT_TURN_BUDGET))
    table, results = harness.round_robin(agents, int(spec["games_per_pair"]), params, seed, budget, jobs)
    write_results(out / "results.csv", results)
    k = len(agents)
    rows = []
    for i in range(k):
        rows.append([table.names[i], *[table.rate(i, j) if i != j else None for j in range(k)], table.average(i)])
    write_csv(out / "matrix.csv", ["agent", *table.names, "avg"], rows)
    pair_rows = [[table.names[i], table.names[j], table.games[i][j], table.rate(i, j), table.half_width(i, j)]
                 for i in range(k) for j in range(k) if i != j]
    write_csv(out / "pairs.csv", ["row", "column", "games", "win_pct", "ci95_half_width"], pair_rows)
    for i in range(k):
        log.info("%-24s avg %.1f%%", table.names[i], table.average(i))


def cmd_multi(spec: dict, out: Path, seed: int, jobs: int, base: Path) -> None:
    k = int(spec.get("num_opponents", 3))
    params = resolve_params(spec.get("params", k + 1), base)
    cand = resolve_agent(spec["candidate"], base)
    opp = resolve_agent(spec["opponent"], base)
    budget = int(spec.get("turn_budget", DEFAULT_TURN_BUDGET))
    baseline = spec.get("baseline")
    m, results = harness.multi_opponent(cand, opp, k, int(spec["games"]), baseline, params, seed, budget, jobs)
    write_results(out / "results.csv", results)
    v = m.validation
    write_csv(
        out / "multi.csv",
        ["candidate", "opponent", "players", "games", "wins", "ties", "losses", "win_pct", "ci95_half_width",
         "uniform_target", "baseline", "delta"],
        [[v.candidate, v.opponent, m.num_players, v.games, v.wins, v.ties, v.losses, m.win_pct,
          100 * v.half_width, m.target, None if baseline is None else float(baseline), m.delta]],
    )
    log.info("%s vs %dx %s: %.1f%% (target %.1f%%)", v.candidate, k, v.opponent, m.win_pct, m.target)


def cmd_tune(spec: dict, out: Path, seed: int, jobs: int, base: Path) -> None:
    params = resolve_params(spec.get("params"), base)
    target = TuningTarget.from_json(spec.get("target"))
    opp = resolve_agent(spec["opponent"], base)
    budget = int(spec.get("turn_budget", DEFAULT_TURN_BUDGET))
    cfg = NTBEAConfig(**spec.get("ntbea", {}))
    reps = int(spec.get("repetitions", 1))
    space = target.search_space()
    log.info("tuning %s: %d-dim space, NTBEA budget %d, %d repetitions", target.label(), len(space), cfg.budget, reps)
    runs = harness.tune(target, opp, cfg, reps, params, seed, budget, jobs)
    rows = [[run.repetition, it, *cand, f] for run in runs for it, cand, f in run.history]
    write_csv(out / "tuning.csv", ["repetition", "iteration", *space.names, "fitness"], rows)
    (out / "agent.json").write_text(json.dumps([r.spec.to_json() for r in runs], indent=2) + "\n", encoding="utf-8")
    n_val = int(spec.get("validation_games", 0))
    if n_val:
        vals = []
        for run in runs:
            v, _ = harness.validate(run.spec, opp, n_val, params, harness.derive_seed(seed, "val", run.repetition),
                                    budget, jobs)
            vals.append(v)
        write_validation(out / "validation.csv", vals)


HANDLERS = {
    "play": cmd_play,
    "tune": cmd_tune,
    "validate": cmd_validate,
    "roundrobin": cmd_roundrobin,
    "multi": cmd_multi,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r2", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--spec", required=True, help="experiment spec JSON file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides the seed in the JSON file)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    spec_path = Path(args.spec)
    spec = json.loads(spec_path.read_text(encoding="utf-8"))
    kind = spec.get("kind", args.command)
    if kind != args.command and not (kind == "multiopponent" and args.command == "multi"):
        print(f"spec kind {kind!r} does not match command {args.command!r}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    HANDLERS[args.command](spec, out, seed, args.jobs, spec_path.parent)
    return 0


if __name__ == "__main__":
    sys.exit(main())
