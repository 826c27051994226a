"""N-Tuple Bandit Evolutionary Algorithm for noisy discrete optimisation.

Candidates are tuples of value indices, one per search-space dimension.
The model keeps a bandit per tuple of dimensions (by default all 1-tuples,
all 2-tuples and the full tuple); each distinct pattern of values on those
dimensions is one arm.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import operator
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from r2.valuefn import WEIGHT_GRID

# added to arm counts so unvisited arms get a large but finite bonus
EPS_COUNT = 1e-6

Candidate = tuple[int, ...]


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[tuple[str, tuple[Any, ...]], ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.dims]
        if len(set(names)) != len(names):
            raise SpaceError("dimension names must be unique")
        for name, values in self.dims:
            if len(values) < 2:
                raise SpaceError(f"dimension {name!r} needs at least 2 values")

    @classmethod
    def of(cls, dims: Sequence[tuple[str, Sequence[Any]]]) -> SearchSpace:
        return cls(tuple((name, tuple(values)) for name, values in dims))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.dims]

    @property
    def sizes(self) -> list[int]:
        return [len(v) for _, v in self.dims]

    def __len__(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    def decode(self, candidate: Candidate) -> dict[str, Any]:
        return {name: values[i] for (name, values), i in zip(self.dims, candidate)}

    def random(self, rng: random.Random) -> Candidate:
        return tuple(rng.randrange(n) for n in self.sizes)

    def to_json(self) -> list[dict[str, Any]]:
        return [{"name": n, "values": list(v)} for n, v in self.dims]

    @classmethod
    def from_json(cls, data: list[dict[str, Any]]) -> SearchSpace:
        return cls.of([(d["name"], d["values"]) for d in data])

    @classmethod
    def load(cls, path: str | Path) -> SearchSpace:
        return cls.from_json(json.loads(Path(path).read_text()))


def combine_spaces(a: SearchSpace, b: SearchSpace) -> SearchSpace:
    clash = set(a.names) & set(b.names)
    if clash:
        raise SpaceError(f"dimension names clash: {sorted(clash)}")
    return SearchSpace(a.dims + b.dims)


def weights_space(n: int, grid: Sequence[float] = WEIGHT_GRID, prefix: str = "w") -> SearchSpace:
    return SearchSpace.of([(f"{prefix}{i}", grid) for i in range(n)])


def tuple_indices(num_dims: int, scheme: str = "1+2+N") -> list[tuple[int, ...]]:
    dims = range(num_dims)
    if scheme == "1+2+N":
        tuples = [(i,) for i in dims] + list(itertools.combinations(dims, 2))
    elif scheme == "1+N":
        tuples = [(i,) for i in dims]
    elif scheme == "all":
        tuples = [c for r in range(1, num_dims + 1) for c in itertools.combinations(dims, r)]
    else:
        raise ValueError(f"unknown tuple scheme {scheme!r}")
    full = tuple(dims)
    if full not in tuples:
        tuples.append(full)
    return tuples


class NTupleModel:
    """Bandit statistics per tuple: pattern -> [count, sum, sum of squares].

    Patterns of 1-tuples are stored under the bare value index.
    """

    def __init__(self, num_dims: int, scheme: str = "1+2+N"):
        self.tuples = tuple_indices(num_dims, scheme)
        self.tables: list[dict[Any, list[float]]] = [{} for _ in self.tuples]
        self._keys = [operator.itemgetter(*idx) for idx in self.tuples]
        self.evaluations = 0

    def add(self, candidate: Candidate, fitness: float) -> None:
        for key, table in zip(self._keys, self.tables):
            k = key(candidate)
            stats = table.get(k)
            if stats is None:
                table[k] = [1, fitness, fitness * fitness]
            else:
                stats[0] += 1
                stats[1] += fitness
                stats[2] += fitness * fitness
        self.evaluations += 1

    def stats(self, tuple_pos: int, pattern: tuple[int, ...]) -> tuple[int, float]:
        k = pattern[0] if len(pattern) == 1 else tuple(pattern)
        s = self.tables[tuple_pos].get(k)
        if s is None:
            return 0, 0.0
        return int(s[0]), s[1] / s[0]

    def mean_estimate(self, candidate: Candidate) -> float:
        """Average pattern mean over the tuples that have seen this pattern."""
        total, seen = 0.0, 0
        for key, table in zip(self._keys, self.tables):
            s = table.get(key(candidate))
            if s is not None:
                total += s[1] / s[0]
                seen += 1
        return total / seen if seen else 0.0


def ucb_estimate(model: NTupleModel, candidate: Candidate, k: float) -> float:
    """Mean over tuples of pattern mean plus ``k * sqrt(ln(N+1) / (n + EPS_COUNT))``."""
    log_n = math.log(model.evaluations + 1)
    unvisited = k * math.sqrt(log_n / EPS_COUNT)
    total = 0.0
    for key, table in zip(model._keys, model.tables):
        s = table.get(key(candidate))
        if s is None:
            total += unvisited
        else:
            n = s[0]
            total += s[1] / n + k * math.sqrt(log_n / (n + EPS_COUNT))
    return total / len(model.tuples)


def mutation_probability(num_dims: int, epsilon: float) -> float:
    """Per-dimension change probability for the non-forced dimensions.

    Chosen so that the chance of changing only the forced dimension is
    ``epsilon``: ``(1 - q) ** (D - 1) == epsilon``.
    """
    if num_dims <= 1:
        return 0.0
    return 1.0 - epsilon ** (1.0 / (num_dims - 1))


def _redraw(rng: random.Random, current: int, size: int) -> int:
    v = rng.randrange(size - 1)
    return v + 1 if v >= current else v


def mutate_neighbor(candidate: Candidate, space: SearchSpace, epsilon: float, rng: random.Random | int) -> Candidate:
    """One uniformly chosen dimension always changes; each other one changes
    with the probability that leaves a single-dimension move with chance ``epsilon``."""
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    sizes = space.sizes
    child = list(candidate)
    forced = rng.randrange(len(sizes))
    q = mutation_probability(len(sizes), epsilon)
    for i, n in enumerate(sizes):
        if i == forced or (q > 0 and rng.random() < q):
            child[i] = _redraw(rng, child[i], n)
    return tuple(child)


@dataclass
class NTBEAConfig:
    k: float = 1.0
    epsilon: float = 0.7
    neighborhood_size: int = 50
    tuple_scheme: str = "1+2+N"
    budget: int = 100

    def __post_init__(self):
        if self.k < 0 or not 0 <= self.epsilon <= 1 or self.budget < 1 or self.neighborhood_size < 1:
            raise ValueError("invalid NTBEA configuration")


@dataclass
class NTBEAResult:
    best: Candidate
    model: NTupleModel
    history: list[tuple[int, Candidate, float]] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.history)


Fitness = Callable[[Candidate, int], float]


def ntbea_optimize(space: SearchSpace, fitness: Fitness, cfg: NTBEAConfig, seed: int, log=None) -> NTBEAResult:
    """Run NTBEA for ``cfg.budget`` fitness evaluations.

    ``fitness(candidate, eval_seed)`` returns one noisy sample.  The returned
    candidate is the evaluated one with the best model mean, not the luckiest
    single sample.  ``log(iteration, candidate, fitness)`` is called after
    each evaluation when given.
    """
    rng = random.Random(seed)
    model = NTupleModel(len(space), cfg.tuple_scheme)
    current = space.random(rng)
    history: list[tuple[int, Candidate, float]] = []
    evaluated: dict[Candidate, None] = {}
    for it in range(cfg.budget):
        f = float(fitness(current, rng.getrandbits(63)))
        model.add(current, f)
        evaluated[current] = None
        history.append((it, current, f))
        if log is not None:
            log(it, current, f)
        if it == cfg.budget - 1:
            break
        neighbours = {mutate_neighbor(current, space, cfg.epsilon, rng) for _ in range(cfg.neighborhood_size)}
        # sorted for a deterministic argmax among equal estimates
        current = max(sorted(neighbours), key=lambda c: ucb_estimate(model, c, cfg.k))
    best = max(evaluated, key=model.mean_estimate)
    return NTBEAResult(best, model, history)


def write_history(history: Sequence[tuple[int, Candidate, float]], space: SearchSpace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *space.names, "fitness"])
        for it, cand, f in history:
            w.writerow([it, *cand, f"{f:.4f}"])
