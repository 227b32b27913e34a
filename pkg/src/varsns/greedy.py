"""Cardinality-constrained greedy selection and an exhaustive reference solver."""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .metrics import Metric, MetricFunction
from .variational import GramianContributions

__all__ = ["SelectionResult", "greedy_select", "brute_force_optimum", "BRUTE_FORCE_LIMIT"]

BRUTE_FORCE_LIMIT = 10**6


@dataclass
class SelectionResult:
    selected: list
    objective: float
    gains: list
    method: str
    seed: int | None = None
    audit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "method": self.method,
            "selected": [int(s) for s in self.selected],
            "objective": float(self.objective),
            "gains": [float(g) for g in self.gains],
            "seed": self.seed,
        }
        doc.update(self.audit)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _check_cardinality(r, n):
    if isinstance(r, bool) or not isinstance(r, int) or not 1 <= r <= n:
        raise ConfigError(f"cardinality r must be an integer in 1..{n}, got {r!r}")


def greedy_select(metric: Metric, contrib: GramianContributions, r: int, lazy: bool = True) -> SelectionResult:
    """Add the element with the largest marginal gain, ``r`` times.

    Ties go to the lowest sensor index. With ``lazy=True`` stale gains are
    kept in a priority queue and only re-evaluated when they reach the top;
    for submodular metrics this yields the same selection as the plain loop.
    """
    ground = sorted(contrib.ground_set)
    _check_cardinality(r, len(ground))
    f = MetricFunction(metric, contrib)
    chosen: list[int] = []
    gains: list[float] = []
    current = 0.0

    if not lazy:
        for _ in range(r):
            best, best_gain = None, -math.inf
            for s in ground:
                if s in chosen:
                    continue
                g = f(chosen + [s]) - current
                if g > best_gain:
                    best, best_gain = s, g
            chosen.append(best)
            gains.append(best_gain)
            current = f(chosen)
    else:
        heap = [(-(f([s]) - current), s, 0) for s in ground]
        heapq.heapify(heap)
        for it in range(r):
            while True:
                neg_gain, s, stamp = heapq.heappop(heap)
                if stamp == it:
                    break
                heapq.heappush(heap, (-(f(chosen + [s]) - current), s, it))
            chosen.append(s)
            gains.append(-neg_gain)
            current = f(chosen)

    return SelectionResult(
        selected=chosen,
        objective=current,
        gains=gains,
        method="greedy",
        audit={"metric": metric.describe(), "lazy": lazy},
    )


def brute_force_optimum(metric: Metric, contrib: GramianContributions, r: int, limit: int = BRUTE_FORCE_LIMIT):
    """Exact maximizer over all ``r``-subsets.

    Returns ``(set, value)``; ties go to the lexicographically smallest set.
    """
    ground = sorted(contrib.ground_set)
    _check_cardinality(r, len(ground))
    if math.comb(len(ground), r) > limit:
        raise ConfigError(f"C({len(ground)}, {r}) subsets exceed the enumeration limit {limit}")
    f = MetricFunction(metric, contrib)
    best_set, best_val = None, -math.inf
    for combo in itertools.combinations(ground, r):
        val = f(combo)
        if val > best_val:
            best_set, best_val = combo, val
    return list(best_set), best_val
