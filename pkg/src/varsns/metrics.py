"""Observability set functions over Gramian contributions.

``trace`` is modular; ``rank`` and the regularized ``logdet`` are monotone
submodular. All three are normalized so that the empty set scores 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .variational import GramianContributions

__all__ = [
    "Metric",
    "MetricFunction",
    "PropertyReport",
    "evaluate",
    "marginal_gain",
    "check_properties",
    "check_set_function",
    "set_function_table",
]

METRIC_KINDS = ("trace", "rank", "logdet")


@dataclass(frozen=True)
class Metric:
    kind: str
    rank_tol: float = 1e-9
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigError(f"unknown metric {self.kind!r}; choose from {', '.join(METRIC_KINDS)}")
        if not self.rank_tol > 0:
            raise ConfigError(f"rank_tol must be > 0, got {self.rank_tol!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon!r}")

    @classmethod
    def trace(cls):
        return cls("trace")

    @classmethod
    def rank(cls, rank_tol=1e-9):
        return cls("rank", rank_tol=rank_tol)

    @classmethod
    def logdet(cls, epsilon=1e-6):
        return cls("logdet", epsilon=epsilon)

    def describe(self) -> dict:
        if self.kind == "rank":
            return {"kind": "rank", "rank_tol": self.rank_tol}
        if self.kind == "logdet":
            return {"kind": "logdet", "epsilon": self.epsilon}
        return {"kind": "trace"}


def _value_of_gramian(metric: Metric, V: np.ndarray) -> float:
    if metric.kind == "trace":
        return float(np.trace(V))
    if metric.kind == "rank":
        sv = np.linalg.svd(V, compute_uv=False)
        if sv[0] == 0.0:
            return 0.0
        return float(np.count_nonzero(sv > metric.rank_tol * sv[0]))
    n = V.shape[0]
    sign, logdet = np.linalg.slogdet(V + metric.epsilon * np.eye(n))
    if sign <= 0 or not math.isfinite(logdet):
        raise NumericalError("log-determinant factorization failed")
    return float(logdet - n * math.log(metric.epsilon))


def evaluate(metric: Metric, contrib: GramianContributions, S: Iterable[int]) -> float:
    S = set(S)
    if not S:
        return 0.0
    V = contrib.gramian(S)
    try:
        return _value_of_gramian(metric, V)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"{metric.kind} evaluation failed for S={sorted(S)}: {exc}") from None


def marginal_gain(metric: Metric, contrib: GramianContributions, S: Iterable[int], s: int) -> float:
    S = set(S)
    if s in S:
        raise ConfigError(f"element {s} is already in the set")
    if s not in contrib.per_sensor:
        raise ConfigError(f"element {s} is not in the ground set")
    return evaluate(metric, contrib, S | {s}) - evaluate(metric, contrib, S)


class MetricFunction:
    """Memoized set function ``S -> evaluate(metric, contrib, S)``."""

    def __init__(self, metric: Metric, contrib: GramianContributions):
        self.metric = metric
        self.contrib = contrib
        self.ground_set = list(contrib.ground_set)
        self._cache: dict[frozenset, float] = {}

    def __call__(self, S) -> float:
        key = frozenset(S)
        val = self._cache.get(key)
        if val is None:
            val = evaluate(self.metric, self.contrib, key)
            self._cache[key] = val
        return val


def set_function_table(f: Callable[[frozenset], float], ground_set: Sequence[int]) -> np.ndarray:
    """Values of ``f`` on all subsets; bit ``i`` of the index selects ``ground_set[i]``."""
    n = len(ground_set)
    table = np.empty(1 << n)
    for mask in range(1 << n):
        table[mask] = f(frozenset(ground_set[i] for i in range(n) if mask >> i & 1))
    return table


@dataclass
class PropertyReport:
    """Outcome of exhaustive property checks; empty counterexample lists mean pass."""

    ground_set: list
    slack: float
    checks: dict = field(default_factory=dict)
    metric: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "ground_set": self.ground_set,
            "slack": self.slack,
            "passed": self.passed,
            "checks": self.checks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


_MAX_REPORTED = 10


def _members(mask, ground):
    return [ground[i] for i in range(len(ground)) if mask >> i & 1]


def _subset_extreme(values, n, better):
    """For every mask B, the best ``values[A]`` over submasks ``A`` of ``B``."""
    best = values.copy()
    arg = np.arange(values.size)
    masks = np.arange(values.size)
    for bit in range(n):
        hi = masks[(masks >> bit) & 1 == 1]
        lo = hi ^ (1 << bit)
        take = better(best[lo], best[hi])
        best[hi[take]] = best[lo[take]]
        arg[hi[take]] = arg[lo[take]]
    return best, arg


def check_set_function(
    f: Callable[[frozenset], float],
    ground_set: Sequence[int],
    modular: bool = False,
    max_size: int = 12,
    slack: float | None = None,
) -> PropertyReport:
    """Exhaustively check normalization, monotonicity and diminishing returns.

    The diminishing-returns inequality ``f(A+s) - f(A) >= f(B+s) - f(B)`` is
    checked for every ``A <= B`` and ``s`` outside ``B``. With ``modular=True``
    the additive identity ``f(S) = f({}) + sum f({s})`` is checked as well.
    Inequalities may fail by at most ``slack``, which defaults to
    ``1e-9 * (1 + |f(V)|)``.
    """
    ground = [int(j) for j in ground_set]
    n = len(ground)
    if n > max_size:
        raise ConfigError(f"ground set of size {n} exceeds the exhaustive-check limit {max_size}")
    table = set_function_table(f, ground)
    full = (1 << n) - 1
    if slack is None:
        slack = 1e-9 * (1.0 + abs(table[full]))
    report = PropertyReport(ground_set=ground, slack=slack)
    checks = report.checks

    ok = bool(abs(table[0]) <= slack)
    checks["normalized"] = {"passed": ok, "violations": int(not ok), "counterexamples": [] if ok else [{"f_empty": float(table[0])}]}

    best, arg = _subset_extreme(table, n, lambda lo, hi: lo > hi)
    bad = np.nonzero(best > table + slack)[0]
    checks["monotone"] = {
        "passed": bool(bad.size == 0),
        "violations": int(bad.size),
        "counterexamples": [
            {"A": _members(int(arg[b]), ground), "B": _members(int(b), ground), "f_A": float(best[b]), "f_B": float(table[b])}
            for b in bad[:_MAX_REPORTED]
        ],
    }

    violations = []
    count = 0
    masks = np.arange(1 << n)
    for i in range(n):
        bit = 1 << i
        gain = np.full(1 << n, np.inf)
        free = masks[(masks & bit) == 0]
        gain[free] = table[free | bit] - table[free]
        low, arg = _subset_extreme(gain, n, lambda lo, hi: lo < hi)
        bad = free[gain[free] > low[free] + slack]
        count += int(len(bad))
        for b in bad[: max(0, _MAX_REPORTED - len(violations))]:
            a = int(arg[b])
            violations.append(
                {
                    "A": _members(a, ground),
                    "B": _members(int(b), ground),
                    "s": ground[i],
                    "gain_A": float(gain[a]),
                    "gain_B": float(gain[b]),
                }
            )
    checks["submodular"] = {"passed": count == 0, "violations": count, "counterexamples": violations}

    if modular:
        singles = np.array([table[1 << i] - table[0] for i in range(n)])
        bad = []
        for mask in range(1 << n):
            predicted = table[0] + float(np.sum(singles[[i for i in range(n) if mask >> i & 1]]))
            if abs(table[mask] - predicted) > slack:
                bad.append({"S": _members(mask, ground), "f_S": float(table[mask]), "additive": predicted})
        checks["modular"] = {"passed": not bad, "violations": len(bad), "counterexamples": bad[:_MAX_REPORTED]}

    return report


def check_properties(
    metric: Metric, contrib: GramianContributions, max_size: int = 12, slack: float | None = None
) -> PropertyReport:
    f = MetricFunction(metric, contrib)
    report = check_set_function(f, contrib.ground_set, modular=metric.kind == "trace", max_size=max_size, slack=slack)
    report.metric = metric.describe()
    return report
