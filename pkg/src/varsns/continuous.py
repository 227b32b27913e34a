"""Multilinear extension of a set function and the continuous greedy method.

A fractional point ``x`` assigns each ground element an inclusion probability;
``F(x)`` is the expected value of ``f`` on the random set that includes element
``s`` independently with probability ``x[s]``. Coordinates are positions in the
(sorted) ground set.

Random sets are drawn from counter-based substreams: the uniforms for sample
``i`` depend only on ``(seed, i)``, so estimates are reproducible and sampling
order does not matter. Reusing the same sample indices at two points gives
common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .greedy import SelectionResult
from .metrics import Metric, MetricFunction, set_function_table
from .variational import GramianContributions

__all__ = [
    "FractionalPoint",
    "SamplerConfig",
    "MultilinearExtension",
    "sample_set",
    "exact_F",
    "estimate_F",
    "gradient_samples",
    "estimate_gradient",
    "estimate_hessian_entry",
    "exact_hessian_entry",
    "continuous_greedy",
    "pipage_round",
    "continuous_select",
    "EXACT_LIMIT",
]

EXACT_LIMIT = 20
_SNAP = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    samples_K: int = 64
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.samples_K, bool) or not isinstance(self.samples_K, int) or self.samples_K < 1:
            raise ConfigError(f"samples_K must be a positive integer, got {self.samples_K!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass
class FractionalPoint:
    x: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.clip(np.asarray(self.x, dtype=float), 0.0, 1.0)

    def support(self) -> list[int]:
        return [i for i, v in enumerate(self.x) if v > 0.5]


def _ground(f, ground_set):
    if ground_set is None:
        ground_set = getattr(f, "ground_set", None)
        if ground_set is None:
            raise ConfigError("ground set not given and the set function has no ground_set attribute")
    return list(ground_set)


def _check_point(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ConfigError(f"fractional point has shape {x.shape}, expected ({n},)")
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ConfigError("fractional point must lie in [0, 1]")
    return x


def _uniforms(seed: int, sample_index: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sample_index,)))
    return rng.random(n)


def _sample_mask(x, sample_index, seed):
    return _uniforms(seed, sample_index, x.shape[0]) < x


def sample_set(x, sample_index: int, seed: int) -> frozenset:
    """Positions included in random set number ``sample_index``."""
    x = np.asarray(x, dtype=float)
    return frozenset(np.nonzero(_sample_mask(x, sample_index, seed))[0].tolist())


def _subset_weights(x):
    # weights[mask] = prod_{i in mask} x_i prod_{i not in mask} (1 - x_i)
    w = np.ones(1)
    for xi in x:
        w = np.concatenate([w * (1.0 - xi), w * xi])
    return w


class MultilinearExtension:
    """Exact multilinear extension backed by a table of all subset values."""

    def __init__(self, f: Callable, ground_set: Sequence[int] | None = None, limit: int = EXACT_LIMIT):
        self.f = f
        self.ground = _ground(f, ground_set)
        if len(self.ground) > limit:
            raise ConfigError(f"exact multilinear extension needs |V| <= {limit}, got {len(self.ground)}")
        self._table = None

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            self._table = set_function_table(self.f, self.ground)
        return self._table

    def __call__(self, x) -> float:
        x = _check_point(x, len(self.ground))
        return float(_subset_weights(x) @ self.table)


def exact_F(f: Callable, x, ground_set: Sequence[int] | None = None) -> float:
    """``F(x)`` by summing over every subset (``|V| <= 20``)."""
    return MultilinearExtension(f, ground_set)(x)


def _members(mask, ground):
    return frozenset(ground[i] for i in np.nonzero(mask)[0])


def estimate_F(f: Callable, x, cfg: SamplerConfig, ground_set=None, start: int = 0) -> float:
    """Sample mean of ``f`` over ``cfg.samples_K`` random sets."""
    ground = _ground(f, ground_set)
    x = _check_point(x, len(ground))
    total = 0.0
    for i in range(start, start + cfg.samples_K):
        total += f(_members(_sample_mask(x, i, cfg.seed), ground))
    return total / cfg.samples_K


def gradient_samples(f: Callable, x, cfg: SamplerConfig, ground_set=None, start: int = 0) -> np.ndarray:
    """Per-sample values of ``f(S + s) - f(S - s)``, shape ``(K, |V|)``.

    One random set per row is shared by all coordinates.
    """
    ground = _ground(f, ground_set)
    n = len(ground)
    x = _check_point(x, n)
    out = np.empty((cfg.samples_K, n))
    for row, i in enumerate(range(start, start + cfg.samples_K)):
        mask = _sample_mask(x, i, cfg.seed)
        base = f(_members(mask, ground))
        for s in range(n):
            flipped = mask.copy()
            flipped[s] = not mask[s]
            other = f(_members(flipped, ground))
            out[row, s] = base - other if mask[s] else other - base
    return out


def estimate_gradient(f: Callable, x, cfg: SamplerConfig, ground_set=None, start: int = 0) -> np.ndarray:
    return gradient_samples(f, x, cfg, ground_set, start).mean(axis=0)


def _four_term(f, mask, a, b, ground):
    m = mask.copy()
    m[a] = m[b] = True
    both = f(_members(m, ground))
    m[a] = False
    only_b = f(_members(m, ground))
    m[a], m[b] = True, False
    only_a = f(_members(m, ground))
    m[a] = False
    neither = f(_members(m, ground))
    return both - only_b - only_a + neither


def estimate_hessian_entry(f: Callable, x, a: int, b: int, cfg: SamplerConfig, ground_set=None, start: int = 0) -> float:
    """Sampled mixed second derivative of ``F`` in coordinates ``a != b``."""
    if a == b:
        raise ConfigError("mixed derivative needs two distinct coordinates")
    ground = _ground(f, ground_set)
    x = _check_point(x, len(ground))
    total = 0.0
    for i in range(start, start + cfg.samples_K):
        total += _four_term(f, _sample_mask(x, i, cfg.seed), a, b, ground)
    return total / cfg.samples_K


def exact_hessian_entry(f: Callable, x, a: int, b: int, ground_set=None) -> float:
    """Exact mixed second derivative (``F`` is affine in each coordinate)."""
    if a == b:
        raise ConfigError("mixed derivative needs two distinct coordinates")
    ext = MultilinearExtension(f, ground_set)
    x = _check_point(x, len(ext.ground))

    def at(va, vb):
        y = x.copy()
        y[a], y[b] = va, vb
        return ext(y)

    return at(1.0, 1.0) - at(0.0, 1.0) - at(1.0, 0.0) + at(0.0, 0.0)


def _top_r(weights, r):
    order = sorted(range(len(weights)), key=lambda s: (-weights[s], s))
    return sorted(order[:r])


def continuous_greedy(f: Callable, ground_set: Sequence[int] | None, r: int, cfg: SamplerConfig) -> FractionalPoint:
    """Ascend ``F`` inside the cardinality polytope in ``r`` steps of size ``1/r``.

    Each step estimates the coordinate weights ``E[f(S+s) - f(S-s)]`` from
    ``K`` shared random sets, takes the ``r`` heaviest coordinates (ties to the
    lower index) and moves ``x`` towards their indicator. Round ``i`` uses
    sample indices ``i*K .. i*K + K - 1``.
    """
    ground = _ground(f, ground_set)
    n = len(ground)
    if isinstance(r, bool) or not isinstance(r, int) or not 1 <= r <= n:
        raise ConfigError(f"cardinality r must be an integer in 1..{n}, got {r!r}")
    counts = np.zeros(n, dtype=np.int64)
    history = []
    for it in range(r):
        x = counts / r
        w = estimate_gradient(f, x, cfg, ground, start=it * cfg.samples_K)
        best = _top_r(w, r)
        counts[best] = np.minimum(counts[best] + 1, r)
        history.append({"iteration": it + 1, "weights": w.tolist(), "direction": [ground[s] for s in best]})
    return FractionalPoint(counts / r, history)


def _snap(v):
    if abs(v) <= _SNAP:
        return 0.0
    if abs(v - 1.0) <= _SNAP:
        return 1.0
    return v


def pipage_round(F: Callable, x, r: int, history: list | None = None) -> list[int]:
    """Round a point with ``sum(x) == r`` to an ``r``-set without lowering ``F``.

    Repeatedly takes the two lowest-indexed fractional coordinates ``a < b``
    and moves along ``e_a - e_b`` to whichever end of the feasible segment has
    the larger ``F`` (ties move ``a`` up). Along that direction ``F`` is convex
    for submodular ``f``, so the better end is no worse than the start.
    Returns the support positions.
    """
    x = np.array([_snap(float(v)) for v in np.asarray(x, dtype=float)])
    n = x.shape[0]
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ConfigError("fractional point must lie in [0, 1]")
    if abs(x.sum() - r) > 1e-9:
        raise ConfigError(f"coordinates sum to {x.sum()!r}, expected {r}")
    for _ in range(2 * n + 1):
        frac = [i for i in range(n) if 0.0 < x[i] < 1.0]
        if len(frac) < 2:
            if frac:
                x[frac[0]] = float(round(x[frac[0]]))
            support = [i for i in range(n) if x[i] == 1.0]
            if len(support) != r:
                raise NumericalError(f"pipage rounding ended with {len(support)} elements, expected {r}")
            return support
        a, b = frac[0], frac[1]
        up = x.copy()
        t = min(1.0 - x[a], x[b])
        up[a], up[b] = _snap(x[a] + t), _snap(x[b] - t)
        down = x.copy()
        t = min(x[a], 1.0 - x[b])
        down[a], down[b] = _snap(x[a] - t), _snap(x[b] + t)
        f_up, f_down = F(up), F(down)
        x = up if f_up >= f_down else down
        if history is not None:
            history.append({"pair": [a, b], "value": max(f_up, f_down), "moved_up": bool(f_up >= f_down)})
    raise NumericalError("pipage rounding did not terminate within 2|V| steps")


def continuous_select(
    metric: Metric,
    contrib: GramianContributions,
    r: int,
    cfg: SamplerConfig,
    exact_f: bool | None = None,
) -> SelectionResult:
    """Continuous greedy followed by pipage rounding.

    Rounding uses the exact extension when ``|V| <= 20`` (or when ``exact_f``
    is True) and otherwise a sampled estimate on one fixed block of sample
    indices.
    """
    f = MetricFunction(metric, contrib)
    ground = sorted(contrib.ground_set)
    point = continuous_greedy(f, ground, r, cfg)
    use_exact = len(ground) <= EXACT_LIMIT if exact_f is None else exact_f
    if use_exact:
        F = MultilinearExtension(f, ground)
    else:
        start = r * cfg.samples_K

        def F(y):
            return estimate_F(f, y, cfg, ground, start=start)

    steps: list = []
    fractional_value = F(point.x)
    support = pipage_round(F, point.x, r, steps)
    selected = [ground[i] for i in support]
    gains, prefix, prev = [], [], 0.0
    for s in selected:
        prefix.append(s)
        val = f(prefix)
        gains.append(val - prev)
        prev = val
    return SelectionResult(
        selected=selected,
        objective=f(selected),
        gains=gains,
        method="continuous",
        seed=cfg.seed,
        audit={
            "metric": metric.describe(),
            "samples": cfg.samples_K,
            "exact_f": bool(use_exact),
            "fractional": point.x.tolist(),
            "fractional_value": float(fractional_value),
            "rounding_steps": len(steps),
            "iterations": point.history,
        },
    )
