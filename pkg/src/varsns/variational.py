"""Variational observability along a simulated trajectory.

Perturbations of the initial state propagate as ``dx_k = Phi_k dx_0`` with
``Phi_k`` the product of per-step Jacobians. Sensor ``j`` measures state ``j``,
so its Gramian contribution is ``sum_k Phi_k[j, :]^T Phi_k[j, :]`` and the
Gramian of a sensor set is the sum of its members' contributions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .integrator import IrkConfig, Trajectory, step_jacobian
from .model import Model

__all__ = [
    "TransitionStack",
    "GramianContributions",
    "transition_matrices",
    "observability_matrix",
    "sensor_contributions",
    "gramian_of_set",
]


@dataclass(frozen=True)
class TransitionStack:
    """``phis[k] = d x_k / d x_0`` for ``k = 0 .. N-1``."""

    phis: np.ndarray

    @property
    def steps(self) -> int:
        return self.phis.shape[0]

    @property
    def dimension(self) -> int:
        return self.phis.shape[1]


def transition_matrices(model: Model, traj: Trajectory, cfg: IrkConfig) -> TransitionStack:
    """Chain per-step Jacobians along ``traj``: ``Phi_k = J_{k-1} Phi_{k-1}``."""
    n = traj.dimension
    phis = np.empty((traj.steps, n, n))
    phis[0] = np.eye(n)
    for k in range(1, traj.steps):
        phis[k] = step_jacobian(model, traj.states[k - 1], cfg) @ phis[k - 1]
    return TransitionStack(phis)


def _sorted_members(S, n) -> list[int]:
    members = sorted(set(int(j) for j in S))
    for j in members:
        if not 0 <= j < n:
            raise ConfigError(f"sensor index {j} out of range 0..{n - 1}")
    return members


def observability_matrix(stack: TransitionStack, sensor_set: Iterable[int]) -> np.ndarray:
    """Stack ``C_S Phi_k`` for ``k = 0 .. N-1``; shape ``(N * |S|, n_x)``.

    ``C_S`` has one unit row per sensor, in ascending sensor order.
    """
    members = _sorted_members(sensor_set, stack.dimension)
    n = stack.dimension
    if not members:
        return np.zeros((0, n))
    return stack.phis[:, members, :].reshape(stack.steps * len(members), n)


def _snap_to_grid(mats: list[np.ndarray]) -> list[np.ndarray]:
    """Round every entry to a shared power-of-two grid.

    The grid is coarse enough that any sum of up to ``n_x * |V|`` entries is an
    exact multiple of it below 2**53, so sums of contributions are exact and
    independent of summation order. The relative perturbation is below
    ``n_x * |V| * 4.5e-16`` of the largest entry.
    """
    if not mats:
        return mats
    biggest = max(float(np.max(np.abs(m))) for m in mats)
    if biggest == 0.0 or not math.isfinite(biggest):
        return mats
    terms = mats[0].shape[0] * len(mats)
    h = 2.0 ** (math.ceil(math.log2(terms * biggest)) - 52)
    return [np.round(m / h) * h for m in mats]


class GramianContributions:
    """Per-sensor Gramian contributions ``V_o(j)`` over a ground set.

    Matrices are symmetrized and snapped to a common dyadic grid on
    construction, so ``gramian(A | B) == gramian(A) + gramian(B)`` holds
    bit-for-bit for disjoint ``A`` and ``B``.
    """

    def __init__(self, per_sensor: Mapping[int, np.ndarray], ground_set: Sequence[int] | None = None):
        if ground_set is None:
            ground_set = sorted(per_sensor)
        ground = [int(j) for j in ground_set]
        if len(set(ground)) != len(ground):
            raise ConfigError("ground set contains duplicates")
        if sorted(ground) != sorted(int(j) for j in per_sensor):
            raise ConfigError("ground set and contribution keys differ")
        if not ground:
            raise ConfigError("ground set is empty")
        mats = []
        n = None
        for j in ground:
            m = np.array(per_sensor[j], dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError(f"contribution {j} is not square: shape {m.shape}")
            if n is None:
                n = m.shape[0]
            elif m.shape != (n, n):
                raise ConfigError(f"contribution {j} has shape {m.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(m)):
                raise ConfigError(f"contribution {j} has non-finite entries")
            mats.append(0.5 * (m + m.T))
        mats = _snap_to_grid(mats)
        for j, m in zip(ground, mats):
            m.setflags(write=False)
            tr = float(np.trace(m))
            if np.linalg.eigvalsh(m)[0] < -1e-10 * max(tr, 0.0) - 1e-300:
                raise ConfigError(f"contribution {j} is not positive semidefinite")
        self.ground_set = ground
        self.n_x = n
        self.per_sensor = dict(zip(ground, mats))

    def __len__(self):
        return len(self.ground_set)

    def __getitem__(self, j):
        return self.per_sensor[j]

    def gramian(self, S: Iterable[int]) -> np.ndarray:
        """``V_o(S)``, summed in ascending sensor order."""
        members = sorted(set(int(j) for j in S))
        total = np.zeros((self.n_x, self.n_x))
        for j in members:
            try:
                total += self.per_sensor[j]
            except KeyError:
                raise ConfigError(f"sensor {j} is not in the ground set") from None
        return total

    def to_dict(self) -> dict:
        return {
            "ground_set": list(self.ground_set),
            "n_x": self.n_x,
            "contributions": {str(j): self.per_sensor[j].tolist() for j in self.ground_set},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "GramianContributions":
        try:
            ground = [int(j) for j in doc["ground_set"]]
            per = {int(k): np.asarray(v, dtype=float) for k, v in doc["contributions"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed Gramian document: {exc}") from None
        out = cls(per, ground)
        if "n_x" in doc and doc["n_x"] != out.n_x:
            raise ConfigError(f"n_x {doc['n_x']} does not match contribution size {out.n_x}")
        return out


def sensor_contributions(stack: TransitionStack, ground_set: Iterable[int] | None = None) -> GramianContributions:
    """``V_o(j) = sum_k Phi_k[j, :]^T Phi_k[j, :]`` for each sensor ``j``."""
    n = stack.dimension
    ground = list(range(n)) if ground_set is None else [int(j) for j in ground_set]
    per = {}
    for j in ground:
        if not 0 <= j < n:
            raise ConfigError(f"sensor index {j} out of range 0..{n - 1}")
        rows = stack.phis[:, j, :]
        m = rows.T @ rows
        per[j] = 0.5 * (m + m.T)
    return GramianContributions(per, ground)


def gramian_of_set(contrib: GramianContributions, S: Iterable[int]) -> np.ndarray:
    return contrib.gramian(S)
