"""Initial-state estimation from selected-sensor measurements.

Given noiseless measurements of the sensors in ``S`` over the whole horizon,
the initial state is recovered by minimizing ``||y - C_S x(x0)||^2`` over a box
with a projected Levenberg-Marquardt iteration. The Jacobian of the predicted
measurements is ``C_S Phi_k`` from the variational transition matrices.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .integrator import IrkConfig, Trajectory, propagate, simulate
from .model import Model, perturb_initial_state

__all__ = [
    "Bounds",
    "LiftedObservation",
    "EstimateResult",
    "TrialResult",
    "ValidationReport",
    "measure",
    "lifted_residual",
    "estimate_initial_state",
    "estimation_error",
    "default_bounds",
    "validation_run",
    "validation_csv_text",
]


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ConfigError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def default_bounds(x0) -> Bounds:
    """``[0, 10 * max(x0)]`` for every coordinate."""
    x0 = np.asarray(x0, dtype=float)
    top = 10.0 * float(np.max(x0))
    if not top > 0:
        raise ConfigError("default bounds need a positive entry in x0")
    return Bounds(np.zeros_like(x0), np.full_like(x0, top))


@dataclass(frozen=True)
class LiftedObservation:
    """Measurements of the sensors in ``sensor_set`` (ascending) at every step."""

    y_tilde: np.ndarray
    sensor_set: tuple
    dt: float
    steps: int

    def __post_init__(self):
        if self.y_tilde.shape != (self.steps * len(self.sensor_set),):
            raise ConfigError(
                f"measurement vector has length {self.y_tilde.shape}, expected {self.steps * len(self.sensor_set)}"
            )


def measure(traj: Trajectory, sensor_set: Sequence[int]) -> LiftedObservation:
    members = tuple(sorted(set(int(j) for j in sensor_set)))
    y = traj.states[:, list(members)].reshape(-1)
    return LiftedObservation(y.copy(), members, traj.dt, traj.steps)


def _check_obs(cfg, S, obs):
    members = tuple(sorted(set(int(j) for j in S)))
    if members != obs.sensor_set:
        raise ConfigError(f"sensor set {list(members)} does not match the observation's {list(obs.sensor_set)}")
    if cfg.dt != obs.dt:
        raise ConfigError(f"step size {cfg.dt} does not match the observation's {obs.dt}")
    return list(members)


def lifted_residual(model: Model, cfg: IrkConfig, S, x0_guess, obs: LiftedObservation) -> np.ndarray:
    """``y_tilde - C_S x_tilde`` for the trajectory started at ``x0_guess``."""
    members = _check_obs(cfg, S, obs)
    traj = simulate(model, x0_guess, cfg, obs.steps)
    return obs.y_tilde - traj.states[:, members].reshape(-1)


def _residual_and_jacobian(model, cfg, members, x0, obs):
    traj, phis = propagate(model, x0, cfg, obs.steps)
    g = obs.y_tilde - traj.states[:, members].reshape(-1)
    psi = phis[:, members, :].reshape(obs.steps * len(members), -1)
    return g, psi


@dataclass
class EstimateResult:
    x0: np.ndarray
    converged: bool
    iterations: int
    cost: float
    gradient_norm: float
    active_lower: list = field(default_factory=list)
    active_upper: list = field(default_factory=list)
    message: str = ""


def estimate_initial_state(
    model: Model,
    cfg: IrkConfig,
    S,
    obs: LiftedObservation,
    bounds: Bounds,
    x0_init,
    max_iter: int = 200,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
) -> EstimateResult:
    """Box-constrained least squares by projected Levenberg-Marquardt.

    Steps solve ``(P^T P + mu D) d = P^T g`` with ``P = C_S Phi`` and Marquardt
    scaling ``D`` over the coordinates not pinned at a bound, then are clipped
    to the box. Convergence is declared when
    the projected gradient falls to ``gtol`` or the accepted step to
    ``xtol * (1 + ||x||)``. Trial points where the simulation fails are
    rejected like any other uphill step. On hitting ``max_iter`` the best
    iterate is returned with ``converged=False``.
    """
    members = _check_obs(cfg, S, obs)
    x = np.asarray(x0_init, dtype=float).copy()
    lo, hi = bounds.lower, bounds.upper
    if x.shape != lo.shape:
        raise ConfigError(f"starting guess has shape {x.shape}, bounds have {lo.shape}")
    if not bounds.contains(x):
        raise ConfigError("starting guess lies outside the bounds")
    if not members:
        return EstimateResult(x, False, 0, float(obs.y_tilde @ obs.y_tilde), 0.0, message="no sensors selected")

    g, P = _residual_and_jacobian(model, cfg, members, x, obs)
    cost = float(g @ g)
    mu = None
    nu = 2.0
    converged = False
    message = "iteration limit reached"
    it = 0
    grad_norm = np.inf
    rejections = 0
    while it < max_iter:
        it += 1
        grad = -(P.T @ g)
        grad_norm = float(np.max(np.abs(x - np.clip(x - grad, lo, hi))))
        if grad_norm <= gtol or cost == 0.0:
            converged, message = True, "projected gradient below tolerance"
            break
        # Coordinates pinned at a bound with the gradient pushing outward stay fixed.
        pinned = ((x <= lo) & (grad > 0)) | ((x >= hi) & (grad < 0))
        free = ~pinned
        Pf = P[:, free]
        H = Pf.T @ Pf
        diag = np.diag(H).copy()
        scale = np.maximum(diag, 1e-12 * max(float(np.max(diag)), 1e-300))
        if mu is None:
            mu = 1e-3
        try:
            step = np.zeros_like(x)
            step[free] = np.linalg.solve(H + mu * np.diag(scale), Pf.T @ g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        x_new = np.clip(x + step, lo, hi)
        p = x_new - x
        if float(np.linalg.norm(p)) <= xtol * (1.0 + float(np.linalg.norm(x))):
            converged, message = True, "step below tolerance"
            break
        predicted = cost - float(np.sum((g - P @ p) ** 2))
        try:
            g_new, P_new = _residual_and_jacobian(model, cfg, members, x_new, obs)
            cost_new = float(g_new @ g_new)
        except (NumericalError, FloatingPointError):
            cost_new = np.inf
        if np.isfinite(cost_new) and cost_new < cost:
            rho = (cost - cost_new) / predicted if predicted > 0 else 0.0
            x, g, P, cost = x_new, g_new, P_new, cost_new
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            rejections = 0
        else:
            mu *= nu
            nu *= 2.0
            rejections += 1
            if rejections > 60:
                message = "no further decrease achievable"
                break

    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    return EstimateResult(
        x0=x,
        converged=converged,
        iterations=it,
        cost=cost,
        gradient_norm=grad_norm,
        active_lower=[int(i) for i in np.nonzero(x - lo <= tol)[0] if lo[i] < hi[i]],
        active_upper=[int(i) for i in np.nonzero(hi - x <= tol)[0] if lo[i] < hi[i]],
        message=message,
    )


def estimation_error(true_traj: Trajectory, est_traj: Trajectory) -> float:
    """``||X_true - X_est|| / ||X_true||`` over all stacked states."""
    a = np.asarray(true_traj.states)
    b = np.asarray(est_traj.states)
    if a.shape != b.shape:
        raise ConfigError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a))
    if denom == 0.0:
        raise ConfigError("true trajectory has zero norm")
    return float(np.linalg.norm(a - b)) / denom


@dataclass
class TrialResult:
    trial: int
    alpha_d: float
    error: float
    converged: bool
    iterations: int


@dataclass
class ValidationReport:
    selected: list
    method: str
    r: int
    seed: int
    alpha_max: float
    trials: list

    @property
    def errors(self) -> np.ndarray:
        return np.array([t.error for t in self.trials])

    def summary(self) -> dict:
        e = self.errors
        q1, med, q3 = np.percentile(e, [25, 50, 75])
        return {
            "median": float(med),
            "q1": float(q1),
            "q3": float(q3),
            "min": float(e.min()),
            "max": float(e.max()),
            "non_converged": sum(not t.converged for t in self.trials),
        }

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "r": self.r,
            "selected": [int(s) for s in self.selected],
            "seed": self.seed,
            "alpha_max": self.alpha_max,
            "trials": [
                {
                    "trial": t.trial,
                    "alpha_d": t.alpha_d,
                    "error": t.error,
                    "converged": t.converged,
                    "iterations": t.iterations,
                }
                for t in self.trials
            ],
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def validation_csv_text(reports: Sequence[ValidationReport]) -> str:
    """Rows ``r,trial,error,method`` for box plots of the error distribution."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r", "trial", "error", "method"])
    for rep in reports:
        for t in rep.trials:
            writer.writerow([rep.r, t.trial, "%.17g" % t.error, rep.method])
    return buf.getvalue()


def _one_trial(model, cfg, members, steps, x0, alpha_max, bounds, seed, trial):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
    x_true, alpha = perturb_initial_state(x0, alpha_max, rng)
    truth = simulate(model, x_true, cfg, steps)
    obs = measure(truth, members)
    est = estimate_initial_state(model, cfg, members, obs, bounds, bounds.midpoint)
    est_traj = simulate(model, est.x0, cfg, steps)
    return TrialResult(trial, alpha, estimation_error(truth, est_traj), est.converged, est.iterations)


def validation_run(
    model: Model,
    cfg: IrkConfig,
    selection,
    x0,
    steps: int,
    trials: int = 20,
    alpha_max: float = 0.2,
    bounds: Bounds | None = None,
    seed: int = 0,
    threads: int | None = 1,
) -> ValidationReport:
    """Estimate perturbed initial states from the selected sensors.

    Trial ``t`` scales ``x0`` by ``1 + alpha_d`` drawn from substream
    ``(seed, t)``, simulates the truth, measures the selected sensors, and
    estimates the initial state starting from the box midpoint. ``selection``
    is a :class:`~varsns.greedy.SelectionResult` or a list of sensors.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials!r}")
    members = sorted(int(s) for s in getattr(selection, "selected", selection))
    method = getattr(selection, "method", "given")
    if bounds is None:
        bounds = default_bounds(x0)

    def run(t):
        return _one_trial(model, cfg, members, steps, x0, alpha_max, bounds, seed, t)

    if threads is not None and threads > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(t) for t in range(trials)]
    return ValidationReport(members, method, len(members), seed, alpha_max, results)
