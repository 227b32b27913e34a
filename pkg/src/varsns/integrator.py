"""Two-stage implicit Runge-Kutta discretization and trajectory simulation.

The step map is ``x_{k+1} = x_k + (T/4) (f(z1) + 3 f(z2))`` where the stages solve

    z1 = x_k + T (1/4 f(z1) + 3/4 f(z2))        (abscissa 1)
    z2 = x_k + T (-1/12 f(z1) + 5/12 f(z2))     (abscissa 1/3)

This is the 3rd-order Radau IIA tableau with its two stages listed in reverse
order, so that the quadrature weights read (1/4, 3/4). The scheme is stiffly
accurate (``x_{k+1} == z1`` up to rounding) and L-stable.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InfeasibleTrajectoryError, NewtonConvergenceError, SingularMatrixError
from .model import Model, ReactionNetwork

__all__ = [
    "BUTCHER_A",
    "BUTCHER_B",
    "BUTCHER_C",
    "IrkConfig",
    "Trajectory",
    "irk_step",
    "step_jacobian",
    "simulate",
    "propagate",
    "stability_function",
    "write_trajectory_csv",
    "trajectory_csv_text",
]

BUTCHER_A = np.array([[1.0 / 4.0, 3.0 / 4.0], [-1.0 / 12.0, 5.0 / 12.0]])
BUTCHER_B = np.array([1.0 / 4.0, 3.0 / 4.0])
BUTCHER_C = np.array([1.0, 1.0 / 3.0])

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class IrkConfig:
    dt: float
    stage_tol: float = 1e-12
    max_newton_iters: int = 50

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt!r}")
        if not self.stage_tol > 0:
            raise ConfigError(f"stage_tol must be > 0, got {self.stage_tol!r}")
        if self.max_newton_iters < 1:
            raise ConfigError(f"max_newton_iters must be >= 1, got {self.max_newton_iters!r}")


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_{N-1}`` as rows of ``states``."""

    states: np.ndarray
    dt: float

    @property
    def steps(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


def stability_function(z):
    """Amplification factor of the scheme on ``dx/dt = lambda x`` with ``z = lambda T``."""
    return (1.0 + z / 3.0) / (1.0 - 2.0 * z / 3.0 + z * z / 6.0)


def _newton_matrix(J, T):
    """``I - T (A kron I) blockdiag(J[0], J[1])`` for stage Jacobians ``J``."""
    n = J.shape[1]
    blocks = BUTCHER_A[:, :, None, None] * J[None, :, :, :]
    return np.eye(2 * n) - T * blocks.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)


def _solve(M, rhs):
    try:
        out = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"singular stage Newton matrix: {exc}") from None
    if not np.all(np.isfinite(out)):
        raise SingularMatrixError("stage Newton solve produced non-finite values")
    return out


def _stages(model: Model, x, cfg: IrkConfig):
    """Solve the stage system by Newton's method started from (x, x).

    Returns ``(Z, F)``: the converged stages as rows of ``Z`` and ``F = f(Z)``.
    """
    T = cfg.dt
    Z = np.stack([x, x])
    residual = np.inf
    small_update = False
    for it in range(cfg.max_newton_iters + 1):
        F = model.rhs_batch(Z)
        G = Z - x - T * (BUTCHER_A @ F)
        residual = float(np.max(np.abs(G)))
        # A roundoff-sized Newton update means the residual is at its floor.
        if residual <= cfg.stage_tol or (small_update and np.isfinite(residual)):
            return Z, F
        if it == cfg.max_newton_iters or not np.isfinite(residual):
            break
        M = _newton_matrix(model.jacobian_batch(Z), T)
        dZ = _solve(M, -G.reshape(-1)).reshape(Z.shape)
        Z = Z + dZ
        small_update = np.max(np.abs(dZ)) <= 8.0 * _EPS * max(1.0, float(np.max(np.abs(Z))))
    raise NewtonConvergenceError(residual, cfg.max_newton_iters)


def _step(model, x, cfg, with_jacobian):
    Z, F = _stages(model, x, cfg)
    T = cfg.dt
    x_next = x + (T / 4.0) * (F[0] + 3.0 * F[1])
    if not with_jacobian:
        return x_next, None
    n = x.shape[0]
    J = model.jacobian_batch(Z)
    # Implicit differentiation of G(Z, x) = 0: dZ/dx = M^{-1} [I; I].
    eye = np.eye(n)
    dZ = _solve(_newton_matrix(J, T), np.vstack([eye, eye]))
    phi = eye + (T / 4.0) * (J[0] @ dZ[:n] + 3.0 * (J[1] @ dZ[n:]))
    return x_next, phi


def _uses_kernel(model) -> bool:
    return isinstance(model, ReactionNetwork) and model.compiled


def _run_kernel(model, x0, cfg, steps, with_phis):
    from . import _kernels

    try:
        states, phis, status, k, residual = _kernels.run_network(
            x0, steps, cfg.dt, cfg.stage_tol, cfg.max_newton_iters, with_phis, BUTCHER_A, *model.kernel_tables()
        )
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"singular stage Newton matrix: {exc}") from None
    if status == _kernels.NEWTON_FAILED:
        raise NewtonConvergenceError(residual, cfg.max_newton_iters, step_index=int(k))
    if status == _kernels.SINGULAR:
        raise SingularMatrixError(f"step {k}: stage Newton solve produced non-finite values")
    if status == _kernels.NONFINITE_STATE:
        raise InfeasibleTrajectoryError(f"state became non-finite at step {k}")
    return states, (phis if with_phis else None)


def _as_state(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dimension,):
        raise ConfigError(f"state has shape {x.shape}, model expects ({model.dimension},)")
    if not np.all(np.isfinite(x)):
        raise ConfigError("state contains non-finite entries")
    return x


def irk_step(model: Model, x_k, cfg: IrkConfig) -> np.ndarray:
    """Advance one step of length ``cfg.dt``."""
    x_k = _as_state(model, x_k)
    if _uses_kernel(model):
        return _run_kernel(model, x_k, cfg, 2, False)[0][1]
    return _step(model, x_k, cfg, False)[0]


def step_jacobian(model: Model, x_k, cfg: IrkConfig) -> np.ndarray:
    """Exact derivative of :func:`irk_step` with respect to ``x_k``."""
    x_k = _as_state(model, x_k)
    if _uses_kernel(model):
        return _run_kernel(model, x_k, cfg, 2, True)[1][1]
    return _step(model, x_k, cfg, True)[1]


def _run(model, x0, cfg, steps, with_phis):
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps!r}")
    x0 = _as_state(model, x0)
    if _uses_kernel(model):
        states, phis = _run_kernel(model, x0, cfg, steps, with_phis)
        return Trajectory(states, cfg.dt), phis
    n = x0.shape[0]
    states = np.empty((steps, n))
    states[0] = x0
    phis = None
    if with_phis:
        phis = np.empty((steps, n, n))
        phis[0] = np.eye(n)
    for k in range(steps - 1):
        try:
            x_next, step_phi = _step(model, states[k], cfg, with_phis)
        except NewtonConvergenceError as exc:
            raise NewtonConvergenceError(exc.residual, exc.iterations, step_index=k) from None
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"step {k}: {exc}") from None
        if not np.all(np.isfinite(x_next)):
            raise InfeasibleTrajectoryError(f"state became non-finite at step {k + 1}")
        states[k + 1] = x_next
        if with_phis:
            phis[k + 1] = step_phi @ phis[k]
    return Trajectory(states, cfg.dt), phis


def simulate(model: Model, x0, cfg: IrkConfig, steps: int) -> Trajectory:
    """Simulate ``steps`` states starting at (and including) ``x0``."""
    return _run(model, x0, cfg, steps, False)[0]


def propagate(model: Model, x0, cfg: IrkConfig, steps: int):
    """Simulate and accumulate transition matrices in one pass.

    Returns ``(trajectory, phis)`` with ``phis[k] = d x_k / d x_0``. Each
    step's stages are solved once, so this is cheaper than simulating and then
    calling :func:`step_jacobian` along the result; the values are identical.
    """
    return _run(model, x0, cfg, steps, True)


def trajectory_csv_text(traj: Trajectory) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k"] + [f"x_{i}" for i in range(traj.dimension)])
    for k, row in enumerate(traj.states):
        writer.writerow([k] + ["%.17g" % v for v in row])
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_csv_text(traj), encoding="utf-8", newline="\n")
