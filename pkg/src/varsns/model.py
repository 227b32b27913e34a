"""Dynamical-system models: mass-action reaction networks and small analytic systems.

Every model exposes ``dimension``, ``rhs(x)`` and ``jacobian(x)``. The module-level
functions (:func:`eval_rhs`, :func:`eval_rhs_jacobian`, ...) check shapes and then
delegate to the model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ModelValidationError

__all__ = [
    "Reaction",
    "ReactionNetwork",
    "LinearModel",
    "LogisticModel",
    "Model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "builtin_model",
    "bundled_fixture",
    "BUILTIN_NAMES",
    "eval_rates",
    "eval_rhs",
    "eval_rhs_jacobian",
    "perturb_initial_state",
]


@dataclass(frozen=True)
class Reaction:
    """One mass-action reaction.

    ``reactants`` and ``products`` map species index to stoichiometric order.
    """

    reactants: Mapping[int, int]
    products: Mapping[int, int]
    rate_constant: float

    def __post_init__(self):
        if not self.reactants and not self.products:
            raise ModelValidationError("reactions", "reaction has neither reactants nor products")
        for side in ("reactants", "products"):
            for idx, order in getattr(self, side).items():
                if int(order) != order or order < 0:
                    raise ModelValidationError(side, f"order {order!r} of species {idx} is not a non-negative integer")
        if not math.isfinite(self.rate_constant) or self.rate_constant < 0:
            raise ModelValidationError("rate_constant", f"must be finite and >= 0, got {self.rate_constant!r}")


class Model:
    """Base class for continuous-time models ``dx/dt = f(x)``."""

    dimension: int
    default_x0: np.ndarray | None = None
    default_dt: float | None = None

    def rhs(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rhs_batch(self, X: np.ndarray) -> np.ndarray:
        """``f`` applied to each row of ``X``."""
        return np.stack([self.rhs(x) for x in X])

    def jacobian_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.jacobian(x) for x in X])

    @property
    def kind(self) -> str:
        return type(self).__name__


class ReactionNetwork(Model):
    """Mass-action network ``dx/dt = Theta psi(x)``.

    ``psi_j(x) = kappa_j * prod_i x_i ** q_ji`` with the convention ``0 ** 0 = 1``.
    The stoichiometric matrix is always rebuilt from the reaction orders.
    """

    def __init__(
        self,
        species: Sequence[str],
        reactions: Sequence[Reaction],
        closed: bool = False,
        masses: Sequence[float] | None = None,
        default_x0: Sequence[float] | None = None,
        default_dt: float | None = None,
    ):
        self.species = list(species)
        self.reactions = list(reactions)
        self.closed = bool(closed)
        n = len(self.species)
        if n == 0:
            raise ModelValidationError("species", "at least one species is required")
        if not self.reactions:
            raise ModelValidationError("reactions", "at least one reaction is required")
        for j, rxn in enumerate(self.reactions):
            for idx in list(rxn.reactants) + list(rxn.products):
                if not 0 <= idx < n:
                    raise ModelValidationError(f"reactions[{j}]", f"species index {idx} out of range 0..{n - 1}")
        self.dimension = n
        self.masses = None if masses is None else np.asarray(masses, dtype=float)
        if self.masses is not None and self.masses.shape != (n,):
            raise ModelValidationError("masses", f"expected {n} entries, got {self.masses.shape}")
        self.default_x0 = None if default_x0 is None else np.asarray(default_x0, dtype=float)
        if self.default_x0 is not None and self.default_x0.shape != (n,):
            raise ModelValidationError("x0", f"expected {n} entries, got {self.default_x0.shape}")
        if default_dt is not None and not default_dt > 0:
            raise ModelValidationError("dt", f"must be > 0, got {default_dt!r}")
        self.default_dt = default_dt

        nr = len(self.reactions)
        self.kappa = np.array([r.rate_constant for r in self.reactions], dtype=float)
        theta = np.zeros((n, nr))
        orders = np.zeros((nr, n), dtype=np.int64)
        for j, rxn in enumerate(self.reactions):
            for i, q in rxn.reactants.items():
                theta[i, j] -= q
                orders[j, i] = q
            for i, w in rxn.products.items():
                theta[i, j] += w
        self._theta = theta
        self._theta.setflags(write=False)
        self.orders = orders
        self.orders.setflags(write=False)
        self._build_monomial_tables()

    def _build_monomial_tables(self):
        # Padded per-reaction factor lists; index n points at a constant 1.0.
        n = self.dimension
        factors = [[(i, q) for i, q in sorted(r.reactants.items()) if q > 0] for r in self.reactions]
        width = max(1, max(len(f) for f in factors))
        idx = np.full((len(factors), width), n, dtype=np.int64)
        ords = np.zeros((len(factors), width), dtype=np.int64)
        for j, fac in enumerate(factors):
            for m, (i, q) in enumerate(fac):
                idx[j, m] = i
                ords[j, m] = q
        self._rate_idx, self._rate_ord = idx, ords

        # One entry per nonzero reactant order: d psi_j / d x_i.
        ent_j, ent_i, ent_q, other_idx, other_ord = [], [], [], [], []
        for j, fac in enumerate(factors):
            for m, (i, q) in enumerate(fac):
                rest = [p for k, p in enumerate(fac) if k != m]
                rest += [(n, 0)] * (width - 1 - len(rest))
                ent_j.append(j)
                ent_i.append(i)
                ent_q.append(q)
                other_idx.append([p[0] for p in rest])
                other_ord.append([p[1] for p in rest])
        self._ent_j = np.array(ent_j, dtype=np.int64)
        self._ent_i = np.array(ent_i, dtype=np.int64)
        self._ent_q = np.array(ent_q, dtype=np.int64)
        self._ent_other_idx = np.array(other_idx, dtype=np.int64).reshape(len(ent_j), width - 1)
        self._ent_other_ord = np.array(other_ord, dtype=np.int64).reshape(len(ent_j), width - 1)
        self._ent_coef = self.kappa[self._ent_j] * self._ent_q
        # Set False to force the generic numpy integration path.
        self.compiled = True

    def kernel_tables(self) -> tuple:
        """Arrays consumed by the compiled trajectory kernel."""
        return (
            self.kappa,
            self._rate_idx,
            self._rate_ord,
            np.ascontiguousarray(self._theta),
            self._ent_j,
            self._ent_i,
            self._ent_q,
            self._ent_coef,
            np.ascontiguousarray(self._ent_other_idx),
            np.ascontiguousarray(self._ent_other_ord),
        )

    @property
    def theta(self) -> np.ndarray:
        """Stoichiometric matrix, shape ``(n_species, n_reactions)``."""
        return self._theta

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def rates(self, x):
        return self.rates_batch(x[None, :])[0]

    def rates_batch(self, X):
        Xe = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
        return self.kappa * np.prod(Xe[:, self._rate_idx] ** self._rate_ord, axis=2)

    def rhs(self, x):
        return self._theta @ self.rates(x)

    def rhs_batch(self, X):
        return self.rates_batch(X) @ self._theta.T

    def rate_jacobian(self, x):
        """Matrix of ``d psi_j / d x_i``, shape ``(n_reactions, n_species)``."""
        return self._rate_jacobian_batch(x[None, :])[0]

    def _rate_jacobian_batch(self, X):
        # Monomial rule: no division by x_i, so zero concentrations are safe.
        Xe = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
        rest = np.prod(Xe[:, self._ent_other_idx] ** self._ent_other_ord, axis=2)
        vals = self._ent_coef * Xe[:, self._ent_i] ** (self._ent_q - 1) * rest
        dpsi = np.zeros((X.shape[0], self.n_reactions, self.dimension))
        dpsi[:, self._ent_j, self._ent_i] = vals
        return dpsi

    def jacobian(self, x):
        return self._theta @ self.rate_jacobian(x)

    def jacobian_batch(self, X):
        return self._theta @ self._rate_jacobian_batch(X)


class LinearModel(Model):
    """``dx/dt = A x``. ``A = 0`` gives the zero field."""

    def __init__(self, A, default_x0=None, default_dt=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelValidationError("A", f"must be square, got shape {A.shape}")
        self.A = A
        self.A.setflags(write=False)
        self.dimension = A.shape[0]
        self.default_x0 = None if default_x0 is None else np.asarray(default_x0, dtype=float)
        self.default_dt = default_dt

    def rhs(self, x):
        return self.A @ x

    def jacobian(self, x):
        return self.A.copy()

    def rhs_batch(self, X):
        return X @ self.A.T

    def jacobian_batch(self, X):
        return np.broadcast_to(self.A, (X.shape[0],) + self.A.shape).copy()


class LogisticModel(Model):
    """Scalar logistic growth ``dx/dt = rate * x * (1 - x)``."""

    dimension = 1

    def __init__(self, rate=1.0, default_x0=None, default_dt=None):
        self.rate = float(rate)
        self.default_x0 = np.array([0.5]) if default_x0 is None else np.asarray(default_x0, dtype=float)
        self.default_dt = default_dt

    def rhs(self, x):
        return self.rate * x * (1.0 - x)

    def jacobian(self, x):
        return np.array([[self.rate * (1.0 - 2.0 * x[0])]])

    def exact_solution(self, x0: float, t: float) -> float:
        e = math.exp(self.rate * t)
        return x0 * e / (1.0 - x0 + x0 * e)


BUILTIN_NAMES = ("zero", "scalar-linear", "linear", "logistic")

# Default 3-state linear builtin: stable, observable from its first state.
_DEFAULT_LINEAR = [[-0.5, 1.0, 0.0], [-1.0, -0.5, 0.5], [0.0, -0.5, -1.0]]


def builtin_model(name: str, dimension: int = 3) -> Model:
    """Named analytic test systems used for exact oracles."""
    if name == "zero":
        return LinearModel(np.zeros((dimension, dimension)), default_x0=np.ones(dimension), default_dt=0.1)
    if name == "scalar-linear":
        return LinearModel([[-1.0]], default_x0=[1.0], default_dt=0.01)
    if name == "linear":
        return LinearModel(_DEFAULT_LINEAR, default_x0=[1.0, 0.5, -0.5], default_dt=0.01)
    if name == "logistic":
        return LogisticModel(default_dt=0.01)
    raise ConfigError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def bundled_fixture(name: str) -> Path | None:
    """Path of a network shipped in ``varsns/data``, or None."""
    stem = name[:-5] if name.endswith(".json") else name
    ref = resources.files("varsns") / "data" / f"{stem}.json"
    return Path(str(ref)) if ref.is_file() else None


def _parse_orders(raw, where):
    if not isinstance(raw, dict):
        raise ModelValidationError(where, "must be an object mapping species index to order")
    out = {}
    for key, val in raw.items():
        try:
            idx = int(key, 10)
        except (TypeError, ValueError):
            raise ModelValidationError(where, f"key {key!r} is not a decimal species index") from None
        if isinstance(val, bool) or not isinstance(val, int) or val < 1:
            raise ModelValidationError(where, f"order for species {key} must be a positive integer, got {val!r}")
        out[idx] = val
    return out


def model_from_dict(doc: dict) -> ReactionNetwork:
    """Build a :class:`ReactionNetwork` from the parsed JSON document."""
    if not isinstance(doc, dict):
        raise ModelValidationError("<root>", "must be a JSON object")
    species = doc.get("species")
    if not isinstance(species, list) or not all(isinstance(s, str) for s in species):
        raise ModelValidationError("species", "must be a list of names")
    raw_rxns = doc.get("reactions")
    if not isinstance(raw_rxns, list):
        raise ModelValidationError("reactions", "must be a list")
    reactions = []
    for j, raw in enumerate(raw_rxns):
        where = f"reactions[{j}]"
        if not isinstance(raw, dict):
            raise ModelValidationError(where, "must be an object")
        k = raw.get("rate_constant")
        if isinstance(k, bool) or not isinstance(k, (int, float)):
            raise ModelValidationError(f"{where}.rate_constant", f"must be a number, got {k!r}")
        if not math.isfinite(k) or k < 0:
            raise ModelValidationError(f"{where}.rate_constant", f"must be finite and >= 0, got {k!r}")
        reactants = _parse_orders(raw.get("reactants", {}), f"{where}.reactants")
        products = _parse_orders(raw.get("products", {}), f"{where}.products")
        if not reactants and not products:
            raise ModelValidationError(where, "reaction has neither reactants nor products")
        reactions.append(Reaction(reactants, products, float(k)))
    closed = doc.get("closed", False)
    if not isinstance(closed, bool):
        raise ModelValidationError("closed", "must be true or false")
    return ReactionNetwork(
        species,
        reactions,
        closed=closed,
        masses=doc.get("masses"),
        default_x0=doc.get("x0"),
        default_dt=doc.get("dt"),
    )


def model_to_dict(net: ReactionNetwork) -> dict:
    doc = {
        "species": list(net.species),
        "reactions": [
            {
                "reactants": {str(i): int(q) for i, q in sorted(r.reactants.items())},
                "products": {str(i): int(w) for i, w in sorted(r.products.items())},
                "rate_constant": r.rate_constant,
            }
            for r in net.reactions
        ],
        "closed": net.closed,
    }
    if net.masses is not None:
        doc["masses"] = net.masses.tolist()
    if net.default_x0 is not None:
        doc["x0"] = net.default_x0.tolist()
    if net.default_dt is not None:
        doc["dt"] = net.default_dt
    return doc


def load_model(path) -> ReactionNetwork:
    """Load and validate a reaction network from a JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse model file {path}: {exc}") from None
    return model_from_dict(doc)


def _check_state(model: Model, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dimension,):
        raise ConfigError(f"state has shape {x.shape}, model expects ({model.dimension},)")
    return x


def eval_rates(model: ReactionNetwork, x) -> np.ndarray:
    """Reaction rate vector psi(x)."""
    if not isinstance(model, ReactionNetwork):
        raise ConfigError("reaction rates are only defined for reaction networks")
    return model.rates(_check_state(model, x))


def eval_rhs(model: Model, x) -> np.ndarray:
    return model.rhs(_check_state(model, x))


def eval_rhs_jacobian(model: Model, x) -> np.ndarray:
    return model.jacobian(_check_state(model, x))


def perturb_initial_state(x0, alpha_max: float, rng: np.random.Generator):
    """Scale ``x0`` by ``1 + alpha`` with ``alpha`` uniform on ``(0, alpha_max)``.

    Returns ``(perturbed_state, alpha)``.
    """
    if not alpha_max > 0:
        raise ConfigError(f"alpha_max must be > 0, got {alpha_max!r}")
    alpha = 0.0
    while alpha == 0.0:
        alpha = float(rng.uniform(0.0, alpha_max))
    return (1.0 + alpha) * np.asarray(x0, dtype=float), alpha
