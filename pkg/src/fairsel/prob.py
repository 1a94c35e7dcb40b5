"""Dense discrete probability tensors and the information quantities on them.

All information quantities are returned in bits. Multiply by
``NATS_PER_BIT`` to compare with tools that work in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateEvidenceError,
    NumericalIntegrityError,
    SchemaError,
)

NATS_PER_BIT = math.log(2.0)

ROLES = ("feature", "protected", "label")

# values in [-CLAMP_TOL, 0) are rounding noise; anything lower is a bug
CLAMP_TOL = 1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    name: str
    cardinality: int
    role: str = "feature"

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SchemaError(f"variable name must be a non-empty string, got {self.name!r}")
        if int(self.cardinality) != self.cardinality or self.cardinality < 1:
            raise SchemaError(f"variable {self.name!r}: cardinality must be a positive integer")
        if self.role not in ROLES:
            raise SchemaError(f"variable {self.name!r}: role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "cardinality", int(self.cardinality))


class VariableSchema(tuple):
    """Ordered, name-unique tuple of :class:`Variable`.

    Cardinality 1 is accepted here because composite variables built from an
    empty feature subset are constant; user-facing constructors reject it.
    """

    def __new__(cls, variables: Iterable[Variable]):
        variables = tuple(variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate variable names in {names}")
        return super().__new__(cls, variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self)

    def index(self, name: str) -> int:  # type: ignore[override]
        for i, v in enumerate(self):
            if v.name == name:
                return i
        raise SchemaError(f"unknown variable {name!r}; schema has {list(self.names)}")

    def __getitem__(self, key):
        if isinstance(key, str):
            return tuple.__getitem__(self, self.index(key))
        return tuple.__getitem__(self, key)

    def with_role(self, role: str) -> tuple[Variable, ...]:
        return tuple(v for v in self if v.role == role)

    def check_roles(self) -> None:
        """Require exactly one label and at least one protected attribute."""
        labels = self.with_role("label")
        if len(labels) != 1:
            raise SchemaError(f"expected exactly one label variable, found {len(labels)}")
        if not self.with_role("protected"):
            raise SchemaError("expected at least one protected variable")
        for v in self:
            if v.cardinality < 2:
                raise SchemaError(f"variable {v.name!r} has cardinality {v.cardinality} < 2")

    def to_json(self) -> list[dict]:
        return [{"name": v.name, "cardinality": v.cardinality, "role": v.role} for v in self]

    @classmethod
    def from_json(cls, items: Sequence[Mapping]) -> "VariableSchema":
        try:
            return cls(Variable(d["name"], d["cardinality"], d.get("role", "feature")) for d in items)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema entry: {exc}") from exc


class JointDistribution:
    """Immutable dense joint pmf over the variables of a schema (row-major)."""

    __slots__ = ("schema", "probs")

    def __init__(self, schema: VariableSchema | Iterable[Variable], probs, *, check: bool = True):
        schema = schema if isinstance(schema, VariableSchema) else VariableSchema(schema)
        arr = np.array(probs, dtype=float)
        if arr.ndim == 1 and len(schema) != 1:
            arr = arr.reshape(schema.shape) if arr.size == math.prod(schema.shape) else arr
        if arr.shape != schema.shape:
            raise SchemaError(f"probability tensor shape {arr.shape} does not match schema {schema.shape}")
        if check:
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ArgumentError("probabilities must be finite and non-negative")
            total = arr.sum()
            if abs(total - 1.0) > SUM_TOL:
                raise ArgumentError(f"probabilities sum to {total!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("JointDistribution is immutable")

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema.names

    @property
    def shape(self) -> tuple[int, ...]:
        return self.schema.shape

    def axes(self, names: Iterable[str]) -> list[int]:
        return [self.schema.index(n) for n in names]

    def variable(self, name: str) -> Variable:
        return self.schema[name]

    def __repr__(self):
        vs = ", ".join(f"{v.name}:{v.cardinality}" for v in self.schema)
        return f"JointDistribution({vs})"

    def to_json(self) -> dict:
        return {"schema": self.schema.to_json(), "probs": self.probs.ravel().tolist()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "JointDistribution":
        """Parse ``{"schema": [...], "probs": [flat row-major floats]}``."""
        if not isinstance(doc, Mapping) or "schema" not in doc or "probs" not in doc:
            raise SchemaError("joint distribution document needs 'schema' and 'probs'")
        schema = VariableSchema.from_json(doc["schema"])
        try:
            probs = np.array(doc["probs"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ArgumentError(f"probs must be a flat list of numbers: {exc}") from exc
        if probs.ndim != 1 or probs.size != math.prod(schema.shape):
            raise SchemaError(f"expected {math.prod(schema.shape)} probabilities, got shape {probs.shape}")
        return cls(schema, probs.reshape(schema.shape))

    def __eq__(self, other):
        if not isinstance(other, JointDistribution):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.probs, other.probs)

    __hash__ = None  # type: ignore[assignment]


def _ordered(dist: JointDistribution, names: Iterable[str]) -> list[str]:
    wanted = set(names)
    for n in wanted:
        dist.schema.index(n)
    return [n for n in dist.names if n in wanted]


def _table(dist: JointDistribution, names: Sequence[str]) -> np.ndarray:
    """Marginal tensor over ``names`` with axes in the given order."""
    axes = dist.axes(names)
    drop = tuple(i for i in range(len(dist.names)) if i not in axes)
    t = dist.probs.sum(axis=drop) if drop else dist.probs
    kept = sorted(axes)
    return np.transpose(t, [kept.index(a) for a in axes])


def marginalize(dist: JointDistribution, keep: Iterable[str]) -> JointDistribution:
    names = _ordered(dist, keep)
    if not names:
        raise ArgumentError("marginalize needs at least one variable to keep")
    if len(names) == len(dist.names):
        return dist
    schema = VariableSchema(dist.schema[n] for n in names)
    return JointDistribution(schema, _table(dist, names), check=False)


def reorder(dist: JointDistribution, order: Sequence[str]) -> JointDistribution:
    """Same distribution with axes permuted into ``order`` (must name every variable)."""
    if sorted(order) != sorted(dist.names):
        raise SchemaError(f"reorder needs a permutation of {list(dist.names)}")
    schema = VariableSchema(dist.schema[n] for n in order)
    return JointDistribution(schema, np.transpose(dist.probs, dist.axes(order)), check=False)


def condition(dist: JointDistribution, evidence: Mapping[str, int]) -> JointDistribution:
    idx: list = [slice(None)] * len(dist.names)
    for name, value in evidence.items():
        i = dist.schema.index(name)
        card = dist.schema[i].cardinality
        if not 0 <= int(value) < card:
            raise SchemaError(f"value {value} out of range for {name!r} (cardinality {card})")
        idx[i] = int(value)
    rest = [n for n in dist.names if n not in evidence]
    if not rest:
        raise ArgumentError("evidence covers every variable; nothing left to condition")
    sliced = dist.probs[tuple(idx)]
    mass = sliced.sum()
    if mass <= 0.0:
        raise DegenerateEvidenceError(f"evidence {dict(evidence)} has probability zero")
    schema = VariableSchema(dist.schema[n] for n in rest)
    return JointDistribution(schema, sliced / mass, check=False)


def _xlogx(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(np.sum(nz * np.log2(nz)))


def entropy(dist: JointDistribution, vars: Iterable[str]) -> float:
    names = _ordered(dist, vars)
    if not names:
        return 0.0
    h = -_xlogx(_table(dist, names))
    return h if h > 0.0 else 0.0


def _clamp(value: float, what: str) -> float:
    if value < 0.0:
        if value < -CLAMP_TOL:
            raise NumericalIntegrityError(f"{what} = {value!r} is negative beyond rounding noise")
        return 0.0
    return value


def _check_disjoint(*groups: Sequence[str]) -> None:
    seen: set[str] = set()
    for g in groups:
        overlap = seen.intersection(g)
        if overlap:
            raise ArgumentError(f"variable sets overlap on {sorted(overlap)}")
        seen.update(g)


def cond_mutual_info(dist: JointDistribution, varsA, varsB, varsC=()) -> float:
    """I(A;B|C) in bits, summed cell by cell over the support."""
    a, b, c = list(varsA), list(varsB), list(varsC)
    _check_disjoint(a, b, c)
    if not a or not b:
        raise ArgumentError("mutual information needs two non-empty variable sets")
    a, b, c = _ordered(dist, a), _ordered(dist, b), _ordered(dist, c)
    ka, kb = len(a), len(b)
    p = _table(dist, a + b + c)
    p_ac = p.sum(axis=tuple(range(ka, ka + kb)), keepdims=True)
    p_bc = p.sum(axis=tuple(range(ka)), keepdims=True)
    p_c = p_ac.sum(axis=tuple(range(ka)), keepdims=True)
    mask = p > 0
    num = (p * p_c)[mask]
    den = np.broadcast_to(p_ac * p_bc, p.shape)[mask]
    value = float(np.sum(p[mask] * np.log2(num / den)))
    return _clamp(value, "conditional mutual information" if c else "mutual information")


def mutual_info(dist: JointDistribution, varsA, varsB) -> float:
    return cond_mutual_info(dist, varsA, varsB, ())


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """D(p||q) in bits for two vectors on the same alphabet."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return _clamp(float(np.sum(p[mask] * np.log2(p[mask] / q[mask]))), "KL divergence")


def product(*dists: JointDistribution) -> JointDistribution:
    """Joint of independent distributions, schemas concatenated."""
    schema = VariableSchema(v for d in dists for v in d.schema)
    probs = np.ones(())
    for d in dists:
        probs = np.multiply.outer(probs, d.probs)
    return JointDistribution(schema, probs, check=False)


def merge_variables(dist: JointDistribution, names: Sequence[str], new_name: str,
                    role: str = "feature", position: int | None = None) -> JointDistribution:
    """Collapse ``names`` into one composite variable.

    The composite index is row-major over ``names`` in the order given. The
    composite is inserted at ``position`` among the surviving variables
    (default: where the first merged variable was).
    """
    names = list(names)
    _check_disjoint(names)
    idx = dist.axes(names)
    others = [n for n in dist.names if n not in names]
    if position is None:
        first = min(idx) if idx else 0
        position = sum(1 for n in others if dist.schema.index(n) < first)
    card = math.prod(dist.schema[n].cardinality for n in names)
    order = others[:position] + names + others[position:]
    t = np.transpose(dist.probs, dist.axes(order))
    shape = [dist.schema[n].cardinality for n in others[:position]] + [card] + \
            [dist.schema[n].cardinality for n in others[position:]]
    schema = VariableSchema(
        [dist.schema[n] for n in others[:position]]
        + [Variable(new_name, card, role)]
        + [dist.schema[n] for n in others[position:]]
    )
    return JointDistribution(schema, t.reshape(shape), check=False)
