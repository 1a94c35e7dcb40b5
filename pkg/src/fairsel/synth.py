"""Discrete causal models over (A, X1..Xn, Y): exact joints, sampling, fixtures."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, SchemaError, SizeError
from .ingest import Dataset
from .prob import JointDistribution, Variable, VariableSchema

MAX_JOINT_CELLS = 1_000_000
ROW_TOL = 1e-12
FIXTURE_KINDS = ("single_parent_y", "single_child_a", "path_blocking", "independent_feature")


class CausalDag:
    """Node list plus parent->child edges, checked against the modelling rules.

    Exactly one protected node A and one label Y; A has no parents, A is not
    a parent of Y, and Y has no children.
    """

    def __init__(self, nodes: Iterable[Variable], edges: Iterable[Sequence[str]]):
        self.schema = VariableSchema(nodes)
        self.schema.check_roles()
        protected = self.schema.with_role("protected")
        if len(protected) != 1:
            raise SchemaError("a causal model needs exactly one protected node")
        self.protected = protected[0].name
        self.label = self.schema.with_role("label")[0].name
        self.edges = tuple((str(p), str(c)) for p, c in edges)
        if len(set(self.edges)) != len(self.edges):
            raise ArgumentError("duplicate edge")
        for p, c in self.edges:
            self.schema.index(p)
            self.schema.index(c)
            if p == c:
                raise ArgumentError(f"self-loop on {p!r}")
            if c == self.protected:
                raise ArgumentError(f"protected node {c!r} cannot have parents (edge {p}->{c})")
            if p == self.label:
                raise ArgumentError(f"label node {p!r} cannot have children (edge {p}->{c})")
            if (p, c) == (self.protected, self.label):
                raise ArgumentError("the protected node may not be a direct parent of the label")
        sorter = TopologicalSorter({n: self.parents(n) for n in self.names})
        try:
            self.order = tuple(sorter.static_order())
        except CycleError as exc:
            raise ArgumentError(f"graph has a cycle through {exc.args[1]}") from exc

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema.names

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.schema if v.role == "feature")

    def parents(self, node: str) -> tuple[str, ...]:
        """Parents of ``node`` in node-list order."""
        ps = {p for p, c in self.edges if c == node}
        return tuple(n for n in self.names if n in ps)

    def children(self, node: str) -> tuple[str, ...]:
        cs = {c for p, c in self.edges if p == node}
        return tuple(n for n in self.names if n in cs)

    def cardinality(self, node: str) -> int:
        return self.schema[node].cardinality

    def __eq__(self, other):
        return (isinstance(other, CausalDag) and self.schema == other.schema
                and set(self.edges) == set(other.edges))

    def __repr__(self):
        return f"CausalDag({list(self.names)}, {list(self.edges)})"


@dataclass(frozen=True)
class Cpt:
    """P(node | parents); ``table`` has one axis per parent, node values last."""

    node: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != len(self.parents) + 1:
            raise ArgumentError(f"CPT for {self.node!r} has {table.ndim} axes, expected {len(self.parents) + 1}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ArgumentError(f"CPT for {self.node!r} has negative or non-finite entries")
        sums = table.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            raise ArgumentError(f"CPT rows for {self.node!r} do not sum to 1")
        table.setflags(write=False)
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", table)

    def rows(self) -> np.ndarray:
        return self.table.reshape(-1, self.table.shape[-1])

    def __eq__(self, other):
        return (isinstance(other, Cpt) and self.node == other.node and self.parents == other.parents
                and np.array_equal(self.table, other.table))

    __hash__ = None  # type: ignore[assignment]


class CausalModel:
    def __init__(self, dag: CausalDag, cpts: Mapping[str, Cpt], seed: int | None = None):
        if set(cpts) != set(dag.names):
            raise ArgumentError(f"CPTs given for {sorted(cpts)}, model has {sorted(dag.names)}")
        for name in dag.names:
            cpt = cpts[name]
            if cpt.parents != dag.parents(name):
                raise ArgumentError(f"CPT parents {cpt.parents} for {name!r} do not match graph {dag.parents(name)}")
            want = tuple(dag.cardinality(p) for p in cpt.parents) + (dag.cardinality(name),)
            if cpt.table.shape != want:
                raise ArgumentError(f"CPT for {name!r} has shape {cpt.table.shape}, expected {want}")
        self.dag = dag
        self.cpts = {n: cpts[n] for n in dag.names}
        self.seed = seed

    def __eq__(self, other):
        return (isinstance(other, CausalModel) and self.dag == other.dag
                and self.cpts == other.cpts and self.seed == other.seed)

    def to_json(self) -> dict:
        return {
            "nodes": self.dag.schema.to_json(),
            "edges": [list(e) for e in self.dag.edges],
            "cpts": {n: {"parents": list(c.parents), "rows": c.rows().tolist()} for n, c in self.cpts.items()},
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "CausalModel":
        try:
            dag = CausalDag(VariableSchema.from_json(doc["nodes"]), doc["edges"])
            cpts = {}
            for name, entry in doc["cpts"].items():
                parents = tuple(entry["parents"])
                shape = tuple(dag.cardinality(p) for p in parents) + (dag.cardinality(name),)
                cpts[name] = Cpt(name, parents, np.array(entry["rows"], dtype=float).reshape(shape))
            return cls(dag, cpts, doc.get("seed"))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed model document: missing or invalid {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ArgumentError):
                raise
            raise ArgumentError(f"malformed model document: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "CausalModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_json(doc)


def random_cpts(dag: CausalDag, seed: int, concentration: float = 1.0,
                uniform_mix: float = 0.0) -> CausalModel:
    """Draw every CPT row from a symmetric Dirichlet.

    ``uniform_mix`` blends each row with the uniform distribution, which
    keeps every cell strictly positive.
    """
    if not concentration > 0:
        raise ArgumentError("Dirichlet concentration must be positive")
    if not 0.0 <= uniform_mix <= 1.0:
        raise ArgumentError("uniform_mix must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    cpts = {}
    for name in dag.names:
        parents = dag.parents(name)
        card = dag.cardinality(name)
        shape = tuple(dag.cardinality(p) for p in parents)
        rows = rng.dirichlet(np.full(card, float(concentration)), size=math.prod(shape))
        if uniform_mix:
            rows = (1.0 - uniform_mix) * rows + uniform_mix / card
        rows /= rows.sum(axis=1, keepdims=True)
        cpts[name] = Cpt(name, parents, rows.reshape(shape + (card,)))
    return CausalModel(dag, cpts, seed)


def exact_joint(model: CausalModel) -> JointDistribution:
    """Product of CPT factors as a dense tensor in node-list order."""
    dag = model.dag
    shape = dag.schema.shape
    cells = math.prod(shape)
    if cells > MAX_JOINT_CELLS:
        raise SizeError(f"joint has {cells} cells, above the limit of {MAX_JOINT_CELLS}")
    probs = np.ones(shape)
    for name in dag.order:
        cpt = model.cpts[name]
        axes = dag.schema.names
        own = [axes.index(p) for p in cpt.parents] + [axes.index(name)]
        factor = np.transpose(cpt.table, np.argsort(own))
        probs = probs * factor.reshape([shape[i] if i in own else 1 for i in range(len(shape))])
    return JointDistribution(dag.schema, probs / probs.sum())


def forward_sample(model: CausalModel, m: int, seed: int) -> Dataset:
    """``m`` ancestral samples; columns in node-list order."""
    if m < 0:
        raise ArgumentError("sample count must be non-negative")
    dag = model.dag
    rng = np.random.default_rng(seed)
    data = np.zeros((m, len(dag.names)), dtype=np.int64)
    col = {n: i for i, n in enumerate(dag.names)}
    for name in dag.order:
        cpt = model.cpts[name]
        if cpt.parents:
            dims = cpt.table.shape[:-1]
            row = np.ravel_multi_index(tuple(data[:, col[p]] for p in cpt.parents), dims)
        else:
            row = np.zeros(m, dtype=np.int64)
        cdf = np.cumsum(cpt.rows(), axis=1)[row]
        u = rng.random(m)
        values = (u[:, None] >= cdf).sum(axis=1)
        data[:, col[name]] = np.minimum(values, cdf.shape[1] - 1)
    provenance = {"source": "forward_sample", "model_seed": model.seed, "sample_seed": seed,
                  "rows_read": m, "rows_dropped": 0}
    return Dataset(dag.schema, data, provenance)


def _nodes(n: int, card: int = 2) -> list[Variable]:
    return ([Variable("A", card, "protected")]
            + [Variable(f"X{i + 1}", card, "feature") for i in range(n)]
            + [Variable("Y", card, "label")])


def fixture_feature(kind: str, n: int) -> int:
    """Index of the distinguished feature of a fixture.

    It is always the last feature, so a tie resolved by lowest index would
    pick a different one.
    """
    if kind not in FIXTURE_KINDS:
        raise ArgumentError(f"unknown fixture kind {kind!r}; choose from {FIXTURE_KINDS}")
    return n - 1


def fixture_dag(kind: str, n: int) -> CausalDag:
    if n < 2:
        raise ArgumentError("fixtures need at least two features")
    d = fixture_feature(kind, n)
    xs = [f"X{i + 1}" for i in range(n)]
    key, others = xs[d], xs[:d] + xs[d + 1:]
    if kind == "single_parent_y":
        # Y hangs off the key feature alone; everything else feeds the key
        edges = [("A", x) for x in others] + [(x, key) for x in others] + [("A", key), (key, "Y")]
    elif kind in ("single_child_a", "path_blocking"):
        # A reaches the rest of the graph only through the key feature
        edges = [("A", key), (key, "Y")] + [(key, x) for x in others] + [(x, "Y") for x in others]
        if kind == "path_blocking":
            edges += [(others[i], others[i + 1]) for i in range(len(others) - 1)]
    else:
        # key feature is an isolated node
        edges = [("A", others[0]), (others[0], "Y")]
        edges += [(others[i], others[i + 1]) for i in range(len(others) - 1)]
        edges += [(x, "Y") for x in others[1:]]
    return CausalDag(_nodes(n), edges)


def make_fixture(kind: str, n: int, seed: int = 0) -> CausalModel:
    """Model whose graph realises the conditional-independence pattern ``kind``.

    Rows are Dirichlet draws mixed with uniform so every cell has positive
    probability.
    """
    return random_cpts(fixture_dag(kind, n), seed, concentration=1.0, uniform_mix=0.1)


def standin_dag() -> CausalDag:
    """Five-feature demo graph.

    X3 and X4 are the only parents of Y. X1 and X5 are the only children of
    A, and they reach Y through X3 and X4 respectively.
    """
    edges = [("A", "X1"), ("A", "X5"), ("X1", "X2"), ("X3", "Y"), ("X4", "Y"),
             ("X1", "X3"), ("X5", "X4")]
    return CausalDag(_nodes(5), edges)


def random_dag(n: int, seed: int, density: float = 0.5, card: int = 2) -> CausalDag:
    """Random graph obeying the modelling rules; features are topologically ordered."""
    rng = np.random.default_rng(seed)
    xs = [f"X{i + 1}" for i in range(n)]
    edges = [("A", x) for x in xs if rng.random() < density]
    edges += [(xs[i], xs[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < density]
    edges += [(x, "Y") for x in xs if rng.random() < density]
    return CausalDag(_nodes(n, card), edges)
