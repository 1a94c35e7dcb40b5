"""Accuracy and discrimination coefficients of feature subsets.

Subsets are integer bitmasks over the features in schema order: bit ``i``
set means feature ``i`` is in the subset. The protected attribute and the
label are never members.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ArgumentError, ConvergenceError, SchemaError, SizeError
from .pid import PidInput, PidResult, SolverConfig, pid_decompose
from .prob import (
    JointDistribution,
    cond_mutual_info,
    marginalize,
    merge_variables,
    mutual_info,
    reorder,
)

MAX_EXACT_FEATURES = 20
EMPTY_NAME = "{}"


def thread_count() -> int:
    """Worker cap from ``FAIRSEL_THREADS``; defaults to the core count."""
    raw = os.environ.get("FAIRSEL_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    return value if value > 0 else (os.cpu_count() or 1)


def subset_members(key: int, n: int) -> list[int]:
    if key < 0 or key >> n:
        raise ArgumentError(f"subset key {key:#b} has bits beyond feature {n - 1}")
    return [i for i in range(n) if key >> i & 1]


def subset_key(indices: Iterable[int], n: int) -> int:
    key = 0
    for i in indices:
        if not 0 <= i < n:
            raise ArgumentError(f"feature index {i} out of range for n={n}")
        key |= 1 << i
    return key


def feature_names(dist: JointDistribution) -> tuple[str, ...]:
    return tuple(v.name for v in dist.schema if v.role == "feature")


def composite_name(names: Sequence[str]) -> str:
    return "+".join(names) if names else EMPTY_NAME


def flatten_subset(dist: JointDistribution, key: int) -> JointDistribution:
    """Merge the features in ``key`` into one composite variable.

    Composite index is row-major over the members in ascending feature
    order, so for two binary features it is ``2*x_first + x_second``. An
    empty key yields a constant composite of cardinality 1.
    """
    features = feature_names(dist)
    members = [features[i] for i in subset_members(key, len(features))]
    position = None
    if not members:
        # constant composite sits where the feature block starts
        first = next((i for i, v in enumerate(dist.schema) if v.role == "feature"), len(dist.names))
        position = first
    return merge_variables(dist, members, composite_name(members), "feature", position)


def flatten_protected(dist: JointDistribution) -> JointDistribution:
    """Collapse several protected attributes into one composite."""
    protected = [v.name for v in dist.schema if v.role == "protected"]
    if len(protected) <= 1:
        return dist
    return merge_variables(dist, protected, composite_name(protected), "protected")


@dataclass(frozen=True)
class ScoringProblem:
    """Joint over (A, X1..Xn, Y), axes in that canonical order."""

    dist: JointDistribution
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        dist = flatten_protected(self.dist)
        dist.schema.check_roles()
        features = feature_names(dist)
        if not features:
            raise SchemaError("scoring needs at least one feature")
        protected = dist.schema.with_role("protected")[0].name
        label = dist.schema.with_role("label")[0].name
        object.__setattr__(self, "dist", reorder(dist, [protected, *features, label]))

    @property
    def protected(self) -> str:
        return self.dist.names[0]

    @property
    def label(self) -> str:
        return self.dist.names[-1]

    @property
    def features(self) -> tuple[str, ...]:
        return self.dist.names[1:-1]

    @property
    def n(self) -> int:
        return len(self.dist.names) - 2

    @property
    def full_key(self) -> int:
        return (1 << self.n) - 1

    def names_of(self, key: int) -> list[str]:
        return [self.features[i] for i in subset_members(key, self.n)]


def accuracy_coefficient(prob: ScoringProblem, key: int) -> float:
    """I(Y; X_S | A, X_{S^c}) in bits."""
    members = prob.names_of(key)
    if not members:
        return 0.0
    rest = [f for f in prob.features if f not in members]
    return cond_mutual_info(prob.dist, [prob.label], members, [prob.protected, *rest])


def _pid_triple(prob: ScoringProblem, key: int) -> PidInput:
    members = prob.names_of(key)
    # after marginalising, the members are the only features left
    flat = flatten_subset(marginalize(prob.dist, [prob.protected, *members, prob.label]),
                          (1 << len(members)) - 1)
    comp = composite_name(members)
    return PidInput(reorder(flat, [prob.label, comp, prob.protected]))


@dataclass(frozen=True)
class DiscriminationFactors:
    shared: float  # SI(Y; X_S, A)
    mi_xa: float  # I(X_S; A)
    cmi_xa_y: float  # I(X_S; A | Y)
    pid: PidResult | None = None

    @property
    def value(self) -> float:
        return self.shared * self.mi_xa * self.cmi_xa_y


def discrimination_factors(prob: ScoringProblem, key: int) -> DiscriminationFactors:
    if key == 0:
        return DiscriminationFactors(0.0, 0.0, 0.0)
    triple = _pid_triple(prob, key)
    y, comp, a = triple.names
    try:
        result = pid_decompose(triple, prob.solver_cfg)
    except ConvergenceError as exc:
        exc.subset = key
        raise
    return DiscriminationFactors(
        shared=result.si,
        mi_xa=mutual_info(triple.dist, [comp], [a]),
        cmi_xa_y=cond_mutual_info(triple.dist, [comp], [a], [y]),
        pid=result,
    )


def discrimination_coefficient(prob: ScoringProblem, key: int) -> float:
    """SI(Y; X_S, A) * I(X_S; A) * I(X_S; A | Y), in bits cubed."""
    return discrimination_factors(prob, key).value


class SubsetScorer:
    """Memoised subset coefficients; safe to share between threads."""

    def __init__(self, prob: ScoringProblem):
        self.prob = prob
        self._acc: dict[int, float] = {}
        self._disc: dict[int, DiscriminationFactors] = {}
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.prob.n

    def acc(self, key: int) -> float:
        value = self._acc.get(key)
        if value is None:
            value = accuracy_coefficient(self.prob, key)
            with self._lock:
                self._acc.setdefault(key, value)
        return value

    def factors(self, key: int) -> DiscriminationFactors:
        value = self._disc.get(key)
        if value is None:
            value = discrimination_factors(self.prob, key)
            with self._lock:
                value = self._disc.setdefault(key, value)
        return value

    def disc(self, key: int) -> float:
        return self.factors(key).value

    def evaluations(self) -> int:
        return len(self._disc)


@dataclass
class CoefficientTable:
    features: tuple[str, ...]
    acc: dict[int, float]
    disc: dict[int, float]
    pid_cache: dict[int, PidResult]
    factors: dict[int, DiscriminationFactors] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.features)

    def is_complete(self) -> bool:
        full = 1 << self.n
        return len(self.acc) == full and len(self.disc) == full

    def values(self, which: str) -> dict[int, float]:
        if which == "acc":
            return self.acc
        if which in ("disc", "d"):
            return self.disc
        raise ArgumentError(f"unknown characteristic function {which!r}; use 'acc' or 'disc'")

    def monotonicity_violations(self, tol: float = 1e-8) -> list[tuple[str, int, int]]:
        """(which, smaller, larger) pairs where a one-feature extension decreases v."""
        bad = []
        for which in ("acc", "disc"):
            table = self.values(which)
            for key, v in table.items():
                for i in range(self.n):
                    bigger = key | 1 << i
                    if bigger != key and bigger in table and table[bigger] < v - tol:
                        bad.append((which, key, bigger))
        return bad


def coefficient_table(prob: ScoringProblem, keys: Iterable[int] | None = None,
                      scorer: SubsetScorer | None = None, threads: int | None = None) -> CoefficientTable:
    """Evaluate both coefficients on every subset (or on ``keys``)."""
    scorer = scorer or SubsetScorer(prob)
    if keys is None:
        if prob.n > MAX_EXACT_FEATURES:
            raise SizeError(f"{prob.n} features exceed the exact-table limit of {MAX_EXACT_FEATURES}")
        keys = range(1 << prob.n)
    keys = sorted(set(keys))
    for k in keys:
        subset_members(k, prob.n)
    workers = min(threads or thread_count(), max(len(keys), 1))

    def work(k: int):
        return k, scorer.acc(k), scorer.factors(k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, keys))
    else:
        results = [work(k) for k in keys]
    acc, disc, pids, factors = {}, {}, {}, {}
    for k, a, f in results:
        acc[k] = a
        disc[k] = f.value
        factors[k] = f
        if f.pid is not None:
            pids[k] = f.pid
    return CoefficientTable(prob.features, acc, disc, pids, factors)
