"""Shapley attribution of subset coefficients to individual features."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .coefficients import (
    MAX_EXACT_FEATURES,
    CoefficientTable,
    ScoringProblem,
    SubsetScorer,
    coefficient_table,
    thread_count,
)
from .errors import ArgumentError, SizeError, TableError

DEFAULT_EXACT_LIMIT = 12
DEFAULT_PERMUTATIONS = 2000
MODES = ("auto", "exact", "mc")


def shapley_weight(t_size: int, n: int) -> Fraction:
    """|T|! (n - |T| - 1)! / n! as an exact rational."""
    if n < 1 or not 0 <= t_size <= n - 1:
        raise ArgumentError(f"coalition size {t_size} out of range for n={n}")
    return Fraction(math.factorial(t_size) * math.factorial(n - t_size - 1), math.factorial(n))


def _popcounts(size: int) -> np.ndarray:
    counts = np.zeros(size, dtype=np.int64)
    for b in range(max(size.bit_length() - 1, 0)):
        counts += (np.arange(size) >> b) & 1
    return counts


def shapley_from_values(values: Mapping[int, float], n: int) -> np.ndarray:
    """Exact Shapley values of a set function given on all 2**n bitmasks."""
    if n > MAX_EXACT_FEATURES:
        raise SizeError(f"exact Shapley values limited to n <= {MAX_EXACT_FEATURES}, got {n}")
    size = 1 << n
    missing = [k for k in range(size) if k not in values]
    if missing:
        raise TableError(f"table lacks {len(missing)} of {size} subsets (first missing key {missing[0]})")
    v = np.array([values[k] for k in range(size)], dtype=float)
    keys = np.arange(size)
    weights = np.array([float(shapley_weight(t, n)) for t in range(n)])
    sizes = _popcounts(size)
    phi = np.empty(n)
    for i in range(n):
        without = keys[(keys >> i & 1) == 0]
        gains = v[without | 1 << i] - v[without]
        phi[i] = float(np.dot(weights[sizes[without]], gains))
    return phi


def shapley_exact(table: CoefficientTable, which: str, n: int | None = None) -> np.ndarray:
    n = table.n if n is None else n
    return shapley_from_values(table.values(which), n)


def _permutation_gains(value_fn: Callable[[int], float], n: int, seed: int, k: int) -> np.ndarray:
    rng = np.random.default_rng([seed, k])
    gains = np.empty(n)
    key = 0
    prev = value_fn(0)
    for i in rng.permutation(n):
        key |= 1 << int(i)
        cur = value_fn(key)
        gains[i] = cur - prev
        prev = cur
    return gains


def shapley_monte_carlo(value_fn: Callable[[int], float], n: int, permutations: int,
                        seed: int, threads: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Permutation-sampling estimate and its standard error.

    Permutation ``k`` draws from its own generator seeded by ``(seed, k)``,
    so the result does not depend on the number of worker threads.
    """
    if permutations < 2:
        raise ArgumentError("Monte Carlo Shapley needs at least 2 permutations")
    if n < 1:
        raise ArgumentError("need at least one feature")
    workers = min(threads or thread_count(), permutations)
    run = lambda k: _permutation_gains(value_fn, n, seed, k)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, range(permutations)))
    else:
        rows = [run(k) for k in range(permutations)]
    samples = np.vstack(rows)
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(permutations)


def fairness_score(phi_acc, phi_d, alpha: float = 1.0) -> np.ndarray:
    """Accuracy minus alpha times discrimination, per feature."""
    phi_acc = np.asarray(phi_acc, dtype=float)
    phi_d = np.asarray(phi_d, dtype=float)
    if phi_acc.shape != phi_d.shape:
        raise ArgumentError(f"score arrays differ in length: {phi_acc.shape} vs {phi_d.shape}")
    if not alpha >= 0 or math.isinf(alpha):
        raise ArgumentError(f"alpha must be a finite non-negative number, got {alpha}")
    return phi_acc - alpha * phi_d


@dataclass(frozen=True)
class ShapleyScores:
    features: tuple[str, ...]
    phi_acc: np.ndarray
    phi_d: np.ndarray
    fairness: np.ndarray
    alpha: float
    method: str  # "exact" or "monte_carlo"
    std_err: np.ndarray | None = None  # shape (n, 2): accuracy, discrimination
    seed: int | None = None
    permutations: int | None = None

    @property
    def n(self) -> int:
        return len(self.features)

    def rows(self) -> list[dict]:
        out = []
        for i, name in enumerate(self.features):
            row = {"index": i, "feature": name, "phi_acc": float(self.phi_acc[i]),
                   "phi_d": float(self.phi_d[i]), "fairness": float(self.fairness[i])}
            if self.std_err is not None:
                row["std_err_acc"] = float(self.std_err[i, 0])
                row["std_err_d"] = float(self.std_err[i, 1])
            out.append(row)
        return out


def resolve_mode(mode: str, n: int, exact_limit: int = DEFAULT_EXACT_LIMIT) -> str:
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "auto":
        mode = "exact" if n <= exact_limit else "mc"
    if mode == "exact" and n > min(exact_limit, MAX_EXACT_FEATURES):
        raise SizeError(f"exact mode allows at most {min(exact_limit, MAX_EXACT_FEATURES)} features, got {n}")
    return mode


def score_features(prob: ScoringProblem, alpha: float = 1.0, mode: str = "auto",
                   permutations: int = DEFAULT_PERMUTATIONS, seed: int = 0,
                   exact_limit: int = DEFAULT_EXACT_LIMIT, scorer: SubsetScorer | None = None,
                   threads: int | None = None) -> tuple[ShapleyScores, CoefficientTable | None]:
    """Per-feature Shapley scores; also returns the full table in exact mode."""
    mode = resolve_mode(mode, prob.n, exact_limit)
    scorer = scorer or SubsetScorer(prob)
    if mode == "exact":
        table = coefficient_table(prob, scorer=scorer, threads=threads)
        phi_acc = shapley_exact(table, "acc")
        phi_d = shapley_exact(table, "disc")
        return ShapleyScores(prob.features, phi_acc, phi_d, fairness_score(phi_acc, phi_d, alpha),
                             float(alpha), "exact"), table
    phi_acc, se_acc = shapley_monte_carlo(scorer.acc, prob.n, permutations, seed, threads)
    phi_d, se_d = shapley_monte_carlo(scorer.disc, prob.n, permutations, seed, threads)
    return ShapleyScores(prob.features, phi_acc, phi_d, fairness_score(phi_acc, phi_d, alpha),
                         float(alpha), "monte_carlo", np.column_stack([se_acc, se_d]),
                         seed, permutations), None


def ranking(fairness: Sequence[float]) -> list[int]:
    """Indices by descending score; equal scores keep ascending index."""
    values = [float(f) for f in fairness]
    if not all(math.isfinite(f) for f in values):
        raise ArgumentError("scores must be finite to rank")
    return sorted(range(len(values)), key=lambda i: (-values[i], i))


def rank_and_select(scores: ShapleyScores, top_k: int | None = None,
                    threshold: float | None = None) -> list[str]:
    """Ranked feature names, cut by ``top_k`` or by ``fairness >= threshold``.

    With neither policy the whole ranking is returned.
    """
    if top_k is not None and threshold is not None:
        raise ArgumentError("choose either top_k or threshold, not both")
    order = ranking(scores.fairness)
    if top_k is not None:
        if not 0 <= top_k <= scores.n:
            raise ArgumentError(f"top_k={top_k} outside 0..{scores.n}")
        order = order[:top_k]
    elif threshold is not None:
        order = [i for i in order if scores.fairness[i] >= threshold]
    return [scores.features[i] for i in order]
