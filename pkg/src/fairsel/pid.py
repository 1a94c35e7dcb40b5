"""Bivariate partial information decomposition.

The unique information of ``R1`` about ``T`` with respect to ``R2`` is the
minimum of ``I_Q(T;R1|R2)`` over all joints ``Q`` that share the ``(T,R1)``
and ``(T,R2)`` marginals of ``P``. Shared and synergistic information follow
from the two mutual-information identities.

Feasible ``Q`` factor as ``Q(t,r1,r2) = P(t) C_t(r1,r2)`` where every
``C_t`` is a coupling of ``P(r1|t)`` and ``P(r2|t)``, i.e. a point of a
transportation polytope. On that set ``I_Q(T;R1|R2) = H_P(T|R2) - H_Q(T|R1,R2)``
with the first term fixed, so we minimise the convex function

    f(Q) = sum_{t,r1,r2} Q log Q - sum_{r1,r2} Q(r1,r2) log Q(r1,r2)

with a primal log-barrier method: damped Newton steps in the null space of
the marginal constraints, starting from the product coupling. The barrier
parameter is raised until the duality bound ``K / tau`` (``K`` free cells)
drops below ``objective_tol``; that bound is reported as ``objective_gap``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ArgumentError, ConvergenceError, DecompositionIntegrityError, SizeError
from .prob import (
    NATS_PER_BIT,
    JointDistribution,
    Variable,
    VariableSchema,
    cond_mutual_info,
    mutual_info,
    reorder,
)

BRUTE_FORCE_MAX_CELLS = 64
BRUTE_FORCE_MAX_POINTS = 20_000_000


@dataclass(frozen=True)
class SolverConfig:
    objective_tol: float = 1e-10  # bits
    feasibility_tol: float = 1e-9
    max_iterations: int = 100_000
    clamp_threshold: float = 1e-9

    def __post_init__(self):
        for name in ("objective_tol", "feasibility_tol", "max_iterations", "clamp_threshold"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"SolverConfig.{name} must be positive")

    def to_json(self) -> dict:
        return {
            "objective_tol": self.objective_tol,
            "feasibility_tol": self.feasibility_tol,
            "max_iterations": self.max_iterations,
            "clamp_threshold": self.clamp_threshold,
        }


@dataclass(frozen=True)
class PidInput:
    """A joint over exactly three variables, axes ordered (T, R1, R2)."""

    dist: JointDistribution

    def __post_init__(self):
        if len(self.dist.names) != 3:
            raise ArgumentError(f"PID needs exactly three variables, got {list(self.dist.names)}")

    @classmethod
    def from_names(cls, dist: JointDistribution, target: str, source1: str, source2: str) -> "PidInput":
        return cls(reorder(dist, [target, source1, source2]))

    @classmethod
    def from_array(cls, probs, names=("T", "R1", "R2")) -> "PidInput":
        probs = np.asarray(probs, dtype=float)
        schema = VariableSchema(Variable(n, k) for n, k in zip(names, probs.shape))
        return cls(JointDistribution(schema, probs))

    @property
    def names(self) -> tuple[str, str, str]:
        return self.dist.names  # type: ignore[return-value]

    @property
    def tensor(self) -> np.ndarray:
        return self.dist.probs


@dataclass(frozen=True)
class PidResult:
    ui_1: float
    ui_2: float
    si: float
    ci: float
    q_star: JointDistribution = field(repr=False)
    iterations: int = 0
    objective_gap: float = 0.0

    @property
    def total(self) -> float:
        return self.ui_1 + self.ui_2 + self.si + self.ci

    def to_json(self) -> dict:
        return {
            "ui_1": self.ui_1,
            "ui_2": self.ui_2,
            "si": self.si,
            "ci": self.ci,
            "iterations": self.iterations,
            "objective_gap": self.objective_gap,
        }


class _Polytope:
    """Cells, constraint null-space basis and start point of Delta_P."""

    def __init__(self, p: np.ndarray):
        nt, m1, m2 = p.shape
        p_t = p.sum(axis=(1, 2))
        p_tr1 = p.sum(axis=2)
        p_tr2 = p.sum(axis=1)
        cells, x0, blocks = [], [], []
        for t in range(nt):
            if p_t[t] <= 0:
                continue
            rows = np.flatnonzero(p_tr1[t] > 0)
            cols = np.flatnonzero(p_tr2[t] > 0)
            start = len(cells)
            for i in rows:
                for j in cols:
                    cells.append((t, i, j))
                    x0.append(p_tr1[t, i] * p_tr2[t, j] / p_t[t])
            # E_ij - E_iL - E_Lj + E_LL spans the directions of the polytope
            nr, nc = len(rows), len(cols)
            for a in range(nr - 1):
                for b in range(nc - 1):
                    v = {}
                    v[start + a * nc + b] = 1.0
                    v[start + a * nc + nc - 1] = -1.0
                    v[start + (nr - 1) * nc + b] = -1.0
                    v[start + (nr - 1) * nc + nc - 1] = 1.0
                    blocks.append(v)
        self.shape = p.shape
        self.cells = np.array(cells, dtype=int).reshape(-1, 3)
        self.x0 = np.array(x0, dtype=float)
        k = len(cells)
        self.basis = np.zeros((k, len(blocks)))
        for col, v in enumerate(blocks):
            for row, val in v.items():
                self.basis[row, col] = val
        # group index of each cell by (r1, r2) for the Q(r1, r2) marginal
        pair = self.cells[:, 1] * m2 + self.cells[:, 2] if k else np.zeros(0, dtype=int)
        uniq, self.group = np.unique(pair, return_inverse=True)
        self.n_groups = len(uniq)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def objective(self, x: np.ndarray) -> float:
        s = np.bincount(self.group, weights=x, minlength=self.n_groups)
        xp, sp = x[x > 0], s[s > 0]
        return float(np.sum(xp * np.log(xp)) - np.sum(sp * np.log(sp)))

    def to_tensor(self, x: np.ndarray) -> np.ndarray:
        q = np.zeros(self.shape)
        if len(x):
            q[self.cells[:, 0], self.cells[:, 1], self.cells[:, 2]] = x
        return q


def _barrier_minimize(poly: _Polytope, cfg: SolverConfig):
    """Return (x, newton_iterations, gap_nats)."""
    x = poly.x0.copy()
    k = len(x)
    if poly.dim == 0:
        return x, 0, 0.0
    N = poly.basis
    tol_nats = cfg.objective_tol * NATS_PER_BIT
    G = np.zeros((poly.n_groups, N.shape[1]))
    np.add.at(G, poly.group, N)
    tau = 1.0
    iterations = 0
    while True:
        previous = math.inf
        for _ in range(200):
            iterations += 1
            if iterations > cfg.max_iterations:
                raise ConvergenceError(
                    f"barrier method exceeded {cfg.max_iterations} Newton iterations",
                    best=x, objective_gap=k / tau / NATS_PER_BIT)
            s = np.bincount(poly.group, weights=x, minlength=poly.n_groups)
            inv_x = 1.0 / x
            grad = tau * (np.log(x) - np.log(s[poly.group])) - inv_x
            # Hessian of tau*f - sum log x, restricted to the null space
            NX = N * np.sqrt(tau * inv_x + inv_x * inv_x)[:, None]
            H = NX.T @ NX
            H -= tau * (G.T / s) @ G
            g = N.T @ grad
            # symmetric diagonal scaling: cells near zero blow up single rows
            d = 1.0 / np.sqrt(np.diag(H))
            Hs = H * d[:, None] * d[None, :]
            try:
                dz = -d * scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hs, check_finite=False), g * d)
            except (np.linalg.LinAlgError, ValueError):
                dz = -d * np.linalg.lstsq(Hs, g * d, rcond=None)[0]
            decrement = -float(g @ dz)
            # barrier suboptimality is decrement/2, i.e. decrement/(2 tau) in f.
            # Past tau ~ 1e11 the decrement bottoms out at rounding noise
            # (tau * eps in the gradient); stop once it stops contracting.
            if decrement <= 1e-10 or (decrement < 1e-6 and decrement > 0.25 * previous):
                break
            previous = decrement
            dx = N @ dz
            neg = dx < 0
            alpha_max = float(np.min(-x[neg] / dx[neg])) if np.any(neg) else math.inf
            alpha = min(1.0, 0.95 * alpha_max)
            phi0 = tau * poly.objective(x) - np.sum(np.log(x))
            slope = -decrement
            while True:
                xn = x + alpha * dx
                if np.all(xn > 0):
                    phi = tau * poly.objective(xn) - np.sum(np.log(xn))
                    # the relative slack absorbs rounding when tau*f is large
                    if phi <= phi0 + 0.25 * alpha * slope + 1e-13 * abs(phi0):
                        break
                alpha *= 0.5
                if alpha < 1e-20:
                    xn = x
                    break
            if xn is x:
                break
            x = xn
        if k / tau < tol_nats:
            return x, iterations, k / tau
        tau *= 10.0


def _as_input(pid_input) -> PidInput:
    if isinstance(pid_input, PidInput):
        return pid_input
    if isinstance(pid_input, JointDistribution):
        return PidInput(pid_input)
    return PidInput.from_array(pid_input)


def unique_information(pid_input, cfg: SolverConfig | None = None):
    """UI(T; R1 \\ R2) in bits and the minimising joint.

    Returns ``(value, q_star, iterations, gap_bits)``.
    """
    cfg = cfg or SolverConfig()
    inp = _as_input(pid_input)
    p = inp.tensor
    t, r1, r2 = inp.names
    poly = _Polytope(p)
    x, iterations, gap = _barrier_minimize(poly, cfg)
    q = poly.to_tensor(x)
    # renormalise away the last ulp of drift so the result is a valid pmf
    q = q / q.sum()
    q_star = JointDistribution(inp.dist.schema, q, check=False)
    value = cond_mutual_info(q_star, [t], [r1], [r2])
    value_p = cond_mutual_info(inp.dist, [t], [r1], [r2])
    if value_p <= value:
        # P itself is feasible; never report worse than it
        value, q_star = value_p, inp.dist
    return value, q_star, iterations, gap / NATS_PER_BIT


def pid_decompose(pid_input, cfg: SolverConfig | None = None) -> PidResult:
    cfg = cfg or SolverConfig()
    inp = _as_input(pid_input)
    t, r1, r2 = inp.names
    ui_1, q_star, iterations, gap = unique_information(inp, cfg)
    i_1 = mutual_info(inp.dist, [t], [r1])
    i_2 = mutual_info(inp.dist, [t], [r2])
    i_12 = mutual_info(inp.dist, [t], [r1, r2])
    si = i_1 - ui_1
    ui_2 = i_2 - si
    ci = i_12 - ui_1 - ui_2 - si
    parts = {}
    for name, value in (("ui_1", ui_1), ("ui_2", ui_2), ("si", si), ("ci", ci)):
        if value < 0:
            if value < -cfg.clamp_threshold:
                raise DecompositionIntegrityError(
                    f"{name} = {value!r} < -{cfg.clamp_threshold}: the solver did not reach the minimum")
            value = 0.0
        parts[name] = value
    return PidResult(q_star=q_star, iterations=iterations, objective_gap=gap, **parts)


def _coupling_grid(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """All grid couplings of marginals ``a`` (rows) and ``b`` (cols).

    Cells are filled in row-major order; each free cell ranges over its exact
    feasible interval given earlier choices, sampled at ``step`` with both
    end points included, so every face of the polytope is reached.
    """
    m1, m2 = len(a), len(b)
    out = []

    def fill(cell: int, mat: np.ndarray, row_rem: np.ndarray, col_rem: np.ndarray):
        if cell == m1 * m2:
            out.append(mat.copy())
            return
        i, j = divmod(cell, m2)
        if j == m2 - 1 or i == m1 - 1:
            # last row/column cells are forced by the marginals
            v = row_rem[i] if j == m2 - 1 else col_rem[j]
            other = col_rem[j] if j == m2 - 1 else row_rem[i]
            if v < -1e-12 or v > other + 1e-12:
                return
            values = [max(v, 0.0)]
        else:
            later_cols = col_rem[j + 1:].sum()
            later_rows = a[i + 1:].sum()
            hi = min(row_rem[i], col_rem[j])
            lo = max(0.0, row_rem[i] - later_cols, col_rem[j] - later_rows)
            if hi < lo:
                if lo - hi > 1e-12:
                    return
                hi = lo
            n = int(math.floor((hi - lo) / step + 1e-9))
            values = [lo + k * step for k in range(n + 1)]
            if hi - values[-1] > 1e-12:
                values.append(hi)
        for v in values:
            mat[i, j] = v
            row_rem[i] -= v
            col_rem[j] -= v
            if row_rem[i] >= -1e-12 and col_rem[j] >= -1e-12:
                fill(cell + 1, mat, row_rem, col_rem)
            row_rem[i] += v
            col_rem[j] += v
        mat[i, j] = 0.0

    fill(0, np.zeros((m1, m2)), a.astype(float).copy(), b.astype(float).copy())
    return np.array(out).reshape(len(out), m1 * m2)


def brute_force_ui(pid_input, grid_step: float = 1e-3) -> float:
    """UI(T; R1 \\ R2) by exhaustive search over a grid of Delta_P (bits).

    Independent of :func:`unique_information`: the objective is evaluated
    directly as ``I_Q(T;R1|R2)`` at every grid joint.
    """
    inp = _as_input(pid_input)
    p = inp.tensor
    nt, m1, m2 = p.shape
    if nt * m1 * m2 > BRUTE_FORCE_MAX_CELLS:
        raise SizeError(f"brute_force_ui supports at most {BRUTE_FORCE_MAX_CELLS} cells, got {nt * m1 * m2}")
    if not grid_step > 0:
        raise ArgumentError("grid_step must be positive")
    p_t = p.sum(axis=(1, 2))
    grids = []
    for t in range(nt):
        if p_t[t] <= 0:
            continue
        a = p[t].sum(axis=1) / p_t[t]
        b = p[t].sum(axis=0) / p_t[t]
        grids.append(p_t[t] * _coupling_grid(a, b, grid_step))
    total = math.prod(len(g) for g in grids) * m1 * m2 * len(grids)
    if total > BRUTE_FORCE_MAX_POINTS * 8:
        raise SizeError(f"grid has {math.prod(len(g) for g in grids)} points; increase grid_step")

    def plogp(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, x * np.log2(np.where(x > 0, x, 1.0)), 0.0)

    # I_Q(T;R1|R2) = sum Q log Q + sum Q(r2) log Q(r2) - sum Q(t,r2) log Q(t,r2) - sum Q(r1,r2) log Q(r1,r2)
    p_r2 = p.sum(axis=(0, 1))
    p_tr2 = p.sum(axis=1)
    const = float(np.sum(plogp(p_r2)) - np.sum(plogp(p_tr2)))
    k = len(grids)
    sep = 0.0
    pair = 0.0
    for idx, g in enumerate(grids):
        shape = [1] * k + [m1 * m2]
        shape[idx] = len(g)
        sep = sep + plogp(g).sum(axis=1).reshape(shape[:-1])
        pair = pair + g.reshape(shape)
    if k == 0:
        return 0.0
    values = sep + const - plogp(pair).sum(axis=-1)
    return max(float(np.min(values)), 0.0)


def iter_random_inputs(rng: np.random.Generator, shape=(2, 2, 2), count: int = 1, concentration: float = 1.0):
    """Random full-support PID inputs drawn from a symmetric Dirichlet."""
    size = math.prod(shape)
    for _ in range(count):
        yield PidInput.from_array(rng.dirichlet(np.full(size, concentration)).reshape(shape))


__all__ = [
    "SolverConfig",
    "PidInput",
    "PidResult",
    "unique_information",
    "pid_decompose",
    "brute_force_ui",
    "iter_random_inputs",
]
