"""Classifier-side checks using the exact Bayes rule of a joint distribution."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .coefficients import ScoringProblem
from .errors import ArgumentError, DegenerateEvidenceError, UnsupportedMetricError
from .prob import JointDistribution, Variable, _table

KL_EPS = 1e-9
PREDICTION = "Y_hat"


@dataclass(frozen=True)
class PluginClassifier:
    """argmax_y P(y | x_S) as a lookup table over the feature configurations."""

    features: tuple[str, ...]
    label: str
    decision: np.ndarray  # one axis per feature, predicted label code
    predictive: np.ndarray  # decision axes + label axis, P(y | x_S)

    def predict(self, codes) -> int:
        return int(self.decision[tuple(codes)])


def _problem(dist: JointDistribution | ScoringProblem) -> ScoringProblem:
    return dist if isinstance(dist, ScoringProblem) else ScoringProblem(dist)


def bayes_classifier(dist: JointDistribution | ScoringProblem, key: int) -> PluginClassifier:
    """Bayes rule on the features in ``key``; ties go to the lowest label.

    Feature configurations with zero probability predict the overall
    majority label.
    """
    prob = _problem(dist)
    if key == 0:
        raise ArgumentError("the classifier needs at least one input feature")
    names = tuple(prob.names_of(key))
    joint = _table(prob.dist, [*names, prob.label])
    p_x = joint.sum(axis=-1, keepdims=True)
    p_y = joint.reshape(-1, joint.shape[-1]).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        predictive = np.where(p_x > 0, joint / p_x, p_y)
    decision = np.argmax(joint, axis=-1)
    decision = np.where(p_x[..., 0] > 0, decision, int(np.argmax(p_y)))
    decision.setflags(write=False)
    predictive.setflags(write=False)
    return PluginClassifier(names, prob.label, decision, predictive)


@dataclass(frozen=True)
class ErrorMetrics:
    error_01: float
    cross_entropy: float  # bits


def classifier_error(clf: PluginClassifier, dist: JointDistribution) -> ErrorMetrics:
    joint = _table(dist, [*clf.features, clf.label])
    hit = np.take_along_axis(joint, clf.decision[..., None], axis=-1).sum()
    mask = joint > 0
    ce = -float(np.sum(joint[mask] * np.log2(clf.predictive[mask])))
    return ErrorMetrics(max(0.0, 1.0 - float(hit)), ce if ce > 0 else 0.0)


def prediction_joint(clf: PluginClassifier, dist: JointDistribution | ScoringProblem) -> JointDistribution:
    """Joint of (A, prediction, Y) induced by running ``clf`` on ``dist``."""
    prob = _problem(dist)
    joint = _table(prob.dist, [prob.protected, *clf.features, prob.label])
    na, ny = joint.shape[0], joint.shape[-1]
    flat = joint.reshape(na, -1, ny)
    out = np.zeros((na, ny, ny))
    for cell, yhat in enumerate(clf.decision.ravel()):
        out[:, yhat, :] += flat[:, cell, :]
    schema = [prob.dist.variable(prob.protected), Variable(PREDICTION, ny, "feature"),
              prob.dist.variable(prob.label)]
    return JointDistribution(schema, out, check=False)


def _conditional_predictions(clf, dist) -> np.ndarray:
    pj = prediction_joint(clf, dist)
    p_ay = pj.probs.sum(axis=2)
    mass = p_ay.sum(axis=1)
    if np.any(mass <= 0):
        raise DegenerateEvidenceError("a protected group has probability zero")
    return p_ay / mass[:, None]


def _kl_eps(p: np.ndarray, q: np.ndarray) -> float:
    q = np.where(q > 0, q, KL_EPS)
    mask = p > 0
    value = float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))
    return value if value > 0 else 0.0


def bias_kl(clf: PluginClassifier, dist: JointDistribution | ScoringProblem) -> float:
    """KL(P(prediction | A=0) || P(prediction | A=1)) in bits.

    Zero cells of the second distribution are replaced by 1e-9.
    """
    cond = _conditional_predictions(clf, dist)
    if cond.shape[0] != 2:
        raise UnsupportedMetricError(
            f"bias_kl needs a binary protected attribute, got {cond.shape[0]} groups; use bias_kl_matrix")
    return _kl_eps(cond[0], cond[1])


def bias_kl_matrix(clf: PluginClassifier, dist: JointDistribution | ScoringProblem) -> np.ndarray:
    """Entry [a, b] is KL(P(prediction | A=a) || P(prediction | A=b))."""
    cond = _conditional_predictions(clf, dist)
    k = cond.shape[0]
    return np.array([[_kl_eps(cond[a], cond[b]) for b in range(k)] for a in range(k)])


@dataclass(frozen=True)
class SweepEntry:
    removed: str | None
    error_01: float
    cross_entropy: float
    bias_kl: float

    def to_json(self) -> dict:
        return {"removed": self.removed, "error_01": self.error_01,
                "cross_entropy_bits": self.cross_entropy, "bias_kl_bits": self.bias_kl}


@dataclass(frozen=True)
class SweepReport:
    features: tuple[str, ...]
    baseline: SweepEntry
    removed: tuple[SweepEntry, ...]

    def argmin_bias(self) -> int:
        values = [e.bias_kl for e in self.removed]
        return values.index(min(values))

    def argmax_error_increase(self, metric: str = "cross_entropy") -> int:
        values = [getattr(e, metric) - getattr(self.baseline, metric) for e in self.removed]
        return values.index(max(values))

    def to_json(self) -> dict:
        return {"features": list(self.features), "baseline": self.baseline.to_json(),
                "removed": [e.to_json() for e in self.removed]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["removed_feature", "error_01", "cross_entropy_bits", "bias_kl_bits"])
        for e in (self.baseline, *self.removed):
            w.writerow([e.removed or "(none)", f"{e.error_01:.17g}", f"{e.cross_entropy:.17g}",
                        f"{e.bias_kl:.17g}"])
        return buf.getvalue()


def _entry(prob: ScoringProblem, key: int, removed: str | None) -> SweepEntry:
    clf = bayes_classifier(prob, key)
    err = classifier_error(clf, prob.dist)
    entry = SweepEntry(removed, err.error_01, err.cross_entropy, bias_kl(clf, prob))
    if not all(math.isfinite(v) for v in (entry.error_01, entry.cross_entropy, entry.bias_kl)):
        raise ArithmeticError(f"non-finite sweep entry {entry}")
    return entry


def removal_sweep(dist: JointDistribution | ScoringProblem) -> SweepReport:
    """Baseline on all features, then one entry per feature left out."""
    prob = _problem(dist)
    if prob.n < 2:
        raise ArgumentError("a removal sweep needs at least two features")
    full = prob.full_key
    baseline = _entry(prob, full, None)
    removed = tuple(_entry(prob, full & ~(1 << i), prob.features[i]) for i in range(prob.n))
    return SweepReport(prob.features, baseline, removed)
