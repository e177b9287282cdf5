"""Subgraph features, a deterministic multinomial baseline, and ROC metrics.

Feature vectors are the upper triangle (including the diagonal) of each
patient's differential graph restricted to the pivotal nodes, in fixed
(j <= k) order: p pivotal nodes give p(p+1)/2 columns. The classifier is
multinomial logistic regression with an L2 penalty, trained by full-batch
gradient descent on standardized features with halving-on-increase
backtracking; everything is deterministic given data, seed, and
hyperparameters.

Evaluation follows the one-vs-rest protocol: per-class ROC curves built by a
descending threshold sweep over distinct scores (ties collapsed), trapezoidal
AUC (equal to pair counting with ties at half weight), macro AUC as the
unweighted mean, micro AUC as the ROC over pooled binarized (label, score)
pairs, and the Youden cutoff J = max(TPR - FPR) with ties resolved to the
lowest threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffgraph import DifferentialGraph
from .selection import PivotalNodeSet

SCHEMA_VERSION = 1


@dataclass
class FeatureMatrix:
    """Per-patient feature rows with labels and named columns."""

    X: np.ndarray
    labels: tuple[str, ...]
    feature_names: tuple[str, ...]
    patient_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def take(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=int)
        return FeatureMatrix(
            self.X[rows],
            tuple(self.labels[i] for i in rows),
            self.feature_names,
            tuple(self.patient_ids[i] for i in rows),
        )


def vectorize(
    graphs: Sequence[DifferentialGraph],
    nodes: PivotalNodeSet | Sequence[int],
    node_names: Sequence[str] | None = None,
    include_diagonal: bool = True,
) -> FeatureMatrix:
    """Upper-triangle features over the pivotal nodes.

    With ``include_diagonal`` (the default) columns cover all (j <= k) pairs,
    p(p+1)/2 for p nodes; without it only the p(p-1)/2 off-diagonal pairs,
    for diagonal-free ablations.
    """
    indices = list(nodes.indices if isinstance(nodes, PivotalNodeSet) else nodes)
    if not indices:
        raise ValueError("empty pivotal set")
    if indices != sorted(set(indices)):
        raise ValueError("node indices must be sorted and distinct")
    if not graphs:
        raise ValueError("no graphs to vectorize")
    d = graphs[0].d
    if indices[-1] >= d:
        raise ValueError("node index out of range")

    def name(i: int) -> str:
        return node_names[i] if node_names is not None else str(i)

    offset = 0 if include_diagonal else 1
    pairs = [(a, b) for ai, a in enumerate(indices) for b in indices[ai + offset :]]
    if not pairs:
        raise ValueError("no feature columns (single node without diagonal)")
    feature_names = tuple(f"({name(a)}, {name(b)})" for a, b in pairs)
    rows_idx = np.array([p[0] for p in pairs])
    cols_idx = np.array([p[1] for p in pairs])
    X = np.empty((len(graphs), len(pairs)))
    labels = []
    ids = []
    for v, g in enumerate(graphs):
        if g.d != d:
            raise ValueError("graphs disagree on node count")
        X[v] = g.matrix[rows_idx, cols_idx]
        labels.append(g.group)
        ids.append(g.patient_id)
    return FeatureMatrix(X, tuple(labels), feature_names, tuple(ids))


def stratified_split(
    features: FeatureMatrix, train_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded split; train takes floor(fraction * class size) rows.

    Classes are processed in sorted label order with one permutation each, so
    the split depends only on (labels, fraction, seed). Returned index arrays
    are sorted, disjoint, and exhaustive.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    labels = np.asarray(features.labels)
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for cls in sorted(set(labels)):
        rows = np.flatnonzero(labels == cls)
        if len(rows) < 2:
            raise ValueError(f"class {cls!r} has fewer than 2 rows")
        perm = rng.permutation(rows)
        n_train = int(np.floor(train_fraction * len(rows)))
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    return np.array(sorted(train)), np.array(sorted(test))


@dataclass
class LinearModel:
    """Multinomial logistic model with its training-set standardization.

    ``weights`` is class-count x (kept-feature-count + 1) with the bias in the
    last column; ``dropped`` lists zero-variance columns removed before
    standardization.
    """

    weights: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    dropped: tuple[int, ...]
    classes: tuple[str, ...]
    l2_strength: float
    step_size: float
    max_steps: int
    loss_trace: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def _standardize(model: LinearModel, X: np.ndarray) -> np.ndarray:
    keep = np.setdiff1d(np.arange(X.shape[1]), np.array(model.dropped, dtype=int))
    return (X[:, keep] - model.mean) / model.std


def _loss_and_grad(
    W: np.ndarray, Xs: np.ndarray, Y: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    n = Xs.shape[0]
    Z = Xs @ W[:, :-1].T + W[:, -1]
    Z -= Z.max(axis=1, keepdims=True)
    expZ = np.exp(Z)
    P = expZ / expZ.sum(axis=1, keepdims=True)
    nll = -np.mean(np.log(np.clip(P[np.arange(n), Y.argmax(axis=1)], 1e-300, None)))
    loss = nll + 0.5 * l2 * float(np.sum(W[:, :-1] ** 2)) / n
    dZ = (P - Y) / n
    grad = np.empty_like(W)
    grad[:, :-1] = dZ.T @ Xs + (l2 / n) * W[:, :-1]
    grad[:, -1] = dZ.sum(axis=0)
    return float(loss), grad


def train(
    features: FeatureMatrix,
    l2_strength: float = 1.0,
    step_size: float = 0.1,
    max_steps: int = 2000,
) -> LinearModel:
    """Fit on all rows of ``features`` (pass a pre-split training matrix).

    The loss is mean cross-entropy plus (l2/(2n)) * ||W||^2 with the bias
    unpenalized. Steps that would increase the loss halve the step size until
    they do not; accepted losses form the recorded trace, so the trace is
    non-increasing.
    """
    classes = tuple(sorted(set(features.labels)))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes in the training rows")
    X = np.asarray(features.X, dtype=float)
    labels = np.asarray(features.labels)

    mean_all = X.mean(axis=0)
    std_all = X.std(axis=0)
    dropped = tuple(
        int(i)
        for i in np.flatnonzero(std_all <= 1e-12 * np.maximum(1.0, np.abs(mean_all)))
    )
    if dropped:
        warnings.warn(f"dropping {len(dropped)} zero-variance feature columns")
    keep = np.setdiff1d(np.arange(X.shape[1]), np.array(dropped, dtype=int))
    mean, std = mean_all[keep], std_all[keep]
    Xs = (X[:, keep] - mean) / std

    Y = np.zeros((len(labels), len(classes)))
    for c, cls in enumerate(classes):
        Y[labels == cls, c] = 1.0

    W = np.zeros((len(classes), len(keep) + 1))
    step = step_size
    loss, grad = _loss_and_grad(W, Xs, Y, l2_strength)
    trace = [loss]
    for _ in range(max_steps):
        if np.max(np.abs(grad)) < 1e-12:
            break
        while True:
            candidate = W - step * grad
            new_loss, new_grad = _loss_and_grad(candidate, Xs, Y, l2_strength)
            if new_loss <= loss or step < 1e-15:
                break
            step *= 0.5
        if new_loss > loss:
            break
        W, loss, grad = candidate, new_loss, new_grad
        trace.append(loss)

    return LinearModel(
        weights=W,
        mean=mean,
        std=std,
        dropped=dropped,
        classes=classes,
        l2_strength=l2_strength,
        step_size=step_size,
        max_steps=max_steps,
        loss_trace=trace,
    )


def predict_proba(model: LinearModel, X: np.ndarray) -> np.ndarray:
    """Softmax class probabilities on raw (unstandardized) feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(model.mean) + len(model.dropped):
        raise ValueError(
            f"expected {len(model.mean) + len(model.dropped)} features, got {X.shape[1]}"
        )
    Xs = _standardize(model, X)
    Z = Xs @ model.weights[:, :-1].T + model.weights[:, -1]
    Z -= Z.max(axis=1, keepdims=True)
    expZ = np.exp(Z)
    return expZ / expZ.sum(axis=1, keepdims=True)


@dataclass
class RocCurve:
    """Threshold-descending ROC points; starts at (0,0), ends at (1,1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    positive_label: object = 1


def roc_curve(
    scores: Sequence[float],
    labels: Sequence[int] | Sequence[bool],
    positive_label: object = 1,
) -> RocCurve:
    """Sweep distinct scores descending, collapsing tied scores into one step.

    The decision rule is score >= threshold; a leading (0, 0) point at
    threshold +inf anchors the curve.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be matching 1-d sequences")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("both label values must be present")

    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tps = np.cumsum(y)
    fps = np.cumsum(~y)
    last_of_tie = np.r_[np.flatnonzero(np.diff(s) != 0.0), len(s) - 1]
    tpr = np.r_[0.0, tps[last_of_tie] / n_pos]
    fpr = np.r_[0.0, fps[last_of_tie] / (len(y) - n_pos)]
    thresholds = np.r_[np.inf, s[last_of_tie]]
    return RocCurve(fpr, tpr, thresholds, positive_label)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def youden_cutoff(curve: RocCurve) -> tuple[float, float]:
    """(threshold, J) maximizing J = TPR - FPR; ties pick the lowest threshold."""
    J = curve.tpr - curve.fpr
    best = np.max(J)
    idx = len(J) - 1 - int(np.argmax(J[::-1] == best))
    return float(curve.thresholds[idx]), float(best)


def confusion_at(
    scores: Sequence[float], labels: Sequence[int] | Sequence[bool], threshold: float
) -> dict[str, int]:
    """2x2 counts for the rule score >= threshold."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pred = s >= threshold
    return {
        "tp": int(np.sum(pred & y)),
        "fp": int(np.sum(pred & ~y)),
        "fn": int(np.sum(~pred & y)),
        "tn": int(np.sum(~pred & ~y)),
    }


@dataclass
class EvalReport:
    """One-vs-rest metrics for a fixed class order."""

    classes: tuple[str, ...]
    per_class_auc: dict[str, float]
    micro_auc: float
    macro_auc: float
    youden: dict[str, tuple[float, float]]
    confusion: dict[str, dict[str, int]]
    split_seed: int | None
    curves: dict[str, RocCurve] = field(default_factory=dict)


def ovr_report(
    probabilities: np.ndarray,
    labels: Sequence[str],
    classes: Sequence[str] | None = None,
    split_seed: int | None = None,
) -> EvalReport:
    """Per-class one-vs-rest ROC/AUC/Youden/confusion plus micro and macro AUC."""
    P = np.asarray(probabilities, dtype=float)
    labels = np.asarray(labels)
    classes = tuple(classes) if classes is not None else tuple(sorted(set(labels)))
    if P.shape != (len(labels), len(classes)):
        raise ValueError(f"probabilities must be shaped {(len(labels), len(classes))}")
    for cls in classes:
        if not np.any(labels == cls):
            raise ValueError(f"class {cls!r} missing from labels")

    per_class_auc: dict[str, float] = {}
    youden: dict[str, tuple[float, float]] = {}
    confusion: dict[str, dict[str, int]] = {}
    curves: dict[str, RocCurve] = {}
    pooled_scores: list[np.ndarray] = []
    pooled_labels: list[np.ndarray] = []
    for c, cls in enumerate(classes):
        scores = P[:, c]
        binary = labels == cls
        curve = roc_curve(scores, binary, positive_label=cls)
        curves[cls] = curve
        per_class_auc[cls] = auc(curve)
        threshold, J = youden_cutoff(curve)
        youden[cls] = (threshold, J)
        confusion[cls] = confusion_at(scores, binary, threshold)
        pooled_scores.append(scores)
        pooled_labels.append(binary)

    micro_curve = roc_curve(
        np.concatenate(pooled_scores), np.concatenate(pooled_labels), positive_label="micro"
    )
    curves["micro"] = micro_curve
    return EvalReport(
        classes=classes,
        per_class_auc=per_class_auc,
        micro_auc=auc(micro_curve),
        macro_auc=float(np.mean([per_class_auc[c] for c in classes])),
        youden=youden,
        confusion=confusion,
        split_seed=split_seed,
        curves=curves,
    )


def report_to_json(report: EvalReport, hyperparams: dict | None = None) -> dict:
    """JSON-ready dict (curves excluded; they export separately as CSV)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "eval_report",
        "classes": list(report.classes),
        "per_class_auc": {c: report.per_class_auc[c] for c in report.classes},
        "micro_auc": report.micro_auc,
        "macro_auc": report.macro_auc,
        "youden": {
            c: {"threshold": report.youden[c][0], "J": report.youden[c][1]}
            for c in report.classes
        },
        "confusion": {c: dict(report.confusion[c]) for c in report.classes},
        "split_seed": report.split_seed,
        "hyperparams": hyperparams or {},
    }


def roc_csv(curve: RocCurve) -> str:
    """CSV text `threshold,fpr,tpr`, one row per curve point."""
    lines = ["threshold,fpr,tpr"]
    for t, f, tp in zip(curve.thresholds, curve.fpr, curve.tpr):
        lines.append(f"{'inf' if np.isinf(t) else repr(float(t))},{repr(float(f))},{repr(float(tp))}")
    return "\n".join(lines) + "\n"
