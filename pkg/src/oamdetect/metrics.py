"""Evaluation of trained detectors on a labelled sample set."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import SampleSet
from .errors import DomainError


@dataclass
class EvalReport:
    method: str
    accuracy: float
    confusion: np.ndarray           # rows true class, columns predicted class
    recall: np.ndarray
    error_hist_edges: np.ndarray
    error_hist_counts: np.ndarray
    regression: dict
    predictions: np.ndarray = field(repr=False)
    outputs: np.ndarray = field(repr=False)  # numeric output per sample
    test_time: float = 0.0

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        """JSON-ready summary without the wall-clock time, so reruns compare byte-equal."""
        return {
            "method": self.method,
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "confusion": self.confusion.tolist(),
            "recall": self.recall.tolist(),
            "error_histogram": {
                "edges": self.error_hist_edges.tolist(),
                "counts": self.error_hist_counts.tolist(),
            },
            "regression": self.regression,
        }


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def linear_regression(x, y) -> dict:
    """Least-squares fit ``y = slope * x + intercept`` with coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan")}
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(((y - ym) ** 2).sum())
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": slope, "intercept": intercept, "r2": r2}


def error_histogram(errors, span: float, bins: int = 21):
    """Histogram over [-span, span]; values outside are counted in the end bins."""
    edges = np.linspace(-span, span, bins + 1)
    e = np.clip(np.asarray(errors, dtype=float), -span, span)
    counts, _ = np.histogram(e, bins=edges)
    return edges, counts


def evaluate(detector, test: SampleSet, method: Optional[str] = None) -> EvalReport:
    """Run ``detector`` over ``test``.

    ``detector`` needs ``predict(features) -> class indices``; if it also has
    ``predict_value(features)`` the continuous output feeds the error histogram
    and regression, otherwise the numeric label of the predicted class does.
    """
    if len(test) == 0:
        raise DomainError("empty test set")
    scheme = test.scheme
    labels = np.asarray(scheme.numeric_labels)
    t0 = time.perf_counter()
    if hasattr(detector, "predict_value"):
        outputs = np.asarray(detector.predict_value(test.features), dtype=float)
        pred = scheme.nearest_class(outputs)
    else:
        pred = np.asarray(detector.predict(test.features), dtype=int)
        outputs = labels[pred]
    elapsed = time.perf_counter() - t0

    cm = confusion_matrix(test.class_index, pred, scheme.n_classes)
    rows = cm.sum(axis=1)
    recall = np.divide(np.diag(cm), rows, out=np.zeros(len(rows)), where=rows > 0)
    span = float(labels.max() - labels.min())
    edges, counts = error_histogram(outputs - test.labels, span)
    return EvalReport(
        method or getattr(detector, "name", type(detector).__name__),
        float(np.trace(cm) / cm.sum()),
        cm, recall, edges, counts,
        linear_regression(test.labels, outputs),
        pred, outputs, elapsed,
    )
