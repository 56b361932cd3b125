"""K-nearest-neighbour mode detector (exhaustive scan)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SampleSet
from .errors import DimensionError, DomainError
from .oam_signal import wrap_phase

METRICS = ("euclidean", "wrapped")


@dataclass(frozen=True)
class KnnModel:
    k: int
    features: np.ndarray
    class_index: np.ndarray
    n_classes: int
    metric: str = "euclidean"

    @property
    def n_train(self) -> int:
        return len(self.class_index)

    def distances(self, query: np.ndarray) -> np.ndarray:
        """Distances from each query row (m, d) to every stored sample -> (m, n)."""
        diff = query[:, None, :] - self.features[None, :, :]
        if self.metric == "wrapped":
            diff = wrap_phase(diff)
        return np.sqrt(np.einsum("mnd,mnd->mn", diff, diff))

    def predict(self, queries, chunk: int = 32) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.features.shape[1]:
            raise DimensionError(f"query has {q.shape[1]} features, model expects {self.features.shape[1]}")
        out = np.empty(len(q), dtype=int)
        for s in range(0, len(q), chunk):
            dist = self.distances(q[s:s + chunk])
            for r, row in enumerate(dist):
                out[s + r] = self._vote(row)
        return out

    def _vote(self, dist: np.ndarray) -> int:
        k = self.k
        if k == 1:
            dmin = dist.min()
            return int(self.class_index[dist == dmin].min())
        kth = np.partition(dist, k - 1)[k - 1]
        cand = np.flatnonzero(dist <= kth)
        # order candidates by (distance, class) so the selection ignores storage order
        order = np.lexsort((self.class_index[cand], dist[cand]))
        nn = cand[order[:k]]
        cls = self.class_index[nn]
        counts = np.bincount(cls, minlength=self.n_classes)
        dsum = np.bincount(cls, weights=dist[nn], minlength=self.n_classes)
        top = np.flatnonzero(counts == counts.max())
        best = top[dsum[top] == dsum[top].min()]
        return int(best.min())

    def classify(self, query) -> int:
        return int(self.predict(np.asarray(query, dtype=float)[None, :])[0])


def knn_fit(train: SampleSet, k: int = 1, metric: str = "euclidean") -> KnnModel:
    if len(train) == 0:
        raise DomainError("empty training set")
    if not (1 <= k <= len(train)):
        raise DomainError(f"k={k} outside 1..{len(train)}")
    if metric not in METRICS:
        raise DomainError(f"unknown metric {metric!r}")
    return KnnModel(int(k), train.features.copy(), train.class_index.copy(),
                    train.scheme.n_classes, metric)


def knn_classify(model: KnnModel, query) -> int:
    return model.classify(query)


def model_to_dict(m: KnnModel) -> dict:
    return {
        "type": "knn", "k": m.k, "metric": m.metric, "n_classes": m.n_classes,
        "features": m.features.tolist(), "class_index": m.class_index.tolist(),
    }


def model_from_dict(d: dict) -> KnnModel:
    return KnnModel(int(d["k"]), np.asarray(d["features"], dtype=float),
                    np.asarray(d["class_index"], dtype=int), int(d["n_classes"]), d["metric"])
