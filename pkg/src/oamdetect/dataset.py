"""Labelled phase-sample sets: training grids, random test draws, normalisation, files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DomainError, GeometryError, ParseError, ZeroSpanError
from .oam_signal import ModeSet, feature_dimension, feature_vector, receive_exact
from .physics import LinkGeometry, UcaConfig

SINGLE = "single-mode"
MULTI = "multi-mode"


@dataclass(frozen=True)
class LabelScheme:
    """Ordered classes with their numeric regression targets."""

    kind: str
    classes: tuple
    numeric_labels: tuple

    def __post_init__(self):
        if self.kind not in (SINGLE, MULTI):
            raise DomainError(f"unknown label scheme kind {self.kind!r}")
        if len(self.classes) != len(self.numeric_labels) or not self.classes:
            raise DomainError("classes and numeric_labels must be nonempty and aligned")
        if len(set(self.classes)) != len(self.classes):
            raise DomainError("classes must be distinct")
        if any(b <= a for a, b in zip(self.numeric_labels, self.numeric_labels[1:])):
            raise DomainError("numeric labels must be strictly increasing")

    @classmethod
    def single_mode(cls, modes: Sequence[int]) -> "LabelScheme":
        ms = sorted(int(m) for m in modes)
        return cls(SINGLE, tuple(ModeSet([m]) for m in ms), tuple(float(m) for m in ms))

    @classmethod
    def multi_mode(cls, combos: Sequence[Sequence[int]]) -> "LabelScheme":
        return cls(
            MULTI,
            tuple(ModeSet(c) for c in combos),
            tuple(float(i + 1) for i in range(len(combos))),
        )

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def nearest_class(self, values) -> np.ndarray:
        """Index of the nearest numeric label; exact midpoints go to the lower label."""
        v = np.atleast_1d(np.asarray(values, dtype=float))
        labels = np.asarray(self.numeric_labels)
        return np.argmin(np.abs(v[:, None] - labels[None, :]), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classes": [list(c.modes) for c in self.classes],
            "numeric_labels": list(self.numeric_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelScheme":
        return cls(
            d["kind"],
            tuple(ModeSet(c) for c in d["classes"]),
            tuple(float(x) for x in d["numeric_labels"]),
        )


@dataclass(frozen=True)
class PhaseSample:
    features: np.ndarray
    label: float
    class_index: int
    grid_coords: tuple


@dataclass
class SampleSet:
    """Samples stored column-wise; row i is one :class:`PhaseSample`."""

    features: np.ndarray
    labels: np.ndarray
    class_index: np.ndarray
    distance: np.ndarray
    alpha: np.ndarray
    scheme: LabelScheme
    meta: dict = field(default_factory=dict)
    norm: Optional["Normalizer"] = None

    def __post_init__(self):
        n = len(self.labels)
        f = np.asarray(self.features, dtype=float)
        self.features = f if f.ndim == 2 and len(f) == n else f.reshape(n, -1)
        self.labels = np.asarray(self.labels, dtype=float)
        self.class_index = np.asarray(self.class_index, dtype=int)
        self.distance = np.asarray(self.distance, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        for name in ("class_index", "distance", "alpha"):
            if len(getattr(self, name)) != n:
                raise DomainError(f"column {name} has wrong length")
        if n and (self.class_index.min() < 0 or self.class_index.max() >= self.scheme.n_classes):
            raise DomainError("class_index outside the label scheme")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> PhaseSample:
        return PhaseSample(
            self.features[i], float(self.labels[i]), int(self.class_index[i]),
            (float(self.distance[i]), float(self.alpha[i])),
        )

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(
            self.features[idx], self.labels[idx], self.class_index[idx],
            self.distance[idx], self.alpha[idx], self.scheme, dict(self.meta), self.norm,
        )


def geometry_template(n_tx: int, n_rx: int, r_tx: float, r_rx: float,
                      wavelength: float = 1.0, gain: float = 1.0,
                      tx_angle: float = 0.0, rx_angle: float = 0.0) -> LinkGeometry:
    """Geometry with a placeholder receiver position, replaced per sample."""
    return LinkGeometry(
        UcaConfig(n_tx, r_tx, tx_angle), UcaConfig(n_rx, r_rx, rx_angle),
        center_distance=(r_tx + r_rx) * 2 + 1.0, oblique_angle=0.0,
        wavelength=wavelength, gain=gain,
    )


def _sample(geom, ms, D, a, kind, embed, snr_db=None, rng=None):
    try:
        g = geom.with_position(D, a)
    except GeometryError as exc:
        raise GeometryError(f"degenerate geometry at D={float(D)!r}, alpha={float(a)!r}: {exc}") from exc
    x = receive_exact(g, ms, snr_db, rng)
    return feature_vector(x, kind, embed)


def _check_increasing(values, name):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError(f"{name} list is empty")
    if np.any(np.diff(v) <= 0):
        raise DomainError(f"{name} list must be strictly increasing")
    return v


def build_training_grid(scheme: LabelScheme, geom: LinkGeometry,
                        distances: Sequence[float], alphas: Sequence[float],
                        feature_kind: str = "absolute", embed: bool = False) -> SampleSet:
    """One noiseless sample per (class, D_p, alpha_q), class-major then D then alpha."""
    ds = _check_increasing(distances, "distance")
    als = _check_increasing(alphas, "alpha")
    for ms in scheme.classes:
        ms.check_resolvable(geom.tx.n_elements)
    n = scheme.n_classes * ds.size * als.size
    dim = feature_dimension(geom.rx.n_elements, feature_kind, embed)
    feats = np.empty((n, dim))
    i = 0
    for ms in scheme.classes:
        for D in ds:
            for a in als:
                feats[i] = _sample(geom, ms, D, a, feature_kind, embed)
                i += 1
    per_class = ds.size * als.size
    cls = np.repeat(np.arange(scheme.n_classes), per_class)
    meta = {
        "type": "grid",
        "distances": ds.tolist(),
        "alphas": als.tolist(),
        "feature_kind": feature_kind,
        "embed": bool(embed),
        "geometry": geometry_to_dict(geom),
    }
    return SampleSet(
        feats, np.asarray(scheme.numeric_labels)[cls], cls,
        np.tile(np.repeat(ds, als.size), scheme.n_classes),
        np.tile(als, ds.size * scheme.n_classes),
        scheme, meta,
    )


def draw_test_set(scheme: LabelScheme, geom: LinkGeometry,
                  d_range: Sequence[float], alpha_range: Sequence[float],
                  n_per_class: int, seed=0, snr_db: Optional[float] = None,
                  feature_kind: str = "absolute", embed: bool = False) -> SampleSet:
    """``n_per_class`` receivers per class placed uniformly in the (D, alpha) region."""
    if n_per_class < 1:
        raise DomainError("n_per_class must be >= 1")
    d_lo, d_hi = map(float, d_range)
    a_lo, a_hi = map(float, alpha_range)
    if d_hi < d_lo or a_hi < a_lo:
        raise DomainError("empty test region")
    rng = np.random.default_rng(seed)
    n = n_per_class * scheme.n_classes
    ds = rng.uniform(d_lo, d_hi, n)
    als = rng.uniform(a_lo, a_hi, n)
    noise_rng = np.random.default_rng(rng.integers(2**63)) if snr_db is not None else None
    cls = np.repeat(np.arange(scheme.n_classes), n_per_class)
    dim = feature_dimension(geom.rx.n_elements, feature_kind, embed)
    feats = np.empty((n, dim))
    for i in range(n):
        feats[i] = _sample(geom, scheme.classes[cls[i]], ds[i], als[i],
                           feature_kind, embed, snr_db, noise_rng)
    meta = {
        "type": "random",
        "d_range": [d_lo, d_hi],
        "alpha_range": [a_lo, a_hi],
        "n_per_class": int(n_per_class),
        "seed": seed,
        "snr_db": snr_db,
        "feature_kind": feature_kind,
        "embed": bool(embed),
        "geometry": geometry_to_dict(geom),
    }
    return SampleSet(feats, np.asarray(scheme.numeric_labels)[cls], cls, ds, als, scheme, meta)


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension affine map of features and labels onto [-1, 1]."""

    feat_min: np.ndarray
    feat_max: np.ndarray
    label_min: float
    label_max: float

    @classmethod
    def fit(cls, train: SampleSet) -> "Normalizer":
        if len(train) == 0:
            raise DomainError("cannot fit a normalizer on an empty set")
        lo, hi = train.features.min(axis=0), train.features.max(axis=0)
        bad = np.flatnonzero(~(hi > lo))
        if bad.size:
            raise ZeroSpanError(f"feature dimension(s) {bad.tolist()} are constant")
        llo, lhi = float(train.labels.min()), float(train.labels.max())
        if not lhi > llo:
            raise ZeroSpanError("label range is constant")
        return cls(lo, hi, llo, lhi)

    def apply(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.feat_min) / (self.feat_max - self.feat_min) - 1.0

    def invert(self, u):
        return (np.asarray(u, dtype=float) + 1.0) * 0.5 * (self.feat_max - self.feat_min) + self.feat_min

    def apply_label(self, y):
        return 2.0 * (np.asarray(y, dtype=float) - self.label_min) / (self.label_max - self.label_min) - 1.0

    def invert_label(self, u):
        return (np.asarray(u, dtype=float) + 1.0) * 0.5 * (self.label_max - self.label_min) + self.label_min

    def to_dict(self) -> dict:
        return {
            "feat_min": self.feat_min.tolist(),
            "feat_max": self.feat_max.tolist(),
            "label_min": self.label_min,
            "label_max": self.label_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["feat_min"], dtype=float), np.asarray(d["feat_max"], dtype=float),
                   float(d["label_min"]), float(d["label_max"]))


def fit_normalizer(train: SampleSet) -> Normalizer:
    return Normalizer.fit(train)


def geometry_to_dict(g: LinkGeometry) -> dict:
    return {
        "n_tx": g.tx.n_elements, "r_tx": g.tx.radius, "tx_angle": g.tx.initial_angle,
        "n_rx": g.rx.n_elements, "r_rx": g.rx.radius, "rx_angle": g.rx.initial_angle,
        "wavelength": g.wavelength, "gain": g.gain,
    }


def geometry_from_dict(d: dict) -> LinkGeometry:
    return geometry_template(d["n_tx"], d["n_rx"], d["r_tx"], d["r_rx"], d["wavelength"],
                             d["gain"], d["tx_angle"], d["rx_angle"])


# -- files -----------------------------------------------------------------

_META_PREFIX = "# meta: "


def _header(n_features):
    return ["D", "alpha", "class_index", "label"] + [f"phase_{i + 1}" for i in range(n_features)]


def _meta_blob(s: SampleSet) -> dict:
    return {
        "scheme": s.scheme.to_dict(),
        "meta": s.meta,
        "norm": s.norm.to_dict() if s.norm is not None else None,
        "n_features": s.n_features,
    }


def dumps_csv(s: SampleSet) -> str:
    buf = io.StringIO()
    buf.write(_META_PREFIX + json.dumps(_meta_blob(s), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(s.n_features))
    for i in range(len(s)):
        w.writerow([repr(float(s.distance[i])), repr(float(s.alpha[i])), int(s.class_index[i]),
                    repr(float(s.labels[i]))] + [repr(float(v)) for v in s.features[i]])
    return buf.getvalue()


def loads_csv(text: str, path=None, scheme: Optional[LabelScheme] = None) -> SampleSet:
    lines = text.splitlines()
    blob = None
    start = 0
    if lines and lines[0].startswith(_META_PREFIX):
        try:
            blob = json.loads(lines[0][len(_META_PREFIX):])
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad metadata line: {exc}", path, 1) from exc
        start = 1
    reader = csv.reader(lines[start:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row", path, start + 1) from None
    if header[:4] != ["D", "alpha", "class_index", "label"] or any(
        h != f"phase_{i + 1}" for i, h in enumerate(header[4:])
    ):
        raise ParseError(f"unexpected header {header}", path, start + 1)
    nf = len(header) - 4
    rows = []
    for lineno, row in enumerate(reader, start=start + 2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        try:
            rows.append((float(row[0]), float(row[1]), int(row[2]), float(row[3]),
                         [float(v) for v in row[4:]]))
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from exc
    if scheme is None:
        if blob is None:
            raise ParseError("no metadata line and no label scheme supplied", path, 1)
        scheme = LabelScheme.from_dict(blob["scheme"])
    feats = np.array([r[4] for r in rows], dtype=float).reshape(len(rows), nf)
    return SampleSet(
        feats,
        [r[3] for r in rows], [r[2] for r in rows], [r[0] for r in rows], [r[1] for r in rows],
        scheme,
        dict(blob["meta"]) if blob else {},
        Normalizer.from_dict(blob["norm"]) if blob and blob.get("norm") else None,
    )


def to_json_dict(s: SampleSet) -> dict:
    d = _meta_blob(s)
    d["samples"] = {
        "D": s.distance.tolist(),
        "alpha": s.alpha.tolist(),
        "class_index": s.class_index.tolist(),
        "label": s.labels.tolist(),
        "features": s.features.tolist(),
    }
    return d


def from_json_dict(d: dict, path=None) -> SampleSet:
    try:
        sm = d["samples"]
        n = len(sm["label"])
        return SampleSet(
            np.asarray(sm["features"], dtype=float).reshape(n, int(d["n_features"])),
            sm["label"], sm["class_index"], sm["D"], sm["alpha"],
            LabelScheme.from_dict(d["scheme"]), dict(d.get("meta") or {}),
            Normalizer.from_dict(d["norm"]) if d.get("norm") else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid sample-set JSON: {exc!r}", path) from exc


def save(s: SampleSet, path) -> None:
    """Write ``s`` as CSV or JSON depending on the file suffix."""
    from .util import atomic_write_text

    path = str(path)
    if path.endswith(".json"):
        atomic_write_text(path, json.dumps(to_json_dict(s), sort_keys=True))
    else:
        atomic_write_text(path, dumps_csv(s))


def load(path, scheme: Optional[LabelScheme] = None) -> SampleSet:
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path, exc.lineno) from exc
        return from_json_dict(d, path)
    return loads_csv(text, path, scheme)


def grid_values(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid ``start, start+step, ..., stop`` (stop kept if on-grid)."""
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)
