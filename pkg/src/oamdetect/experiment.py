"""Experiment configuration and orchestration: datasets, training, evaluation, artifacts."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bpnn, knn, svm
from .dataset import (
    LabelScheme,
    Normalizer,
    SampleSet,
    build_training_grid,
    draw_test_set,
    geometry_template,
    grid_values,
)
from .errors import DomainError, ParseError, StageError
from .metrics import EvalReport, evaluate
from .oam_signal import ModeSet, phase_features, transmit_vector
from .physics import channel_coeff, tx_positions
from .util import atomic_write_text, write_json

SPEED_OF_LIGHT = 299_792_458.0
CLASSIFIERS = ("knn", "svm", "bpnn")


@dataclass
class ExperimentConfig:
    scenario: str = "single-mode"
    n_tx: int = 8
    n_rx: int = 10
    r_tx: float = 9.0
    r_rx: float = 0.5
    wavelength: float = 1.0
    frequency_hz: float = 2.36e9
    gain: float = 1.0
    tx_angle_deg: float = 0.0
    rx_angle_deg: float = 0.0
    modes: list = field(default_factory=lambda: [-3, -2, -1, 0, 1, 2, 3])
    combos: list = field(default_factory=lambda: [[0, 1], [1, 2], [0, 2], [-1, 1]])
    train_d_start: float = 150.0
    train_d_step: float = 8.0
    train_d_count: int = 25
    train_alpha_start_deg: float = 0.0
    train_alpha_step_deg: float = 0.2
    train_alpha_count: int = 100
    test_d_min: float = 360.0
    test_d_max: float = 560.0
    test_alpha_min_deg: float = 20.0
    test_alpha_max_deg: float = 30.0
    test_per_class: int = 1000
    snr_db: Optional[float] = None
    feature_kind: str = "relative"
    embed: bool = True
    classifiers: list = field(default_factory=lambda: list(CLASSIFIERS))
    knn_k: int = 1
    knn_metric: str = "euclidean"
    svm_kernel: str = "rbf"
    svm_c: float = 10.0
    svm_gamma: Optional[float] = None
    svm_tol: float = 1e-3
    svm_max_iter: int = 200_000
    bpnn_hidden: int = 10
    bpnn_max_epochs: int = 1000
    bpnn_mse_goal: float = 1e-7
    bpnn_mu_init: float = 5e-3
    bpnn_mu_max: float = 1e10
    bpnn_bayesian: bool = True
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if self.scenario not in ("single-mode", "multi-mode"):
            raise DomainError(f"unknown scenario {self.scenario!r}")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise DomainError(f"unknown classifier {c!r}")

    @classmethod
    def for_scenario(cls, scenario: str = "single-mode", **overrides) -> "ExperimentConfig":
        """Default link and grid settings, with the transmit array sized for the scenario."""
        base = {"scenario": scenario}
        if scenario == "multi-mode":
            base["n_tx"] = 6
        base.update(overrides)
        return cls(**base)

    @property
    def reference_wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    def scheme(self) -> LabelScheme:
        if self.scenario == "single-mode":
            return LabelScheme.single_mode(self.modes)
        return LabelScheme.multi_mode(self.combos)

    def geometry(self):
        return geometry_template(
            self.n_tx, self.n_rx, self.r_tx, self.r_rx, self.wavelength, self.gain,
            math.radians(self.tx_angle_deg) % (2 * math.pi),
            math.radians(self.rx_angle_deg) % (2 * math.pi),
        )

    def train_distances(self) -> np.ndarray:
        return self.train_d_start + self.train_d_step * np.arange(self.train_d_count)

    def train_alphas(self) -> np.ndarray:
        return np.radians(self.train_alpha_start_deg + self.train_alpha_step_deg * np.arange(self.train_alpha_count))

    def to_dict(self) -> dict:
        return asdict(self)


# -- config files --------------------------------------------------------------

def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def coerce_overrides(pairs: Dict[str, object]) -> Dict[str, object]:
    """Type-check ``key -> value`` overrides against the ExperimentConfig fields."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    out = {}
    for k, v in pairs.items():
        if k not in known:
            raise DomainError(f"unknown config key {k!r}")
        if isinstance(v, str):
            v = _parse_value(v)
        ref = getattr(defaults, k)
        if k == "classifiers" and isinstance(v, str):
            v = [s.strip() for s in v.split(",") if s.strip()]
        elif isinstance(ref, bool):
            if not isinstance(v, bool):
                raise DomainError(f"{k} expects true/false, got {v!r}")
        elif isinstance(ref, int) and v is not None:
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            if not isinstance(v, int):
                raise DomainError(f"{k} expects an integer, got {v!r}")
        elif isinstance(ref, float) and v is not None:
            if not isinstance(v, (int, float)):
                raise DomainError(f"{k} expects a number, got {v!r}")
            v = float(v)
        out[k] = v
    return out


def parse_config_text(text: str, path=None) -> Dict[str, object]:
    """``key = value`` lines; ``#`` starts a comment; values are JSON or bare words."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", path, lineno)
        pairs[key] = _parse_value(val)
    return pairs


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    pairs = {}
    if path:
        with open(path) as fh:
            pairs.update(parse_config_text(fh.read(), path))
    pairs.update(overrides or {})
    pairs = coerce_overrides(pairs)
    scenario = pairs.pop("scenario", "single-mode")
    return ExperimentConfig.for_scenario(scenario, **pairs)


# -- detectors -------------------------------------------------------------------

class BpnnDetector:
    name = "BPNN"

    def __init__(self, model: bpnn.BpnnModel, scheme: LabelScheme, report=None, cfg=None):
        self.model = model
        self.scheme = scheme
        self.report = report
        self.cfg = cfg

    def predict_value(self, x):
        return self.model.forward(x)

    def predict(self, x):
        return bpnn.bpnn_predict_class(self.model, x, self.scheme)


class _Named:
    def __init__(self, name, model):
        self.name = name
        self.model = model

    def predict(self, x):
        return self.model.predict(x)


def build_datasets(cfg: ExperimentConfig):
    scheme = cfg.scheme()
    geom = cfg.geometry()
    train = build_training_grid(scheme, geom, cfg.train_distances(), cfg.train_alphas(),
                                cfg.feature_kind, cfg.embed)
    train.norm = Normalizer.fit(train)
    test = draw_test_set(
        scheme, geom, (cfg.test_d_min, cfg.test_d_max),
        (math.radians(cfg.test_alpha_min_deg), math.radians(cfg.test_alpha_max_deg)),
        cfg.test_per_class, cfg.seed, cfg.snr_db, cfg.feature_kind, cfg.embed,
    )
    test.norm = train.norm
    return train, test


def bpnn_config(cfg: ExperimentConfig) -> bpnn.TrainConfig:
    return bpnn.TrainConfig(
        max_epochs=cfg.bpnn_max_epochs, mse_goal=cfg.bpnn_mse_goal, mu_init=cfg.bpnn_mu_init,
        mu_max=cfg.bpnn_mu_max, bayesian=cfg.bpnn_bayesian, seed=cfg.seed,
    )


def svm_config(cfg: ExperimentConfig) -> svm.SvmConfig:
    return svm.SvmConfig(kernel=cfg.svm_kernel, gamma=cfg.svm_gamma, c=cfg.svm_c,
                         tol=cfg.svm_tol, max_iter=cfg.svm_max_iter)


def train_detector(name: str, cfg: ExperimentConfig, train: SampleSet):
    if name == "knn":
        return _Named("KNN", knn.knn_fit(train, cfg.knn_k, cfg.knn_metric))
    if name == "svm":
        return _Named("SVM", svm.svm_train(train, svm_config(cfg), cfg.seed))
    if name == "bpnn":
        tc = bpnn_config(cfg)
        model, report = bpnn.bpnn_train(train, cfg.bpnn_hidden, tc, train.norm)
        return BpnnDetector(model, train.scheme, report, tc)
    raise DomainError(f"unknown classifier {name!r}")


def detector_to_dict(det) -> dict:
    if isinstance(det, BpnnDetector):
        return bpnn.model_to_dict(det.model, det.cfg)
    if isinstance(det.model, svm.SvmModel):
        return svm.model_to_dict(det.model)
    return knn.model_to_dict(det.model)


def detector_from_dict(d: dict, scheme: LabelScheme):
    kind = d.get("type")
    if kind == "bpnn":
        return BpnnDetector(bpnn.model_from_dict(d), scheme)
    if kind == "svm":
        return _Named("SVM", svm.model_from_dict(d))
    if kind == "knn":
        return _Named("KNN", knn.model_from_dict(d))
    raise ParseError(f"unknown model type {kind!r}")


# -- artifacts -------------------------------------------------------------------

def confusion_csv(rep: EvalReport, scheme: LabelScheme) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [str(c) for c in scheme.classes]
    w.writerow(["true\\pred"] + names)
    for name, row in zip(names, rep.confusion):
        w.writerow([name] + [int(v) for v in row])
    return buf.getvalue()


def predictions_csv(rep: EvalReport, test: SampleSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "D", "alpha", "true_class", "pred_class", "true_label", "output"])
    for i in range(len(test)):
        w.writerow([i, repr(float(test.distance[i])), repr(float(test.alpha[i])),
                    int(test.class_index[i]), int(rep.predictions[i]),
                    repr(float(test.labels[i])), repr(float(rep.outputs[i]))])
    return buf.getvalue()


def summary_rows(reports: Dict[str, EvalReport]):
    return [(rep.method, rep.accuracy, rep.test_time) for rep in reports.values()]


def summary_markdown(cfg: ExperimentConfig, reports: Dict[str, EvalReport]) -> str:
    lines = [
        f"# OAM {cfg.scenario} detection",
        "",
        "| Detection method | Accuracy | Testing time |",
        "|---|---|---|",
    ]
    for method, acc, t in summary_rows(reports):
        lines.append(f"| {method} | {100 * acc:.2f}% | {t:.4f}s |")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, write: bool = True, log=None) -> dict:
    """Build data, train every selected classifier, evaluate, and write artifacts.

    Returns ``{"train", "test", "detectors", "reports"}``.
    """
    log = log or (lambda msg: None)
    try:
        log("building datasets")
        train, test = build_datasets(cfg)
    except Exception as exc:  # noqa: BLE001 - re-raised with stage tag
        raise StageError("dataset", exc) from exc

    detectors, reports, train_times = {}, {}, {}
    for name in cfg.classifiers:
        try:
            log(f"training {name}")
            t0 = time.perf_counter()
            det = train_detector(name, cfg, train)
            train_times[name] = time.perf_counter() - t0
        except Exception as exc:  # noqa: BLE001
            raise StageError(f"train:{name}", exc) from exc
        try:
            log(f"evaluating {name}")
            reports[name] = evaluate(det, test, det.name)
        except Exception as exc:  # noqa: BLE001
            raise StageError(f"eval:{name}", exc) from exc
        detectors[name] = det

    if write:
        try:
            write_artifacts(cfg, train, test, detectors, reports, train_times)
        except Exception as exc:  # noqa: BLE001
            raise StageError("write", exc) from exc
    return {"train": train, "test": test, "detectors": detectors, "reports": reports,
            "train_times": train_times}


def write_artifacts(cfg, train, test, detectors, reports, train_times):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "config.json"), cfg.to_dict())
    summary = {"scenario": cfg.scenario, "accuracy": {}}
    for name, rep in reports.items():
        write_json(os.path.join(out, "reports", f"{name}.json"), rep.to_dict())
        atomic_write_text(os.path.join(out, f"confusion_{name}.csv"), confusion_csv(rep, test.scheme))
        atomic_write_text(os.path.join(out, f"predictions_{name}.csv"), predictions_csv(rep, test))
        summary["accuracy"][rep.method] = rep.accuracy
        det = detectors[name]
        if isinstance(det, BpnnDetector):
            atomic_write_text(os.path.join(out, "bpnn_training.csv"), det.report.to_csv())
            write_json(os.path.join(out, "reports", "bpnn_training.json"), {
                "stop_reason": det.report.stop_reason,
                "epochs": det.report.epochs,
                "final_mse": det.report.final_mse,
                "final_gamma_eff": det.report.gamma_eff[-1],
            })
        if name != "knn":
            write_json(os.path.join(out, "models", f"{name}.json"), detector_to_dict(det))
    write_json(os.path.join(out, "reports", "summary.json"), summary)
    # wall-clock numbers live outside reports/ so the reports stay reproducible
    write_json(os.path.join(out, "timings.json"), {
        "test_time_s": {n: r.test_time for n, r in reports.items()},
        "train_time_s": train_times,
    })
    atomic_write_text(os.path.join(out, "summary.md"), summary_markdown(cfg, reports))


# -- sweeps ------------------------------------------------------------------------

SWEEP_AXES = ("alpha", "distance", "snr")


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float],
          d_range: Optional[Sequence[float]] = None,
          alpha_range_deg: Optional[Sequence[float]] = None,
          n_per_class: Optional[int] = None,
          detectors: Optional[dict] = None) -> List[dict]:
    """Accuracy of each trained classifier at every point of one axis.

    Along ``alpha`` (degrees) or ``distance`` the swept coordinate is fixed per point
    and the other is drawn uniformly from its range; along ``snr`` both are drawn
    from the test region. Rows come back ordered by axis value.
    """
    if axis not in SWEEP_AXES:
        raise DomainError(f"unknown sweep axis {axis!r}")
    vals = sorted(float(v) for v in values)
    if not vals:
        raise DomainError("empty sweep range")
    d_lo, d_hi = d_range if d_range is not None else (cfg.test_d_min, cfg.test_d_max)
    a_lo, a_hi = alpha_range_deg if alpha_range_deg is not None else (cfg.test_alpha_min_deg, cfg.test_alpha_max_deg)
    n = n_per_class or cfg.test_per_class
    scheme = cfg.scheme()
    geom = cfg.geometry()
    if detectors is None:
        train, _ = build_datasets(replace(cfg, test_per_class=1))
        detectors = {name: train_detector(name, cfg, train) for name in cfg.classifiers}
    rows = []
    for k, v in enumerate(vals):
        dr, ar, snr = (d_lo, d_hi), (a_lo, a_hi), cfg.snr_db
        if axis == "alpha":
            ar = (v, v)
        elif axis == "distance":
            dr = (v, v)
        else:
            snr = v
        test = draw_test_set(scheme, geom, dr, tuple(math.radians(a) for a in ar), n,
                             cfg.seed + k, snr, cfg.feature_kind, cfg.embed)
        for name, det in detectors.items():
            rep = evaluate(det, test, det.name)
            rows.append({"axis": axis, "value": v, "classifier": det.name, "accuracy": rep.accuracy})
    return rows


def sweep_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "classifier", "accuracy"])
    for r in rows:
        w.writerow([r["axis"], repr(r["value"]), r["classifier"], repr(r["accuracy"])])
    return buf.getvalue()


# -- receive-plane phase maps ---------------------------------------------------------

def phase_field(cfg: ExperimentConfig, modes: Sequence[int], alpha_deg: float,
                distance: float = 300.0, extent: float = 30.0, points: int = 101) -> np.ndarray:
    """Phase and amplitude of the field over the (tilted) receive plane.

    Returns rows ``(x, y, phase, amplitude)`` where (x, y) are in-plane
    coordinates of a square grid of half-width ``extent`` centred on the link axis.
    """
    geom = cfg.geometry().with_position(distance, math.radians(alpha_deg))
    a = geom.oblique_angle
    u = np.linspace(-extent, extent, points)
    gx, gy = np.meshgrid(u, u)
    pts = np.column_stack([gx.ravel(), gy.ravel() * math.cos(a), distance + gy.ravel() * math.sin(a)])
    src = tx_positions(geom)
    dist = np.linalg.norm(pts[:, None, :] - src[None, :, :], axis=2)
    field = channel_coeff(geom, dist) @ transmit_vector(ModeSet(modes), geom.tx.n_elements)
    return np.column_stack([gx.ravel(), gy.ravel(), np.angle(field), np.abs(field)])


def phase_field_csv(rows: np.ndarray, alpha_deg: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha_deg", "x", "y", "phase", "amplitude"])
    for x, y, p, amp in rows:
        w.writerow([repr(float(alpha_deg)), repr(float(x)), repr(float(y)), repr(float(p)), repr(float(amp))])
    return buf.getvalue()
