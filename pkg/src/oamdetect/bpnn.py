"""Two-layer back-propagation network (tanh hidden layer, linear output).

Training minimises ``F = mu_d * SSE + mu_w * ||w||^2`` with Levenberg-Marquardt
steps. With Bayesian regularisation enabled, ``mu_d`` and ``mu_w`` are
re-estimated after every accepted step from the effective number of
parameters, MacKay style:

    gamma = N_w - 2 mu_w tr(A^-1),  A = 2 mu_d J^T J + 2 mu_w I
    mu_d  = (N - gamma) / (2 SSE),  mu_w = gamma / (2 ||w||^2)

All optimisation happens in normalised units (features and labels mapped to
[-1, 1] with the training-set :class:`~oamdetect.dataset.Normalizer`).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .dataset import LabelScheme, Normalizer, SampleSet
from .errors import DimensionError, DomainError, TrainingError


def tanh_act(x):
    """Hyperbolic tangent ``(e^x - e^-x) / (e^x + e^-x)``, overflow-free.

    Evaluated as ``-expm1(-2|x|) / (2 + expm1(-2|x|))`` with the sign restored,
    which keeps full relative precision near zero and saturates to exactly +-1.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(over="ignore"):
        em = np.expm1(-2.0 * np.minimum(ax, 40.0))
    t = -em / (2.0 + em)
    t = np.where(ax > 20.0, 1.0, t)
    out = np.copysign(t, x)
    return float(out) if out.ndim == 0 else out


@dataclass
class BpnnModel:
    w1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (1, hidden)
    b2: float
    norm: Normalizer

    @property
    def hidden_count(self) -> int:
        return self.w1.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1

    def params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), [self.b2]])

    def with_params(self, w: np.ndarray) -> "BpnnModel":
        h, d = self.w1.shape
        w = np.asarray(w, dtype=float)
        return BpnnModel(
            w[: h * d].reshape(h, d).copy(),
            w[h * d: h * d + h].copy(),
            w[h * d + h: h * d + 2 * h].reshape(1, h).copy(),
            float(w[-1]),
            self.norm,
        )

    def forward_normalized(self, u: np.ndarray):
        """Network output and hidden activations for normalised inputs ``u`` (n, d)."""
        hid = tanh_act(u @ self.w1.T + self.b1)
        return hid @ self.w2[0] + self.b2, hid

    def forward(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.n_inputs:
            raise DimensionError(f"input has {x.shape[1]} features, network expects {self.n_inputs}")
        y, _ = self.forward_normalized(self.norm.apply(x))
        return self.norm.invert_label(y)


def init_model(n_inputs: int, hidden: int, norm: Normalizer, seed=0) -> BpnnModel:
    """Uniform weights in +-1/sqrt(fan_in) for each layer."""
    if hidden < 1:
        raise DomainError("hidden_count must be >= 1")
    rng = np.random.default_rng(seed)
    a1 = 1.0 / math.sqrt(n_inputs)
    a2 = 1.0 / math.sqrt(hidden)
    return BpnnModel(
        rng.uniform(-a1, a1, (hidden, n_inputs)),
        rng.uniform(-a1, a1, hidden),
        rng.uniform(-a2, a2, (1, hidden)),
        float(rng.uniform(-a2, a2)),
        norm,
    )


def bpnn_forward(model: BpnnModel, features) -> np.ndarray:
    return model.forward(features)


def residual_jacobian(model: BpnnModel, u: np.ndarray) -> np.ndarray:
    """d(output)/d(params) for every normalised input row; residuals are output - target."""
    y, hid = model.forward_normalized(u)
    n, d = u.shape
    h = model.hidden_count
    dh = (1.0 - hid * hid) * model.w2[0]  # (n, h)
    jac = np.empty((n, model.n_params))
    jac[:, : h * d] = (dh[:, :, None] * u[:, None, :]).reshape(n, h * d)
    jac[:, h * d: h * d + h] = dh
    jac[:, h * d + h: h * d + 2 * h] = hid
    jac[:, -1] = 1.0
    return jac


def sse_gradient(model: BpnnModel, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Gradient of the summed squared error by layer-wise back-propagation."""
    y, hid = model.forward_normalized(u)
    delta_out = 2.0 * (y - t)  # (n,)
    g_w2 = delta_out @ hid
    g_b2 = delta_out.sum()
    delta_hid = np.outer(delta_out, model.w2[0]) * (1.0 - hid * hid)
    g_w1 = delta_hid.T @ u
    g_b1 = delta_hid.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])


def bpnn_gradient(model: BpnnModel, features, targets):
    """Data-term gradient and residual Jacobian on a batch given in original units.

    Returns ``(grad, jac, residuals)`` with residuals ``output - target`` in
    normalised label units and ``grad`` the gradient of their sum of squares.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if len(x) == 0:
        raise DomainError("empty batch")
    u = model.norm.apply(x)
    t = model.norm.apply_label(targets)
    y, _ = model.forward_normalized(u)
    return sse_gradient(model, u, t), residual_jacobian(model, u), y - t


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    mse_goal: float = 1e-7
    mu_init: float = 5e-3
    mu_dec: float = 0.1
    mu_inc: float = 10.0
    mu_max: float = 1e10
    min_grad: float = 1e-10
    bayesian: bool = True
    mu_d: float = 1.0
    mu_w: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise DomainError("max_epochs must be >= 1")
        if not (self.mu_init > 0 and self.mu_max >= self.mu_init):
            raise DomainError("need 0 < mu_init <= mu_max")
        if not (0 < self.mu_dec < 1 < self.mu_inc):
            raise DomainError("need 0 < mu_dec < 1 < mu_inc")
        if not (self.mu_d > 0 and self.mu_w >= 0 and self.mse_goal >= 0):
            raise DomainError("regularisation weights must be non-negative (mu_d > 0)")


@dataclass
class TrainReport:
    mse: List[float] = field(default_factory=list)          # original label units, per epoch
    mu: List[float] = field(default_factory=list)
    gamma_eff: List[float] = field(default_factory=list)
    mu_d: List[float] = field(default_factory=list)
    mu_w: List[float] = field(default_factory=list)
    # objective before/after every accepted step, both under the weights in force for that step
    accepted: List[tuple] = field(default_factory=list)
    stop_reason: str = ""
    epochs: int = 0

    @property
    def final_mse(self) -> float:
        return self.mse[-1]

    def to_csv(self) -> str:
        rows = ["epoch,mse,mu,gamma_eff,mu_d,mu_w"]
        for i, vals in enumerate(zip(self.mse, self.mu, self.gamma_eff, self.mu_d, self.mu_w)):
            rows.append(",".join([str(i)] + [repr(float(v)) for v in vals]))
        return "\n".join(rows) + "\n"


def _objective(r, w, mu_d, mu_w):
    return mu_d * float(r @ r) + mu_w * float(w @ w)


def bpnn_train(train: SampleSet, hidden_count: int = 10, cfg: TrainConfig = TrainConfig(),
               norm: Optional[Normalizer] = None):
    """Fit a network to the numeric labels of ``train``; returns ``(model, report)``."""
    if len(train) == 0:
        raise DomainError("empty training set")
    norm = norm or train.norm or Normalizer.fit(train)
    u = norm.apply(train.features)
    t = norm.apply_label(train.labels)
    model = init_model(train.n_features, hidden_count, norm, cfg.seed)
    w = model.params()
    n, nw = len(t), w.size
    eye = np.eye(nw)
    label_scale = 0.5 * (norm.label_max - norm.label_min)

    mu_d, mu_w, mu = cfg.mu_d, cfg.mu_w, cfg.mu_init
    report = TrainReport()

    def residuals(wv):
        y, _ = model.with_params(wv).forward_normalized(u)
        return y - t

    r = residuals(w)
    jac = residual_jacobian(model, u)
    gamma = float(nw)
    for epoch in range(cfg.max_epochs):
        mse = float(r @ r) / n * label_scale**2
        report.mse.append(mse)
        report.mu.append(mu)
        report.gamma_eff.append(gamma)
        report.mu_d.append(mu_d)
        report.mu_w.append(mu_w)
        report.epochs = epoch
        if mse <= cfg.mse_goal:
            report.stop_reason = "mse_goal"
            break
        jtj = jac.T @ jac
        grad = mu_d * (jac.T @ r) + mu_w * w
        if float(np.linalg.norm(grad)) < cfg.min_grad:
            report.stop_reason = "min_grad"
            break
        f_old = _objective(r, w, mu_d, mu_w)
        accepted = False
        singular = False
        while mu <= cfg.mu_max:
            try:
                step = -np.linalg.solve(mu_d * jtj + (mu_w + mu) * eye, grad)
                singular = False
            except np.linalg.LinAlgError:
                singular = True
                mu *= cfg.mu_inc
                continue
            w_new = w + step
            r_new = residuals(w_new)
            f_new = _objective(r_new, w_new, mu_d, mu_w)
            if np.isfinite(f_new) and f_new < f_old:
                report.accepted.append((f_old, f_new))
                w, r = w_new, r_new
                mu = max(mu * cfg.mu_dec, 1e-20)
                accepted = True
                break
            mu *= cfg.mu_inc
        if not accepted:
            if singular:
                raise TrainingError(
                    f"normal equations singular up to mu_max={cfg.mu_max:g} at epoch {epoch}"
                )
            report.stop_reason = "mu_max"
            break
        model = model.with_params(w)
        jac = residual_jacobian(model, u)
        if cfg.bayesian:
            sse = max(float(r @ r), 1e-300)
            ssw = max(float(w @ w), 1e-300)
            a = 2.0 * mu_d * (jac.T @ jac) + 2.0 * mu_w * eye
            try:
                tr = float(np.trace(np.linalg.inv(a))) if mu_w > 0 else 0.0
            except np.linalg.LinAlgError:
                tr = 0.0
            gamma = min(max(nw - 2.0 * mu_w * tr, 0.0), float(nw))
            mu_d = max(n - gamma, 1e-12) / (2.0 * sse)
            mu_w = gamma / (2.0 * ssw)
    else:
        report.stop_reason = "max_epochs"
        report.epochs = cfg.max_epochs
        mse = float(r @ r) / n * label_scale**2
        report.mse.append(mse)
        report.mu.append(mu)
        report.gamma_eff.append(gamma)
        report.mu_d.append(mu_d)
        report.mu_w.append(mu_w)
    return model.with_params(w), report


def bpnn_predict_class(model: BpnnModel, features, scheme: LabelScheme) -> np.ndarray:
    """Forward pass followed by the nearest numeric label (midpoints go to the lower one)."""
    return scheme.nearest_class(model.forward(features))


def model_to_dict(m: BpnnModel, cfg: Optional[TrainConfig] = None) -> dict:
    return {
        "type": "bpnn",
        "w1": m.w1.tolist(), "b1": m.b1.tolist(), "w2": m.w2.tolist(), "b2": m.b2,
        "norm": m.norm.to_dict(),
        "hidden_count": m.hidden_count,
        "config": asdict(cfg) if cfg is not None else None,
    }


def model_from_dict(d: dict) -> BpnnModel:
    return BpnnModel(
        np.asarray(d["w1"], dtype=float), np.asarray(d["b1"], dtype=float),
        np.asarray(d["w2"], dtype=float).reshape(1, -1), float(d["b2"]),
        Normalizer.from_dict(d["norm"]),
    )
