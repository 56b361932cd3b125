"""Kernel SVM trained by sequential minimal optimisation, one-vs-one for multiple classes.

The binary solver works on the dual

    min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j K(x_i, x_j),
    s.t.   0 <= a_i <= C,  sum_i y_i a_i = 0,

and picks the working pair with the second-order rule of Fan, Chen & Lin (2005).
It stops when the maximal KKT violation m(a) - M(a) falls below ``tol``.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from .dataset import SampleSet
from .errors import DegenerateProblemError, DimensionError, DomainError

TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "rbf"
    gamma: Optional[float] = None  # None: 1 / (n_features * feature variance)
    c: float = 10.0
    tol: float = 1e-3
    max_iter: int = 200_000
    cache_rows: int = 4096
    shuffle: bool = False

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear"):
            raise DomainError(f"unknown kernel {self.kernel!r}")
        if not self.c > 0:
            raise DomainError("c must be positive")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise DomainError("gamma must be positive")


def kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if kernel == "linear":
        return a @ b.T
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelRows:
    """Columns of the training kernel computed on demand with an LRU cache."""

    def __init__(self, x, kernel, gamma, max_rows):
        self.x = x
        self.kernel = kernel
        self.gamma = gamma
        self.max_rows = max_rows
        self.sq = (x * x).sum(1)
        self._cache = OrderedDict()
        if kernel == "linear":
            self.diag = self.sq.copy()
        else:
            self.diag = np.ones(len(x))

    def __getitem__(self, i):
        row = self._cache.get(i)
        if row is not None:
            self._cache.move_to_end(i)
            return row
        dot = self.x @ self.x[i]
        if self.kernel == "linear":
            row = dot
        else:
            row = np.exp(-self.gamma * np.maximum(self.sq + self.sq[i] - 2.0 * dot, 0.0))
        self._cache[i] = row
        if len(self._cache) > self.max_rows:
            self._cache.popitem(last=False)
        return row


@dataclass
class BinaryResult:
    alpha: np.ndarray
    rho: float
    iterations: int
    converged: bool
    gap: float
    objective: float


def solve_binary(x: np.ndarray, y: np.ndarray, c: float, kernel: str = "rbf",
                 gamma: float = 1.0, tol: float = 1e-3, max_iter: int = 200_000,
                 cache_rows: int = 4096) -> BinaryResult:
    """SMO on one two-class problem with labels ``y`` in {-1, +1}."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    krows = _KernelRows(np.asarray(x, dtype=float), kernel, gamma, cache_rows)
    kd = krows.diag
    alpha = np.zeros(n)
    grad = -np.ones(n)
    pos = y > 0
    it = 0
    converged = False
    gap = np.inf
    while it < max_iter:
        myg = -y * grad
        up = np.where(pos, alpha < c, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < c)
        if not up.any() or not low.any():
            converged = True
            gap = 0.0
            break
        up_idx = np.flatnonzero(up)
        i = up_idx[np.argmax(myg[up_idx])]
        g_max = myg[i]
        g_min = myg[low].min()
        gap = g_max - g_min
        if gap < tol:
            converged = True
            break
        ki = krows[i]
        cand = np.flatnonzero(low & (myg < g_max))
        b = g_max - myg[cand]
        a = kd[i] + kd[cand] - 2.0 * ki[cand]
        a = np.where(a > 0, a, TAU)
        j = cand[np.argmin(-(b * b) / a)]
        kj = krows[j]
        bij = g_max - myg[j]
        aij = kd[i] + kd[j] - 2.0 * ki[j]
        if aij <= 0:
            aij = TAU
        # move a_i += y_i*lam, a_j -= y_j*lam, keeping sum(y a) fixed
        lim_i = c - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else c - alpha[j]
        lam = min(bij / aij, lim_i, lim_j)
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        for t in (i, j):
            if alpha[t] < 1e-14 * c:
                alpha[t] = 0.0
            elif alpha[t] > c * (1 - 1e-14):
                alpha[t] = c
        grad += lam * y * (ki - kj)
        it += 1

    myg = -y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(np.mean(y[free] * grad[free]))
    else:
        up = np.where(pos, alpha < c, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < c)
        m_up = myg[up].max() if up.any() else myg[low].min()
        m_low = myg[low].min() if low.any() else m_up
        rho = -0.5 * (m_up + m_low)
    # 1/2 a^T Q a - e^T a = 1/2 a^T (grad - e)
    obj = float(0.5 * alpha @ (grad - 1.0))
    return BinaryResult(alpha, rho, it, converged, float(gap), obj)


@dataclass
class SvmBinary:
    """Support vectors of one class pair; decision > 0 votes for ``pos_class``."""

    pos_class: int
    neg_class: int
    support: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    rho: float
    iterations: int = 0
    converged: bool = True
    gap: float = 0.0

    def decision(self, x, kernel, gamma):
        return kernel_matrix(x, self.support, kernel, gamma) @ self.dual_coef - self.rho


@dataclass
class SvmModel:
    classes: List[int]
    binaries: List[SvmBinary]
    kernel: str
    gamma: float
    n_features: int
    config: dict = field(default_factory=dict)

    def decision_values(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DimensionError(f"query has {x.shape[1]} features, model expects {self.n_features}")
        return np.column_stack([b.decision(x, self.kernel, self.gamma) for b in self.binaries])

    def predict(self, x, chunk: int = 1024) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(len(x), dtype=int)
        for s in range(0, len(x), chunk):
            out[s:s + chunk] = self._vote(self.decision_values(x[s:s + chunk]))
        return out

    def _vote(self, dv: np.ndarray) -> np.ndarray:
        n_cls = len(self.classes)
        votes = np.zeros((len(dv), n_cls))
        weight = np.zeros((len(dv), n_cls))
        for col, b in enumerate(self.binaries):
            win = np.where(dv[:, col] > 0, b.pos_class, b.neg_class)
            rows = np.arange(len(dv))
            votes[rows, win] += 1
            weight[rows, win] += np.abs(dv[:, col])
        out = np.empty(len(dv), dtype=int)
        for r in range(len(dv)):
            top = np.flatnonzero(votes[r] == votes[r].max())
            best = top[weight[r, top] == weight[r, top].max()]
            out[r] = best.min()
        return out

    def classify(self, query) -> int:
        return int(self.predict(np.asarray(query, dtype=float)[None, :])[0])


def default_gamma(x: np.ndarray) -> float:
    var = float(np.var(x))
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


def svm_train(train: SampleSet, cfg: SvmConfig = SvmConfig(), seed=0) -> SvmModel:
    x = train.features
    cls = train.class_index
    present = sorted(set(cls.tolist()))
    if len(present) < 2:
        raise DegenerateProblemError("SVM training needs at least two classes")
    gamma = cfg.gamma if cfg.gamma is not None else default_gamma(x)
    rng = np.random.default_rng(seed)
    binaries = []
    for a, b in itertools.combinations(present, 2):
        idx = np.flatnonzero((cls == a) | (cls == b))
        if cfg.shuffle:
            idx = rng.permutation(idx)
        y = np.where(cls[idx] == a, 1.0, -1.0)
        res = solve_binary(x[idx], y, cfg.c, cfg.kernel, gamma, cfg.tol, cfg.max_iter, cfg.cache_rows)
        sv = res.alpha > 0
        binaries.append(SvmBinary(a, b, x[idx][sv].copy(), (res.alpha * y)[sv], res.rho,
                                  res.iterations, res.converged, res.gap))
    return SvmModel(list(range(train.scheme.n_classes)), binaries, cfg.kernel, gamma,
                    x.shape[1], asdict(cfg))


def svm_classify(model: SvmModel, query) -> int:
    return model.classify(query)


def model_to_dict(m: SvmModel) -> dict:
    return {
        "type": "svm", "classes": m.classes, "kernel": m.kernel, "gamma": m.gamma,
        "n_features": m.n_features, "config": m.config,
        "binaries": [
            {"pos_class": b.pos_class, "neg_class": b.neg_class, "support": b.support.tolist(),
             "dual_coef": b.dual_coef.tolist(), "rho": b.rho, "iterations": b.iterations,
             "converged": b.converged, "gap": b.gap}
            for b in m.binaries
        ],
    }


def model_from_dict(d: dict) -> SvmModel:
    nf = int(d["n_features"])
    bins = [
        SvmBinary(int(b["pos_class"]), int(b["neg_class"]),
                  np.asarray(b["support"], dtype=float).reshape(-1, nf),
                  np.asarray(b["dual_coef"], dtype=float), float(b["rho"]),
                  int(b["iterations"]), bool(b["converged"]), float(b["gap"]))
        for b in d["binaries"]
    ]
    return SvmModel(list(d["classes"]), bins, d["kernel"], float(d["gamma"]), nf, d.get("config", {}))
