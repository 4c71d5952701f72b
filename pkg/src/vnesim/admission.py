"""Admission control: a linear max-margin classifier over request features.

Trained from scratch with deterministic full-batch subgradient descent on the
soft-margin hinge objective

    mean_i max(0, 1 - y_i (w.x_i + c)) + lam * ||w||^2

Features are standardised with statistics from the training split only; the
fitted scaler travels with the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingError, VnesimError
from .features import Scaler, vn_feature_vector
from .virtual import VnRequest

__all__ = [
    "SvmModel",
    "extract_vn_features",
    "hinge_objective",
    "svm_train",
    "svm_predict",
    "svm_save",
    "svm_load",
]


def extract_vn_features(vn: VnRequest, scaler: Scaler | None = None) -> np.ndarray:
    """Feature vector for one request; standardised when a scaler is given."""
    raw = vn_feature_vector(vn)
    if scaler is None:
        return raw
    return scaler.transform(raw)


@dataclass
class SvmModel:
    """Linear classifier: accept iff w.x + c >= 0 on standardised features."""

    weights: np.ndarray
    bias: float
    lam: float
    epochs: int
    seed: int
    scaler: Scaler

    @property
    def dim(self) -> int:
        return len(self.weights)


def hinge_objective(
    weights: np.ndarray, bias: float, rows: np.ndarray, labels: np.ndarray, lam: float
) -> float:
    margins = labels * (rows @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(hinge.mean() + lam * float(weights @ weights))


def svm_train(
    rows: np.ndarray,
    labels: np.ndarray,
    lam: float = 0.01,
    epochs: int = 800,
    seed: int = 0,
) -> SvmModel:
    """Fit the hinge objective by subgradient descent with step 1/(lam*t).

    The best iterate seen is returned, so the final objective never exceeds
    the objective of the zero model it starts from. Retraining with identical
    inputs is bit-identical.
    """
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if rows.ndim != 2 or len(rows) != len(labels):
        raise TrainingError("feature matrix and labels disagree")
    if not (np.any(labels > 0) and np.any(labels < 0)):
        raise TrainingError("training set must contain both labels")
    if lam <= 0:
        raise TrainingError(f"lam must be positive, got {lam}")
    scaler = Scaler.fit(rows)
    x = scaler.transform(rows)
    k = len(x)
    w = np.zeros(x.shape[1])
    c = 0.0
    best_obj = hinge_objective(w, c, x, labels, lam)
    best_w, best_c = w.copy(), c
    for t in range(1, epochs + 1):
        margins = labels * (x @ w + c)
        viol = margins < 1.0
        grad_w = 2.0 * lam * w
        grad_c = 0.0
        if np.any(viol):
            grad_w = grad_w - (labels[viol, None] * x[viol]).sum(axis=0) / k
            grad_c = -float(labels[viol].sum()) / k
        step = 1.0 / (lam * t)
        w = w - step * grad_w
        c = c - step * grad_c
        obj = hinge_objective(w, c, x, labels, lam)
        if obj < best_obj:
            best_obj = obj
            best_w, best_c = w.copy(), c
    return SvmModel(weights=best_w, bias=best_c, lam=lam, epochs=epochs, seed=seed, scaler=scaler)


def svm_predict(model: SvmModel, raw_features: np.ndarray) -> tuple[bool, float]:
    """(accepted, raw score); a score of exactly zero counts as accepted."""
    raw_features = np.asarray(raw_features, dtype=float)
    if raw_features.shape != model.weights.shape:
        raise VnesimError(
            f"feature dimension {raw_features.shape} does not match model {model.weights.shape}"
        )
    x = model.scaler.transform(raw_features)
    score = float(model.weights @ x + model.bias)
    return score >= 0.0, score


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def svm_save(model: SvmModel, path: str | Path) -> None:
    lines = [
        f"svm {model.dim} {model.lam!r}",
        _floats(model.weights),
        repr(float(model.bias)),
        _floats(model.scaler.mean),
        _floats(model.scaler.std),
        f"meta {model.epochs} {model.seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def svm_load(path: str | Path) -> SvmModel:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "svm":
        raise VnesimError("not an svm model file")
    dim, lam = int(head[1]), float(head[2])
    weights = np.array([float(v) for v in lines[1].split()])
    if len(weights) != dim:
        raise VnesimError("svm model file dimension mismatch")
    bias = float(lines[2])
    mean = np.array([float(v) for v in lines[3].split()])
    std = np.array([float(v) for v in lines[4].split()])
    epochs, seed = 0, 0
    if len(lines) > 5 and lines[5].startswith("meta "):
        _, e, s = lines[5].split()
        epochs, seed = int(e), int(s)
    return SvmModel(
        weights=weights,
        bias=bias,
        lam=lam,
        epochs=epochs,
        seed=seed,
        scaler=Scaler(mean=mean, std=std),
    )
