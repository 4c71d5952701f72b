"""Maximum-likelihood VM type classifier.

Per-class diagonal Gaussians over the aggregate features, evaluated in the
log domain (the raw product of per-feature densities underflows once the
feature count grows). Priors are empirical by default with an equal-priors
option.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FitError, VnesimError
from .virtual import VmType

# Fixed class order; ties in the decision rule break toward the lowest index.
CLASS_ORDER = (VmType.CPU_INTENSIVE, VmType.GPU_INTENSIVE, VmType.MEM_INTENSIVE)
_CLASS_INDEX = {c: i for i, c in enumerate(CLASS_ORDER)}

_VAR_FLOOR_REL = 1e-6
_VAR_FLOOR_ABS = 1e-12


@dataclass
class MlcModel:
    """Learned per-class feature moments and class priors."""

    priors: np.ndarray  # (3,)
    means: np.ndarray  # (3, p)
    variances: np.ndarray  # (3, p)

    @property
    def feature_count(self) -> int:
        return self.means.shape[1]


def mlc_fit(
    rows: np.ndarray,
    types: list[VmType],
    equal_priors: bool = False,
    shrink_samples: float = 50.0,
) -> MlcModel:
    """Estimate per-class means and population variances.

    Every class needs at least two samples. Variances are floored at 1e-6 of
    the pooled per-feature variance so a degenerate constant feature cannot
    produce infinite densities, and shrunk toward the pooled variance with
    weight shrink_samples / (shrink_samples + class count): small classes get
    stabilised widths, large ones keep their own estimate.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or len(rows) != len(types):
        raise FitError("feature matrix and labels disagree")
    codes = np.array([_CLASS_INDEX[t] for t in types])
    p = rows.shape[1]
    priors = np.zeros(len(CLASS_ORDER))
    means = np.zeros((len(CLASS_ORDER), p))
    variances = np.zeros((len(CLASS_ORDER), p))
    pooled = rows.var(axis=0)
    floor = np.maximum(_VAR_FLOOR_REL * pooled, _VAR_FLOOR_ABS)
    for i, cls in enumerate(CLASS_ORDER):
        members = rows[codes == i]
        if len(members) < 2:
            raise FitError(f"class {cls.value} has {len(members)} samples, need >= 2")
        priors[i] = len(members) / len(rows)
        means[i] = members.mean(axis=0)
        weight = shrink_samples / (shrink_samples + len(members)) if shrink_samples > 0 else 0.0
        var = (1.0 - weight) * members.var(axis=0) + weight * pooled
        variances[i] = np.maximum(var, floor)
    if equal_priors:
        priors[:] = 1.0 / len(CLASS_ORDER)
    return MlcModel(priors=priors, means=means, variances=variances)


def mlc_calibrate_priors(
    model: MlcModel, rows: np.ndarray, types: list[VmType], iters: int = 80
) -> MlcModel:
    """Rebalance the priors so predicted class shares match the observed
    shares on the training data.

    Decision-region classifiers systematically over-cover some classes when
    features are ambiguous; a multiplicative prior correction (fitted on the
    training split only) restores share fidelity without touching the learned
    densities. Steps are clipped because a class's predicted share can react
    violently to its prior; the best prior vector seen is kept. Deterministic
    and order-independent.
    """
    rows = np.asarray(rows, dtype=float)
    true_share = np.array(
        [max(sum(1 for x in types if x == t) / len(types), 1e-9) for t in CLASS_ORDER]
    )

    def shares() -> np.ndarray:
        preds = mlc_classify_batch(model, rows)
        return np.array(
            [max(sum(1 for x in preds if x == t) / len(preds), 1e-4) for t in CLASS_ORDER]
        )

    best_priors = model.priors.copy()
    best_gap = float(np.abs(shares() - true_share).max())
    for _ in range(iters):
        pred_share = shares()
        gap = float(np.abs(pred_share - true_share).max())
        if gap < best_gap:
            best_gap = gap
            best_priors = model.priors.copy()
        if gap <= 0.002:
            break
        factor = np.clip(np.sqrt(true_share / pred_share), 2.0 / 3.0, 1.5)
        model.priors = model.priors * factor
        model.priors = model.priors / model.priors.sum()
    if float(np.abs(shares() - true_share).max()) > best_gap:
        model.priors = best_priors
    return model


def mlc_log_likelihood(model: MlcModel, features: np.ndarray, class_index: int) -> float:
    """log prior + sum of per-feature Gaussian log densities."""
    features = np.asarray(features, dtype=float)
    if features.shape != (model.feature_count,):
        raise VnesimError(
            f"feature dimension {features.shape} does not match model ({model.feature_count},)"
        )
    mu = model.means[class_index]
    var = model.variances[class_index]
    log_density = -0.5 * (np.log(2.0 * math.pi * var) + (features - mu) ** 2 / var)
    return float(math.log(model.priors[class_index]) + log_density.sum())


def mlc_classify(model: MlcModel, features: np.ndarray) -> tuple[VmType, np.ndarray]:
    """Most likely class plus normalised posteriors over CLASS_ORDER."""
    scores = np.array(
        [mlc_log_likelihood(model, features, i) for i in range(len(CLASS_ORDER))]
    )
    shifted = scores - scores.max()
    weights = np.exp(shifted)
    posteriors = weights / weights.sum()
    best = int(np.argmax(scores))  # argmax takes the first (lowest) index on ties
    return CLASS_ORDER[best], posteriors


def mlc_classify_batch(model: MlcModel, rows: np.ndarray) -> list[VmType]:
    rows = np.asarray(rows, dtype=float)
    scores = np.zeros((len(rows), len(CLASS_ORDER)))
    for i in range(len(CLASS_ORDER)):
        mu = model.means[i]
        var = model.variances[i]
        log_density = -0.5 * (np.log(2.0 * math.pi * var) + (rows - mu) ** 2 / var)
        scores[:, i] = math.log(model.priors[i]) + log_density.sum(axis=1)
    picks = scores.argmax(axis=1)
    return [CLASS_ORDER[int(i)] for i in picks]


def mlc_save(model: MlcModel, path: str | Path) -> None:
    """Per class: one prior line, then one (mean, variance) line per feature."""
    lines = []
    for i in range(len(CLASS_ORDER)):
        lines.append(f"prior {float(model.priors[i])!r}")
        for k in range(model.feature_count):
            lines.append(f"{float(model.means[i, k])!r} {float(model.variances[i, k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def mlc_load(path: str | Path) -> MlcModel:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) % len(CLASS_ORDER) != 0:
        raise VnesimError("mlc model file has a ragged layout")
    block = len(lines) // len(CLASS_ORDER)
    p = block - 1
    priors = np.zeros(len(CLASS_ORDER))
    means = np.zeros((len(CLASS_ORDER), p))
    variances = np.zeros((len(CLASS_ORDER), p))
    for i in range(len(CLASS_ORDER)):
        head = lines[i * block].split()
        if head[0] != "prior":
            raise VnesimError("mlc model file missing prior line")
        priors[i] = float(head[1])
        for k in range(p):
            mu, var = lines[i * block + 1 + k].split()
            means[i, k] = float(mu)
            variances[i, k] = float(var)
    return MlcModel(priors=priors, means=means, variances=variances)
