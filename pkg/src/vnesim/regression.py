"""Gaussian radial-basis interpolation for the derived per-VM features.

One model per derived target (lifetime, cpu usage fraction, mem usage
fraction). Fitting solves the N x N kernel system K w = y exactly; a ridge
fallback (K + eps*I) keeps the solve finite when the kernel matrix is
numerically singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FitError, VnesimError

RIDGE_EPS = 1e-8
COND_LIMIT = 1e12
RESIDUAL_TOL = 1e-6
DEFAULT_MAX_CENTERS = 500


@dataclass
class RbrModel:
    """Fitted radial-basis regressor for one derived feature."""

    target_id: str
    gamma: float
    centers: np.ndarray  # (N, dim)
    weights: np.ndarray  # (N,)
    clamp: tuple[Optional[float], Optional[float]] = (None, None)
    ridge_used: bool = False

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def kernel_matrix(left: np.ndarray, right: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every pair of rows."""
    sq = (
        (left * left).sum(axis=1)[:, None]
        + (right * right).sum(axis=1)[None, :]
        - 2.0 * left @ right.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def median_heuristic_gamma(points: np.ndarray) -> float:
    """1 / (2 * median^2) of the pairwise distances; a serviceable default
    width when nothing better is known."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        return 1.0
    sq = (
        (points * points).sum(axis=1)[:, None]
        + (points * points).sum(axis=1)[None, :]
        - 2.0 * points @ points.T
    )
    iu = np.triu_indices(n, k=1)
    med_sq = float(np.median(np.maximum(sq[iu], 0.0)))
    if med_sq <= 0.0:
        return 1.0
    return 1.0 / (2.0 * med_sq)


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lexicographic row order so fitting ignores input ordering."""
    keys = tuple(x[:, d] for d in reversed(range(x.shape[1]))) + (y,)
    return np.lexsort((y,) + tuple(x[:, d] for d in reversed(range(x.shape[1]))))


def rbr_fit(
    x: np.ndarray,
    y: np.ndarray,
    gamma: float,
    target_id: str = "y",
    clamp: tuple[Optional[float], Optional[float]] = (None, None),
    max_centers: int = DEFAULT_MAX_CENTERS,
    seed: int = 0,
) -> RbrModel:
    """Interpolate (x, y) pairs with Gaussian bases centred on the points.

    Exact duplicates collapse to one center; duplicate inputs with
    conflicting targets are a fit error. Beyond ``max_centers`` points, a
    seeded uniform subsample (taken in canonical row order, so the result is
    independent of input ordering) keeps the dense solve tractable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) != len(y) or len(x) == 0:
        raise FitError("need matching, non-empty inputs and targets")
    if gamma <= 0.0:
        raise FitError(f"gamma must be positive, got {gamma}")

    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    keep_rows = []
    seen: dict[bytes, float] = {}
    for i in range(len(x)):
        key = x[i].tobytes()
        if key in seen:
            if seen[key] != y[i]:
                raise FitError("duplicate centers with conflicting targets")
            continue
        seen[key] = float(y[i])
        keep_rows.append(i)
    x, y = x[keep_rows], y[keep_rows]

    if len(x) > max_centers:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(x), size=max_centers, replace=False))
        x, y = x[pick], y[pick]

    k = kernel_matrix(x, x, gamma)
    ridge_used = False
    cond = np.linalg.cond(k)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        ridge_used = True
        weights = np.linalg.solve(k + RIDGE_EPS * np.eye(len(k)), y)
    else:
        weights = np.linalg.solve(k, y)
        residual = float(np.max(np.abs(k @ weights - y))) if len(y) else 0.0
        if residual > RESIDUAL_TOL:
            ridge_used = True
            weights = np.linalg.solve(k + RIDGE_EPS * np.eye(len(k)), y)
    if not np.all(np.isfinite(weights)):
        raise FitError("kernel solve produced non-finite weights")
    return RbrModel(
        target_id=target_id,
        gamma=gamma,
        centers=x,
        weights=weights,
        clamp=clamp,
        ridge_used=ridge_used,
    )


def rbr_predict(model: RbrModel, x: np.ndarray) -> float:
    """Evaluate the basis expansion at one point, clamped to the target's
    physically valid range."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise VnesimError(f"query dimension {x.shape} does not match model ({model.dim},)")
    k = kernel_matrix(x[None, :], model.centers, model.gamma)[0]
    value = float(k @ model.weights)
    lo, hi = model.clamp
    if lo is not None:
        value = max(value, lo)
    if hi is not None:
        value = min(value, hi)
    return value


def rbr_predict_batch(model: RbrModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    values = kernel_matrix(rows, model.centers, model.gamma) @ model.weights
    lo, hi = model.clamp
    if lo is not None:
        values = np.maximum(values, lo)
    if hi is not None:
        values = np.minimum(values, hi)
    return values


def derive_features(core: np.ndarray, models: list[RbrModel]) -> np.ndarray:
    """Aggregate feature vector: core features plus one prediction per model."""
    core = np.asarray(core, dtype=float)
    preds = [rbr_predict(model, core) for model in models]
    return np.concatenate([core, np.array(preds)]) if preds else core.copy()


def rbr_save(model: RbrModel, path: str | Path) -> None:
    lines = [f"rbr {model.target_id} {model.gamma!r} {len(model.weights)} {model.dim}"]
    for row in model.centers:
        lines.append(" ".join(repr(float(v)) for v in row))
    for w in model.weights:
        lines.append(repr(float(w)))
    Path(path).write_text("\n".join(lines) + "\n")


def rbr_load(
    path: str | Path, clamp: tuple[Optional[float], Optional[float]] = (None, None)
) -> RbrModel:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "rbr":
        raise VnesimError("not an rbr model file")
    target_id, gamma, n, dim = head[1], float(head[2]), int(head[3]), int(head[4])
    centers = np.array([[float(v) for v in lines[1 + i].split()] for i in range(n)])
    weights = np.array([float(lines[1 + n + i]) for i in range(n)])
    if centers.shape != (n, dim):
        raise VnesimError("rbr model file shape mismatch")
    return RbrModel(target_id=target_id, gamma=gamma, centers=centers, weights=weights, clamp=clamp)
