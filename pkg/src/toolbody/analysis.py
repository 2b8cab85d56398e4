"""PCA of latent codes and tracking-error summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Pca:
    projections: np.ndarray  # (N, k)
    components: np.ndarray  # (k, dim), rows orthonormal
    explained_variance: np.ndarray  # (k,)
    mean: np.ndarray


def pca_2d(points) -> Pca:
    """Top-two principal axes of ``points``.

    Each component's sign is chosen so its largest-magnitude entry is
    positive, which makes the projection reproducible.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("PCA needs at least 2 points")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (len(X) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][: min(2, X.shape[1])]
    comps = evecs[:, order].T
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    var = np.clip(evals[order], 0.0, None)
    return Pca(Xc @ comps.T, comps, var, mean)


def align_similarity(source, target):
    """Rotate/reflect, scale and shift ``source`` points onto ``target`` (least squares).

    Latent codes from different training seeds live in arbitrary frames;
    this puts them in a common one before they are compared.
    """
    A = np.asarray(source, dtype=float)
    B = np.asarray(target, dtype=float)
    a0, b0 = A.mean(0), B.mean(0)
    Ac, Bc = A - a0, B - b0
    U, S, Vt = np.linalg.svd(Ac.T @ Bc)
    R = U @ Vt
    denom = np.sum(Ac**2)
    scale = S.sum() / denom if denom > 0 else 1.0
    return scale * Ac @ R + b0


@dataclass
class TrackingSummary:
    per_step: np.ndarray
    window_mean: float
    window_start: int


def tracking_errors(estimates, truths, n_collected=None, min_collected: int = 20) -> TrackingSummary:
    """Per-step Euclidean errors and their mean once enough data is in.

    ``n_collected[t]`` is how many samples had been gathered at step ``t``;
    the window starts at the first step with at least ``min_collected``.
    Without it the window covers every step.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0:
        raise ValueError("empty series")
    if est.shape != tru.shape:
        raise ValueError("series are not aligned")
    err = np.linalg.norm(est - tru, axis=-1)
    if n_collected is None:
        start = 0
    else:
        hits = np.nonzero(np.asarray(n_collected) >= min_collected)[0]
        start = int(hits[0]) if len(hits) else len(err)
    window = err[start:]
    return TrackingSummary(err, float(window.mean()) if len(window) else float("nan"), start)
