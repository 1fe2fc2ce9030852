"""Exhaustive-then-local minimisation over a ball, batched over many centres.

``objective(Y, rows)`` receives points of shape ``(len(rows), m, d)``, where
``rows`` indexes the centres the points belong to, and returns values of shape
``(len(rows), m)``. Each centre is processed independently, so a run with a
smaller stopping step is an exact continuation of a run with a larger one.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 2_000_000


def ball_offsets(radius: float, spacing: float, d: int) -> np.ndarray:
    """Cartesian grid offsets of the given spacing inside the closed ball."""
    m = int(np.floor(radius / spacing + 1e-9))
    ticks = np.arange(-m, m + 1) * spacing
    grids = np.meshgrid(*([ticks] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    keep = np.sum(pts * pts, axis=-1) <= radius * radius * (1 + 1e-12)
    return pts[keep]


def coarse_values(objective, centers, offsets):
    """Objective on ``centers[:, None] + offsets[None]`` in memory-bounded chunks."""
    n, m = centers.shape[0], offsets.shape[0]
    step = max(1, _CHUNK // max(1, m * centers.shape[1]))
    out = np.empty((n, m))
    for lo in range(0, n, step):
        rows = np.arange(lo, min(n, lo + step))
        out[rows] = objective(centers[rows, None, :] + offsets[None], rows)
    return out


def pattern_search(objective, y, v, step, stop):
    """Compass search with per-point halving steps until every step < ``stop``.

    Parameters
    ----------
    y : (n, d) starting points; v : (n,) their values; step : (n,) initial steps.
    """
    y = np.array(y, dtype=float)
    v = np.array(v, dtype=float)
    step = np.array(step, dtype=float)
    d = y.shape[1]
    dirs = np.concatenate([np.eye(d), -np.eye(d)])
    active = step >= stop
    while np.any(active):
        idx = np.nonzero(active)[0]
        trial = y[idx, None, :] + step[idx, None, None] * dirs[None]
        tv = objective(trial, idx)
        best = np.argmin(tv, axis=1)
        bv = tv[np.arange(idx.size), best]
        better = bv < v[idx]
        gi = idx[better]
        y[gi] = trial[better, best[better]]
        v[gi] = bv[better]
        step[idx[~better]] *= 0.5
        active = step >= stop
    return y, v


def minimize_in_ball(objective, centers, radius, spacing, stop):
    """Global minimum over ``|y - c| <= radius`` for every centre ``c``.

    Returns the refined minimisers ``(n, d)`` and values ``(n,)``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    offsets = ball_offsets(radius, spacing, centers.shape[1])
    vals = coarse_values(objective, centers, offsets)
    best = np.argmin(vals, axis=1)
    y0 = centers + offsets[best]
    v0 = vals[np.arange(centers.shape[0]), best]
    return pattern_search(objective, y0, v0, np.full(centers.shape[0], spacing), stop)


def minimizer_set(objective, center, radius, spacing, stop, tol, margin, cap=64):
    """Value and representative minimisers for a single centre.

    Coarse points within ``margin`` of the best coarse value are refined; refined
    points within ``2 * tol`` of the best value are kept after merging points
    closer than ``tol`` (or than the positional resolution ``4 sqrt(d) stop`` of
    the compass search, when that is coarser).
    """
    center = np.asarray(center, dtype=float)
    offsets = ball_offsets(radius, spacing, center.shape[0])
    vals = coarse_values(objective, center[None], offsets)[0]
    order = np.argsort(vals, kind="stable")
    cand = order[vals[order] <= vals[order[0]] + margin][:cap]
    ys = center + offsets[cand]
    y, v = pattern_search(lambda Y, rows: objective(Y, np.zeros_like(rows)),
                          ys, vals[cand], np.full(cand.size, spacing), stop)
    vbest = float(v.min())
    merge = max(tol, 4 * np.sqrt(center.shape[0]) * stop)
    keep = []
    for i in np.argsort(v, kind="stable"):
        if v[i] > vbest + 2 * tol:
            break
        if all(np.linalg.norm(y[i] - y[j]) >= merge for j in keep):
            keep.append(i)
    return vbest, y[keep]
