"""Minimum-cost one-to-one node matching (Hungarian algorithm)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .skeleton import Skeleton, SkeletonError, normalize_bbox

_INF = float("inf")


def hungarian(cost):
    """Solve a square assignment problem.

    Shortest-augmenting-path Hungarian method with row/column potentials.
    Returns ``(col_of_row, u, v)`` where ``cost[i, j] - u[i] - v[j] >= 0``
    everywhere and equals 0 on the assignment.
    """
    a = np.asarray(cost, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"cost matrix must be square, got {a.shape}")
    rows = a.tolist()
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)   # p[j]: row (1-based) assigned to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [_INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = _INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, np.array(u[1:]), np.array(v[1:])


def _optimum(c, rows, cols):
    if not rows:
        return 0.0
    sub = c[np.ix_(rows, cols)]
    assign, _, _ = hungarian(sub)
    return math.fsum(sub[k, assign[k]] for k in range(len(rows)))


def assign_lexicographic(cost, tol=1e-9):
    """Optimal assignment of a rectangular cost matrix with a deterministic tie-break.

    Among all minimum-cost assignments of the smaller side, returns the pair
    list that is lexicographically smallest when sorted by row index.
    Returns a list of ``(row, col)`` pairs.
    """
    d = np.asarray(cost, dtype=float)
    nr, nc = d.shape
    if nr == 0 or nc == 0:
        return []
    n = max(nr, nc)
    c = np.zeros((n, n))
    c[:nr, :nc] = d
    assign, u, v = hungarian(c)
    target = math.fsum(c[k, assign[k]] for k in range(n))
    reduced = c - u[:, None] - v[None, :]

    free_rows = list(range(n))
    free_cols = list(range(n))
    pairs = []
    for i in range(nr):
        options = [j for j in free_cols if j < nc and reduced[i, j] <= tol]
        dummies = [j for j in free_cols if j >= nc]
        if dummies:
            best = min(dummies, key=lambda j: (reduced[i, j], j))
            if reduced[i, best] <= tol:
                options.append(best)
        if not options:
            # numerical drift only; fall back to the solver's own choice
            options = [assign[i]]
        chosen = options[0]
        if len(options) > 1:
            rest_rows = [r for r in free_rows if r != i]
            for j in options:
                rest_cols = [col for col in free_cols if col != j]
                if abs(c[i, j] + _optimum(c, rest_rows, rest_cols) - target) <= tol:
                    chosen = j
                    break
        target -= c[i, chosen]
        free_rows.remove(i)
        free_cols.remove(chosen)
        if chosen < nc:
            pairs.append((i, chosen))
    return pairs


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    cost: float
    unmatched_pred: tuple[int, ...]
    unmatched_gt: tuple[int, ...]

    def pred_to_gt(self) -> dict[int, int]:
        return dict(self.pairs)


def distance_matrix(a, b) -> np.ndarray:
    diff = np.asarray(a, dtype=float)[:, None, :] - np.asarray(b, dtype=float)[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def match_nodes(pred: Skeleton, gt: Skeleton) -> Matching:
    """Match nodes by Euclidean distance between bounding-box-normalised positions."""
    if len(pred) == 0 or len(gt) == 0:
        raise SkeletonError("no nodes", "cannot match an empty skeleton")
    d = distance_matrix(normalize_bbox(pred.positions), normalize_bbox(gt.positions))
    pairs = assign_lexicographic(d)
    cost = math.fsum(d[i, j] for i, j in pairs)
    mp = {i for i, _ in pairs}
    mg = {j for _, j in pairs}
    return Matching(
        tuple(pairs),
        cost,
        tuple(k for k in range(len(pred)) if k not in mp),
        tuple(k for k in range(len(gt)) if k not in mg),
    )
