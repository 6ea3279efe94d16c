"""Minimum-cost one-to-one assignment (Kuhn-Munkres with row/column potentials)."""

from __future__ import annotations

import math

import numpy as np

from .errors import UsageError

PAD_COST = 1e6
SMALL_N = 24  # below this, plain lists beat per-iteration numpy overhead


def solve_square(cost: np.ndarray) -> np.ndarray:
    """Optimal assignment of an n x n matrix; returns ``col_of_row`` (length n).

    O(n^3) shortest augmenting paths with dual potentials.  Ties pick the
    lowest column index, so results are deterministic.
    """
    C = np.asarray(cost, dtype=np.float64)
    n = C.shape[0]
    if C.shape != (n, n):
        raise UsageError(f"solve_square needs a square matrix, got {C.shape}")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n <= SMALL_N:
        return np.array(_solve_small(C.tolist(), n), dtype=np.int64)
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=np.int64)  # 1-based rows, 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used
            free[0] = False
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def _solve_small(C: list, n: int) -> list[int]:
    """List version of :func:`solve_square`; identical arithmetic and tie-breaking."""
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    row_of_col = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            row = C[i0 - 1]
            ui = u[i0]
            delta, j1 = INF, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - ui - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def min_cost_matching(cost) -> tuple[list[tuple[int, int]], float]:
    """Optimal full matching of a rectangular P x Q matrix (min(P, Q) pairs)."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise UsageError(f"cost must be a matrix, got shape {C.shape}")
    P, Q = C.shape
    if P == 0 or Q == 0:
        return [], 0.0
    if not np.all(np.isfinite(C)):
        raise UsageError("costs must be finite")
    n = max(P, Q)
    sq = np.full((n, n), PAD_COST)
    sq[:P, :Q] = C
    cols = solve_square(sq)
    pairs = [(i, int(cols[i])) for i in range(P) if cols[i] < Q]
    return pairs, float(sum(C[i, j] for i, j in pairs))


def kuhn_munkres(cost, theta_m: float = math.inf) -> list[tuple[int, int]]:
    """Optimal one-to-one matching, then drop pairs costing more than ``theta_m``.

    Returns pairs sorted by row.
    """
    pairs, _ = min_cost_matching(cost)
    C = np.asarray(cost, dtype=np.float64)
    return sorted((i, j) for i, j in pairs if C[i, j] <= theta_m)
