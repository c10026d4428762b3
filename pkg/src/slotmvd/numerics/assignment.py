"""Minimum-cost linear assignment (Hungarian / shortest augmenting path)."""

from __future__ import annotations

import itertools

import numpy as np

from slotmvd.errors import ContractViolation

PAD_COST = 1e9


def linear_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (perm, total) minimizing sum(cost[i, perm[i]]).

    Rectangular inputs are padded to square with a large sentinel cost; the
    returned permutation covers the padded square problem, so callers with an
    R x C matrix should ignore assignments into padded rows/columns.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ContractViolation("cost matrix must be 2-D")
    if np.isnan(cost).any():
        raise ContractViolation("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise ContractViolation("cost matrix must be finite")
    r, c = cost.shape
    n = max(r, c)
    if r != c:
        sq = np.full((n, n), PAD_COST, dtype=np.float64)
        sq[:r, :c] = cost
    else:
        sq = cost

    # Shortest augmenting path with potentials, O(n^3); 1-indexed internals.
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = sq[i0 - 1, j - 1] - u[i0] - v[j]
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

    perm = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    total = float(sq[np.arange(n), perm].sum())
    return perm, total


def brute_force_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive oracle for small square matrices."""
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if n > 9:
        raise ContractViolation(f"brute force limited to n <= 9, got {n}")
    best_perm = None
    best = np.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        total = cost[rows, list(perm)].sum()
        if total < best:
            best = total
            best_perm = perm
    return np.array(best_perm, dtype=np.int64), float(best)
