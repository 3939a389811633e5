"""One-to-one linear assignment with gating, and an enumeration oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

#: Cost marking a forbidden pair.
GATE = math.inf

BRUTEFORCE_CAP = 8


@dataclass(frozen=True)
class Assignment:
    pairs: tuple = ()
    unmatched_rows: tuple = ()
    unmatched_cols: tuple = ()
    total_cost: float = 0.0

    @property
    def mapping(self) -> dict:
        return dict(self.pairs)

    def __len__(self):
        return len(self.pairs)


def _as_cost(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=float)
    if cm.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {cm.shape}")
    if np.any(np.isnan(cm)) or np.any(cm == -np.inf):
        raise ValueError("cost matrix entries must be finite or GATE")
    return cm


def _finalize(cm: np.ndarray, pairs, threshold: float) -> Assignment:
    kept = sorted((int(r), int(c)) for r, c in pairs if math.isfinite(cm[r, c]) and cm[r, c] <= threshold)
    rows = {r for r, _ in kept}
    cols = {c for _, c in kept}
    return Assignment(
        pairs=tuple(kept),
        unmatched_rows=tuple(r for r in range(cm.shape[0]) if r not in rows),
        unmatched_cols=tuple(c for c in range(cm.shape[1]) if c not in cols),
        total_cost=math.fsum(cm[r, c] for r, c in kept),
    )


def _gate_priced(cm: np.ndarray) -> np.ndarray:
    finite = np.isfinite(cm)
    # any single gated pair costs more than every finite assignment can differ by
    big = 1.0 + 2.0 * float(np.abs(cm[finite]).sum()) if finite.any() else 1.0
    return np.where(finite, cm, big)


def solve(cm, threshold: float = math.inf) -> Assignment:
    """Minimum-cost one-to-one assignment of rows to columns.

    The number of non-gated pairs is maximised first and the summed cost
    minimised second.  Among equal optima the lexicographically smallest
    sorted pair list wins.  Pairs that are gated or cost more than
    ``threshold`` are then demoted to unmatched.
    """
    cm = _as_cost(cm)
    n, m = cm.shape
    if n == 0 or m == 0:
        return _finalize(cm, [], threshold)
    work = _gate_priced(cm)
    ri, ci = linear_sum_assignment(work)
    sol = dict(zip(ri.tolist(), ci.tolist()))
    best = math.fsum(work[r, c] for r, c in sol.items())
    tol = 1e-9 * max(1.0, abs(best))
    k = min(n, m)

    fixed: dict = {}
    fixed_sum = 0.0
    used = set()
    for r in range(n):
        rest_rows = list(range(r + 1, n))
        limit = sol.get(r, m)
        for c in range(limit):
            if c in used:
                continue
            rest_cols = [j for j in range(m) if j not in used and j != c]
            sub = work[np.ix_(rest_rows, rest_cols)]
            if sub.size:
                sr, sc = linear_sum_assignment(sub)
            else:
                sr, sc = np.array([], dtype=int), np.array([], dtype=int)
            if len(fixed) + 1 + len(sr) != k:
                continue
            total = math.fsum([fixed_sum, work[r, c]] + [sub[a, b] for a, b in zip(sr, sc)])
            if total <= best + tol:
                sol = dict(fixed)
                sol[r] = c
                sol.update({rest_rows[a]: rest_cols[b] for a, b in zip(sr.tolist(), sc.tolist())})
                break
        if r in sol:
            fixed[r] = sol[r]
            fixed_sum += work[r, sol[r]]
            used.add(sol[r])
    return _finalize(cm, sol.items(), threshold)


@lru_cache(maxsize=64)
def _injections(n_small: int, n_large: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n_large), n_small)), dtype=int).reshape(-1, n_small)


def solve_bruteforce(cm, threshold: float = math.inf) -> Assignment:
    """Exact optimum of :func:`solve`'s objective by enumerating every injection."""
    cm = _as_cost(cm)
    n, m = cm.shape
    if min(n, m) > BRUTEFORCE_CAP:
        raise ValueError(f"brute force limited to min(rows, cols) <= {BRUTEFORCE_CAP}, got {min(n, m)}")
    if n == 0 or m == 0:
        return _finalize(cm, [], threshold)
    transposed = n > m
    mat = cm.T if transposed else cm
    small, large = mat.shape
    perms = _injections(small, large)
    picked = mat[np.arange(small)[None, :], perms]
    finite = np.isfinite(picked)
    n_gated = (~finite).sum(axis=1)
    sums = np.array([math.fsum(row) for row in np.where(finite, picked, 0.0)])
    cand = np.flatnonzero(n_gated == n_gated.min())
    low = sums[cand].min()
    cand = cand[sums[cand] <= low + 1e-9 * max(1.0, abs(low))]

    def pair_list(idx):
        p = perms[idx]
        pairs = [(int(p[j]), j) for j in range(small)] if transposed else [(j, int(p[j])) for j in range(small)]
        return sorted(pairs)

    chosen = min((pair_list(i) for i in cand))
    return _finalize(cm, chosen, threshold)
