"""Subset selection toward a target feature distribution.

Given ``K`` items with ``M`` features each, pick ``N`` of them so that the
per-feature histograms (``H`` equal-width bins) are as close as possible, in
L1, to ``N`` times a target PMF::

    min_x  sum_m || B^m x - N D[:, m] ||_1   s.t.  sum(x) = N,  x binary

Ties are always broken toward the lexicographically smallest index set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, islice

import numpy as np

__all__ = [
    "SubsetProblem",
    "Selection",
    "BudgetExceeded",
    "quantize",
    "bin_matrices",
    "objective",
    "solve_exact",
    "solve_greedy",
    "solve_local_search",
    "sample_by_category",
]

DEFAULT_BUDGET = 2_000_000


class BudgetExceeded(RuntimeError):
    """Exhaustive search would enumerate more subsets than allowed."""


@dataclass
class SubsetProblem:
    features: np.ndarray
    bins: int
    subset_size: int
    target_pmf: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        K, M = self.features.shape
        if not 1 <= self.subset_size <= K:
            raise ValueError(f"subset size {self.subset_size} outside [1, {K}]")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if self.target_pmf is None:
            self.target_pmf = np.full((self.bins, M), 1.0 / self.bins)
        self.target_pmf = np.asarray(self.target_pmf, dtype=np.float64)
        if self.target_pmf.shape != (self.bins, M):
            raise ValueError(f"target_pmf must have shape {(self.bins, M)}")
        if np.any(np.abs(self.target_pmf.sum(axis=0) - 1.0) > 1e-9):
            raise ValueError("every target_pmf column must sum to 1")

    @property
    def n_items(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


@dataclass
class Selection:
    indices: tuple
    objective: float
    x: np.ndarray = field(repr=False)
    method: str = ""


def quantize(problem):
    """Per-feature bin index of every item, shape ``(K, M)``.

    Bins are equal-width over the observed ``[min, max]`` of each feature;
    the maximum lands in the last bin and a constant feature puts every item
    in bin 0.
    """
    f = problem.features
    lo, hi = f.min(axis=0), f.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    idx = np.floor(problem.bins * (f - lo) / safe).astype(np.int64)
    idx = np.clip(idx, 0, problem.bins - 1)
    idx[:, span <= 0] = 0
    return idx


def bin_matrices(problem):
    """The 0/1 matrices ``B^m`` (shape ``(M, H, K)``), one 1 per column."""
    idx = quantize(problem)
    K, M = idx.shape
    B = np.zeros((M, problem.bins, K), dtype=np.int64)
    for m in range(M):
        B[m, idx[:, m], np.arange(K)] = 1
    return B


def objective(x, B, D, N):
    """``sum_m ||B^m x - N D[:, m]||_1`` for a 0/1 vector with ``sum(x) == N``."""
    x = np.asarray(x)
    if x.sum() != N:
        raise ValueError(f"selection has {int(x.sum())} items, expected {N}")
    counts = np.einsum("mhk,k->mh", B, x)
    return float(np.abs(counts - N * np.asarray(D).T).sum())


def _selection(problem, indices, method):
    x = np.zeros(problem.n_items, dtype=np.int64)
    x[list(indices)] = 1
    B = bin_matrices(problem)
    return Selection(tuple(sorted(int(i) for i in indices)),
                     objective(x, B, problem.target_pmf, problem.subset_size), x, method)


def solve_exact(problem, budget=DEFAULT_BUDGET, chunk=65536):
    """Exhaustive minimum over all ``C(K, N)`` subsets.

    Raises :class:`BudgetExceeded` when ``C(K, N) > budget``; use
    :func:`solve_local_search` for larger instances.
    """
    K, N, H = problem.n_items, problem.subset_size, problem.bins
    total = math.comb(K, N)
    if total > budget:
        raise BudgetExceeded(f"C({K}, {N}) = {total} subsets exceeds budget {budget}; use local search")
    idx = quantize(problem)
    target = N * problem.target_pmf.T  # (M, H)
    best_val, best_combo = np.inf, None
    it = combinations(range(K), N)
    while True:
        block = np.array(list(islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        c = block.shape[0]
        val = np.zeros(c)
        rows = np.repeat(np.arange(c), N)
        for m in range(problem.n_features):
            bins = idx[block, m].ravel()
            counts = np.bincount(rows * H + bins, minlength=c * H).reshape(c, H)
            val += np.abs(counts - target[m]).sum(axis=1)
        j = int(np.argmin(val))  # first minimum = lexicographically smallest
        if val[j] < best_val - 1e-9:
            best_val, best_combo = val[j], block[j]
    return _selection(problem, best_combo, "exact")


class _State:
    """Incremental bin counts for a partial or full selection."""

    def __init__(self, problem):
        self.idx = quantize(problem)
        self.target = problem.subset_size * problem.target_pmf.T  # (M, H)
        self.counts = np.zeros_like(self.target)
        self.m = np.arange(problem.n_features)

    def value(self):
        return float(np.abs(self.counts - self.target).sum())

    def add_deltas(self):
        """Objective change from adding each item, shape ``(K,)``."""
        c = self.counts[self.m, self.idx]  # (K, M)
        t = self.target[self.m, self.idx]
        return (np.abs(c + 1 - t) - np.abs(c - t)).sum(axis=1)

    def swap_deltas(self, inside, outside):
        """Objective change for every (remove i, add j) pair."""
        bi = self.idx[inside]   # (n_in, M)
        bj = self.idx[outside]  # (n_out, M)
        ci = self.counts[self.m, bi]
        ti = self.target[self.m, bi]
        cj = self.counts[self.m, bj]
        tj = self.target[self.m, bj]
        rem = np.abs(ci - 1 - ti) - np.abs(ci - ti)
        add = np.abs(cj + 1 - tj) - np.abs(cj - tj)
        same = bi[:, None, :] == bj[None, :, :]
        delta = np.where(same, 0.0, rem[:, None, :] + add[None, :, :])
        return delta.sum(axis=2)

    def apply(self, item, sign):
        self.counts[self.m, self.idx[item]] += sign


def _greedy(problem, state, first=None):
    K, N = problem.n_items, problem.subset_size
    chosen = np.zeros(K, dtype=bool)
    if first is not None:
        chosen[first] = True
        state.apply(first, 1)
    while chosen.sum() < N:
        delta = state.add_deltas()
        delta[chosen] = np.inf
        j = int(np.argmin(delta))  # ties -> lowest index
        chosen[j] = True
        state.apply(j, 1)
    return chosen


def _improve(state, chosen, tol=1e-9):
    while True:
        inside = np.flatnonzero(chosen)
        outside = np.flatnonzero(~chosen)
        if outside.size == 0:
            return chosen
        delta = state.swap_deltas(inside, outside)
        flat = int(np.argmin(delta))  # row-major: smallest removed, then smallest added
        if delta.flat[flat] >= -tol:
            return chosen
        a, b = divmod(flat, outside.size)
        i, j = inside[a], outside[b]
        chosen[i], chosen[j] = False, True
        state.apply(i, -1)
        state.apply(j, 1)


def solve_greedy(problem):
    """Greedy construction only: repeatedly add the item that lowers the objective most."""
    state = _State(problem)
    chosen = _greedy(problem, state)
    return _selection(problem, np.flatnonzero(chosen), "greedy")


def solve_local_search(problem, seed=0, restarts=4):
    """Greedy construction followed by best-improvement 1-swap descent.

    Restart 0 starts from the deterministic greedy solution; later restarts
    seed the construction with a random first item drawn from ``seed``.  The
    best result over restarts is returned, ties going to the smallest index
    set, so the objective never exceeds :func:`solve_greedy`'s.
    """
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, restarts)):
        state = _State(problem)
        first = None if r == 0 else int(rng.integers(problem.n_items))
        chosen = _improve(state, _greedy(problem, state, first))
        cand = (state.value(), tuple(np.flatnonzero(chosen)))
        if best is None or cand[0] < best[0] - 1e-9 or (abs(cand[0] - best[0]) <= 1e-9 and cand[1] < best[1]):
            best = cand
    return _selection(problem, best[1], "local_search")


def sample_by_category(features, categories, sizes, bins=5, seed=0, restarts=4, exact=False):
    """Solve one subset problem per category.

    ``sizes`` maps category label to its subset size.  Returns a dict of
    category -> :class:`Selection` whose indices refer to rows of ``features``.
    """
    features = np.asarray(features, dtype=np.float64)
    categories = np.asarray(categories)
    out = {}
    for label, n in sizes.items():
        rows = np.flatnonzero(categories == label)
        prob = SubsetProblem(features[rows], bins=bins, subset_size=n)
        sel = solve_exact(prob) if exact else solve_local_search(prob, seed=seed, restarts=restarts)
        sel.indices = tuple(int(rows[i]) for i in sel.indices)
        out[label] = sel
    return out
