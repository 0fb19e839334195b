"""Independent reference computations used by the tests.

Nothing here imports the solver code paths it checks: capacities come from
a direct search over the policy simplex, edit distances from the textbook
table, and minimal action counts from a shortest-path over target prefixes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def mutual_information(P: np.ndarray, w: np.ndarray) -> float:
    """I(X;Y) in bits from the joint p(x, y) = w(x) P(y|x)."""
    joint = w[:, None] * P
    py = np.broadcast_to(joint.sum(axis=0), P.shape)
    mask = joint > 0
    # log p(y|x) - log p(y) avoids forming p(x)p(y), which underflows for tiny weights
    return float((joint[mask] * (np.log2(P[mask]) - np.log2(py[mask]))).sum())


def _mi_many(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    """MI for a batch of policies (rows of W)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        row_h = -np.where(P > 0, P * np.log2(P), 0.0).sum(axis=1)
        Q = W @ P
        h_q = -np.where(Q > 0, Q * np.log2(Q), 0.0).sum(axis=1)
    return h_q - W @ row_h


def _simplex_grid(n: int, steps: int) -> np.ndarray:
    """All weight vectors on the simplex with coordinates in multiples of 1/steps."""
    pts = [c for c in itertools.product(range(steps + 1), repeat=n - 1) if sum(c) <= steps]
    G = np.array(pts, dtype=float).reshape(-1, n - 1)
    return np.hstack([G, steps - G.sum(axis=1, keepdims=True)]) / steps


def _local_grid(center: np.ndarray, h: float, radius: int) -> np.ndarray:
    n = len(center)
    offs = np.array(list(itertools.product(range(-radius, radius + 1), repeat=n - 1)), dtype=float)
    head = center[:-1] + h * offs
    W = np.hstack([head, 1.0 - head.sum(axis=1, keepdims=True)])
    return W[(W >= -1e-15).all(axis=1)].clip(min=0.0)


def brute_force_capacity(P, step: float = 1e-4) -> tuple[float, np.ndarray]:
    """max_w I(w, P) by grid search over the policy simplex.

    Two inputs are searched on the full 1e-4 grid. With more inputs a full
    grid at that resolution is out of reach, so a coarse 0.05 grid is
    refined around its best point (the objective is concave in ``w``, so
    refinement cannot leave the global basin) until the spacing is below
    ``step``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if n == 1:
        return 0.0, np.ones(1)
    if n == 2:
        a = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
        W = np.stack([a, 1 - a], axis=1)
        vals = _mi_many(P, W)
        i = int(vals.argmax())
        return float(vals[i]), W[i]
    W = _simplex_grid(n, 20)
    h = 0.05
    vals = _mi_many(P, W)
    best = W[int(vals.argmax())]
    best_val = float(vals.max())
    while h > step:
        h /= 5
        W = _local_grid(best, h, 10)
        vals = _mi_many(P, W)
        i = int(vals.argmax())
        if vals[i] >= best_val:
            best, best_val = W[i], float(vals[i])
    return best_val, best


def random_channel(rng: np.random.Generator, n_in: int, n_out: int, sparsity: float = 0.3) -> np.ndarray:
    P = rng.random((n_in, n_out))
    P[rng.random((n_in, n_out)) < sparsity] = 0.0
    for row in P:
        if row.sum() == 0:
            row[rng.integers(n_out)] = 1.0
    return P / P.sum(axis=1, keepdims=True)


def levenshtein(a, b) -> int:
    """Full-table dynamic programme."""
    D = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        D[i][0] = i
    for j in range(len(b) + 1):
        D[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            D[i][j] = min(D[i - 1][j] + 1, D[i][j - 1] + 1, D[i - 1][j - 1] + cost)
    return D[len(a)][len(b)]


def min_exact_actions(outputs, target) -> int | None:
    """Fewest action outputs whose concatenation equals ``target`` exactly."""
    target = tuple(target)
    outputs = {tuple(o) for o in outputs if len(o)}
    dist = [math.inf] * (len(target) + 1)
    dist[0] = 0
    for i in range(len(target)):
        if dist[i] == math.inf:
            continue
        for o in outputs:
            if target[i:i + len(o)] == o:
                dist[i + len(o)] = min(dist[i + len(o)], dist[i] + 1)
    return None if dist[-1] == math.inf else int(dist[-1])


def greedy_argmax(values, sizes, serials, tol: float = 1e-9) -> int:
    """Max value; ties (within relative tol) to fewer programs, then lexical serialization."""
    best = max(values)
    tied = [i for i, v in enumerate(values) if v >= best - tol * max(1.0, abs(best))]
    return sorted(tied, key=lambda i: (sizes[i], serials[i], i))[0]
