"""Operation -> outcome channels, channel capacity and the MI decomposition.

All quantities are in bits. ``0 * log 0`` is taken as 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .dsl import DSLError, Fingerprinter, Library
from .ops import OperationError, OperationTables, enumerate_operations, outcome_distribution

__all__ = [
    "ENUMERATION_CAP", "EnumerationCapExceeded", "CapacityError",
    "Channel", "Policy", "EmpowermentReport",
    "entropy_bits", "enumerate_channel", "capacity", "mi_decomposition",
    "effective_outcomes", "rep_emp", "library_report", "uniform_heuristic",
]

ENUMERATION_CAP = 10**6
ROW_TOL = 1e-12
_LN2 = math.log(2)


class EnumerationCapExceeded(Exception):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"channel has {size} input sequences, over the enumeration cap of {cap}")


class CapacityError(Exception):
    def __init__(self, gap: float, iterations: int):
        self.gap = gap
        self.iterations = iterations
        super().__init__(f"Blahut-Arimoto did not converge in {iterations} iterations (gap {gap:.3g} bits)")


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


@dataclass
class Channel:
    """Row-stochastic ``matrix[i, j] = p(outcome j | input i)``."""
    inputs: list
    outcomes: list
    matrix: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float).reshape(len(self.inputs), len(self.outcomes))
        if np.any(self.matrix < 0):
            raise ValueError("negative transition probability")
        if len(self.inputs) and not np.allclose(self.matrix.sum(axis=1), 1.0, rtol=0, atol=ROW_TOL):
            raise ValueError("channel rows must sum to 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.matrix.max(axis=1), 1.0, rtol=0, atol=ROW_TOL)))

    @classmethod
    def from_matrix(cls, matrix) -> "Channel":
        m = np.asarray(matrix, dtype=float)
        return cls(list(range(m.shape[0])), list(range(m.shape[1])), m)


@dataclass
class Policy:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("policy weights must be non-negative and sum to 1")

    @classmethod
    def uniform(cls, n: int) -> "Policy":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, i: int) -> "Policy":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)


@dataclass
class EmpowermentReport:
    diversity_bits: float
    uncertainty_bits: float
    mi_bits: float
    capacity_bits: float | None = None
    achieving_policy: Policy | None = None
    n_eff: int = 0
    estimator: str = "policy"
    n_inputs: int = 0
    dropped: int = 0

    @property
    def value(self) -> float:
        """The figure a curator maximises for this estimator."""
        if self.estimator == "capacity":
            return float(self.capacity_bits)
        return float(self.mi_bits)

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimator": self.estimator,
            "diversity_bits": self.diversity_bits,
            "uncertainty_bits": self.uncertainty_bits,
            "mi_bits": self.mi_bits,
            "capacity_bits": self.capacity_bits,
            "n_eff": self.n_eff,
            "n_inputs": self.n_inputs,
            "dropped": self.dropped,
            "achieving_policy": None if self.achieving_policy is None
            else [float(w) for w in self.achieving_policy.weights],
        }


# --------------------------------------------------------------------------
# channel enumeration


def enumerate_channel(Z: Library, tables: OperationTables, horizon: int, fpr: Fingerprinter,
                      cap: int = ENUMERATION_CAP) -> Channel:
    """Exact channel over all of Omega^T; inapplicable sequences are dropped and counted."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    alphabet = enumerate_operations(Z, tables)
    size = len(alphabet) ** horizon if alphabet else 0
    if size > cap:
        raise EnumerationCapExceeded(size, cap)
    inputs, rows = [], []
    keys: dict = {}
    outcomes: list[Library] = []
    dropped = 0
    for seq in itertools.product(alphabet, repeat=horizon):
        try:
            dist = outcome_distribution(Z, seq, tables, fpr)
        except (OperationError, DSLError):
            dropped += 1
            continue
        row = {}
        for lib, p in dist:
            key = fpr.library_key(lib)
            if key not in keys:
                keys[key] = len(outcomes)
                outcomes.append(lib)
            row[keys[key]] = row.get(keys[key], 0.0) + p
        inputs.append(tuple(seq))
        rows.append(row)
    matrix = np.zeros((len(inputs), len(outcomes)))
    for i, row in enumerate(rows):
        for j, p in row.items():
            matrix[i, j] = p
    return Channel(inputs, outcomes, matrix, dropped)


def effective_outcomes(ch: Channel) -> int:
    """Number of outcome classes reachable with positive probability."""
    if not len(ch.inputs):
        return 0
    return int(np.count_nonzero(ch.matrix.sum(axis=0) > 0))


# --------------------------------------------------------------------------
# capacity


def _row_divergences(P: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(P > 0, P / q, 1.0)
        return np.where(P > 0, P * np.log2(ratio), 0.0).sum(axis=1)


def _certify(P: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    """(lower, gap): I(r) and max_x D(p(.|x) || q) - I(r), the standard capacity bracket."""
    d = _row_divergences(P, r @ P)
    on = r > 0
    lower = float(r[on] @ d[on])
    return lower, float(d.max()) - lower


def _kkt_newton(P: np.ndarray, S: np.ndarray, r: np.ndarray, iters: int = 50) -> np.ndarray | None:
    """Solve D(p(.|x) || q) = C on the support ``S`` (sum w = 1); None unless it converges inside the simplex."""
    PS = P[S]
    w = r[S] + 1e-3 / len(S)
    w /= w.sum()
    k = len(S)
    J = np.zeros((k + 1, k + 1))
    J[:-1, -1] = -1.0
    J[-1, :-1] = 1.0
    for _ in range(iters):
        q = w @ PS
        d = _row_divergences(PS, q)
        F = np.append(d - w @ d, w.sum() - 1.0)
        if np.abs(F).max() < 1e-14:
            return w / w.sum()
        with np.errstate(divide="ignore"):
            inv = np.where(q > 0, 1.0 / q, 0.0)
        J[:-1, :-1] = -(PS * inv) @ PS.T / _LN2
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        w = w + step[:-1]
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            return None
    return None


def _polish(P: np.ndarray, r: np.ndarray, d: np.ndarray, tol: float, max_support: int = 32):
    """Try to jump to the exact optimum from a Blahut-Arimoto iterate.

    Candidate supports are the current weight support and the top-k inputs by
    divergence and by weight. A candidate is returned only when the capacity
    bracket certifies it, so a failed guess costs time, never accuracy.
    """
    n, m = P.shape
    ks = range(1, min(n, m, max_support) + 1)
    by_d = np.argsort(-d, kind="stable")
    by_r = np.argsort(-r, kind="stable")
    candidates = [np.flatnonzero(r > 1e-8)]
    candidates += [np.sort(by_d[:k]) for k in ks] + [np.sort(by_r[:k]) for k in ks]
    seen = set()
    for S in candidates:
        key = S.tobytes()
        if key in seen or not 0 < len(S) <= max_support:
            continue
        seen.add(key)
        w = _kkt_newton(P, S, r)
        if w is None:
            continue
        full = np.zeros(n)
        full[S] = w
        lower, gap = _certify(P, full)
        if gap < tol:
            return lower, full
    return None


def capacity(ch: Channel, tol: float = 1e-9, max_iter: int = 10_000,
             polish_every: int = 20) -> tuple[float, Policy]:
    """Channel capacity by Blahut-Arimoto, stopped on the upper/lower bound gap.

    Returns ``(bits, policy)`` with ``bits`` the mutual information at
    ``policy`` and ``max_x D(p(.|x) || q) - bits < tol``. Plain iterations
    crawl when an optimal weight is zero or the rows are nearly identical, so
    every ``polish_every`` steps a Newton solve of the optimality conditions
    is attempted and kept only if it passes the same bound check.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = ch.matrix
    m = P.shape[0]
    if m == 0:
        return 0.0, None
    if ch.deterministic:
        cols = P.argmax(axis=1)
        used = np.unique(cols)
        w = np.zeros(m)
        for j in used:
            members = np.flatnonzero(cols == j)
            w[members] = 1.0 / (len(used) * len(members))
        return (math.log2(len(used)) if len(used) > 1 else 0.0), Policy(w / w.sum())

    # identical rows share mass; solve on the distinct rows
    uniq, inverse = np.unique(P, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    r = np.full(uniq.shape[0], 1.0 / uniq.shape[0])
    gap = math.inf
    lower = 0.0
    for it in range(1, max_iter + 1):
        d = _row_divergences(uniq, r @ uniq)
        lower = float(r @ d)
        upper = float(d.max())
        gap = upper - lower
        if gap < tol:
            break
        if polish_every and it % polish_every == 0:
            found = _polish(uniq, r, d, tol)
            if found is not None:
                lower, r = found
                break
        r = r * np.exp2(d - upper)
        r /= r.sum()
    else:
        raise CapacityError(gap, max_iter)
    counts = np.bincount(inverse, minlength=uniq.shape[0])
    w = r[inverse] / counts[inverse]
    return max(lower, 0.0), Policy(w / w.sum())


# --------------------------------------------------------------------------
# decomposition and estimators


def mi_decomposition(ch: Channel, pi: Policy) -> EmpowermentReport:
    """diversity = H(outcome marginal), uncertainty = E_pi[H(row)], mi = difference."""
    w = pi.weights
    if w.shape != (len(ch.inputs),):
        raise ValueError("policy does not match channel inputs")
    marginal = w @ ch.matrix
    diversity = entropy_bits(marginal)
    uncertainty = float(sum(wi * entropy_bits(row) for wi, row in zip(w, ch.matrix) if wi > 0))
    return EmpowermentReport(diversity, uncertainty, diversity - uncertainty,
                             n_eff=effective_outcomes(ch), n_inputs=len(ch.inputs), dropped=ch.dropped)


def uniform_heuristic(ch: Channel) -> EmpowermentReport:
    """log2(N_eff) minus the uniform-policy average outcome entropy."""
    n = len(ch.inputs)
    n_eff = effective_outcomes(ch)
    diversity = math.log2(n_eff) if n_eff > 1 else 0.0
    uncertainty = float(np.mean([entropy_bits(row) for row in ch.matrix])) if n else 0.0
    return EmpowermentReport(diversity, uncertainty, diversity - uncertainty,
                             n_eff=n_eff, n_inputs=n, dropped=ch.dropped, estimator="uniform")


def _zero_report(ch: Channel, estimator: str) -> EmpowermentReport:
    return EmpowermentReport(0.0, 0.0, 0.0, 0.0, None, 0, estimator, 0, ch.dropped)


def library_report(Z: Library, tables: OperationTables, fpr: Fingerprinter, horizon: int = 1,
                   estimator: str = "uniform", cap: int = ENUMERATION_CAP,
                   tol: float = 1e-9, with_capacity: bool = True) -> EmpowermentReport:
    ch = enumerate_channel(Z, tables, horizon, fpr, cap)
    return channel_report(ch, estimator, tol, with_capacity)


def channel_report(ch: Channel, estimator: str = "uniform", tol: float = 1e-9,
                   with_capacity: bool = True) -> EmpowermentReport:
    if estimator not in ("uniform", "capacity"):
        raise ValueError(f"unknown estimator {estimator!r}")
    if not len(ch.inputs):
        return _zero_report(ch, estimator)
    if estimator == "uniform":
        rep = uniform_heuristic(ch)
        if with_capacity:
            rep.capacity_bits, rep.achieving_policy = capacity(ch, tol)
        return rep
    bits, pol = capacity(ch, tol)
    rep = mi_decomposition(ch, pol)
    rep.capacity_bits = bits
    rep.achieving_policy = pol
    rep.estimator = "capacity"
    return rep


def rep_emp(Z: Library, scenario, horizon: int | None = None, estimator: str | None = None,
            equivalence: str | None = None, cap: int | None = None) -> EmpowermentReport:
    """Representational empowerment of ``Z`` under a loaded scenario."""
    return library_report(
        Z, scenario.tables, scenario.fingerprinter(equivalence),
        horizon or scenario.horizon, estimator or scenario.estimator,
        cap or scenario.enumeration_cap,
    )
