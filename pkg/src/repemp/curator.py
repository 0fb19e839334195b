"""Meta-level curation: integrate, compose or prune programs to maximise RepEmp.

The curator is a greedy one-step decision rule over a finite action list.
Ties are broken structurally (fewer programs, then the lexicographically
smaller canonical serialization), never at random.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from .dsl import DSLError, Library, dumps_library
from .empowerment import EmpowermentReport, library_report
from .executor import Episode
from .ops import Operation, OperationError, OperationTables, apply_operation, enumerate_operations

__all__ = ["CuratorState", "CuratorAction", "relevance_filter", "enumerate_actions",
           "apply_action", "choose", "score_actions", "curate_step"]

TIE_TOL = 1e-9


@dataclass(frozen=True)
class CuratorState:
    current: Library
    candidates: Library
    task_index: int = 0

    def __post_init__(self):
        overlap = set(self.current.ids) & set(self.candidates.ids)
        if overlap:
            raise ValueError(f"candidate ids overlap the current library: {sorted(overlap)}")


@dataclass(frozen=True)
class CuratorAction:
    kind: str  # integrate-subset | compose-then-integrate | prune-subset | no-op
    integrate: tuple[str, ...] = ()
    compose: Operation | None = None
    prune: tuple[str, ...] = ()

    def __str__(self):
        parts = [self.kind]
        if self.integrate:
            parts.append("+{" + ", ".join(self.integrate) + "}")
        if self.compose is not None:
            parts.append(str(self.compose))
        if self.prune:
            parts.append("-{" + ", ".join(self.prune) + "}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "integrate": list(self.integrate),
                "compose": None if self.compose is None else str(self.compose),
                "prune": list(self.prune)}


def relevance_filter(candidates: Library, episode: Episode, threshold: float) -> Library:
    """Keep candidates that were used in an episode reaching ``threshold`` reward."""
    if threshold <= 0:
        return candidates
    if episode.reward < threshold:
        return candidates.select(())
    return candidates.select(pid for pid in candidates.ids if episode.usage.get(pid, 0) > 0)


def _compose_ops(lib: Library, tables: OperationTables, compose: Sequence[str]) -> list[Operation]:
    return enumerate_operations(lib, tables, tuple(compose)) if compose else []


def apply_action(state: CuratorState, action: CuratorAction, tables: OperationTables) -> Library:
    lib = state.current
    if action.integrate:
        lib = lib.union(state.candidates.select(action.integrate))
    if action.compose is not None:
        (lib, _), = apply_operation(lib, action.compose, tables)
    if action.prune:
        missing = [p for p in action.prune if p not in lib]
        if missing:
            raise OperationError(f"cannot prune unknown programs {missing}")
        lib = lib.select(i for i in lib.ids if i not in set(action.prune))
    return lib


def enumerate_actions(state: CuratorState, memory_cap: int | None = None, subset_cap: int = 2,
                      tables: OperationTables | None = None,
                      compose: Sequence[str] = ("abstraction", "splice")) -> list[CuratorAction]:
    """All integrate/compose/prune actions respecting the memory cap, plus no-op."""
    tables = tables or OperationTables()
    actions = [CuratorAction("no-op")]
    if memory_cap is not None and len(state.current) > memory_cap:
        # already over budget: no-op is not admissible
        actions = []

    def fit(kind, subset, op, lib):
        excess = 0 if memory_cap is None else len(lib) - memory_cap
        if excess <= 0:
            actions.append(CuratorAction(kind, subset, op))
            return
        for prune in itertools.combinations(lib.ids, excess):
            actions.append(CuratorAction(kind, subset, op, prune))

    cands = state.candidates.ids
    for size in range(0, min(subset_cap, len(cands)) + 1):
        for subset in itertools.combinations(cands, size):
            base = state.current.union(state.candidates.select(subset))
            if subset:
                fit("integrate-subset", subset, None, base)
            for op in _compose_ops(base, tables, compose):
                try:
                    (lib, _), = apply_operation(base, op, tables)
                except (OperationError, DSLError):
                    continue
                fit("compose-then-integrate", subset, op, lib)
    over = 0 if memory_cap is None else len(state.current) - memory_cap
    for prune in itertools.combinations(state.current.ids, max(over, 1)):
        actions.append(CuratorAction("prune-subset", (), None, prune))
    return actions


def choose(values: Sequence[float], libraries: Sequence[Library]) -> int:
    """Index of the greedy choice: max value, then fewer programs, then lexical serialization."""
    if not values:
        raise ValueError("nothing to choose from")
    best = max(values)
    tol = TIE_TOL * max(1.0, abs(best))
    tied = [i for i, v in enumerate(values) if v >= best - tol]
    return min(tied, key=lambda i: (len(libraries[i]), dumps_library(libraries[i]), i))


def score_actions(state: CuratorState, actions: Sequence[CuratorAction], scenario,
                  horizon: int | None = None, estimator: str | None = None):
    """Resulting library and report for every action (cached by library)."""
    tables = scenario.tables
    fpr = scenario.fingerprinter()
    horizon = horizon or scenario.horizon
    estimator = estimator or scenario.curator.estimator
    cache: dict = {}
    out = []
    for action in actions:
        lib = apply_action(state, action, tables)
        if lib.programs not in cache:
            cache[lib.programs] = library_report(lib, tables, fpr, horizon, estimator,
                                                 scenario.enumeration_cap, with_capacity=False)
        out.append((lib, cache[lib.programs]))
    return out


def curate_step(state: CuratorState, scenario, horizon: int | None = None,
                estimator: str | None = None) -> tuple[Library, EmpowermentReport, CuratorAction]:
    cfg = scenario.curator
    actions = enumerate_actions(state, cfg.memory_cap, cfg.subset_cap, scenario.tables, cfg.compose)
    scored = score_actions(state, actions, scenario, horizon, estimator)
    i = choose([rep.value for _, rep in scored], [lib for lib, _ in scored])
    lib, rep = scored[i]
    return lib, rep, actions[i]
