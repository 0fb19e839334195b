"""Task-level executor: reproduce a target melody with a program library.

The executor plans with a deterministic beam search over actions (a primitive
``add_note`` or an ``invoke`` of a library program with full bindings), can
tune the library with a short sequence of deterministic operations, and
alternates the two in a use-improve cycle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dsl import (
    DSLError, Context, Library, Melody, Note, ParamType, Program, coerce_value, evaluate, pitch_name,
)
from .ops import (
    Operation, OperationError, OperationTables, apply_operation, enumerate_operations,
)

__all__ = ["Task", "ExecutorAction", "Episode", "reward", "prefix_reward", "edit_distance",
           "candidate_actions", "solve", "tune", "use_improve"]


@dataclass(frozen=True)
class Task:
    index: int
    target: Melody
    similarity: str = "levenshtein"

    def __post_init__(self):
        if not len(self.target):
            raise ValueError("task target must be non-empty")


@dataclass(frozen=True)
class ExecutorAction:
    kind: str  # "add_note" | "invoke"
    note: Note | None = None
    program: str | None = None
    bindings: tuple[tuple[str, object], ...] = ()

    def __str__(self):
        if self.kind == "add_note":
            return f"add_note({self.note})"
        args = ", ".join(f"{k}={v}" for k, v in self.bindings)
        return f"invoke({self.program}, {args})" if args else f"invoke({self.program})"

    def to_dict(self) -> dict:
        if self.kind == "add_note":
            return {"add_note": str(self.note)}
        return {"invoke": self.program, "bindings": {k: str(v) for k, v in self.bindings}}


@dataclass
class Episode:
    actions: tuple[ExecutorAction, ...]
    melody: Melody
    reward: float
    usage: dict[str, int] = field(default_factory=dict)
    tuning_ops: tuple[Operation, ...] = ()
    cycle_rewards: tuple[float, ...] = ()

    @property
    def action_count(self) -> int:
        return len(self.actions)

    def to_dict(self) -> dict:
        return {
            "actions": [a.to_dict() for a in self.actions],
            "melody": str(self.melody),
            "reward": self.reward,
            "action_count": self.action_count,
            "usage": dict(sorted(self.usage.items())),
            "tuning_ops": [str(op) for op in self.tuning_ops],
            "cycle_rewards": list(self.cycle_rewards),
        }


def edit_distance(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def reward(m: Melody, target: Melody) -> float:
    """1 - normalised edit distance over (pitch, duration) tokens."""
    a, b = m.tokens(), target.tokens()
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


def prefix_reward(m: Melody, target: Melody) -> float:
    """Reward of a partial melody against the target prefix of the same length."""
    if len(m) > len(target):
        return reward(m, target)
    if not len(m):
        return 1.0
    return reward(m, target[: len(m)])


def _bindings(p: Program, domains: Mapping[ParamType, Sequence], limit: int | None):
    pools = [domains.get(t, ()) for t in p.param_types]
    combos = itertools.product(*pools)
    if limit is not None:
        combos = itertools.islice(combos, limit)
    for combo in combos:
        yield tuple(zip(p.param_names, combo))


def candidate_actions(Z: Library, target: Melody, domains: Mapping[ParamType, Sequence],
                      context: Context | None = None, probe_budget: int | None = None):
    """Actions with their outputs, in canonical order, identical outputs removed."""
    ctx = context or Context()
    out = []
    seen = set()
    for note in sorted(set(target.notes)):
        out.append((ExecutorAction("add_note", note), Melody((note,))))
        seen.add((note,))
    for p in Z.programs:
        for binding in _bindings(p, domains, probe_budget):
            binding = tuple((n, pitch_name(coerce_value(ctx, v, "pitch")) if t is ParamType.PITCH else v)
                            for (n, v), t in zip(binding, p.param_types))
            try:
                mel = evaluate(p, dict(binding), context=context, scope=Z)
            except DSLError:
                continue
            if not len(mel) or mel.notes in seen:
                continue
            seen.add(mel.notes)
            out.append((ExecutorAction("invoke", program=p.id, bindings=binding), mel))
    return out


def _usage(actions) -> dict[str, int]:
    counts: dict[str, int] = {}
    for a in actions:
        if a.kind == "invoke":
            counts[a.program] = counts.get(a.program, 0) + 1
    return counts


def solve(Z: Library, task: Task, action_budget: int = 16, beam_width: int = 8, *,
          domains: Mapping[ParamType, Sequence], context: Context | None = None,
          probe_budget: int | None = None) -> Episode:
    """Beam search for the shortest action sequence reproducing the target.

    Partial melodies are ranked by prefix reward, then length, then canonical
    action order. Returns the best episode found within the budgets.
    """
    if action_budget <= 0 or beam_width <= 0:
        raise ValueError("budgets must be positive")
    target = task.target
    actions = candidate_actions(Z, target, domains, context, probe_budget)
    limit = len(target) + max((len(m) for _, m in actions), default=0)
    best = (reward(Melody(), target), ())
    best_melody = Melody()
    beam: list[tuple[Melody, tuple]] = [(Melody(), ())]
    visited = {()}
    for _ in range(action_budget):
        expanded = []
        for order_b, (mel, path) in enumerate(beam):
            for order_a, (act, out) in enumerate(actions):
                m = mel + out
                if len(m) > limit or m.notes in visited:
                    continue
                visited.add(m.notes)
                expanded.append((-prefix_reward(m, target), -len(m), order_b, order_a, m, path + (act,)))
        if not expanded:
            break
        expanded.sort(key=lambda e: e[:4])
        for e in expanded:
            r = reward(e[4], target)
            if r > best[0]:
                best, best_melody = (r, e[5]), e[4]
        if best[0] == 1.0:
            break
        beam = [(e[4], e[5]) for e in expanded[:beam_width]]
    r, path = best
    return Episode(path, best_melody, r, _usage(path))


def _score(ep: Episode) -> tuple:
    return (ep.reward, -ep.action_count)


def _deterministic_ops(Z: Library, tables: OperationTables) -> list[Operation]:
    ops = []
    for op in enumerate_operations(Z, tables, ("crossover", "splice", "abstraction", "mutation")):
        if op.kind == "mutation":
            variants = tables.mutation.get(op.target[0], ())
            if not variants[op.variant].deterministic:
                continue
        ops.append(op)
    return ops


def _tune(Z: Library, task: Task, tprime: int, tables: OperationTables, solver: dict,
          usage: Mapping[str, int] | None = None) -> tuple[Library, tuple[Operation, ...], Episode]:
    base = solve(Z, task, **solver)
    best = (Z, (), base)
    if tprime <= 0:
        return best
    usage = usage or {}
    frontier = [(Z, ())]
    seen = {Z.programs}
    for _ in range(tprime):
        nxt = []
        for lib, path in frontier:
            ops = _deterministic_ops(lib, tables)
            # programs the executor relied on are tried first
            ops.sort(key=lambda op: -max(usage.get(t, 0) for t in op.target))
            for op in ops:
                try:
                    (out, _), = apply_operation(lib, op, tables, solver.get("context"))
                except (OperationError, DSLError, ValueError):
                    continue
                if out.programs in seen:
                    continue
                seen.add(out.programs)
                ep = solve(out, task, **solver)
                nxt.append((out, path + (op,)))
                if _score(ep) > _score(best[2]):
                    best = (out, path + (op,), ep)
        frontier = nxt
    return best


def tune(Z: Library, task: Task, tprime: int, tables: OperationTables, *,
         domains: Mapping[ParamType, Sequence], context: Context | None = None,
         probe_budget: int | None = None, action_budget: int = 16, beam_width: int = 8,
         usage: Mapping[str, int] | None = None) -> Library:
    """Best library within ``tprime`` deterministic operations; ``Z`` if nothing improves."""
    if tprime < 0:
        raise ValueError("tprime must be >= 0")
    solver = dict(action_budget=action_budget, beam_width=beam_width, domains=domains,
                  context=context, probe_budget=probe_budget)
    return _tune(Z, task, tprime, tables, solver, usage)[0]


def use_improve(Z: Library, task: Task, cycles: int, tables: OperationTables, *,
                tprime: int = 0, domains: Mapping[ParamType, Sequence],
                context: Context | None = None, probe_budget: int | None = None,
                action_budget: int = 16, beam_width: int = 8) -> tuple[Library, Episode]:
    """Alternate solving and tuning; stop early on an exact match."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    solver = dict(action_budget=action_budget, beam_width=beam_width, domains=domains,
                  context=context, probe_budget=probe_budget)
    lib = Z
    ops_so_far: tuple[Operation, ...] = ()
    usage: dict[str, int] = {}
    best: Episode | None = None
    history = []
    for cycle in range(cycles):
        ep = solve(lib, task, **solver)
        for k, v in ep.usage.items():
            usage[k] = usage.get(k, 0) + v
        ep.tuning_ops = ops_so_far
        if best is None or _score(ep) > _score(best):
            best = ep
        history.append(best.reward)
        if best.reward == 1.0 or cycle == cycles - 1:
            break
        lib, ops, _ = _tune(lib, task, tprime, tables, solver, usage)
        ops_so_far += ops
    best.cycle_rewards = tuple(history)
    return lib, best
