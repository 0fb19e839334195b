"""Library modification operations and their outcome distributions.

The operation set has four kinds: selection, crossover, abstraction and
mutation. A ``joint`` operation applies one declared option to each of several
programs at once (one crossover/mutation recipe per program), which is how a
single step can touch a whole library.

All randomness lives in declared mutation tables; given the tables, every
operation is a deterministic map from a library to an outcome distribution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .dsl import (
    LEAVES, Call, Context, DSLError, FracLit, Fingerprinter, IntLit, Library, ListLit,
    NoteLit, ParamType, PitchLit, Program, Sym, Var, coerce_value,
    format_expr, parse_expr, pitch_name, substitute,
)

__all__ = [
    "OperationError", "Operation", "OperationSequence", "OutcomeDistribution",
    "MutationVariant", "OperationTables",
    "apply_selection", "apply_crossover", "apply_abstraction", "apply_mutation",
    "apply_operation", "outcome_distribution", "enumerate_operations",
    "program_options", "anti_unify", "merge_outcomes",
]

PROB_TOL = 1e-12
KINDS = ("selection", "crossover", "abstraction", "mutation", "joint")


class OperationError(Exception):
    """Operation not applicable to the given library."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


@dataclass(frozen=True)
class Operation:
    kind: str
    target: tuple[str, ...]
    variant: Any = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operation kind {self.kind!r}")
        object.__setattr__(self, "target", tuple(self.target))

    def __str__(self):
        return f"{self.kind}({', '.join(self.target)}; {self.variant})"


OperationSequence = tuple  # tuple[Operation, ...]


@dataclass(frozen=True)
class OutcomeDistribution:
    support: tuple[tuple[Library, float], ...]

    def __post_init__(self):
        support = tuple(self.support)
        object.__setattr__(self, "support", support)
        if not support:
            raise ValueError("empty outcome distribution")
        for _, p in support:
            if not 0.0 < p <= 1.0 + PROB_TOL:
                raise ValueError(f"probability out of range: {p}")
        total = math.fsum(p for _, p in support)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    def __len__(self):
        return len(self.support)

    def __iter__(self):
        return iter(self.support)

    @property
    def is_point_mass(self) -> bool:
        return len(self.support) == 1

    @classmethod
    def point(cls, lib: Library) -> "OutcomeDistribution":
        return cls(((lib, 1.0),))


@dataclass(frozen=True)
class MutationVariant:
    """One entry of a mutation table.

    ``pin`` fixes parameters to values (deterministic); ``args`` rewrites
    arguments of a call-form program (deterministic); ``outcomes`` is an
    explicit distribution over replacement programs (stochastic).
    """
    name: str
    pin: tuple[tuple[str, Any], ...] = ()
    args: tuple[tuple[str, Any], ...] = ()
    outcomes: tuple[tuple[float, Program], ...] = ()

    @property
    def deterministic(self) -> bool:
        return len(self.outcomes) <= 1


@dataclass
class OperationTables:
    """Declared variant tables. Keys are program ids."""
    fragments: Mapping[str, Any] = field(default_factory=dict)
    crossover: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    mutation: Mapping[str, tuple[MutationVariant, ...]] = field(default_factory=dict)
    names: Mapping[str, str] = field(default_factory=dict)
    generators: tuple[str, ...] = ("joint",)
    horizon: int = 1

    def fragment(self, style: str):
        if style not in self.fragments:
            raise OperationError(f"unknown crossover fragment {style!r}")
        frag = self.fragments[style]
        return parse_expr(frag) if isinstance(frag, str) else frag


# --------------------------------------------------------------------------
# selection


def apply_selection(Z: Library, keep: Iterable[str]) -> Library:
    keep = list(keep)
    unknown = [k for k in keep if k not in Z]
    if unknown:
        raise OperationError(f"unknown program ids {unknown}")
    return Z.select(keep)


# --------------------------------------------------------------------------
# crossover


def _splice_points(b: Program) -> list[str]:
    return [n for n, t in b.params if t is ParamType.PATTERN]


def _rename_apart(a: Program, taken: set[str]) -> tuple[tuple, Any]:
    params, mapping = [], {}
    for n, t in a.params:
        new = n
        k = 1
        while new in taken:
            new = f"{n}_{k}"
            k += 1
        taken.add(new)
        params.append((new, t))
        if new != n:
            mapping[n] = Var(new)
    return tuple(params), substitute(a.body, mapping)


def apply_crossover(Z: Library, a: str, b: str | None = None, variant: int | str = 0,
                    tables: OperationTables | None = None) -> Library:
    """Add one program built from fragments of ``a`` (and ``b``).

    With ``b`` omitted the donor fragment comes from the declared style table
    of ``a`` (e.g. ``up`` + staccato -> ``up_staccato``). With ``b`` given, the
    body of ``a`` is spliced into the ``variant``-th pattern slot of ``b``.
    """
    tables = tables or OperationTables()
    if a not in Z:
        raise OperationError(f"unknown program {a!r}")
    pa = Z.get(a)
    if b is None:
        styles = tuple(tables.crossover.get(a, ()))
        if isinstance(variant, str):
            if variant not in styles and variant not in tables.fragments:
                raise OperationError(f"{a}: unknown crossover variant {variant!r}")
            style = variant
        else:
            if not 0 <= variant < len(styles):
                raise OperationError(f"{a}: crossover variant {variant} out of range ({len(styles)} declared)")
            style = styles[variant]
        body = substitute(tables.fragment(style), {"_": pa.body})
        default = f"{pa.name}_{style}"
        name = tables.names.get(default, default)
        new = Program(name, name, pa.params, body)
    else:
        if a == b:
            raise OperationError("crossover needs two distinct programs")
        if b not in Z:
            raise OperationError(f"unknown program {b!r}")
        pb = Z.get(b)
        slots = _splice_points(pb)
        if not slots:
            raise OperationError(f"incompatible fragment types: {b} has no pattern slot for {a}")
        if not isinstance(variant, int) or not 0 <= variant < len(slots):
            raise OperationError(f"crossover variant {variant} out of range ({len(slots)} splice points)")
        slot = slots[variant]
        rest = [(n, t) for n, t in pb.params if n != slot]
        a_params, a_body = _rename_apart(pa, {n for n, _ in rest})
        body = substitute(pb.body, {slot: a_body})
        key = f"crossover:{a}:{b}:{variant}"
        name = tables.names.get(key, f"{pb.name}_{pa.name}")
        new = Program(name, name, a_params + tuple(rest), body)
    if new.id in Z:
        raise OperationError(f"program {new.id!r} already in library")
    return Z.add(new)


# --------------------------------------------------------------------------
# abstraction


def _kinds_for(e, kind: str, scope: Mapping[str, Program]):
    from .dsl import PRIMITIVES

    if isinstance(e, Call):
        if e.fn in PRIMITIVES:
            types, variadic, _ = PRIMITIVES[e.fn]
            return types * len(e.args) if variadic else types
        if e.fn in scope:
            return tuple(t.value for t in scope[e.fn].param_types)
        return ("?",) * len(e.args)
    if isinstance(e, ListLit):
        return ("duration" if kind == "rhythm" else "pattern",) * len(e.items)
    return ()


def anti_unify(pa: Program, pb: Program, scope: Mapping[str, Program] | None = None):
    """Find the single differing leaf of two same-shaped programs.

    Returns ``(path, kind, leaf_a, leaf_b)``; raises OperationError when the
    programs differ in structure, in more than one slot, or not at all.
    """
    scope = scope or {}
    if pa.params != pb.params:
        raise OperationError(f"not anti-unifiable: {pa.name} and {pb.name} have different parameters")
    diffs = []

    def visit(x, y, kind, path):
        if x == y:
            return
        if isinstance(x, Call) and isinstance(y, Call) and x.fn == y.fn and len(x.args) == len(y.args):
            for i, (u, v, k) in enumerate(zip(x.args, y.args, _kinds_for(x, kind, scope))):
                visit(u, v, k, path + (i,))
            return
        if isinstance(x, ListLit) and isinstance(y, ListLit) and len(x.items) == len(y.items):
            for i, (u, v, k) in enumerate(zip(x.items, y.items, _kinds_for(x, kind, scope))):
                visit(u, v, k, path + (i,))
            return
        if isinstance(x, LEAVES) and isinstance(y, LEAVES):
            diffs.append((path, kind, x, y))
            return
        raise OperationError(
            f"not anti-unifiable: {pa.name} and {pb.name} differ in structure at {format_expr(x)} / {format_expr(y)}")

    visit(pa.body, pb.body, "pattern", ())
    if not diffs:
        raise OperationError(f"not anti-unifiable: {pa.name} and {pb.name} have zero differing slots")
    if len(diffs) > 1:
        raise OperationError(f"not anti-unifiable: {pa.name} and {pb.name} differ in {len(diffs)} slots")
    path, kind, x, y = diffs[0]
    try:
        ParamType(kind)
    except ValueError:
        raise OperationError(f"not anti-unifiable: differing slot has non-parameter kind {kind!r}") from None
    return path, kind, x, y


def _replace_at(e, path, new):
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(e, Call):
        args = list(e.args)
        args[i] = _replace_at(args[i], rest, new)
        return Call(e.fn, tuple(args))
    items = list(e.items)
    items[i] = _replace_at(items[i], rest, new)
    return ListLit(tuple(items))


def apply_abstraction(Z: Library, a: str, b: str, tables: OperationTables | None = None) -> Library:
    """Add the generalisation of ``a`` and ``b`` with one new leading parameter."""
    tables = tables or OperationTables()
    for pid in (a, b):
        if pid not in Z:
            raise OperationError(f"unknown program {pid!r}")
    pa, pb = Z.get(a), Z.get(b)
    path, kind, _, _ = anti_unify(pa, pb, Z.by_name())
    ptype = ParamType(kind)
    taken = set(pa.param_names)
    pname = ptype.default_name
    k = 1
    while pname in taken:
        pname = f"{ptype.default_name}_{k}"
        k += 1
    body = _replace_at(pa.body, path, Var(pname))
    name = tables.names.get(f"abstraction:{a}:{b}", f"gen_{pa.name}_{pb.name}")
    new = Program(name, name, ((pname, ptype),) + pa.params, body)
    if new.id in Z:
        raise OperationError(f"program {new.id!r} already in library")
    return Z.add(new)


# --------------------------------------------------------------------------
# mutation


def value_to_expr(kind: str, value):
    if kind == "pitch":
        return PitchLit(value)
    if kind in ("count", "steps", "latent-id"):
        return IntLit(value)
    if kind in ("direction", "chord", "table"):
        return Sym(value)
    if kind == "duration":
        return FracLit(value)
    if kind == "pattern":
        return ListLit(tuple(PitchLit(n.pitch) if n.duration == 1 else NoteLit(n.pitch, n.duration)
                             for n in value))
    if kind == "rhythm":
        return ListLit(tuple(FracLit(Fraction(v)) if Fraction(v).denominator != 1 else IntLit(int(v))
                             for v in value))
    raise ValueError(kind)


def _value_text(kind: str, value) -> str:
    if kind == "pitch":
        return pitch_name(value).replace("#", "s")
    if kind == "pattern":
        return "p" + "_".join(str(n.pitch) for n in value)
    if kind == "rhythm":
        return "r" + "_".join(str(v).replace("/", "o") for v in value)
    return str(value).replace("-", "m")


def _pin(p: Program, pins: Sequence[tuple[str, Any]], ctx: Context, tables: OperationTables) -> Program:
    params = dict(p.params)
    mapping, suffix = {}, []
    for name, raw in pins:
        if name not in params:
            raise OperationError(f"{p.name} has no parameter {name!r} to pin")
        kind = params[name].value
        value = coerce_value(ctx, raw, kind)
        mapping[name] = value_to_expr(kind, value)
        suffix.append(_value_text(kind, value))
    body = substitute(p.body, mapping)
    default = f"{p.name}_{'_'.join(suffix)}"
    name = tables.names.get(default, default)
    return Program(name, name, tuple((n, t) for n, t in p.params if n not in mapping), body)


def _rebind(p: Program, args: Sequence[tuple[str, Any]], Z: Library, ctx: Context) -> Program:
    if not p.is_call_form:
        raise OperationError(f"{p.id}: argument mutation needs a call-form program")
    callee = Z.by_name().get(p.body.fn)
    if callee is None:
        raise OperationError(f"{p.id}: callee {p.body.fn!r} not in library")
    new_args = list(p.body.args)
    for name, raw in args:
        if name not in callee.param_names:
            raise OperationError(f"{callee.name} has no parameter {name!r}")
        i = callee.param_names.index(name)
        kind = callee.param_types[i].value
        new_args[i] = value_to_expr(kind, coerce_value(ctx, raw, kind))
    body = Call(p.body.fn, tuple(new_args))
    text = format_expr(body)
    return Program(text, p.name, (), body)


def _mutate(Z: Library, pid: str, mv: MutationVariant, ctx: Context,
            tables: OperationTables) -> list[tuple[Library, float, str]]:
    p = Z.get(pid)
    if mv.outcomes:
        replacements = [(prob, q) for prob, q in mv.outcomes]
    elif mv.args:
        replacements = [(1.0, _rebind(p, mv.args, Z, ctx))]
    else:
        replacements = [(1.0, _pin(p, mv.pin, ctx, tables))]
    out = []
    for prob, q in replacements:
        if q.id != pid and q.id in Z:
            raise OperationError(f"mutation of {pid} collides with existing program {q.id!r}")
        out.append((Z.replace(pid, q), prob, q.id))
    return out


def _mutation_variant(tables: OperationTables, table_key: str, variant) -> MutationVariant:
    variants = tuple(tables.mutation.get(table_key, ()))
    if isinstance(variant, str):
        for mv in variants:
            if mv.name == variant:
                return mv
        raise OperationError(f"{table_key}: unknown mutation variant {variant!r}")
    if not isinstance(variant, int) or not 0 <= variant < len(variants):
        raise OperationError(f"{table_key}: unknown mutation variant {variant!r} ({len(variants)} declared)")
    return variants[variant]


def apply_mutation(Z: Library, p: str, variant: int | str, tables: OperationTables,
                   context: Context | None = None, table: str | None = None) -> OutcomeDistribution:
    """Replace ``p`` according to its mutation table (``table`` defaults to ``p``)."""
    if p not in Z:
        raise OperationError(f"unknown program {p!r}")
    mv = _mutation_variant(tables, table or p, variant)
    res = _mutate(Z, p, mv, context or Context(), tables)
    return OutcomeDistribution(tuple((lib, prob) for lib, prob, _ in res))


# --------------------------------------------------------------------------
# joint recipes and enumeration


def program_options(tables: OperationTables, pid: str) -> list[tuple[tuple[str, Any], ...]]:
    """Declared per-program recipes: crossover style, then mutation variant."""
    styles = tuple(tables.crossover.get(pid, ()))
    muts = tuple(mv.name for mv in tables.mutation.get(pid, ()))
    if styles and muts:
        return [(("crossover", s), ("mutation", m)) for s in styles for m in muts]
    if styles:
        return [(("crossover", s),) for s in styles]
    return [(("mutation", m),) for m in muts]


def _apply_recipe(Z: Library, pid: str, recipe, tables, ctx) -> list[tuple[Library, float]]:
    branches = [(Z, 1.0, pid)]
    for kind, variant in recipe:
        nxt = []
        for lib, prob, cur in branches:
            if kind == "crossover":
                styled = apply_crossover(lib, cur, None, variant, tables)
                nxt.append((styled, prob, styled.programs[-1].id))
            else:
                mv = _mutation_variant(tables, pid, variant)
                nxt.extend((l2, prob * p2, new) for l2, p2, new in _mutate(lib, cur, mv, ctx, tables))
        branches = nxt
    return [(lib, prob) for lib, prob, _ in branches]


def apply_operation(Z: Library, op: Operation, tables: OperationTables,
                    context: Context | None = None) -> list[tuple[Library, float]]:
    """Unmerged outcome list of one operation."""
    ctx = context or Context()
    if op.kind == "selection":
        return [(apply_selection(Z, op.variant), 1.0)]
    if op.kind == "crossover":
        b = op.target[1] if len(op.target) > 1 else None
        return [(apply_crossover(Z, op.target[0], b, op.variant, tables), 1.0)]
    if op.kind == "abstraction":
        return [(apply_abstraction(Z, op.target[0], op.target[1], tables), 1.0)]
    if op.kind == "mutation":
        return list(apply_mutation(Z, op.target[0], op.variant, tables, ctx))
    # joint
    if len(op.variant) != len(op.target):
        raise OperationError("joint operation needs one variant per target")
    dist = [(Z, 1.0)]
    for pid, v in zip(op.target, op.variant):
        if pid not in Z:
            raise OperationError(f"unknown program {pid!r}")
        options = program_options(tables, pid)
        if not 0 <= v < len(options):
            raise OperationError(f"{pid}: joint variant {v} out of range ({len(options)} declared)")
        dist = [(l2, p * p2) for lib, p in dist for l2, p2 in _apply_recipe(lib, pid, options[v], tables, ctx)]
    return dist


def enumerate_operations(Z: Library, tables: OperationTables,
                         generators: Sequence[str] | None = None) -> list[Operation]:
    """The finite operation alphabet available on ``Z``, in canonical order."""
    gens = tuple(generators if generators is not None else tables.generators)
    ops: list[Operation] = []
    for gen in gens:
        if gen == "joint":
            targets = [p.id for p in Z if program_options(tables, p.id)]
            if targets:
                counts = [len(program_options(tables, t)) for t in targets]
                for combo in itertools.product(*(range(c) for c in counts)):
                    ops.append(Operation("joint", tuple(targets), tuple(combo)))
        elif gen == "crossover":
            for p in Z:
                for i in range(len(tables.crossover.get(p.id, ()))):
                    ops.append(Operation("crossover", (p.id,), i))
        elif gen == "splice":
            for pa in Z:
                for pb in Z:
                    if pa.id != pb.id:
                        for i in range(len(_splice_points(pb))):
                            ops.append(Operation("crossover", (pa.id, pb.id), i))
        elif gen == "mutation":
            for p in Z:
                for i in range(len(tables.mutation.get(p.id, ()))):
                    ops.append(Operation("mutation", (p.id,), i))
        elif gen == "abstraction":
            scope = Z.by_name()
            for pa, pb in itertools.combinations(Z.programs, 2):
                try:
                    anti_unify(pa, pb, scope)
                except OperationError:
                    continue
                ops.append(Operation("abstraction", (pa.id, pb.id)))
        elif gen == "selection":
            for p in Z:
                ops.append(Operation("selection", (p.id,), tuple(i for i in Z.ids if i != p.id)))
        else:
            raise ValueError(f"unknown operation generator {gen!r}")
    return ops


def merge_outcomes(outcomes: Iterable[tuple[Library, float]], fpr: Fingerprinter) -> OutcomeDistribution:
    """Sum probabilities of outcomes that are equal under ``fpr``'s equivalence."""
    order: list = []
    acc: dict = {}
    for lib, prob in outcomes:
        key = fpr.library_key(lib)
        if key not in acc:
            order.append(key)
            acc[key] = [lib, []]
        acc[key][1].append(prob)
    return OutcomeDistribution(tuple((acc[k][0], math.fsum(acc[k][1])) for k in order))


def outcome_distribution(Z: Library, seq: Sequence[Operation], tables: OperationTables,
                         fpr: Fingerprinter) -> OutcomeDistribution:
    """Compose per-step outcomes of ``seq`` and merge equivalent libraries."""
    dist = [(Z, 1.0)]
    for i, op in enumerate(seq):
        nxt = []
        for lib, p in dist:
            try:
                res = apply_operation(lib, op, tables, fpr.context)
            except (OperationError, DSLError, KeyError) as exc:
                raise OperationError(f"{op}: {exc}", step=i) from None
            nxt.extend((l2, p * p2) for l2, p2 in res)
        dist = nxt
    return merge_outcomes(dist, fpr)
