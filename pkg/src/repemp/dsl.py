"""Melody programs: syntax, interpreter, fingerprints and library equality.

A program is a ``def`` with typed parameters and an expression body built from
primitive melody constructors::

    def up(n: pitch, steps: steps) = note(step(n, up, steps))
    def repeat(pattern: pattern, times: count) = loop(times, pattern)

Notes are written in scientific pitch (``C4`` is MIDI 60) or as MIDI integers,
optionally with a duration in beats (``C4:1/2``). Melodies are bracketed note
lists. Pitch steps are semitones.

Two programs are functionally equivalent when their fingerprints (outputs over
a declared probe set) agree after an optional :class:`Equivalence`
canonicalisation.
"""

from __future__ import annotations

import enum
import itertools
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

__all__ = [
    "DSLError", "DSLSyntaxError", "EvaluationError", "BudgetExceeded",
    "Note", "Melody", "ParamType", "Program", "Library", "ProbeSet",
    "Context", "Equivalence", "Fingerprinter",
    "parse_program", "parse_programs", "parse_expr", "format_expr", "format_program",
    "evaluate", "fingerprint", "library_equal", "library_key",
    "coerce_value", "pitch_name", "parse_pitch", "parse_melody",
    "program_to_dict", "program_from_dict", "library_to_dict", "library_from_dict",
    "dumps_library", "loads_library",
]

DEFAULT_BUDGET = 10_000


class DSLError(Exception):
    pass


class DSLSyntaxError(DSLError):
    def __init__(self, message: str, position: int, expected: Sequence[str] = ()):
        self.position = position
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class EvaluationError(DSLError):
    pass


class BudgetExceeded(EvaluationError):
    pass


# --------------------------------------------------------------------------
# notes and melodies

_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]
_BASE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_PITCH_RE = re.compile(r"^([A-G])(#|b)?(-?\d+)$")


def parse_pitch(text: str) -> int:
    """``"C4"`` -> 60. Flats are accepted and normalised to sharps on output."""
    m = _PITCH_RE.match(text)
    if not m:
        raise ValueError(f"not a pitch: {text!r}")
    letter, accidental, octave = m.groups()
    midi = _BASE[letter] + (12 * (int(octave) + 1))
    midi += {"#": 1, "b": -1, None: 0}[accidental]
    if not 0 <= midi <= 127:
        raise ValueError(f"pitch {text!r} outside MIDI range")
    return midi


def pitch_name(midi: int) -> str:
    return f"{_NAMES[midi % 12]}{midi // 12 - 1}"


@dataclass(frozen=True, order=True)
class Note:
    pitch: int
    duration: Fraction = Fraction(1)

    def __post_init__(self):
        if not isinstance(self.pitch, int) or not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch!r}")
        dur = Fraction(self.duration)
        if dur <= 0:
            raise ValueError(f"duration must be positive: {self.duration!r}")
        object.__setattr__(self, "duration", dur)

    def __str__(self):
        if self.duration == 1:
            return pitch_name(self.pitch)
        return f"{pitch_name(self.pitch)}:{self.duration}"


@dataclass(frozen=True)
class Melody:
    notes: tuple[Note, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Melody(self.notes[item])
        return self.notes[item]

    def __add__(self, other: "Melody") -> "Melody":
        return Melody(self.notes + tuple(other.notes))

    def __str__(self):
        return "[" + ", ".join(str(n) for n in self.notes) + "]"

    @property
    def total_duration(self) -> Fraction:
        return sum((n.duration for n in self.notes), Fraction(0))

    def tokens(self) -> tuple[tuple[int, Fraction], ...]:
        return tuple((n.pitch, n.duration) for n in self.notes)

    @classmethod
    def of(cls, *items) -> "Melody":
        """Build from pitches, pitch names or Notes: ``Melody.of("C4", 62)``."""
        notes = []
        for item in items:
            if isinstance(item, Note):
                notes.append(item)
            elif isinstance(item, str):
                notes.append(Note(parse_pitch(item)))
            else:
                notes.append(Note(int(item)))
        return cls(tuple(notes))


class ParamType(str, enum.Enum):
    PITCH = "pitch"
    COUNT = "count"
    STEPS = "steps"
    DIRECTION = "direction"
    CHORD = "chord"
    PATTERN = "pattern"
    RHYTHM = "rhythm"
    LATENT = "latent-id"

    def __str__(self):
        return self.value

    @property
    def default_name(self) -> str:
        return "latent" if self is ParamType.LATENT else self.value


# --------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class PitchLit:
    value: int


@dataclass(frozen=True)
class FracLit:
    value: Fraction


@dataclass(frozen=True)
class NoteLit:
    pitch: int
    duration: Fraction


@dataclass(frozen=True)
class Sym:
    """Enumerated literal: a direction, chord or table name."""
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Hole:
    pass


@dataclass(frozen=True)
class ListLit:
    items: tuple


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


LEAVES = (IntLit, PitchLit, FracLit, NoteLit, Sym)


def format_expr(e) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, PitchLit):
        return pitch_name(e.value)
    if isinstance(e, FracLit):
        return str(e.value)
    if isinstance(e, NoteLit):
        return f"{pitch_name(e.pitch)}:{e.duration}"
    if isinstance(e, (Sym, Var)):
        return e.name
    if isinstance(e, Hole):
        return "_"
    if isinstance(e, ListLit):
        return "[" + ", ".join(format_expr(x) for x in e.items) + "]"
    if isinstance(e, Call):
        return f"{e.fn}(" + ", ".join(format_expr(x) for x in e.args) + ")"
    raise TypeError(f"not an expression: {e!r}")


def walk(e):
    """Pre-order traversal."""
    yield e
    if isinstance(e, Call):
        for a in e.args:
            yield from walk(a)
    elif isinstance(e, ListLit):
        for a in e.items:
            yield from walk(a)


def substitute(e, mapping: Mapping[str, Any]):
    """Replace variables (by name) or the hole (key ``"_"``) with expressions."""
    if isinstance(e, Var) and e.name in mapping:
        return mapping[e.name]
    if isinstance(e, Hole) and "_" in mapping:
        return mapping["_"]
    if isinstance(e, Call):
        return Call(e.fn, tuple(substitute(a, mapping) for a in e.args))
    if isinstance(e, ListLit):
        return ListLit(tuple(substitute(a, mapping) for a in e.items))
    return e


# --------------------------------------------------------------------------
# programs and libraries


@dataclass(frozen=True)
class Program:
    id: str
    name: str
    params: tuple[tuple[str, ParamType], ...]
    body: Any

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.params)

    @property
    def param_types(self) -> tuple[ParamType, ...]:
        return tuple(t for _, t in self.params)

    @property
    def is_call_form(self) -> bool:
        return self.id == format_expr(self.body)

    @property
    def bound_args(self) -> tuple:
        """Arguments of a call-form program such as ``repeat(C4, 2)``."""
        if not self.is_call_form:
            return ()
        return self.body.args

    def calls(self) -> frozenset[str]:
        # programs are immutable, so the walk is done once per instance
        try:
            return self.__dict__["_calls"]
        except KeyError:
            out = frozenset(n.fn for n in walk(self.body) if isinstance(n, Call) and n.fn not in PRIMITIVES)
            object.__setattr__(self, "_calls", out)
            return out

    def source(self) -> str:
        return format_program(self)

    def __str__(self):
        return self.source()


def format_program(p: Program) -> str:
    if p.is_call_form:
        return format_expr(p.body)
    params = ", ".join(f"{n}: {t.value}" for n, t in p.params)
    return f"def {p.name}({params}) = {format_expr(p.body)}"


@dataclass(frozen=True)
class Library:
    """Ordered set of programs. Insertion order is the canonical order."""
    programs: tuple[Program, ...] = ()
    provenance: tuple[tuple[str, int], ...] = ()
    candidate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "programs", tuple(self.programs))
        ids = [p.id for p in self.programs]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DSLError(f"duplicate program ids: {dup}")
        prov = dict(self.provenance)
        object.__setattr__(self, "provenance", tuple((i, prov[i]) for i in ids if i in prov))

    def __len__(self):
        return len(self.programs)

    def __iter__(self):
        return iter(self.programs)

    def __contains__(self, pid: str) -> bool:
        return any(p.id == pid for p in self.programs)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.programs)

    def get(self, pid: str) -> Program:
        for p in self.programs:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def by_name(self) -> dict[str, Program]:
        """Callable definitions; call-form programs are values, not callees."""
        return {p.name: p for p in self.programs if not p.is_call_form}

    def add(self, program: Program, origin: int | None = None) -> "Library":
        if program.id in self:
            raise DSLError(f"program id already present: {program.id}")
        prov = self.provenance + (((program.id, origin),) if origin is not None else ())
        return Library(self.programs + (program,), prov, self.candidate)

    def replace(self, pid: str, program: Program) -> "Library":
        if pid not in self:
            raise KeyError(pid)
        if program.id != pid and program.id in self:
            raise DSLError(f"program id already present: {program.id}")
        progs = tuple(program if p.id == pid else p for p in self.programs)
        prov = tuple((program.id if i == pid else i, k) for i, k in self.provenance)
        return Library(progs, prov, self.candidate)

    def select(self, keep: Iterable[str]) -> "Library":
        keep = set(keep)
        return Library(tuple(p for p in self.programs if p.id in keep), self.provenance, self.candidate)

    def union(self, other: "Library") -> "Library":
        out = self
        prov = dict(other.provenance)
        for p in other.programs:
            out = out.add(p, prov.get(p.id))
        return Library(out.programs, out.provenance, self.candidate)

    def check_acyclic(self) -> None:
        names = self.by_name()
        state: dict[str, int] = {}

        def visit(name, chain):
            if state.get(name) == 2:
                return
            if state.get(name) == 1:
                raise DSLError("cyclic call reference: " + " -> ".join(chain + [name]))
            state[name] = 1
            for callee in sorted(names[name].calls()):
                if callee in names:
                    visit(callee, chain + [name])
            state[name] = 2

        for n in names:
            visit(n, [])


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<frac>-?\d+/\d+)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_#]*(?:-[A-Za-z0-9]+)*)
  | (?P<punct>[()\[\],:=])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, params: Iterable[str] = ()):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.params = set(params)

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.next()
        if val != value or kind not in ("punct", "ident"):
            shown = val or "end of input"
            raise DSLSyntaxError(f"unexpected {shown!r}", pos, [repr(value)])
        return val

    def at(self, value: str) -> bool:
        kind, val, _ = self.peek()
        return val == value and kind in ("punct", "ident")

    def parse_definition(self):
        self.expect("def")
        kind, name, pos = self.next()
        if kind != "ident" or _PITCH_RE.match(name):
            raise DSLSyntaxError(f"bad program name {name!r}", pos, ["identifier"])
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                kind, pname, pos = self.next()
                if kind != "ident":
                    raise DSLSyntaxError(f"unexpected {pname!r}", pos, ["parameter name"])
                self.expect(":")
                kind, tname, pos = self.next()
                try:
                    ptype = ParamType(tname)
                except ValueError:
                    raise DSLSyntaxError(f"unknown ParamType {tname!r}", pos,
                                         [t.value for t in ParamType]) from None
                if pname in {n for n, _ in params}:
                    raise DSLSyntaxError(f"duplicate parameter {pname!r}", pos)
                params.append((pname, ptype))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect(")")
        self.expect("=")
        self.params = {n for n, _ in params}
        body = self.parse_expr()
        return name, tuple(params), body

    def parse_expr(self):
        kind, val, pos = self.next()
        if kind == "frac":
            num, den = val.split("/")
            if int(den) == 0:
                raise DSLSyntaxError("zero denominator", pos)
            return FracLit(Fraction(int(num), int(den)))
        if kind == "int":
            return IntLit(int(val))
        if kind == "ident":
            if _PITCH_RE.match(val):
                try:
                    midi = parse_pitch(val)
                except ValueError as exc:
                    raise DSLSyntaxError(str(exc), pos) from None
                if self.at(":"):
                    self.next()
                    dk, dv, dpos = self.next()
                    if dk not in ("int", "frac"):
                        raise DSLSyntaxError(f"unexpected {dv!r}", dpos, ["duration"])
                    dur = Fraction(dv)
                    if dur <= 0:
                        raise DSLSyntaxError("duration must be positive", dpos)
                    return NoteLit(midi, dur)
                return PitchLit(midi)
            if val == "_":
                return Hole()
            if self.at("("):
                self.next()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_expr())
                        if self.at(","):
                            self.next()
                            continue
                        break
                self.expect(")")
                return Call(val, tuple(args))
            if val in self.params:
                return Var(val)
            return Sym(val)
        if kind == "punct" and val == "[":
            items = []
            if not self.at("]"):
                while True:
                    items.append(self.parse_expr())
                    if self.at(","):
                        self.next()
                        continue
                    break
            self.expect("]")
            return ListLit(tuple(items))
        shown = val or "end of input"
        raise DSLSyntaxError(f"unexpected {shown!r}", pos, ["call", "note", "number", "identifier", "'['"])

    def finish(self):
        kind, val, pos = self.peek()
        if kind != "eof":
            raise DSLSyntaxError(f"unexpected {val!r}", pos, ["end of input"])


def _check_loops(body, params: set[str]) -> None:
    for node in walk(body):
        if isinstance(node, Call) and node.fn == "loop" and node.args:
            count = node.args[0]
            if not isinstance(count, (IntLit, Var)):
                raise DSLError(f"loop count must be a literal or a parameter, got {format_expr(count)}")


_SYMBOLIC_KINDS = {"direction", "chord", "table", "?"}


def _check_names(e, kind: str = "pattern") -> None:
    """Bare identifiers may only fill symbolic slots; anywhere else they are free names."""
    if isinstance(e, Sym) and kind not in _SYMBOLIC_KINDS:
        raise DSLError(f"unbound name {e.name!r} in a {kind} slot")
    if isinstance(e, Call):
        if e.fn in PRIMITIVES:
            types, variadic, _ = PRIMITIVES[e.fn]
            types = types * len(e.args) if variadic else types
        else:
            types = ()
        for a, t in zip(e.args, tuple(types) + ("?",) * len(e.args)):
            _check_names(a, t)
    elif isinstance(e, ListLit):
        for a in e.items:
            _check_names(a, "duration" if kind == "rhythm" else "pattern")


def parse_program(text: str, id: str | None = None) -> Program:
    """Parse a ``def`` or a bare call such as ``repeat(C4, 2)``."""
    if not text.strip():
        raise DSLSyntaxError("empty program", 0, ["'def'", "call"])
    parser = _Parser(text)
    if parser.at("def"):
        name, params, body = parser.parse_definition()
        parser.finish()
        if name in {n.fn for n in walk(body) if isinstance(n, Call)}:
            raise DSLError(f"cyclic call reference: {name} calls itself")
        _check_loops(body, {n for n, _ in params})
        _check_names(body)
        return Program(id or name, name, params, body)
    body = parser.parse_expr()
    parser.finish()
    if not isinstance(body, Call):
        raise DSLSyntaxError("expected a program call", 0, ["call"])
    _check_loops(body, set())
    return Program(id or format_expr(body), body.fn, (), body)


def parse_programs(text: str) -> list[Program]:
    """Parse a block of ``def`` lines (one definition per ``def``)."""
    chunks = re.split(r"(?m)^(?=\s*def\b)", text)
    out = []
    for chunk in chunks:
        stripped = "\n".join(l for l in chunk.splitlines() if not l.strip().startswith("#")).strip()
        if stripped:
            out.append(parse_program(stripped))
    return out


def parse_expr(text: str, params: Iterable[str] = ()):
    parser = _Parser(text, params)
    e = parser.parse_expr()
    parser.finish()
    return e


def parse_melody(text: str) -> Melody:
    e = parse_expr(text)
    ctx = Context()
    return _Evaluator(ctx, DEFAULT_BUDGET).coerce(ctx, _eval_literal(e), "pattern")


def _eval_literal(e):
    if isinstance(e, (IntLit, PitchLit)):
        return e.value
    if isinstance(e, FracLit):
        return e.value
    if isinstance(e, NoteLit):
        return Note(e.pitch, e.duration)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, ListLit):
        return [_eval_literal(x) for x in e.items]
    raise DSLError(f"not a literal: {format_expr(e)}")


# --------------------------------------------------------------------------
# evaluation

DEFAULT_CHORDS = {"major": (0, 4, 7), "minor": (0, 3, 7)}


@dataclass(frozen=True)
class Context:
    """Declared interval tables and melody tables available to programs."""
    chords: Mapping[str, tuple[int, ...]] = field(default_factory=lambda: dict(DEFAULT_CHORDS))
    tables: Mapping[str, Mapping[int, Melody]] = field(default_factory=dict)

    def __hash__(self):
        return id(self)


def _direction(value) -> int:
    if value == "up":
        return 1
    if value == "down":
        return -1
    raise EvaluationError(f"not a direction: {value!r}")


def _shift(m: Melody, k: int) -> Melody:
    try:
        return Melody(tuple(Note(n.pitch + k, n.duration) for n in m))
    except ValueError as exc:
        raise EvaluationError(str(exc)) from None


def _pitch(value: int) -> int:
    if not 0 <= value <= 127:
        raise EvaluationError(f"pitch out of range: {value}")
    return value


def _arp(ctx, root, chord, direction):
    intervals = ctx.chords[chord]
    if _direction(direction) > 0:
        return Melody(tuple(Note(_pitch(root + i)) for i in intervals))
    below = [root + i - 12 for i in reversed(intervals) if i % 12]
    return Melody(tuple(Note(_pitch(p)) for p in [root] + below))


def _start_at(m: Melody, p: int) -> Melody:
    if not len(m):
        return m
    return _shift(m, p - m.notes[0].pitch)


def _scale_time(m: Melody, f: Fraction) -> Melody:
    return Melody(tuple(Note(n.pitch, n.duration * f) for n in m))


def _accel(m: Melody) -> Melody:
    return Melody(tuple(Note(n.pitch, n.duration * Fraction(3, 4) ** (i + 1)) for i, n in enumerate(m)))


def _rhythmize(m: Melody, r: tuple) -> Melody:
    if not r:
        raise EvaluationError("empty rhythm")
    return Melody(tuple(Note(n.pitch, r[i % len(r)]) for i, n in enumerate(m)))


def _lookup(ctx, table, key):
    try:
        return ctx.tables[table][key]
    except KeyError:
        raise EvaluationError(f"no entry {key!r} in table {table!r}") from None


# name -> (argument types, variadic, implementation(ctx, *args))
PRIMITIVES: dict[str, tuple[tuple[str, ...], bool, Any]] = {
    "note": (("pitch",), False, lambda ctx, p: Melody((Note(_pitch(p)),))),
    "step": (("pitch", "direction", "steps"), False,
             lambda ctx, n, d, s: _pitch(n + _direction(d) * s)),
    "add": (("pitch", "steps"), False, lambda ctx, n, s: _pitch(n + s)),
    "sub": (("pitch", "steps"), False, lambda ctx, n, s: _pitch(n - s)),
    "loop": (("count", "pattern"), False, None),  # handled by the evaluator
    "concat": (("pattern",), True, lambda ctx, *ms: sum(ms, Melody())),
    "transpose": (("pattern", "steps"), False, lambda ctx, m, s: _shift(m, s)),
    "start_at": (("pattern", "pitch"), False, lambda ctx, m, p: _start_at(m, p)),
    "arp": (("pitch", "chord", "direction"), False, _arp),
    "orient": (("direction", "pattern"), False,
               lambda ctx, d, m: m if _direction(d) > 0 else Melody(m.notes[::-1])),
    "reverse": (("pattern",), False, lambda ctx, m: Melody(m.notes[::-1])),
    "scale_time": (("pattern", "duration"), False, lambda ctx, m, f: _scale_time(m, f)),
    "accel": (("pattern",), False, lambda ctx, m: _accel(m)),
    "rhythmize": (("pattern", "rhythm"), False, lambda ctx, m, r: _rhythmize(m, r)),
    "lookup": (("table", "latent-id"), False, _lookup),
}


def coerce_value(ctx: Context, value, kind: str):
    """Check/convert ``value`` to the runtime representation of ``kind``.

    ``kind`` is a ParamType value or one of the internal kinds ``duration``,
    ``table``. Strings are parsed (``"C4"``, ``"[C4, E4]"``, ``"1/2"``).
    """
    kind = kind.value if isinstance(kind, ParamType) else kind
    try:
        if kind == "pitch":
            if isinstance(value, str):
                value = parse_pitch(value) if _PITCH_RE.match(value) else int(value)
            if isinstance(value, Note):
                value = value.pitch
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return _pitch(value)
        if kind in ("count", "steps", "latent-id"):
            if isinstance(value, str):
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            if kind == "count" and value < 0:
                raise EvaluationError(f"negative count: {value}")
            return value
        if kind == "direction":
            if value not in ("up", "down"):
                raise TypeError
            return value
        if kind == "chord":
            if not isinstance(value, str) or value not in ctx.chords:
                raise TypeError
            return value
        if kind == "table":
            if not isinstance(value, str) or value not in ctx.tables:
                raise TypeError
            return value
        if kind == "duration":
            if isinstance(value, (int, str, Fraction)) and not isinstance(value, bool):
                value = Fraction(value)
                if value > 0:
                    return value
            raise TypeError
        if kind == "pattern":
            if isinstance(value, str):
                return parse_melody(value)
            if isinstance(value, Melody):
                return value
            if isinstance(value, Note):
                return Melody((value,))
            if isinstance(value, int) and not isinstance(value, bool):
                return Melody((Note(_pitch(value)),))
            if isinstance(value, (list, tuple)):
                notes = []
                for item in value:
                    m = coerce_value(ctx, item, "pattern")
                    notes.extend(m.notes)
                return Melody(tuple(notes))
            raise TypeError
        if kind == "rhythm":
            if isinstance(value, str):
                value = _eval_literal(parse_expr(value))
            if isinstance(value, (list, tuple)):
                return tuple(coerce_value(ctx, v, "duration") for v in value)
            raise TypeError
    except (TypeError, ValueError):
        raise EvaluationError(f"binding type mismatch: {value!r} is not a {kind}") from None
    raise EvaluationError(f"unknown kind {kind!r}")


class _Evaluator:
    def __init__(self, ctx: Context, budget: int, scope: Mapping[str, Program] | None = None):
        self.ctx = ctx
        self.budget = budget
        self.steps = 0
        self.scope = scope or {}
        self.stack: list[str] = []

    def tick(self, n: int = 1):
        self.steps += n
        if self.steps > self.budget:
            raise BudgetExceeded(f"evaluation budget of {self.budget} steps exhausted")

    coerce = staticmethod(coerce_value)

    def run(self, program: Program, bindings: Mapping[str, Any]):
        missing = [n for n in program.param_names if n not in bindings]
        if missing:
            raise EvaluationError(f"{program.name}: missing bindings for {missing}")
        extra = sorted(set(bindings) - set(program.param_names))
        if extra:
            raise EvaluationError(f"{program.name}: unknown parameters {extra}")
        env = {n: coerce_value(self.ctx, bindings[n], t) for n, t in program.params}
        # keyed by id: the call form ``repeat(C4, 2)`` shares its callee's name
        if program.id in self.stack:
            raise EvaluationError("cyclic call reference: " + " -> ".join(self.stack + [program.id]))
        self.stack.append(program.id)
        try:
            return self.eval(program.body, env, "pattern")
        finally:
            self.stack.pop()

    def eval(self, e, env, kind: str):
        self.tick()
        if isinstance(e, Var):
            if e.name not in env:
                raise EvaluationError(f"unbound variable {e.name!r}")
            return coerce_value(self.ctx, env[e.name], kind)
        if isinstance(e, (IntLit, PitchLit, FracLit, NoteLit, Sym)):
            return coerce_value(self.ctx, _eval_literal(e), kind)
        if isinstance(e, Hole):
            raise EvaluationError("unfilled hole")
        if isinstance(e, ListLit):
            if kind == "rhythm":
                return tuple(self.eval(x, env, "duration") for x in e.items)
            notes = []
            for x in e.items:
                notes.extend(self.eval(x, env, "pattern").notes)
            return coerce_value(self.ctx, Melody(tuple(notes)), kind)
        if isinstance(e, Call):
            return coerce_value(self.ctx, self.call(e, env), kind)
        raise EvaluationError(f"cannot evaluate {e!r}")

    def call(self, e: Call, env):
        if e.fn in PRIMITIVES:
            types, variadic, impl = PRIMITIVES[e.fn]
            if variadic:
                types = types * len(e.args)
            if len(types) != len(e.args):
                raise EvaluationError(f"{e.fn} expects {len(types)} arguments, got {len(e.args)}")
            if e.fn == "loop":
                times = self.eval(e.args[0], env, "count")
                self.tick(times)
                body = self.eval(e.args[1], env, "pattern")
                self.tick(times * len(body))
                return Melody(body.notes * times)
            args = [self.eval(a, env, t) for a, t in zip(e.args, types)]
            result = impl(self.ctx, *args)
            if isinstance(result, Melody):
                self.tick(len(result))
            return result
        callee = self.scope.get(e.fn)
        if callee is None:
            raise EvaluationError(f"unknown program or primitive {e.fn!r}")
        if len(callee.params) != len(e.args):
            raise EvaluationError(f"{e.fn} expects {len(callee.params)} arguments, got {len(e.args)}")
        args = {n: self.eval(a, env, t.value) for (n, t), a in zip(callee.params, e.args)}
        return self.run(callee, args)


def evaluate(p: Program, bindings: Mapping[str, Any] | None = None, budget: int = DEFAULT_BUDGET,
             context: Context | None = None, scope: Library | Mapping[str, Program] | None = None) -> Melody:
    """Run ``p`` with a full parameter assignment. Deterministic."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    if isinstance(scope, Library):
        scope = scope.by_name()
    ev = _Evaluator(context or Context(), budget, scope)
    return ev.run(p, dict(bindings or {}))


def slot_types(p: Program, scope: Mapping[str, Program] | None = None) -> dict[int, str]:
    """Expected kind of every node in ``p.body``, keyed by pre-order index."""
    scope = scope or {}
    out: dict[int, str] = {}
    counter = itertools.count()

    def visit(e, kind):
        out[next(counter)] = kind
        if isinstance(e, Call):
            if e.fn in PRIMITIVES:
                types, variadic, _ = PRIMITIVES[e.fn]
                types = types * len(e.args) if variadic else types
            elif e.fn in scope:
                types = tuple(t.value for t in scope[e.fn].param_types)
            else:
                types = ("?",) * len(e.args)
            for a, t in zip(e.args, tuple(types) + ("?",) * len(e.args)):
                visit(a, t)
        elif isinstance(e, ListLit):
            for a in e.items:
                visit(a, "duration" if kind == "rhythm" else "pattern")

    visit(p.body, "pattern")
    return out


# --------------------------------------------------------------------------
# fingerprints and equivalence


@dataclass(frozen=True)
class ProbeSet:
    """Per-ParamType canonical bindings, in declared order."""
    values: Mapping[ParamType, tuple] = field(default_factory=dict)

    def __hash__(self):
        return hash(tuple(sorted((t.value, tuple(map(repr, v))) for t, v in self.values.items())))

    def __eq__(self, other):
        return isinstance(other, ProbeSet) and dict(self.values) == dict(other.values)

    def bindings(self, p: Program) -> list[dict[str, Any]]:
        missing = [t.value for t in p.param_types if not self.values.get(t)]
        if missing:
            raise DSLError(f"probe set has no bindings for {sorted(set(missing))} used by {p.name}")
        names = p.param_names
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.values[t] for t in p.param_types))]


def fingerprint(p: Program, probes: ProbeSet, context: Context | None = None,
                scope: Library | Mapping[str, Program] | None = None,
                budget: int = DEFAULT_BUDGET) -> tuple[Melody, ...]:
    """Outputs of ``p`` over every probe binding, in declared order."""
    return tuple(evaluate(p, b, budget, context, scope) for b in probes.bindings(p))


@dataclass(frozen=True)
class Equivalence:
    """Outcome-equivalence table applied on top of fingerprint equality.

    ``pitch_modulus=12`` compares pitches up to octave; ``unordered_probes``
    compares the multiset of probe outputs rather than the ordered list.
    """
    name: str = "functional"
    pitch_modulus: int | None = None
    unordered_probes: bool = False

    def canonical(self, fp: Sequence[Melody]) -> tuple:
        mod = self.pitch_modulus
        keys = [tuple(((n.pitch % mod) if mod else n.pitch, n.duration) for n in m) for m in fp]
        if self.unordered_probes:
            keys.sort()
        return tuple(keys)


FUNCTIONAL = Equivalence()


class Fingerprinter:
    """Caches canonical program keys for one (probes, context, equivalence).

    ``library_key`` returns small integer class ids that are only comparable
    between keys from the same instance; hashing the raw fingerprints (which
    hold many Fractions) dominated channel enumeration.
    """

    def __init__(self, probes: ProbeSet, context: Context | None = None,
                 equivalence: Equivalence = FUNCTIONAL, budget: int = DEFAULT_BUDGET):
        self.probes = probes
        self.context = context or Context()
        self.equivalence = equivalence
        self.budget = budget
        self._cache: dict = {}
        self._ids: dict = {}      # cache key -> class id
        self._classes: dict = {}  # canonical fingerprint -> class id

    def _class_id(self, p: Program, scope: Library | None) -> int:
        ck = self._cache_key(p, scope)
        cid = self._ids.get(ck)
        if cid is None:
            canon = self.program_key(p, scope)
            cid = self._ids[ck] = self._classes.setdefault(canon, len(self._classes))
        return cid

    def _cache_key(self, p: Program, scope: Library | None) -> tuple:
        calls = p.calls()
        deps = None
        if calls and scope is not None:
            reach = calls | _closure(scope, calls)
            deps = tuple(q for q in scope.programs if q.name in reach)
        return (p.name if calls else None, p.params, p.body, deps)

    def program_key(self, p: Program, scope: Library | None = None) -> tuple:
        ck = self._cache_key(p, scope)
        if ck not in self._cache:
            fp = fingerprint(p, self.probes, self.context, scope, self.budget)
            self._cache[ck] = self.equivalence.canonical(fp)
        return self._cache[ck]

    def library_key(self, lib: Library) -> tuple:
        return tuple(sorted(self._class_id(p, lib) for p in lib.programs))


def _closure(lib: Library, names: set[str]) -> set[str]:
    table = lib.by_name()
    seen: set[str] = set()
    todo = list(names)
    while todo:
        n = todo.pop()
        if n in seen or n not in table:
            continue
        seen.add(n)
        todo.extend(table[n].calls())
    return seen


def library_key(lib: Library, probes: ProbeSet, context: Context | None = None,
                equivalence: Equivalence = FUNCTIONAL) -> tuple:
    fpr = Fingerprinter(probes, context, equivalence)
    return tuple(sorted(fpr.program_key(p, lib) for p in lib.programs))


def library_equal(a: Library, b: Library, probes: ProbeSet, context: Context | None = None,
                  equivalence: Equivalence = FUNCTIONAL) -> bool:
    """True iff the multisets of (canonicalised) program fingerprints agree."""
    fpr = Fingerprinter(probes, context, equivalence)
    return fpr.library_key(a) == fpr.library_key(b)


# --------------------------------------------------------------------------
# serialization


def program_to_dict(p: Program) -> dict:
    return {
        "id": p.id,
        "name": p.name,
        "params": [[n, t.value] for n, t in p.params],
        "body": format_expr(p.body),
    }


def program_from_dict(d: Mapping) -> Program:
    params = tuple((n, ParamType(t)) for n, t in d["params"])
    body = parse_expr(d["body"], [n for n, _ in params])
    return Program(d["id"], d["name"], params, body)


def library_to_dict(lib: Library) -> dict:
    return {
        "programs": [program_to_dict(p) for p in lib.programs],
        "provenance": {pid: k for pid, k in lib.provenance},
        "candidate": lib.candidate,
    }


def library_from_dict(d: Mapping) -> Library:
    progs = tuple(program_from_dict(p) for p in d["programs"])
    return Library(progs, tuple(d.get("provenance", {}).items()), bool(d.get("candidate", False)))


def dumps_library(lib: Library) -> str:
    return json.dumps(library_to_dict(lib), separators=(",", ":"))


def loads_library(text: str) -> Library:
    return library_from_dict(json.loads(text))
