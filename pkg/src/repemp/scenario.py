"""Scenario files: TOML with embedded program definitions.

A scenario declares the program pool, named libraries, probe bindings,
outcome-equivalence tables, operation tables, tasks and curator settings.
``load_scenario`` validates everything up front and reports every problem at
once through :class:`ScenarioError`.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dsl import (
    FUNCTIONAL, Context, DSLError, Equivalence, EvaluationError, Fingerprinter, Library,
    Melody, ParamType, Program, ProbeSet, coerce_value, parse_expr, parse_melody,
    parse_program, parse_programs,
)
from .empowerment import ENUMERATION_CAP
from .ops import MutationVariant, OperationTables

__all__ = ["ScenarioError", "Scenario", "TaskSpec", "CuratorConfig", "load_scenario",
           "parse_scenario", "data_path"]

GENERATORS = ("joint", "crossover", "splice", "mutation", "abstraction", "selection")


class ScenarioError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


def data_path(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    return Path(__file__).parent / "data" / name


@dataclass(frozen=True)
class TaskSpec:
    index: int
    target: Melody
    candidates: tuple[str, ...] = ()
    action_budget: int = 16
    beam_width: int = 8
    tprime: int = 0
    cycles: int = 1
    name: str = ""


@dataclass(frozen=True)
class CuratorConfig:
    memory_cap: int | None = None
    subset_cap: int = 2
    relevance_threshold: float = 0.0
    estimator: str = "uniform"
    compose: tuple[str, ...] = ("abstraction", "splice")


@dataclass
class Scenario:
    name: str
    pool: dict[str, Program]
    libraries: dict[str, tuple[str, ...]]
    library_equivalence: dict[str, str]
    probes: ProbeSet
    domains: dict[ParamType, tuple]
    context: Context
    equivalences: dict[str, Equivalence]
    default_equivalence: str
    tables: OperationTables
    tasks: list[TaskSpec]
    initial: tuple[str, ...]
    curator: CuratorConfig
    horizon: int = 1
    estimator: str = "uniform"
    seed: int = 0
    enumeration_cap: int = ENUMERATION_CAP
    probe_budget: int | None = None
    source: str = ""
    _fprs: dict = field(default_factory=dict, repr=False)

    def library(self, name: str) -> Library:
        if name not in self.libraries:
            raise KeyError(f"unknown library {name!r}; declared: {sorted(self.libraries)}")
        return Library(tuple(self.pool[i] for i in self.libraries[name]))

    def programs(self, ids) -> Library:
        return Library(tuple(self.pool[i] for i in ids))

    def equivalence_name(self, key: str | None) -> str:
        if key is None:
            return self.default_equivalence
        if key in self.equivalences:
            return key
        if key in self.library_equivalence:
            return self.library_equivalence[key]
        if key in self.libraries:
            return self.default_equivalence
        raise KeyError(f"unknown equivalence or library {key!r}")

    def fingerprinter(self, key: str | None = None) -> Fingerprinter:
        """Shared, cached fingerprinter for an equivalence (or a library's equivalence)."""
        name = self.equivalence_name(key)
        if name not in self._fprs:
            self._fprs[name] = Fingerprinter(self.probes, self.context, self.equivalences[name])
        return self._fprs[name]


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"cannot read {path}: {exc}"]) from None
    return parse_scenario(text, str(path))


def _int_keyed(d: Mapping) -> dict:
    out = {}
    for k, v in d.items():
        try:
            out[int(k)] = v
        except ValueError:
            out[k] = v
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    problems: list[str] = []
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError([f"TOML syntax: {exc}"]) from None

    # context: chords and melody tables
    chords = {k: tuple(int(i) for i in v) for k, v in raw.get("chords", {"major": [0, 4, 7], "minor": [0, 3, 7]}).items()}
    tables: dict[str, dict[int, Melody]] = {}
    for tname, entries in raw.get("tables", {}).items():
        tables[tname] = {}
        for k, v in _int_keyed(entries).items():
            try:
                tables[tname][k] = parse_melody(v)
            except (DSLError, ValueError) as exc:
                problems.append(f"tables.{tname}.{k}: {exc}")
    ctx = Context(chords, tables)

    # programs
    pool: dict[str, Program] = {}
    try:
        for p in parse_programs(raw.get("programs", "")):
            if p.id in pool:
                problems.append(f"programs: duplicate definition of {p.id!r}")
            pool[p.id] = p
    except DSLError as exc:
        problems.append(f"programs: {exc}")
    try:
        Library(tuple(pool.values())).check_acyclic()
    except DSLError as exc:
        problems.append(f"programs: {exc}")
    for p in pool.values():
        for callee in sorted(p.calls()):
            if callee not in {q.name for q in pool.values()}:
                problems.append(f"program {p.id}: dangling reference to {callee!r}")

    def check_ids(where: str, ids, extra=()) -> tuple[str, ...]:
        ids = tuple(ids)
        for i in ids:
            if i not in pool and i not in extra:
                problems.append(f"{where}: dangling program reference {i!r}")
        return tuple(i for i in ids if i in pool)

    # probes and executor domains
    def typed_lists(section: str) -> dict[ParamType, tuple]:
        out: dict[ParamType, tuple] = {}
        for tname, values in raw.get(section, {}).items():
            try:
                ptype = ParamType(tname)
            except ValueError:
                problems.append(f"{section}: unknown ParamType {tname!r}")
                continue
            vals = []
            for v in values:
                try:
                    vals.append(coerce_value(ctx, v, ptype))
                except EvaluationError as exc:
                    problems.append(f"{section}.{tname}: {exc}")
            if not vals:
                problems.append(f"{section}.{tname}: empty binding list")
            out[ptype] = tuple(vals)
        return out

    probe_values = typed_lists("probes")
    probes = ProbeSet(probe_values)
    domains = typed_lists("domains") if "domains" in raw else dict(probe_values)
    used = {t for p in pool.values() for t in p.param_types}
    for t in sorted(used - set(probe_values), key=lambda t: t.value):
        problems.append(f"probes: no bindings for ParamType {t.value!r} used by the program pool")

    # equivalences
    equivalences = {"functional": FUNCTIONAL}
    for ename, spec in raw.get("equivalence", {}).items():
        equivalences[ename] = Equivalence(ename, spec.get("pitch_modulus"), bool(spec.get("unordered_probes", False)))
    default_eq = raw.get("default_equivalence", "functional")
    if default_eq not in equivalences:
        problems.append(f"default_equivalence: unknown table {default_eq!r}")
        default_eq = "functional"

    # libraries
    libraries: dict[str, tuple[str, ...]] = {}
    library_eq: dict[str, str] = {}
    for lname, spec in raw.get("libraries", {}).items():
        if isinstance(spec, list):
            spec = {"programs": spec}
        libraries[lname] = check_ids(f"libraries.{lname}", spec.get("programs", []))
        if len(set(libraries[lname])) != len(libraries[lname]):
            problems.append(f"libraries.{lname}: duplicate program ids")
        eq = spec.get("equivalence")
        if eq is not None:
            if eq not in equivalences:
                problems.append(f"libraries.{lname}: unknown equivalence {eq!r}")
            else:
                library_eq[lname] = eq

    # operations
    ops_raw = raw.get("operations", {})
    fragments = {}
    for fname, ftext in ops_raw.get("fragments", {}).items():
        try:
            fragments[fname] = parse_expr(ftext)
        except DSLError as exc:
            problems.append(f"operations.fragments.{fname}: {exc}")
    # tables may also describe programs that operations will create by name
    derived = set(ops_raw.get("names", {}).values())
    crossover = {}
    for pid, styles in ops_raw.get("crossover", {}).items():
        check_ids("operations.crossover", [pid], derived)
        for s in styles:
            if s not in fragments:
                problems.append(f"operations.crossover.{pid}: unknown fragment {s!r}")
        crossover[pid] = tuple(styles)
    mutation = {}
    for pid, variants in ops_raw.get("mutation", {}).items():
        check_ids("operations.mutation", [pid], derived)
        entries = []
        for vname, vspec in variants.items():
            where = f"operations.mutation.{pid}.{vname}"
            outcomes = []
            for o in vspec.get("outcomes", []):
                try:
                    outcomes.append((float(o["p"]), parse_program(o["source"])))
                except (KeyError, DSLError, ValueError) as exc:
                    problems.append(f"{where}: bad outcome {o!r}: {exc}")
            if outcomes and abs(math.fsum(p for p, _ in outcomes) - 1.0) > 1e-12:
                problems.append(f"{where}: outcome probabilities do not sum to 1")
            pin = tuple(vspec.get("pin", {}).items())
            args = tuple(vspec.get("args", {}).items())
            if sum(map(bool, (pin, args, outcomes))) != 1:
                problems.append(f"{where}: declare exactly one of pin, args, outcomes")
            if pid in pool and pin:
                names = pool[pid].param_names
                for pname, _ in pin:
                    if pname not in names:
                        problems.append(f"{where}: {pid} has no parameter {pname!r}")
            entries.append(MutationVariant(vname, pin, args, tuple(outcomes)))
        mutation[pid] = tuple(entries)
    generators = tuple(ops_raw.get("generators", ["joint"]))
    for g in generators:
        if g not in GENERATORS:
            problems.append(f"operations.generators: unknown generator {g!r}")
    horizon = int(raw.get("horizon", ops_raw.get("horizon", 1)))
    if horizon < 1:
        problems.append("horizon must be >= 1")
    optables = OperationTables(fragments, crossover, mutation, dict(ops_raw.get("names", {})),
                               generators, horizon)

    estimator = raw.get("estimator", "uniform")
    if estimator not in ("uniform", "capacity"):
        problems.append(f"estimator: unknown estimator {estimator!r}")

    # curator
    cur_raw = raw.get("curator", {})
    curator = CuratorConfig(
        memory_cap=cur_raw.get("memory_cap"),
        subset_cap=int(cur_raw.get("subset_cap", 2)),
        relevance_threshold=float(cur_raw.get("relevance_threshold", 0.0)),
        estimator=cur_raw.get("estimator", estimator),
        compose=tuple(cur_raw.get("compose", ["abstraction", "splice"])),
    )
    if curator.estimator not in ("uniform", "capacity"):
        problems.append(f"curator.estimator: unknown estimator {curator.estimator!r}")
    for g in curator.compose:
        if g not in ("abstraction", "splice", "crossover"):
            problems.append(f"curator.compose: unknown compose generator {g!r}")

    # tasks
    initial = check_ids("initial", raw.get("initial", []))
    tasks = []
    seen_candidates: set[str] = set(initial)
    for k, t in enumerate(raw.get("tasks", []), start=1):
        where = f"tasks[{k}]"
        try:
            target = parse_melody(t["target"])
        except KeyError:
            problems.append(f"{where}: missing target")
            continue
        except (DSLError, ValueError) as exc:
            problems.append(f"{where}: bad target: {exc}")
            continue
        if not len(target):
            problems.append(f"{where}: target must be non-empty")
        cands = check_ids(f"{where}.candidates", t.get("candidates", []))
        overlap = seen_candidates & set(cands)
        if overlap:
            problems.append(f"{where}.candidates: ids already in the library {sorted(overlap)}")
        seen_candidates |= set(cands)
        tasks.append(TaskSpec(k, target, cands, int(t.get("action_budget", 16)), int(t.get("beam_width", 8)),
                              int(t.get("tprime", 0)), int(t.get("cycles", 1)), t.get("name", "")))

    if problems:
        raise ScenarioError(problems)
    probe_budget = raw.get("executor", {}).get("probe_budget")
    return Scenario(
        name=raw.get("name", Path(source).stem), pool=pool, libraries=libraries,
        library_equivalence=library_eq, probes=probes, domains=domains, context=ctx,
        equivalences=equivalences, default_equivalence=default_eq, tables=optables,
        tasks=tasks, initial=initial, curator=curator, horizon=horizon, estimator=estimator,
        seed=int(raw.get("seed", 0)), enumeration_cap=int(raw.get("enumeration_cap", ENUMERATION_CAP)),
        probe_budget=probe_budget, source=source,
    )
