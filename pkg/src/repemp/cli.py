"""Command-line entry point: ``repemp {eval,compare,run,validate}``.

Exit codes: 0 ok, 2 scenario validation failure, 3 enumeration cap exceeded,
4 one or more tasks failed during ``run``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .empowerment import EnumerationCapExceeded, rep_emp
from .runner import dumps_report, run_scenario
from .scenario import ScenarioError, data_path, load_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_CAP, EXIT_TASK = 0, 2, 3, 4

FIELDS = ("library", "diversity_bits", "uncertainty_bits", "mi_bits", "capacity_bits",
          "n_eff", "n_inputs", "dropped", "estimator")

log = logging.getLogger("repemp")


def fmt_bits(x: float | None, places: int) -> str:
    """Round half-even to ``places`` decimals (``-`` for a missing value)."""
    if x is None:
        return "-"
    q = Decimal(1).scaleb(-places) if places > 0 else Decimal(1)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_EVEN))


def _resolve(path: str) -> Path:
    """Scenario path, falling back to the bundled data directory for bare names."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and len(p.parts) == 1:
        for name in (path, path + ".toml"):
            bundled = data_path(name)
            if bundled.exists():
                return bundled
    return p


def _load(args):
    scenario = load_scenario(_resolve(args.scenario))
    if getattr(args, "seed", None) is not None:
        scenario.seed = args.seed
    return scenario


def _row(name: str, report, places: int | None = None) -> dict:
    d = report.to_dict()
    row = {"library": name, **{k: d.get(k) for k in FIELDS if k != "library"}}
    if places is not None:
        for k in ("diversity_bits", "uncertainty_bits", "mi_bits", "capacity_bits"):
            row[k] = fmt_bits(row[k], places)
    return row


def _table(rows: list[dict], columns: tuple[str, ...]) -> str:
    cells = [[str(r[c]) if r[c] is not None else "-" for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(row, widths)))
              for row in cells]
    return "\n".join(lines)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _report(scenario, library: str, args, estimator: str):
    return rep_emp(scenario.library(library), scenario, horizon=args.horizon,
                   estimator=estimator, equivalence=library)


def _check_library(scenario, name: str):
    if name not in scenario.libraries:
        raise ScenarioError([f"--library: unknown library {name!r}; "
                             f"known: {', '.join(sorted(scenario.libraries)) or 'none'}"])


def cmd_eval(args) -> int:
    scenario = _load(args)
    _check_library(scenario, args.library)
    estimator = args.estimator or scenario.estimator
    report = _report(scenario, args.library, args, estimator)
    if args.format == "json":
        text = json.dumps({"library": args.library, **report.to_dict()}, indent=2, sort_keys=True)
    elif args.format == "csv":
        text = _csv([_row(args.library, report, args.bits_precision)])
    else:
        text = _table([_row(args.library, report, args.bits_precision)],
                      ("library", "diversity_bits", "uncertainty_bits", "mi_bits", "capacity_bits",
                       "n_eff", "n_inputs"))
    _emit(text, args.out)
    return EXIT_OK


def rank(rows: list[tuple[str, object]]) -> list[tuple[str, object]]:
    """Descending by value, ties broken lexically by library name."""
    return sorted(rows, key=lambda r: (-round(r[1].value, 12), r[0]))


def cmd_compare(args) -> int:
    scenario = _load(args)
    if len(args.library) < 2:
        raise ScenarioError(["compare needs at least two --library names"])
    for name in args.library:
        _check_library(scenario, name)
    estimator = args.estimator or scenario.estimator
    estimators = ["uniform", "capacity"] if estimator == "capacity" else ["uniform"]
    rankings = {}
    for est in estimators:
        reports = {}
        for name in dict.fromkeys(args.library):
            reports[name] = _report(scenario, name, args, est)
        rankings[est] = rank([(name, reports[name]) for name in args.library])
    if args.format == "json":
        payload = {est: [{"library": n, **r.to_dict()} for n, r in rows] for est, rows in rankings.items()}
        text = json.dumps(payload, indent=2, sort_keys=True)
    elif args.format == "csv":
        text = "".join(_csv([_row(n, r, args.bits_precision) for n, r in rows]) for rows in rankings.values())
    else:
        blocks = []
        for est, rows in rankings.items():
            value_col = "capacity_bits" if est == "capacity" else "mi_bits"
            table_rows = [_row(n, r, args.bits_precision) for n, r in rows]
            for row in table_rows:
                row["RepEmp"] = row[value_col]
            blocks.append(f"[{est}]\n" + _table(table_rows, ("library", "diversity_bits",
                                                             "uncertainty_bits", "RepEmp")))
        text = "\n\n".join(blocks)
    _emit(text, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load(args)
    if not scenario.tasks:
        raise ScenarioError(["run needs at least one [[tasks]] entry"])
    report = run_scenario(scenario, horizon=args.horizon, estimator=args.estimator, seed=args.seed)
    _emit(dumps_report(report), args.out)
    return EXIT_TASK if report["failed_tasks"] else EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args)
    _emit(f"ok: {scenario.name} ({len(scenario.pool)} programs, {len(scenario.libraries)} libraries, "
          f"{len(scenario.tasks)} tasks)", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repemp", description="Representational empowerment of program libraries.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, library=None):
        p.add_argument("--scenario", required=True,
                       help="scenario TOML file (bare names resolve to the bundled scenarios)")
        if library == "one":
            p.add_argument("--library", required=True, help="library name from the scenario")
        elif library == "many":
            p.add_argument("--library", required=True, nargs="+", help="library names to rank")
        p.add_argument("--estimator", choices=("uniform", "capacity"))
        p.add_argument("--horizon", type=int, help="operation-sequence length T")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--bits-precision", type=int, default=3, help="decimals in tables (default 3)")

    p = sub.add_parser("eval", help="RepEmp of one library")
    common(p, "one")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="rank several libraries by RepEmp")
    common(p, "many")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", help="curator/executor loop over the scenario tasks")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a scenario and report every problem")
    common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.horizon is not None and args.horizon < 1:
        print("error: --horizon must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EnumerationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
