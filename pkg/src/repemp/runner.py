"""Task-sequence simulation: executor, relevance filter, curator, per task."""

from __future__ import annotations

import json
import logging
import time

from .curator import CuratorState, curate_step, relevance_filter
from .dsl import Library, library_to_dict
from .executor import Task, use_improve

__all__ = ["run_scenario", "dumps_report"]

log = logging.getLogger(__name__)


def run_scenario(scenario, horizon: int | None = None, estimator: str | None = None,
                 seed: int | None = None) -> dict:
    """Run every task in order and return a JSON-ready report.

    The report carries no timing so that equal inputs give byte-identical
    output; wall-clock time goes to the log.
    """
    horizon = horizon or scenario.horizon
    estimator = estimator or scenario.curator.estimator
    Z = scenario.programs(scenario.initial)
    steps, errors = [], []
    scored = inputs = 0
    started = time.perf_counter()
    for spec in scenario.tasks:
        record = {"task": spec.index, "name": spec.name, "target": str(spec.target)}
        try:
            cands = Library(tuple(scenario.pool[i] for i in spec.candidates),
                            tuple((i, spec.index) for i in spec.candidates), candidate=True)
            working = Z.union(cands)
            _, episode = use_improve(
                working, Task(spec.index, spec.target), spec.cycles, scenario.tables,
                tprime=spec.tprime, domains=scenario.domains, context=scenario.context,
                probe_budget=scenario.probe_budget, action_budget=spec.action_budget,
                beam_width=spec.beam_width,
            )
            kept = relevance_filter(cands, episode, scenario.curator.relevance_threshold)
            Z, report, action = curate_step(CuratorState(Z, kept, spec.index), scenario, horizon, estimator)
            scored += 1
            inputs += report.n_inputs
            record.update({
                "episode": episode.to_dict(),
                "candidates": list(cands.ids),
                "retained": list(kept.ids),
                "action": action.to_dict(),
                "report": report.to_dict(),
                "library": list(Z.ids),
            })
        except Exception as exc:  # noqa: BLE001 - a failing task must not stop the run
            log.exception("task %d failed", spec.index)
            record["error"] = f"{type(exc).__name__}: {exc}"
            errors.append(spec.index)
        steps.append(record)
    log.info("run finished in %.3fs", time.perf_counter() - started)
    return {
        "scenario": scenario.name,
        "seed": scenario.seed if seed is None else seed,
        "horizon": horizon,
        "estimator": estimator,
        "initial_library": list(scenario.initial),
        "steps": steps,
        "final_library": library_to_dict(Z),
        "statistics": {"tasks": len(scenario.tasks), "curator_steps": scored,
                       "chosen_channel_inputs": inputs},
        "failed_tasks": errors,
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
