#!/usr/bin/env python3
"""Replay the packaged reference debate and print its round-by-round
totals, feasibility verdicts, and final metric reports."""

import sys

from triage_arena.agents import build_profile, replay_agent
from triage_arena.arena import AgentSpec, DebateConfig, run_debate
from triage_arena.metrics import METRIC_NAMES
from triage_arena.model import Framework, ProfileKind, RESOURCE_NAMES, column_totals
from triage_arena.persistence import load_reference_fixtures


def main() -> int:
    fixtures = load_reference_fixtures()
    cohort = fixtures.cohort
    profile_a, system_a = build_profile(ProfileKind.ALIGNED, Framework.UTILITARIAN)
    profile_b, system_b = build_profile(ProfileKind.BASELINE)
    transcript = run_debate(
        cohort,
        AgentSpec("A", replay_agent(fixtures.round_texts["A"], "replay:A"), profile_a, system_a),
        AgentSpec("B", replay_agent(fixtures.round_texts["B"], "replay:B"), profile_b, system_b),
        DebateConfig(rounds=3),
    )
    print(f"Cohort {cohort.cohort_id} (seed {cohort.seed}), capacity "
          f"{cohort.capacity.variant}: "
          + ", ".join(f"{n}={s:g}" for n, s in zip(RESOURCE_NAMES, cohort.capacity.supply)))
    print()
    for prop in transcript.history.proposals:
        totals = ", ".join(f"{v:g}" for v in column_totals(prop.allocation))
        verdict = "feasible" if prop.feasibility.feasible else (
            "INFEASIBLE: " + ", ".join(f"{n} over by {o:g}" for n, o in prop.feasibility.violations)
        )
        print(f"round {prop.round} agent {prop.agent}: totals [{totals}] -> {verdict}")
    print()
    for label, report in transcript.final_reports.items():
        values = ", ".join(f"{m}={report.value(m):.4f}" for m in METRIC_NAMES)
        print(f"final agent {label}: {values} (feasible={report.feasible})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
