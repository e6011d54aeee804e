from __future__ import annotations

import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triage_arena.agents import ScriptedBackend, replay_agent
from triage_arena.arena import (
    AgentSpec,
    DebateConfig,
    InteractionHistory,
    ParseError,
    build_prompt,
    default_joint_allocation,
    emergence_delta,
    parse_allocation,
    render_allocation,
    run_debate,
    transcript_from_json,
    transcript_to_json,
)
from triage_arena.cohortgen import generate_cohort
from triage_arena.metrics import METRIC_NAMES, metric_report
from triage_arena.model import (
    Allocation,
    BiasSource,
    Framework,
    ProfileKind,
    canonical_json,
    capacity_for_variant,
)
from triage_arena.agents import build_profile

from conftest import random_allocation


def scripted_pair(framework=Framework.RAWLSIAN, opponent="baseline"):
    profile_a, system_a = build_profile(ProfileKind.ALIGNED, framework)
    agent_a = AgentSpec(
        label="A",
        backend=ScriptedBackend("rawlsian" if framework is Framework.RAWLSIAN else "utilitarian"),
        profile=profile_a,
        system_text=system_a,
    )
    if opponent == "biased":
        from importlib import resources

        path = resources.files("triage_arena").joinpath("data/adversarial/biased_prompt.txt")
        profile_b, system_b = build_profile(
            ProfileKind.BIASED,
            bias_source=BiasSource.ADVERSARIAL_PROMPT,
            adversarial_path=str(path),
        )
        backend = ScriptedBackend("biased")
        label = "C"
    else:
        profile_b, system_b = build_profile(ProfileKind.BASELINE)
        backend = ScriptedBackend("utilitarian")
        label = "B"
    agent_b = AgentSpec(label=label, backend=backend, profile=profile_b, system_text=system_b)
    return agent_a, agent_b


class TestParser:
    def test_specific_row_extracted(self):
        text = (
            "Patient 1: [1, 0, 10, 0, 8, 1]\n"
            "Patient 3: [0,1,0,10,12,0]\n"
            "Patient 2: [0, 0, 5, 0, 4, 1]\n"
        )
        alloc, warnings = parse_allocation(text, n=3)
        assert alloc.rows[2] == (0, 1, 0, 10, 12, 0)

    def test_all_zero_rows_no_warnings(self):
        text = "\n".join(f"Patient {i}: [0, 0, 0, 0, 0, 0]" for i in range(1, 9))
        alloc, warnings = parse_allocation(text, n=8)
        assert alloc == Allocation.zeros(8)
        assert warnings == []

    def test_missing_patient_defaults_to_zero_with_warning(self):
        text = "Patient 1: [1, 0, 0, 0, 0, 0]\nPatient 3: [0, 0, 0, 0, 1, 0]"
        alloc, warnings = parse_allocation(text, n=3)
        assert alloc.rows[1] == (0, 0, 0, 0, 0, 0)
        assert any("patient 2 missing" in w for w in warnings)

    def test_duplicate_patient_last_wins_with_warning(self):
        text = "Patient 1: [1, 0, 0, 0, 0, 0]\nPatient 1: [0, 0, 0, 0, 0, 2]"
        alloc, warnings = parse_allocation(text, n=1)
        assert alloc.rows[0] == (0, 0, 0, 0, 0, 2)
        assert any("duplicate" in w for w in warnings)

    def test_negative_entries_clamped(self):
        alloc, warnings = parse_allocation("Patient 1: [-1, 0, 0, 0, 0, 3]", n=1)
        assert alloc.rows[0] == (0, 0, 0, 0, 0, 3)
        assert any("clamped" in w for w in warnings)

    def test_unparseable_text_raises(self):
        with pytest.raises(ParseError):
            parse_allocation("I allocate everything to everyone fairly.", n=8)

    def test_p_prefix_and_decimals_accepted(self):
        alloc, _ = parse_allocation("P2: [0.5, 0, 1.25, 0, 0, 0]", n=2)
        assert alloc.rows[1] == (0.5, 0, 1.25, 0, 0, 0)

    def test_out_of_range_patient_id_ignored(self):
        text = "Patient 1: [1,0,0,0,0,0]\nPatient 9: [1,1,1,1,1,1]"
        alloc, warnings = parse_allocation(text, n=2)
        assert any("outside" in w for w in warnings)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_render_parse_round_trip(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        n = int(rng.integers(1, 12))
        alloc = random_allocation(rng, n=n, max_units=25)
        parsed, warnings = parse_allocation(render_allocation(alloc), n=n)
        assert parsed == alloc
        assert warnings == []

    def test_totals_line_matches_column_totals(self):
        from triage_arena.model import column_totals

        rng = np.random.Generator(np.random.Philox(8)); alloc = random_allocation(rng)
        rendered = render_allocation(alloc)
        totals_line = rendered.splitlines()[-1]
        expected = "Total: [" + ", ".join(
            str(int(v)) if float(v).is_integer() else repr(float(v))
            for v in column_totals(alloc)
        ) + "]"
        assert totals_line == expected


class TestPrompts:
    def test_baseline_has_no_framework_preamble_and_no_excerpts(self, cohort):
        _, agent_b = scripted_pair()
        config = DebateConfig(framework="Rawlsian")
        prompt = build_prompt(agent_b, cohort, InteractionHistory(), None, 1, config)
        for fw in Framework:
            assert fw.value not in prompt
        assert "Reference excerpts" not in prompt

    def test_aligned_prompt_contains_k_retrieved_chunks(self, cohort):
        from triage_arena.retrieval import DocumentChunk, HashingEmbedder, index_corpus, retrieve

        agent_a, _ = scripted_pair()
        chunks = [
            DocumentChunk(doc_id=f"d{i}", page_hint=i, text=f"text number {i}", ordinal=0)
            for i in range(10)
        ]
        embedder = HashingEmbedder()
        index = index_corpus(chunks, embedder)
        result = retrieve(index, "text number", embedder, k=5)
        config = DebateConfig()
        prompt = build_prompt(agent_a, cohort, InteractionHistory(), result, 1, config)
        assert prompt.count("(doc: d") == 5

    def test_survival_rendered_as_label_only(self, sampler_config):
        # no raw survival numerals anywhere in 100 rendered prompts
        agent_a, agent_b = scripted_pair()
        config = DebateConfig()
        numeral = re.compile(r"\d+\.\d+|\d+%")
        for seed in range(100):
            cohort = generate_cohort(seed, sampler_config)
            for spec in (agent_a, agent_b):
                prompt = build_prompt(spec, cohort, InteractionHistory(), None, 1, config)
                assert not numeral.search(prompt), prompt
                for p in cohort.patients:
                    assert f"survival outlook: {p.survival_label}" in prompt


class TestRunDebate:
    def test_single_round_two_proposals(self, cohort):
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=1))
        assert len(transcript.history.proposals) == 2
        assert transcript.completed

    def test_three_rounds_six_proposals_finals_from_last_round(self, cohort):
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=3))
        assert len(transcript.history.proposals) == 2 * 3
        last_a = [p for p in transcript.history.proposals if p.agent == "A"][-1]
        assert transcript.final_allocations["A"] == last_a.allocation

    def test_transcripts_byte_identical_across_runs(self, cohort):
        agent_a, agent_b = scripted_pair()
        config = DebateConfig(rounds=3)
        t1 = run_debate(cohort, agent_a, agent_b, config)
        t2 = run_debate(cohort, agent_a, agent_b, config)
        assert canonical_json(transcript_to_json(t1)) == canonical_json(transcript_to_json(t2))
        assert t1.deterministic
        assert t1.timestamps is None

    def test_every_proposal_carries_feasibility(self, cohort):
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=2))
        for prop in transcript.history.proposals:
            assert prop.feasibility is not None

    def test_parse_failure_after_retries_marks_transcript(self, cohort):
        class Gibberish:
            name = "gibberish"
            deterministic = True

            def generate(self, prompt, ctx):
                return "no allocations here at all"

        agent_a, agent_b = scripted_pair()
        bad = AgentSpec(label="A", backend=Gibberish(), profile=agent_a.profile)
        transcript = run_debate(cohort, bad, agent_b, DebateConfig(rounds=2))
        assert not transcript.completed
        assert transcript.failed["agent"] == "A"
        assert transcript.failed["round"] == 1
        assert "no allocations" in transcript.failed["raw_text"]
        assert transcript.final_allocations == {}

    def test_parse_retry_recovers_once(self, cohort):
        class SecondTimeLucky:
            name = "flaky"
            deterministic = True

            def __init__(self):
                self.calls = 0

            def generate(self, prompt, ctx):
                self.calls += 1
                if self.calls % 2 == 1:
                    return "hmm let me think"
                return "\n".join(
                    f"Patient {i}: [0, 0, 1, 0, 1, 0]" for i in range(1, ctx.cohort.n + 1)
                )

        agent_a, agent_b = scripted_pair()
        flaky = AgentSpec(label="A", backend=SecondTimeLucky(), profile=agent_a.profile)
        transcript = run_debate(cohort, flaky, agent_b, DebateConfig(rounds=1, max_parse_retries=1))
        assert transcript.completed

    def test_infeasible_proposals_recorded_not_repaired(self, cohort):
        too_much = "\n".join(
            f"Patient {i}: [5, 5, 50, 50, 50, 5]" for i in range(1, cohort.n + 1)
        )
        backend = replay_agent([too_much], name="replay:over")
        agent_a, agent_b = scripted_pair()
        over = AgentSpec(label="A", backend=backend, profile=agent_a.profile)
        transcript = run_debate(cohort, over, agent_b, DebateConfig(rounds=1))
        prop = transcript.history.proposals[0]
        assert not prop.feasibility.feasible
        assert prop.allocation.rows[0][0] == 5  # stored as proposed

    def test_round_t_proposal_visible_to_opponent_same_round(self, cohort):
        seen_prompts = []

        class Recorder:
            name = "recorder"
            deterministic = True

            def generate(self, prompt, ctx):
                seen_prompts.append(prompt)
                return "\n".join(
                    f"Patient {i}: [0, 0, 0, 0, 1, 0]" for i in range(1, ctx.cohort.n + 1)
                )

        agent_a, agent_b = scripted_pair()
        recorder = AgentSpec(label=agent_b.label, backend=Recorder(), profile=agent_b.profile)
        run_debate(cohort, agent_a, recorder, DebateConfig(rounds=1))
        assert "Round 1, Agent A proposed" in seen_prompts[0]

    def test_speaking_order_configurable(self, cohort):
        agent_a, agent_b = scripted_pair()
        reversed_config = DebateConfig(rounds=1, speaking_order=("opponent", "A"))
        transcript = run_debate(cohort, agent_a, agent_b, reversed_config)
        assert transcript.history.proposals[0].agent == "B"
        assert transcript.history.proposals[1].agent == "A"

    def test_retrieval_logs_recorded_per_call(self, cohort):
        from triage_arena.retrieval import (
            DocumentChunk,
            HashingEmbedder,
            index_corpus,
            retrieve,
        )

        chunks = [
            DocumentChunk(doc_id=f"d{i}", page_hint=i * 3, text=f"fair allocation {i}", ordinal=i)
            for i in range(8)
        ]
        embedder = HashingEmbedder()
        index = index_corpus(chunks, embedder)

        def retriever(framework, round_t):
            return retrieve(index, f"{framework} round {round_t}", embedder, k=4)

        agent_a, agent_b = scripted_pair()
        retrieval_profile, system_a = build_profile(
            ProfileKind.ALIGNED, Framework.RAWLSIAN, retrieval_enabled=True
        )
        spec_a = AgentSpec("A", agent_a.backend, retrieval_profile, system_a)
        transcript = run_debate(
            cohort, spec_a, agent_b, DebateConfig(rounds=2), retriever=retriever
        )
        logs = transcript.history.retrieval_logs
        assert len(logs) == 2  # one per round for the retrieval-enabled agent
        for log in logs:
            assert log["agent"] == "A"
            assert log["k"] == 4
            assert len(log["pages"]) == 4
            assert "Rawlsian" in log["query"]

    def test_transcript_json_round_trip(self, cohort):
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=2))
        obj = transcript_to_json(transcript)
        restored = transcript_from_json(obj)
        assert canonical_json(transcript_to_json(restored)) == canonical_json(obj)


class TestJointAndEmergence:
    def test_equal_finals_give_zero_delta(self, cohort, metric_config):
        agent_a, agent_b = scripted_pair()
        shared = "\n".join(
            f"Patient {i}: [0, 0, 2, 0, 2, 0]" for i in range(1, cohort.n + 1)
        )
        spec_a = AgentSpec(label="A", backend=replay_agent([shared]), profile=agent_a.profile)
        spec_b = AgentSpec(label="B", backend=replay_agent([shared]), profile=agent_b.profile)
        transcript = run_debate(cohort, spec_a, spec_b, DebateConfig(rounds=1))
        joint, note = default_joint_allocation(
            transcript.final_allocations["A"],
            transcript.final_allocations["B"],
            cohort.capacity,
        )
        assert "converged" in note
        for metric in METRIC_NAMES:
            delta = emergence_delta(metric, transcript, joint, metric_config)
            assert delta.value == pytest.approx(0.0, abs=1e-12)

    def test_mean_joint_rescaled_to_capacity(self):
        cap = capacity_for_variant("tight")
        a_rows = [[0.0] * 6 for _ in range(8)]
        b_rows = [[0.0] * 6 for _ in range(8)]
        a_rows[0][2] = 50.0   # MedA over the 45 cap
        b_rows[1][2] = 50.0
        joint, note = default_joint_allocation(
            Allocation(tuple(map(tuple, a_rows))),
            Allocation(tuple(map(tuple, b_rows))),
            cap,
        )
        from triage_arena.model import column_totals, validate_allocation

        assert validate_allocation(joint, cap).feasible
        assert "rescaled" in note
        assert column_totals(joint)[2] == pytest.approx(45.0)

    def test_hand_formula_on_random_instances(self, cohort, metric_config):
        rng = np.random.Generator(np.random.Philox(10))
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=1))
        for _ in range(10):
            joint = random_allocation(rng, n=cohort.n)
            for metric in METRIC_NAMES:
                delta = emergence_delta(metric, transcript, joint, metric_config)
                m_joint = metric_report(cohort, joint, metric_config).value(metric)
                finals = [
                    metric_report(cohort, alloc, metric_config).value(metric)
                    for alloc in transcript.final_allocations.values()
                ]
                expected = m_joint - sum(finals) / 2
                if metric in ("variance", "gini"):
                    expected = -expected
                assert delta.value == pytest.approx(expected, abs=1e-12)

    def test_infeasible_joint_flagged(self, cohort, metric_config):
        agent_a, agent_b = scripted_pair()
        transcript = run_debate(cohort, agent_a, agent_b, DebateConfig(rounds=1))
        huge = Allocation(tuple(tuple(99.0 for _ in range(6)) for _ in range(cohort.n)))
        delta = emergence_delta("esg", transcript, huge, metric_config)
        assert not delta.joint_feasible
        assert delta.note
