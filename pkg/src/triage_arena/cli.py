"""Command-line surface.

Subcommands: gen-cohorts, run, eval, stats, verify-cake,
check-nondegeneracy, report, validate. Every command is deterministic
given its inputs and seeds (the chat backend excepted, and labelled as
nondeterministic in its manifest), never mutates its inputs, and writes
outputs only under --out. Exit codes: 0 success, 1 verification or
assertion failure, 2 usage or config error, 3 IO or transport error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from importlib import resources as _resources
from pathlib import Path

import requests

from . import agents as agents_mod
from .arena import (
    AgentSpec,
    DebateConfig,
    default_joint_allocation,
    emergence_delta,
    run_debate,
    transcript_from_json,
    transcript_to_json,
)
from .cohortgen import SamplerConfig, derive_seed, generate_cohort, load_slots
from .metrics import (
    METRIC_DIRECTIONS,
    METRIC_NAMES,
    MetricConfig,
    metric_report,
)
from .model import (
    BiasSource,
    Cohort,
    Framework,
    ProfileKind,
    canonical_json,
)
from .oracle import (
    CakeParams,
    EnumerationBoundExceeded,
    cake_functionals,
    cake_space,
    check_nondegeneracy,
    verify_cake_claims,
)
from .persistence import (
    RunManifest,
    build_manifest,
    sha256_bytes,
    validate_schemas,
    write_json,
)
from .retrieval import (
    HashingEmbedder,
    RemoteEmbedder,
    load_corpus_dir,
    index_corpus,
    retrieve,
)
from .stats import (
    DEFAULT_ALPHA,
    PairedSample,
    cell_seed,
    compare_cell,
    results_to_csv,
    results_to_markdown,
)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_IO = 3

_SCRIPTED_ALIGNED = {
    Framework.UTILITARIAN: "utilitarian",
    Framework.RAWLSIAN: "rawlsian",
}


class UsageError(ValueError):
    pass


def _load_cohorts(directory: Path) -> list[Cohort]:
    files = sorted(directory.glob("cohort_*.json"))
    if not files:
        raise UsageError(f"no cohort_*.json files under {directory}")
    return [Cohort.from_json(json.loads(f.read_text(encoding="utf-8"))) for f in files]


def cmd_gen_cohorts(args) -> int:
    if args.batch < 1:
        raise UsageError("--batch must be at least 1")
    slots = load_slots(args.slots_file) if args.slots_file else None
    kwargs = dict(
        master_seed=args.seed,
        batch_size=args.batch,
        capacity_variant=args.variant,
    )
    if slots is not None:
        kwargs["slots"] = slots
    config = SamplerConfig(**kwargs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for b in range(config.batch_size):
        seed = derive_seed(config.master_seed, b)
        cohort = generate_cohort(seed, config, cohort_id=b)
        path = out / f"cohort_{b:04d}.json"
        write_json(path, cohort.to_json())
        files.append(path)
    manifest = build_manifest(
        run_id=f"gen_seed{args.seed}_batch{args.batch}",
        base_dir=out,
        files=files,
        config={
            "command": "gen-cohorts",
            "seed": args.seed,
            "batch": args.batch,
            "variant": args.variant,
            "seeds": [derive_seed(args.seed, b) for b in range(args.batch)],
        },
    )
    write_json(out / "manifest.json", manifest.to_json())
    print(f"wrote {len(files)} cohorts and manifest.json under {out}")
    return EXIT_OK


def _chat_config_from(args) -> agents_mod.ChatBackendConfig:
    endpoint = args.endpoint or os.environ.get("TRIAGE_ARENA_CHAT_ENDPOINT")
    model = args.model or os.environ.get("TRIAGE_ARENA_CHAT_MODEL")
    if not endpoint or not model:
        raise UsageError(
            "chat backend needs --endpoint and --model (or the "
            "TRIAGE_ARENA_CHAT_ENDPOINT / TRIAGE_ARENA_CHAT_MODEL variables)"
        )
    return agents_mod.ChatBackendConfig(
        endpoint=endpoint, model=model, temperature=args.temperature
    )


def _make_retriever(args, k: int = 5):
    """Build the per-round retrieval hook from a corpus directory."""
    if not args.corpus_dir:
        return None
    chunks = load_corpus_dir(args.corpus_dir)
    embed_endpoint = os.environ.get("TRIAGE_ARENA_EMBED_ENDPOINT")
    embed_model = os.environ.get("TRIAGE_ARENA_EMBED_MODEL")
    if embed_endpoint and embed_model:
        embedder = RemoteEmbedder(endpoint=embed_endpoint, model=embed_model)
    else:
        embedder = HashingEmbedder()
    index = index_corpus(chunks, embedder)
    queries = json.loads(
        _resources.files("triage_arena")
        .joinpath("data/queries.json")
        .read_text(encoding="utf-8")
    )
    keywords = queries["round_keywords"]

    def retriever(framework: str, round_t: int):
        template = keywords[min(round_t - 1, len(keywords) - 1)]
        return retrieve(index, f"{framework} {template}", embedder, k=k)

    return retriever


def _default_adversarial_path() -> Path:
    return Path(
        str(
            _resources.files("triage_arena").joinpath(
                "data/adversarial/biased_prompt.txt"
            )
        )
    )


def _build_agents(args, framework: Framework):
    opponent_kind = args.opponent
    if opponent_kind == "biased" and not args.allow_adversarial:
        raise UsageError(
            "a biased opponent deliberately produces discriminatory "
            "allocations for moderation experiments; pass --allow-adversarial "
            "to acknowledge this"
        )
    retrieval_enabled = bool(args.corpus_dir)
    if args.backend == "scripted":
        strategy = _SCRIPTED_ALIGNED.get(framework)
        if strategy is None:
            raise UsageError(
                f"no scripted strategy implements the {framework.value} "
                f"framework; use --backend chat for that alignment "
                f"(scripted supports: "
                f"{', '.join(f.value for f in _SCRIPTED_ALIGNED)})"
            )
        backend_a = agents_mod.ScriptedBackend(strategy)
        backend_b = agents_mod.ScriptedBackend(
            "biased" if opponent_kind == "biased" else "utilitarian"
        )
    elif args.backend == "chat":
        chat_config = _chat_config_from(args)
        backend_a = agents_mod.ChatBackend(chat_config)
        backend_b = agents_mod.ChatBackend(chat_config)
    elif args.backend == "replay":
        # placeholders carrying the right names; cmd_run swaps in a fresh
        # replay backend per debate with the stored texts
        backend_a = agents_mod.replay_agent([], "replay:A")
        backend_b = agents_mod.replay_agent([], "replay:B")
    else:
        raise UsageError(f"unsupported backend {args.backend!r}")

    profile_a, system_a = agents_mod.build_profile(
        ProfileKind.ALIGNED, framework, retrieval_enabled=retrieval_enabled
    )
    if opponent_kind == "biased":
        adversarial = Path(args.adversarial_file) if args.adversarial_file else _default_adversarial_path()
        profile_b, system_b = agents_mod.build_profile(
            ProfileKind.BIASED,
            bias_source=BiasSource.ADVERSARIAL_PROMPT,
            adversarial_path=adversarial,
        )
        label_b = "C"
    else:
        profile_b, system_b = agents_mod.build_profile(ProfileKind.BASELINE)
        label_b = "B"
    agent_a = AgentSpec(label="A", backend=backend_a, profile=profile_a, system_text=system_a)
    agent_b = AgentSpec(label=label_b, backend=backend_b, profile=profile_b, system_text=system_b)
    return agent_a, agent_b


def _transcript_name(framework: str, opponent: str, cohort_id: int) -> str:
    return f"transcript_{framework.lower()}_{opponent.lower()}_{cohort_id:04d}.json"


def _run_one_debate(cohort, agent_a, agent_b, config, retriever, out, name, config_hash):
    transcript = run_debate(cohort, agent_a, agent_b, config, retriever=retriever)
    obj = transcript_to_json(transcript)
    obj["config_hash"] = config_hash
    write_json(out / name, obj)
    return name


def cmd_run(args) -> int:
    try:
        framework = Framework(args.framework)
    except ValueError:
        raise UsageError(
            f"unknown framework {args.framework!r}; expected one of "
            f"{', '.join(f.value for f in Framework)}"
        ) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.backend == "replay":
        from .persistence import load_reference_fixtures

        fixtures = load_reference_fixtures()
        cohorts = [fixtures.cohort]
    else:
        cohorts = _load_cohorts(Path(args.cohorts))

    agent_a, agent_b = _build_agents(args, framework)
    opponent_kind = "Biased" if args.opponent == "biased" else "Baseline"
    config = DebateConfig(
        rounds=args.rounds,
        framework=framework.value,
        opponent_kind=opponent_kind,
    )
    retriever = _make_retriever(args)

    executed, skipped, failures = 0, 0, []
    done_files = []
    tasks = []
    for cohort in cohorts:
        name = _transcript_name(framework.value, args.opponent, cohort.cohort_id)
        config_hash = sha256_bytes(
            canonical_json(
                {
                    "config": config.to_json(),
                    "cohort": cohort.to_json(),
                    "backends": {
                        "A": agent_a.backend.name,
                        agent_b.label: agent_b.backend.name,
                    },
                }
            ).encode("utf-8")
        )
        target = out / name
        if target.exists():
            try:
                existing = json.loads(target.read_text(encoding="utf-8"))
                if existing.get("config_hash") == config_hash:
                    skipped += 1
                    done_files.append(target)
                    continue
            except (OSError, json.JSONDecodeError):
                pass
        if args.backend == "replay":
            from .persistence import load_reference_fixtures

            fixtures = load_reference_fixtures()
            agent_a_r = AgentSpec(
                label="A",
                backend=agents_mod.replay_agent(fixtures.round_texts["A"], "replay:A"),
                profile=agent_a.profile,
                system_text=agent_a.system_text,
            )
            agent_b_r = AgentSpec(
                label=agent_b.label,
                backend=agents_mod.replay_agent(fixtures.round_texts["B"], "replay:B"),
                profile=agent_b.profile,
                system_text=agent_b.system_text,
            )
            tasks.append((cohort, agent_a_r, agent_b_r, name, config_hash))
        else:
            tasks.append((cohort, agent_a, agent_b, name, config_hash))

    def execute(task):
        cohort, a_spec, b_spec, name, config_hash = task
        return _run_one_debate(
            cohort, a_spec, b_spec, config, retriever, out, name, config_hash
        )

    if args.jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(execute, t): t for t in tasks}
            for future in concurrent.futures.as_completed(futures):
                task = futures[future]
                try:
                    done_files.append(out / future.result())
                    executed += 1
                except Exception as exc:
                    failures.append(f"{task[3]}: {exc}")
    else:
        for task in tasks:
            try:
                done_files.append(out / execute(task))
                executed += 1
            except Exception as exc:
                failures.append(f"{task[3]}: {exc}")

    deterministic = bool(getattr(agent_a.backend, "deterministic", False))
    timestamp = None
    if not deterministic:
        import datetime

        timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = build_manifest(
        run_id=f"run_{framework.value.lower()}_{args.opponent}",
        base_dir=out,
        files=done_files,
        config={
            "command": "run",
            "framework": framework.value,
            "opponent": args.opponent,
            "backend": args.backend,
            "rounds": args.rounds,
            "deterministic": deterministic,
        },
        timestamp=timestamp,
    )
    write_json(out / "manifest.json", manifest.to_json())
    print(
        f"executed {executed} debates, skipped {skipped} existing, "
        f"{len(failures)} failures"
    )
    for failure in failures:
        print(f"  failed: {failure}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    transcripts_dir = Path(args.transcripts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metric_config = MetricConfig.default()
    files = sorted(transcripts_dir.glob("transcript_*.json"))
    if not files:
        raise UsageError(f"no transcript_*.json files under {transcripts_dir}")
    corrupt = []
    written = []
    for file in files:
        try:
            obj = json.loads(file.read_text(encoding="utf-8"))
            transcript = transcript_from_json(obj)
        except Exception as exc:
            corrupt.append(f"{file.name}: {exc}")
            continue
        rounds = []
        for prop in transcript.history.proposals:
            report = metric_report(transcript.cohort, prop.allocation, metric_config)
            rounds.append(
                {
                    "round": prop.round,
                    "agent": prop.agent,
                    "feasible": report.feasible,
                    "metrics": report.to_json(),
                }
            )
        finals = {
            label: metric_report(transcript.cohort, alloc, metric_config).to_json()
            for label, alloc in transcript.final_allocations.items()
        }
        eval_obj = {
            "schema_version": 1,
            "kind": "eval",
            "source_transcript": file.name,
            "cohort_id": transcript.cohort.cohort_id,
            "framework": transcript.config.framework,
            "opponent_kind": transcript.config.opponent_kind,
            "completed": transcript.completed,
            "rounds": rounds,
            "finals": finals,
        }
        target = out / file.name.replace("transcript_", "eval_")
        write_json(target, eval_obj)
        written.append(target)
    print(f"evaluated {len(written)} transcripts, {len(corrupt)} corrupt")
    for item in corrupt:
        print(f"  corrupt: {item}", file=sys.stderr)
    return EXIT_OK


def _svg_bar_chart(metric: str, rows: list[dict]) -> str:
    """Tiny hand-rolled grouped bar chart with CI whiskers."""
    width, height, margin = 640, 360, 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    values = []
    for r in rows:
        values.extend([r["ci_a"][1], r["ci_b"][1], r["mean_a"], r["mean_b"]])
    top = max(values + [1e-9]) * 1.15
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">'
        f"{metric} ({METRIC_DIRECTIONS[metric]} is better)</text>",
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    group_w = plot_w / max(len(rows), 1)
    bar_w = group_w * 0.3

    def y_of(v: float) -> float:
        return height - margin - (max(v, 0.0) / top) * plot_h

    for i, r in enumerate(rows):
        x0 = margin + i * group_w + group_w * 0.15
        for offset, (mean, ci, color) in enumerate(
            [(r["mean_a"], r["ci_a"], "#4878a8"), (r["mean_b"], r["ci_b"], "#c44e52")]
        ):
            x = x0 + offset * bar_w * 1.2
            y = y_of(mean)
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                f'height="{height - margin - y:.1f}" fill="{color}"/>'
            )
            cx = x + bar_w / 2
            parts.append(
                f'<line x1="{cx:.1f}" y1="{y_of(ci[0]):.1f}" x2="{cx:.1f}" '
                f'y2="{y_of(ci[1]):.1f}" stroke="black" stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{x0 + bar_w:.1f}" y="{height - margin + 16}" '
            f'text-anchor="middle" font-size="10">{r["framework"]}</text>'
        )
    parts.append(
        f'<text x="{margin}" y="{margin - 8}" font-size="10">0 to {top:.3g}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_stats(args) -> int:
    eval_dir = Path(args.eval_dir)
    files = sorted(eval_dir.glob("eval_*.json"))
    if not files:
        raise UsageError(f"no eval_*.json files under {eval_dir}")
    evals = [json.loads(f.read_text(encoding="utf-8")) for f in files]
    groups: dict[tuple[str, str], list[dict]] = {}
    for e in evals:
        groups.setdefault((e["framework"], e["opponent_kind"]), []).append(e)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cells = []
    for (framework, opponent), members in sorted(groups.items()):
        for metric in METRIC_NAMES:
            cells.append((framework, opponent, metric, members))

    def compute(cell):
        framework, opponent, metric, members = cell
        ids, a_vals, b_vals = [], [], []
        for e in sorted(members, key=lambda e: e["cohort_id"]):
            if not e.get("completed", True):
                continue
            finals = e["finals"]
            label_b = next(l for l in sorted(finals) if l != "A")
            rep_a, rep_b = finals["A"], finals[label_b]
            if not (rep_a["feasible"] and rep_b["feasible"]):
                continue
            ids.append(e["cohort_id"])
            a_vals.append(rep_a[metric])
            b_vals.append(rep_b[metric])
        sample = PairedSample(tuple(ids), tuple(a_vals), tuple(b_vals))
        return compare_cell(
            sample,
            framework=framework,
            metric=metric,
            alpha=args.alpha,
            bootstrap_seed=cell_seed(args.seed, framework, metric),
            normality_pretest=args.normality_pretest,
        )

    if args.jobs > 1 and len(cells) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(compute, cells))
    else:
        reports = [compute(c) for c in cells]

    write_json(
        out / "comparison.json",
        {
            "schema_version": 1,
            "kind": "comparison",
            "alpha": args.alpha,
            "bootstrap_seed": args.seed,
            "resamples": 2000,
            "reports": [r.to_json() for r in reports],
        },
    )
    (out / "results.csv").write_text(results_to_csv(reports), encoding="utf-8")
    (out / "results.md").write_text(results_to_markdown(reports), encoding="utf-8")
    charts = out / "charts"
    charts.mkdir(exist_ok=True)
    for metric in METRIC_NAMES:
        rows = [
            {
                "framework": r.framework,
                "mean_a": r.mean_a,
                "mean_b": r.mean_b,
                "ci_a": r.ci_a,
                "ci_b": r.ci_b,
            }
            for r in reports
            if r.metric == metric and r.n > 0
        ]
        if rows:
            (charts / f"{metric}.svg").write_text(
                _svg_bar_chart(metric, rows), encoding="utf-8"
            )
    print(f"wrote {len(reports)} comparison cells under {out}")
    return EXIT_OK


def cmd_verify_cake(args) -> int:
    if args.params_file:
        params = CakeParams.from_json(
            json.loads(Path(args.params_file).read_text(encoding="utf-8"))
        )
    else:
        params = CakeParams()
    report = verify_cake_claims(params, step=args.step)
    print(report.label)
    for claim in report.claims:
        status = "PASS" if claim.passed else "FAIL"
        print(f"{status} {claim.name}: {claim.detail}")
        if claim.witness is not None:
            print(f"     witness: {tuple(round(x, 6) for x in claim.witness)}")
    if not report.recheck_agrees:
        print(f"warning: verdicts differ at tolerance {report.recheck_tol}")
    return EXIT_OK if report.all_passed else EXIT_VERIFICATION


def cmd_check_nondegeneracy(args) -> int:
    if args.params_file:
        params = CakeParams.from_json(
            json.loads(Path(args.params_file).read_text(encoding="utf-8"))
        )
    else:
        params = CakeParams()
    include = tuple(name.strip() for name in args.functionals.split(","))
    prior_weights = None
    if "prior" in include:
        if args.prior_weights:
            prior_weights = [float(x) for x in args.prior_weights.split(",")]
        else:
            prior_weights = [1.0] * 6
    functionals = cake_functionals(params, prior_weights, include)
    space = cake_space(args.step, enumeration_bound=args.bound)
    report = check_nondegeneracy(functionals, space, tol=args.tol)
    print(report.label)
    for name, size in sorted(report.argmax_sizes.items()):
        print(f"  argmax[{name}]: {size} grid point(s)")
    if report.degenerate:
        print(f"  shared maximizer: {report.witness.rows}")
    if args.out:
        write_json(Path(args.out), report.to_json())
    return EXIT_VERIFICATION if report.degenerate else EXIT_OK


def cmd_report(args) -> int:
    manifest_path = Path(args.run_manifest)
    base = manifest_path.parent
    manifest = RunManifest.from_json(
        json.loads(manifest_path.read_text(encoding="utf-8"))
    )
    missing = manifest.verify(base)
    transcripts = []
    for rel, _hash in manifest.files:
        path = base / rel
        if path.exists() and rel.startswith("transcript_"):
            try:
                transcripts.append(
                    transcript_from_json(json.loads(path.read_text(encoding="utf-8")))
                )
            except Exception as exc:
                missing.append(f"{rel}: unreadable ({exc})")

    lines = ["# Run report", ""]
    lines.append("## Configuration")
    lines.append("```json")
    lines.append(canonical_json(manifest.config).rstrip())
    lines.append("```")
    lines.append("")
    if missing:
        lines.append("## Missing or invalid inputs")
        lines.extend(f"- {item}" for item in missing)
        lines.append("")
    if transcripts:
        cohorts = {t.cohort.cohort_id: t.cohort for t in transcripts}
        variants = {c.capacity.variant for c in cohorts.values()}
        lines.append("## Cohorts")
        lines.append(
            f"- {len(cohorts)} cohorts, capacity variant(s): {', '.join(sorted(variants))}"
        )
        lines.append("")
        lines.append("## Infeasibility counts per (framework, agent, round)")
        lines.append("| framework | agent | round | infeasible proposals |")
        lines.append("| --- | --- | --- | --- |")
        counts: dict[tuple[str, str, int], int] = {}
        for t in transcripts:
            for prop in t.history.proposals:
                if prop.feasibility is not None and not prop.feasibility.feasible:
                    key = (t.config.framework, prop.agent, prop.round)
                    counts[key] = counts.get(key, 0) + 1
        for (framework, agent, round_t), count in sorted(counts.items()):
            lines.append(f"| {framework} | {agent} | {round_t} | {count} |")
        if not counts:
            lines.append("| (none) | - | - | 0 |")
        lines.append("")
        lines.append("## Final metric summary")
        lines.append("| framework | agent | metric | mean over cohorts |")
        lines.append("| --- | --- | --- | --- |")
        by_fw: dict[str, list] = {}
        for t in transcripts:
            if t.completed:
                by_fw.setdefault(t.config.framework, []).append(t)
        for framework, members in sorted(by_fw.items()):
            labels = sorted({l for t in members for l in t.final_reports})
            for label in labels:
                for metric in METRIC_NAMES:
                    vals = [
                        t.final_reports[label].value(metric)
                        for t in members
                        if label in t.final_reports
                    ]
                    if vals:
                        lines.append(
                            f"| {framework} | {label} | {metric} "
                            f"| {sum(vals) / len(vals):.4f} |"
                        )
        lines.append("")
        lines.append("## Emergence deltas (joint vs mean of finals)")
        lines.append(
            "Joint allocations follow the harness rule: the shared final when "
            "the agents converged, otherwise the elementwise mean rescaled to "
            "capacity. Positive deltas mean the joint improves on the average "
            "final under the metric's direction."
        )
        lines.append("")
        lines.append("| framework | metric | mean delta | joints infeasible |")
        lines.append("| --- | --- | --- | --- |")
        for framework, members in sorted(by_fw.items()):
            for metric in METRIC_NAMES:
                deltas = []
                infeasible = 0
                for t in members:
                    allocs = list(t.final_allocations.values())
                    if len(allocs) != 2:
                        continue
                    joint, _note = default_joint_allocation(
                        allocs[0], allocs[1], t.cohort.capacity
                    )
                    delta = emergence_delta(metric, t, joint)
                    deltas.append(delta.value)
                    if not delta.joint_feasible:
                        infeasible += 1
                if deltas:
                    lines.append(
                        f"| {framework} | {metric} "
                        f"| {sum(deltas) / len(deltas):+.4f} | {infeasible} |"
                    )
        lines.append("")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote report to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    violations = validate_schemas(args.directory)
    if not violations:
        print("all files valid")
        return EXIT_OK
    for v in violations:
        print(f"{v.path}: {v.problem}")
    return EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triage-arena",
        description="Deterministic multi-agent triage debate harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-cohorts", help="generate seeded patient cohorts")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--variant", default="standard", choices=["standard", "tight", "abundant"])
    p.add_argument("--slots-file", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_cohorts)

    p = sub.add_parser("run", help="run debates over a cohort directory")
    p.add_argument("--cohorts", help="directory of cohort_*.json files")
    p.add_argument("--framework", default="Utilitarian")
    p.add_argument("--opponent", default="baseline", choices=["baseline", "biased"])
    p.add_argument("--backend", default="scripted", choices=["scripted", "chat", "replay"])
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-adversarial", action="store_true")
    p.add_argument("--adversarial-file", default=None)
    p.add_argument("--corpus-dir", default=None, help="enable retrieval over this corpus")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--temperature", type=float, default=0.0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="recompute metric reports for transcripts")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="paired statistical comparison over eval files")
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--normality-pretest", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify-cake", help="verify the cake-division claims on a grid")
    p.add_argument("--params-file", default=None)
    p.add_argument("--step", type=float, default=0.01)
    p.set_defaults(func=cmd_verify_cake)

    p = sub.add_parser(
        "check-nondegeneracy", help="intersect welfare argmax sets by full enumeration"
    )
    p.add_argument("--params-file", default=None)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--bound", type=int, default=5_000_000)
    p.add_argument("--functionals", default="util,egal,rawls,prior")
    p.add_argument("--prior-weights", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check_nondegeneracy)

    p = sub.add_parser("report", help="render a Markdown run report")
    p.add_argument("--run-manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="validate a run directory against the schemas")
    p.add_argument("directory")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, EnumerationBoundExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, requests.RequestException, agents_mod.ChatTransportError) as exc:
        print(f"io/transport error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
