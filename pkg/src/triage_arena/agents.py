"""Agent backends and profile assembly.

Three backend families:

* scripted agents, deterministic allocation strategies used for all
  verifiable experiments and tests;
* a replay backend that feeds stored texts back round by round, used to
  reproduce reference debates exactly;
* an HTTP chat client speaking the common chat-completions JSON wire
  format, for users running the experiment against real language models.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from importlib import resources as _resources
from pathlib import Path
from typing import Callable

import requests

logger = logging.getLogger(__name__)

from .arena import GenerationContext, InteractionHistory, render_allocation
from .model import (
    AgentProfile,
    Allocation,
    BiasSource,
    Cohort,
    Framework,
    Patient,
    ProfileKind,
    Resource,
)

__all__ = [
    "scripted_utilitarian",
    "scripted_rawlsian",
    "scripted_biased",
    "default_disfavored",
    "ScriptedBackend",
    "ReplayExhaustedError",
    "ReplayBackend",
    "replay_agent",
    "ChatBackendConfig",
    "ChatTransportError",
    "chat_generate",
    "ChatBackend",
    "framework_preamble",
    "baseline_preamble",
    "load_adversarial_prompt",
    "build_profile",
]

# Resources granted as whole units versus continuously divisible ones.
_BINARY = (Resource.ICU, Resource.VENT, Resource.SURGERY)
_DIVISIBLE = (Resource.MED_A, Resource.MED_B, Resource.NURSING)


def _render_with_justification(alloc: Allocation, justification: str) -> str:
    return render_allocation(alloc) + f"\nJustification: {justification}"


def scripted_utilitarian(cohort: Cohort, history: InteractionHistory) -> str:
    """Greedy survival-maximizing strategy; always feasible.

    Unit resources go to the highest-survival patients needing them (ties
    broken by lower patient id); divisible resources are split among
    needers in proportion to survival probability, equally when all
    needers have zero survival probability.
    """
    n = cohort.n
    rows = [[0.0] * 6 for _ in range(n)]
    for resource in _BINARY:
        needers = sorted(
            (p for p in cohort.patients if resource in p.needs),
            key=lambda p: (-p.survival_prob, p.id),
        )
        supply = int(cohort.capacity.supply[resource.value])
        for p in needers[:supply]:
            rows[p.id - 1][resource.value] = 1.0
    for resource in _DIVISIBLE:
        needers = [p for p in cohort.patients if resource in p.needs]
        if not needers:
            continue
        supply = cohort.capacity.supply[resource.value]
        total_p = sum(p.survival_prob for p in needers)
        for p in needers:
            share = p.survival_prob / total_p if total_p > 0 else 1.0 / len(needers)
            rows[p.id - 1][resource.value] = supply * share
    alloc = Allocation(tuple(tuple(r) for r in rows))
    return _render_with_justification(
        alloc,
        "Resources are directed to the patients with the best survival "
        "outlook among those who clinically need them, to maximize total "
        "expected benefit.",
    )


def scripted_rawlsian(cohort: Cohort, history: InteractionHistory) -> str:
    """Breadth-first strategy that repeatedly serves the worst-off patient.

    Each step grants one unit of one unmet need to the patient with the
    lowest current satisfaction (ties by patient id). Among that
    patient's grantable needs it spends the most abundant resource
    first (ties by resource index), which keeps scarce units in reserve
    for whoever ends up worst off. Stops when no patient has an unmet
    need with remaining capacity.
    """
    n = cohort.n
    rows = [[0.0] * 6 for _ in range(n)]
    remaining = list(cohort.capacity.supply)

    def satisfaction(p: Patient) -> float:
        return sum(1 for r in p.needs if rows[p.id - 1][r.value] > 0) / len(p.needs)

    def grantable(p: Patient):
        # Resource.ICU is the zero member, so never truth-test the result
        options = [
            r
            for r in sorted(p.needs)
            if rows[p.id - 1][r.value] == 0 and remaining[r.value] >= 1.0
        ]
        if not options:
            return None
        return max(options, key=lambda r: (remaining[r.value], -r.value))

    while True:
        candidates = [
            (satisfaction(p), p.id, p)
            for p in cohort.patients
            if grantable(p) is not None
        ]
        if not candidates:
            break
        _, _, patient = min(candidates, key=lambda t: (t[0], t[1]))
        resource = grantable(patient)
        rows[patient.id - 1][resource.value] = 1.0
        remaining[resource.value] -= 1.0
    alloc = Allocation(tuple(tuple(r) for r in rows))
    return _render_with_justification(
        alloc,
        "Every grant goes to whichever patient currently has the smallest "
        "share of their needs met, so the worst-off position is raised "
        "before anyone else is improved.",
    )


def default_disfavored(patient: Patient) -> bool:
    """Shipped stand-in predicate for the adversarially biased strategy:
    disfavors non-citizens and the lowest socioeconomic strata."""
    return patient.citizenship != "Citizen" or patient.ses in ("Refugee", "Low")


def scripted_biased(
    cohort: Cohort,
    history: InteractionHistory,
    disfavored: Callable[[Patient], bool] = default_disfavored,
) -> str:
    """Demographically exclusionary strategy: zeroes every resource for
    disfavored patients and allocates greedily among the rest. Feasible
    by construction."""
    n = cohort.n
    rows = [[0.0] * 6 for _ in range(n)]
    favored = [p for p in cohort.patients if not disfavored(p)]
    for resource in _BINARY:
        needers = sorted(
            (p for p in favored if resource in p.needs),
            key=lambda p: (-p.survival_prob, p.id),
        )
        supply = int(cohort.capacity.supply[resource.value])
        for p in needers[:supply]:
            rows[p.id - 1][resource.value] = 1.0
    for resource in _DIVISIBLE:
        needers = [p for p in favored if resource in p.needs]
        if not needers:
            continue
        supply = cohort.capacity.supply[resource.value]
        total_p = sum(p.survival_prob for p in needers)
        for p in needers:
            share = p.survival_prob / total_p if total_p > 0 else 1.0 / len(needers)
            rows[p.id - 1][resource.value] = supply * share
    alloc = Allocation(tuple(tuple(r) for r in rows))
    return _render_with_justification(
        alloc,
        "Resources are reserved for the preferred demographic groups; the "
        "remaining patients receive nothing.",
    )


_SCRIPTED_STRATEGIES: dict[str, Callable[[Cohort, InteractionHistory], str]] = {
    "utilitarian": scripted_utilitarian,
    "rawlsian": scripted_rawlsian,
    "biased": scripted_biased,
}


class ScriptedBackend:
    """Deterministic backend around one scripted strategy."""

    deterministic = True

    def __init__(self, strategy: str, disfavored: Callable[[Patient], bool] | None = None):
        if strategy not in _SCRIPTED_STRATEGIES:
            raise ValueError(
                f"unknown scripted strategy {strategy!r}; "
                f"expected one of {sorted(_SCRIPTED_STRATEGIES)}"
            )
        self.strategy = strategy
        self.name = f"scripted:{strategy}"
        self._disfavored = disfavored

    def generate(self, prompt: str, ctx: GenerationContext) -> str:
        if self.strategy == "biased":
            predicate = self._disfavored or default_disfavored
            return scripted_biased(ctx.cohort, ctx.history, predicate)
        return _SCRIPTED_STRATEGIES[self.strategy](ctx.cohort, ctx.history)


class ReplayExhaustedError(RuntimeError):
    pass


class ReplayBackend:
    """Returns the t-th stored text on the t-th call, then errors."""

    deterministic = True

    def __init__(self, texts: list[str], name: str = "replay"):
        self.texts = list(texts)
        self.name = name
        self.calls = 0

    def generate(self, prompt: str, ctx: GenerationContext) -> str:
        if self.calls >= len(self.texts):
            raise ReplayExhaustedError(
                f"{self.name}: call {self.calls + 1} but only "
                f"{len(self.texts)} stored texts"
            )
        text = self.texts[self.calls]
        self.calls += 1
        return text


def replay_agent(transcript_texts: list[str], name: str = "replay") -> ReplayBackend:
    return ReplayBackend(transcript_texts, name=name)


@dataclass(frozen=True)
class ChatBackendConfig:
    endpoint: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 2048
    timeout: float = 120.0
    retries: int = 2
    backoff: float = 0.5

    def __post_init__(self):
        if not (self.endpoint.startswith("http://") or self.endpoint.startswith("https://")):
            raise ValueError(f"endpoint must be an http(s) URL, got {self.endpoint!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")


class ChatTransportError(RuntimeError):
    pass


def chat_generate(config: ChatBackendConfig, prompt: str, session=None) -> str:
    """One chat-completion round trip.

    Sends a messages array with the prompt as the single (and final) user
    message, byte-identical to the caller's prompt, and returns
    choices[0].message.content. Retries transport failures and 5xx
    responses up to the retry budget.
    """
    session = session or requests.Session()
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    last_error: Exception | None = None
    for attempt in range(config.retries + 1):
        started = time.monotonic()
        try:
            resp = session.post(config.endpoint, json=payload, timeout=config.timeout)
            latency = time.monotonic() - started
            if resp.status_code >= 500:
                last_error = ChatTransportError(
                    f"server error {resp.status_code} after {latency:.2f}s"
                )
            elif resp.status_code != 200:
                raise ChatTransportError(f"chat request failed: HTTP {resp.status_code}")
            else:
                try:
                    body = resp.json()
                    content = body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise ChatTransportError(f"malformed chat response body: {exc}") from exc
                logger.debug(
                    "chat completion id=%s model=%s latency=%.3fs attempt=%d",
                    body.get("id", "-"), config.model, latency, attempt + 1,
                )
                return content
        except requests.RequestException as exc:
            last_error = ChatTransportError(f"transport failure: {exc}")
        if attempt < config.retries and config.backoff:
            time.sleep(config.backoff * (attempt + 1))
    raise last_error  # type: ignore[misc]


class ChatBackend:
    """HTTP chat backend; not deterministic and says so."""

    deterministic = False

    def __init__(self, config: ChatBackendConfig):
        self.config = config
        self.name = f"chat:{config.model}"
        self._session = requests.Session()

    def generate(self, prompt: str, ctx: GenerationContext) -> str:
        return chat_generate(self.config, prompt, session=self._session)


_PREAMBLE_FILES = {
    Framework.UTILITARIAN: "utilitarian.txt",
    Framework.EGALITARIAN: "egalitarian.txt",
    Framework.RAWLSIAN: "rawlsian.txt",
    Framework.LIBERTARIAN: "libertarian.txt",
    Framework.PRIORITARIAN: "prioritarian.txt",
    Framework.CARE_ETHICS: "care_ethics.txt",
}


def _read_data(relpath: str) -> str:
    return (
        _resources.files("triage_arena").joinpath(relpath).read_text(encoding="utf-8")
    )


def framework_preamble(framework: Framework) -> str:
    return _read_data(f"data/preambles/{_PREAMBLE_FILES[framework]}")


def baseline_preamble() -> str:
    return _read_data("data/preambles/baseline.txt")


def load_adversarial_prompt(path: str | Path) -> str:
    """Load the quarantined adversarial preamble, byte for byte.

    The path must be passed explicitly; nothing in the harness loads it
    by default.
    """
    return Path(path).read_bytes().decode("utf-8")


def build_profile(
    kind: ProfileKind,
    framework: Framework | None = None,
    retrieval_enabled: bool = False,
    bias_source: BiasSource = BiasSource.NONE,
    adversarial_path: str | Path | None = None,
) -> tuple[AgentProfile, str]:
    """Assemble a profile and its system preamble text.

    Aligned profiles get their framework's preamble, baseline profiles the
    neutral text, and adversarially biased profiles the quarantined prompt
    loaded verbatim from the explicitly supplied path.
    """
    profile = AgentProfile(
        kind=kind,
        framework=framework,
        retrieval_enabled=retrieval_enabled,
        bias_source=bias_source,
    )
    if kind is ProfileKind.ALIGNED:
        return profile, framework_preamble(framework)
    if kind is ProfileKind.BASELINE:
        return profile, baseline_preamble()
    if bias_source is BiasSource.ADVERSARIAL_PROMPT:
        if adversarial_path is None:
            raise ValueError(
                "an adversarially prompted profile requires an explicit "
                "adversarial prompt file path"
            )
        return profile, load_adversarial_prompt(adversarial_path)
    # biased_corpus: conditioning comes from retrieval over a biased corpus
    return profile, baseline_preamble()
