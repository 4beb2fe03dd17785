"""Prompt optimization: bootstrapped demos, proposed instructions, budgeted search.

The search never returns something worse than the unoptimized incumbent:
the incumbent is candidate 0, candidates only replace the best on a
strictly better dev score, and ties keep the earlier candidate.  All
sampling comes from one seeded RNG, so a run is reproducible against a
deterministic backend.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .core import DemoPair, render_verdict
from .datastore import DatasetRecord
from .gateway import ChatRequest, Gateway, GatewayError, MockScriptError, ModelSpec
from .harness import compute_metrics
from .imageprep import BASE_LEVEL, load_image, resize
from .pipeline import (
    LAYER_SLOTS,
    SLOT_EVALUATION,
    ItemResult,
    MethodConfig,
    PromptSet,
    run_method,
    save_prompt_set,
)

log = logging.getLogger(__name__)

Evaluator = Callable[[PromptSet], list]
Metric = Callable[[list], float]

TRACE_FORMAT = {"format": "opt-trace", "version": 1}
RESULT_FORMAT = {"format": "opt-result", "version": 1}


def metric_f1(pairs: list) -> float:
    return compute_metrics(pairs).f1


def metric_accuracy(pairs: list) -> float:
    return compute_metrics(pairs).accuracy


def make_fbeta_metric(beta: float) -> Metric:
    """F-beta over (predicted, gold) pairs; beta > 1 weighs recall higher."""

    def fbeta(pairs: list) -> float:
        m = compute_metrics(pairs)
        p, r = m.precision, m.recall
        denom = beta * beta * p + r
        return (1 + beta * beta) * p * r / denom if denom else 0.0

    return fbeta


METRICS: dict[str, Metric] = {
    "f1": metric_f1,
    "accuracy": metric_accuracy,
    "recall_weighted": make_fbeta_metric(2.0),
}


@dataclass(frozen=True)
class OptBudget:
    """Search limits: candidate programs generated, devset scorings spent."""

    max_candidate_programs: int
    max_metric_evaluations: int
    seed: int
    demos_per_slot: int = 4

    def __post_init__(self) -> None:
        if self.max_candidate_programs < 0 or self.max_metric_evaluations < 1:
            raise ValueError("budget needs max_metric_evaluations >= 1 and candidates >= 0")
        if self.demos_per_slot < 0:
            raise ValueError("demos_per_slot must be >= 0")


@dataclass(frozen=True)
class TrialRecord:
    """One evaluated candidate, in evaluation order."""

    index: int
    score: float
    best_so_far: float
    instruction_choice: Mapping[str, int]
    demo_counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "score": self.score,
            "best_so_far": self.best_so_far,
            "instructions": dict(self.instruction_choice),
            "demos": dict(self.demo_counts),
        }


@dataclass(frozen=True)
class SearchResult:
    program: PromptSet
    dev_score: float
    incumbent_score: float
    best_index: int
    trace: tuple[TrialRecord, ...]
    partial: bool
    evaluations_used: int


# ---------------------------------------------------------------- bootstrap

def bootstrap_demos(
    records: Sequence[DatasetRecord],
    method: MethodConfig,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    k: int,
    seed: int,
    level: int = int(BASE_LEVEL),
) -> dict[str, list[DemoPair]]:
    """Harvest few-shot demos from verdict-correct runs over the train set.

    Each labeled record is run once with the unoptimized prompts; only
    traces whose verdict matches gold contribute.  Demos are drawn
    class-balanced (alternating anomalous/normal as far as the traces
    allow) and capped at ``k`` per slot.  No usable traces is not an
    error: the result is empty and a warning is logged.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    keepers: list[tuple[DatasetRecord, ItemResult]] = []
    for record in sorted(records, key=lambda r: r.item_id):
        if record.gold is None:
            continue
        image = load_image(record.image_path, record.item_id)
        prepared = resize(image, level)
        result = run_method(method, prepared.image, spec, gw, prompts, level=level)
        if result.ok and result.verdict is not None:
            if result.verdict.is_anomalous == record.gold.is_anomalous:
                keepers.append((record, result))

    if not keepers or k == 0:
        if not keepers:
            log.warning("bootstrap found no verdict-correct traces; returning no demos")
        return {}

    rng = random.Random(seed)
    anomalous = [t for t in keepers if t[0].gold and t[0].gold.is_anomalous]
    normal = [t for t in keepers if t[0].gold and not t[0].gold.is_anomalous]
    rng.shuffle(anomalous)
    rng.shuffle(normal)
    interleaved: list[tuple[DatasetRecord, ItemResult]] = []
    for pair in zip(anomalous, normal):
        interleaved.extend(pair)
    longer = anomalous if len(anomalous) > len(normal) else normal
    interleaved.extend(longer[min(len(anomalous), len(normal)):])
    chosen = interleaved[:k]

    demos: dict[str, list[DemoPair]] = {}
    for record, result in chosen:
        scene = result.scene
        if scene is not None:
            for layer, slot in LAYER_SLOTS.items():
                demos.setdefault(slot, []).append(
                    DemoPair(f"Traffic scene {record.item_id}", scene.text_for(layer))
                )
            eval_input = scene.aggregate_text
        else:
            eval_input = result.description_text or f"Traffic scene {record.item_id}"
        assert result.verdict is not None
        demos.setdefault(SLOT_EVALUATION, []).append(
            DemoPair(eval_input, render_verdict(result.verdict))
        )
    return demos


# ---------------------------------------------------------------- proposals

_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")

_REWRITE_PROMPT = (
    "Below is an instruction given to a vision-language model as part of a "
    "traffic-scene analysis pipeline. Write {n} alternative phrasings that "
    "keep the same task and output requirements but may reorder, tighten or "
    "re-emphasize the guidance. Reply with a numbered list, one complete "
    "instruction per line.\n\nInstruction:\n{base}"
)


def propose_instructions(
    base_instruction: str,
    n: int,
    spec: ModelSpec,
    gw: Gateway,
) -> list[str]:
    """Ask a model for instruction rewrites.

    Returns the base instruction first, then up to ``n`` unique
    proposals.  A gateway failure degrades to base-only with a warning;
    so does a mock backend that cannot serve the item-free meta request.
    Proposal generation must never sink an optimization run.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    candidates = [base_instruction]
    if n == 0:
        return candidates
    request = ChatRequest(
        model=spec,
        system="",
        user=_REWRITE_PROMPT.format(n=n, base=base_instruction),
    )
    try:
        response = gw.complete(request)
    except (GatewayError, MockScriptError) as exc:
        log.warning("instruction proposal failed (%s); continuing with base only", exc)
        return candidates
    seen = {base_instruction.strip()}
    for line in response.text.splitlines():
        m = _NUMBERED_LINE.match(line)
        if m is None:
            continue
        proposal = m.group(1)
        if proposal.strip() in seen:
            continue
        seen.add(proposal.strip())
        candidates.append(proposal)
        if len(candidates) >= n + 1:
            break
    return candidates


# ---------------------------------------------------------------- search

def _apply_candidate(
    base_set: PromptSet,
    slots: Sequence[str],
    instruction_candidates: Mapping[str, Sequence[str]],
    demo_pool: Mapping[str, Sequence[DemoPair]],
    instruction_choice: Mapping[str, int],
    demo_selection: Mapping[str, tuple[DemoPair, ...]],
) -> PromptSet:
    result = base_set
    for slot in slots:
        template = result.templates[slot]
        idx = instruction_choice.get(slot, 0)
        pool = instruction_candidates.get(slot) or [template.instruction]
        template = template.with_instruction(pool[idx])
        template = template.with_demos(tuple(demo_selection.get(slot, ())))
        result = result.with_template(slot, template)
    return result


def search(
    base_set: PromptSet,
    slots: Sequence[str],
    instruction_candidates: Mapping[str, Sequence[str]],
    demo_pool: Mapping[str, Sequence[DemoPair]],
    evaluator: Evaluator,
    metric: Metric,
    budget: OptBudget,
) -> SearchResult:
    """Budgeted search over instruction choices and demo subsets.

    Candidate 0 is always the unoptimized incumbent (base instructions,
    no demos).  Then: one all-demos candidate, one-factor instruction
    swaps, and random joint samples, until either budget runs out.  The
    best program is tracked with strict improvement only, so equal scores
    keep the lower candidate index and the result is never worse than
    the incumbent.
    """
    slots = tuple(slots)
    for slot in slots:
        if slot not in base_set.templates:
            raise ValueError(f"unknown slot {slot!r}")
        pool = instruction_candidates.get(slot)
        if pool is not None and pool and pool[0] != base_set.templates[slot].instruction:
            raise ValueError(f"slot {slot}: candidate 0 must be the base instruction")

    rng = random.Random(budget.seed)
    evaluations = 0
    trace: list[TrialRecord] = []

    def evaluate_candidate(
        index: int,
        prompt_set: PromptSet,
        instruction_choice: Mapping[str, int],
        demo_counts: Mapping[str, int],
        best: float,
    ) -> float:
        pairs = evaluator(prompt_set)
        score = metric(pairs)
        trace.append(
            TrialRecord(index, score, max(best, score), dict(instruction_choice), dict(demo_counts))
        )
        return score

    incumbent_choice = {slot: 0 for slot in slots}
    incumbent_demos = {slot: 0 for slot in slots}
    incumbent_score = evaluate_candidate(0, base_set, incumbent_choice, incumbent_demos, float("-inf"))
    evaluations += 1
    best_score = incumbent_score
    best_set = base_set
    best_index = 0

    # Planned candidates beyond the incumbent, generated lazily.
    def candidate_stream():
        # Full-demo variant of the incumbent instructions.
        if any(demo_pool.get(slot) for slot in slots):
            selection = {
                slot: tuple(demo_pool.get(slot, ())[: budget.demos_per_slot]) for slot in slots
            }
            yield incumbent_choice, selection
        # One-factor instruction swaps, no demos.
        for slot in slots:
            pool = instruction_candidates.get(slot) or ()
            for idx in range(1, len(pool)):
                choice = dict(incumbent_choice)
                choice[slot] = idx
                yield choice, {s: () for s in slots}
        # Random joint samples.
        while True:
            choice = {}
            selection = {}
            for slot in slots:
                pool = instruction_candidates.get(slot) or (base_set.templates[slot].instruction,)
                choice[slot] = rng.randrange(len(pool))
                demos = list(demo_pool.get(slot, ()))
                cap = min(budget.demos_per_slot, len(demos))
                count = rng.randint(0, cap) if cap else 0
                selection[slot] = tuple(rng.sample(demos, count)) if count else ()
            yield choice, selection

    candidates_generated = 0
    partial = False
    stream = candidate_stream()
    while candidates_generated < budget.max_candidate_programs:
        if evaluations >= budget.max_metric_evaluations:
            partial = True
            break
        choice, selection = next(stream)
        candidates_generated += 1
        candidate = _apply_candidate(
            base_set, slots, instruction_candidates, demo_pool, choice, selection
        )
        demo_counts = {slot: len(selection.get(slot, ())) for slot in slots}
        score = evaluate_candidate(candidates_generated, candidate, choice, demo_counts, best_score)
        evaluations += 1
        if score > best_score:
            best_score = score
            best_set = candidate
            best_index = candidates_generated

    return SearchResult(
        program=best_set,
        dev_score=best_score,
        incumbent_score=incumbent_score,
        best_index=best_index,
        trace=tuple(trace),
        partial=partial,
        evaluations_used=evaluations,
    )


# ---------------------------------------------------------------- persistence

def save_search_result(result: SearchResult, budget: OptBudget, out_dir: str | Path) -> None:
    """Write the winning prompt set plus the full score trace."""
    out = Path(out_dir)
    save_prompt_set(result.program, out)
    with open(out / "trace.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(TRACE_FORMAT) + "\n")
        for record in result.trace:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    summary = {
        **RESULT_FORMAT,
        "dev_score": result.dev_score,
        "incumbent_score": result.incumbent_score,
        "best_index": result.best_index,
        "partial": result.partial,
        "evaluations_used": result.evaluations_used,
        "seed": budget.seed,
        "max_candidate_programs": budget.max_candidate_programs,
        "max_metric_evaluations": budget.max_metric_evaluations,
    }
    (out / "search.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def make_pipeline_evaluator(
    records: Sequence[DatasetRecord],
    method: MethodConfig,
    spec: ModelSpec,
    gw: Gateway,
    level: int = int(BASE_LEVEL),
) -> Evaluator:
    """Dev-set evaluator: run the method, return (predicted, gold) pairs.

    Items that error or fail to parse are left out of the pairs, matching
    how the harness excludes them from metric denominators.
    """
    labeled = [r for r in records if r.gold is not None]
    if len(labeled) != len(records):
        raise ValueError("evaluator needs gold labels on every record")

    def evaluate(prompt_set: PromptSet) -> list:
        pairs = []
        for record in sorted(labeled, key=lambda r: r.item_id):
            image = load_image(record.image_path, record.item_id)
            prepared = resize(image, level)
            result = run_method(method, prepared.image, spec, gw, prompt_set, level=level)
            if result.ok and result.verdict is not None and record.gold is not None:
                pairs.append((result.verdict.is_anomalous, record.gold.is_anomalous))
        return pairs

    return evaluate
