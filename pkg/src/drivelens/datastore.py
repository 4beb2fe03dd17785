"""Dataset storage and derived artifacts.

Everything on disk is line-oriented JSON with a format header on line 1:
the manifest (full record state), the annotation store (auto-label
results, append-only so runs can resume), the correction log (review
decisions, append-only, replayable) and the fine-tune export stream.
State is always reconstructible as manifest plus log replay.
"""

from __future__ import annotations

import json
import logging
import os
import random
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .core import (
    CANONICAL_ORDER,
    AnomalyVerdict,
    GoldLabel,
    LabelProvenance,
    ParseStatus,
    SceneLayer,
    combination_key,
    layers_from_codes,
    render_verdict,
    validate_gold,
)
from .gateway import Gateway, ModelSpec
from .imageprep import BASE_LEVEL, ImageDecodeError, load_image, resize
from .pipeline import ItemResult, MethodConfig, PromptSet, run_method

log = logging.getLogger(__name__)

MANIFEST_FORMAT = {"format": "dataset-manifest", "version": 1}
ANNOTATION_FORMAT = {"format": "annotation-store", "version": 1}
CORRECTION_FORMAT = {"format": "correction-log", "version": 1}
EXPORT_FORMAT_NAME = "finetune-chat"

EXPORT_SINGLE_SHOT = "single_shot"
EXPORT_PIPELINE = "pipeline"

#: Placeholder chat fine-tuning loaders expect in image conversations.
IMAGE_PLACEHOLDER = "<image>"


class ReviewState(Enum):
    UNREVIEWED = "unreviewed"
    ACCEPTED = "accepted"
    CORRECTED = "corrected"


class ManifestError(ValueError):
    """A dataset file failed validation; message names file and line."""


class InsufficientClassError(ValueError):
    """A balanced split asked for more items of a class than exist."""


@dataclass(frozen=True)
class ModelAnnotation:
    """What the auto-labeler stored for one item."""

    model_name: str
    verdict: AnomalyVerdict
    scene_texts: Mapping[SceneLayer, str] | None = None
    description: str | None = None


@dataclass(frozen=True)
class DatasetRecord:
    """One item of a dataset."""

    item_id: str
    image_path: str
    gold: GoldLabel | None = None
    annotation: ModelAnnotation | None = None
    review_state: ReviewState = ReviewState.UNREVIEWED
    error: str | None = None

    def __post_init__(self) -> None:
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if not self.image_path:
            raise ValueError(f"record {self.item_id}: image path must be non-empty")


@dataclass(frozen=True)
class SplitSpec:
    """How to draw a subset: target size, RNG seed, class balancing."""

    size: int
    seed: int
    balanced: bool = True

    def __post_init__(self) -> None:
        if self.size < 0:
            raise ValueError("split size must be >= 0")


# ---------------------------------------------------------------- serialization

def gold_to_dict(gold: GoldLabel) -> dict:
    return {
        "anomalous": gold.is_anomalous,
        "layers": [layer.code for layer in CANONICAL_ORDER if layer in gold.layer_flags],
        "provenance": gold.provenance.value,
    }


def gold_from_dict(d: dict) -> GoldLabel:
    return GoldLabel(
        bool(d["anomalous"]),
        layers_from_codes(d.get("layers", [])),
        LabelProvenance(d["provenance"]),
    )


def verdict_to_dict(verdict: AnomalyVerdict) -> dict:
    return {
        "anomalous": verdict.is_anomalous,
        "layers": [layer.code for layer in CANONICAL_ORDER if layer in verdict.layer_flags],
        "rationale": verdict.rationale,
        "parse_status": verdict.parse_status.value,
    }


def verdict_from_dict(d: dict) -> AnomalyVerdict:
    return AnomalyVerdict(
        bool(d["anomalous"]),
        layers_from_codes(d.get("layers", [])),
        d.get("rationale", ""),
        ParseStatus(d.get("parse_status", ParseStatus.PARSED.value)),
    )


def annotation_to_dict(annotation: ModelAnnotation) -> dict:
    scene = None
    if annotation.scene_texts is not None:
        scene = {
            layer.code: annotation.scene_texts[layer]
            for layer in CANONICAL_ORDER
            if layer in annotation.scene_texts
        }
    return {
        "model": annotation.model_name,
        "verdict": verdict_to_dict(annotation.verdict),
        "scene": scene,
        "description": annotation.description,
    }


def annotation_from_dict(d: dict) -> ModelAnnotation:
    scene = None
    if d.get("scene") is not None:
        scene = {SceneLayer.from_code(code): text for code, text in d["scene"].items()}
    return ModelAnnotation(
        d["model"],
        verdict_from_dict(d["verdict"]),
        scene,
        d.get("description"),
    )


def record_to_dict(record: DatasetRecord) -> dict:
    return {
        "id": record.item_id,
        "image": record.image_path,
        "gold": gold_to_dict(record.gold) if record.gold else None,
        "annotation": annotation_to_dict(record.annotation) if record.annotation else None,
        "review": record.review_state.value,
        "error": record.error,
    }


def record_from_dict(d: dict) -> DatasetRecord:
    return DatasetRecord(
        item_id=str(d["id"]),
        image_path=str(d["image"]),
        gold=gold_from_dict(d["gold"]) if d.get("gold") else None,
        annotation=annotation_from_dict(d["annotation"]) if d.get("annotation") else None,
        review_state=ReviewState(d.get("review", ReviewState.UNREVIEWED.value)),
        error=d.get("error"),
    )


# ---------------------------------------------------------------- manifest i/o

def _read_header(path: Path, lines: list[str], expected: dict) -> None:
    if not lines:
        raise ManifestError(f"{path}: empty file, expected a {expected['format']} header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:1: bad header line: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != expected["format"]:
        raise ManifestError(f"{path}:1: expected a {expected['format']} header")
    if int(header.get("version", 0)) != expected["version"]:
        raise ManifestError(
            f"{path}:1: unsupported {expected['format']} version {header.get('version')!r}"
        )


def load_manifest(path: str | Path) -> list[DatasetRecord]:
    """Read and validate a dataset manifest.

    Checks the header, per-line JSON, duplicate ids and gold-label
    consistency; every failure names the file and line.
    """
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {p}: {exc}") from exc
    _read_header(p, lines, MANIFEST_FORMAT)
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            d = json.loads(raw)
            record = record_from_dict(d)
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ManifestError(f"{p}:{lineno}: bad record: {exc}") from exc
        if record.item_id in seen:
            raise ManifestError(f"{p}:{lineno}: duplicate item id {record.item_id!r}")
        seen.add(record.item_id)
        if record.gold is not None:
            check = validate_gold(record.gold)
            if not check.ok:
                rules = "; ".join(f"{v.rule}: {v.message}" for v in check.violations)
                raise ManifestError(f"{p}:{lineno}: invalid gold label ({rules})")
        records.append(record)
    return records


def save_manifest(records: Sequence[DatasetRecord], path: str | Path) -> None:
    """Write a manifest atomically (temp file + rename)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(MANIFEST_FORMAT) + "\n")
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
    os.replace(tmp, p)


# ---------------------------------------------------------------- correction log

def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def append_correction(path: str | Path, entry: dict) -> None:
    """Append one review entry, creating the header when the file is new.

    The line is flushed and fsynced before returning: once a caller gets
    control back, the decision is on disk.
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fresh = not p.exists() or p.stat().st_size == 0
    with open(p, "a", encoding="utf-8", newline="\n") as fh:
        if fresh:
            fh.write(json.dumps(CORRECTION_FORMAT) + "\n")
        fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_corrections(path: str | Path) -> list[dict]:
    p = Path(path)
    if not p.exists() or p.stat().st_size == 0:
        return []
    lines = p.read_text(encoding="utf-8").splitlines()
    _read_header(p, lines, CORRECTION_FORMAT)
    entries = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            entries.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{p}:{lineno}: bad log entry: {exc}") from exc
    return entries


def review_entry(
    record: DatasetRecord,
    decision: str,
    new_gold: GoldLabel,
    reviewer: str,
    note: str | None = None,
    corrected_descriptions: Mapping[SceneLayer, str] | None = None,
    now: Callable[[], str] = utc_now_iso,
) -> dict:
    """Build the log entry for one review decision."""
    state = ReviewState.ACCEPTED if decision == "accept" else ReviewState.CORRECTED
    descriptions = None
    if corrected_descriptions is not None:
        descriptions = {
            layer.code: corrected_descriptions[layer]
            for layer in CANONICAL_ORDER
            if layer in corrected_descriptions
        }
    return {
        "ts": now(),
        "item": record.item_id,
        "reviewer": reviewer,
        "decision": decision,
        "state": state.value,
        "old_gold": gold_to_dict(record.gold) if record.gold else None,
        "new_gold": gold_to_dict(new_gold),
        "corrected_descriptions": descriptions,
        "note": note,
    }


def apply_review_entry(record: DatasetRecord, entry: dict) -> DatasetRecord:
    """Apply one log entry to a record.  The live store and replay share this."""
    gold = gold_from_dict(entry["new_gold"])
    state = ReviewState(entry["state"])
    annotation = record.annotation
    descriptions = entry.get("corrected_descriptions")
    if descriptions and annotation is not None:
        merged = dict(annotation.scene_texts or {})
        for code, text in descriptions.items():
            merged[SceneLayer.from_code(code)] = text
        annotation = replace(annotation, scene_texts=merged)
    return replace(record, gold=gold, review_state=state, annotation=annotation)


def replay_corrections(
    records: Sequence[DatasetRecord], log_path: str | Path
) -> list[DatasetRecord]:
    """Reconstruct record state from a manifest plus its correction log."""
    by_id = {record.item_id: record for record in records}
    for entry in load_corrections(log_path):
        item_id = entry["item"]
        if item_id not in by_id:
            raise ManifestError(f"correction log references unknown item {item_id!r}")
        by_id[item_id] = apply_review_entry(by_id[item_id], entry)
    return [by_id[record.item_id] for record in records]


# ---------------------------------------------------------------- subsets

def balanced_subset(
    records: Sequence[DatasetRecord], spec: SplitSpec
) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Draw a seeded subset; returns (subset, complement) in manifest order.

    Balanced mode draws half anomalous, half normal; an odd size gets the
    extra anomalous item.  Sampling is without replacement from id-sorted
    pools, so a given seed always picks the same items.
    """
    unlabeled = [r.item_id for r in records if r.gold is None]
    if unlabeled:
        raise ValueError(f"balanced subset needs gold labels; {len(unlabeled)} record(s) lack one")
    rng = random.Random(spec.seed)
    if spec.balanced:
        want_anomalous = (spec.size + 1) // 2
        want_normal = spec.size // 2
        anomalous = sorted(
            (r for r in records if r.gold and r.gold.is_anomalous), key=lambda r: r.item_id
        )
        normal = sorted(
            (r for r in records if r.gold and not r.gold.is_anomalous), key=lambda r: r.item_id
        )
        if len(anomalous) < want_anomalous:
            raise InsufficientClassError(
                f"need {want_anomalous} anomalous items, have {len(anomalous)}"
            )
        if len(normal) < want_normal:
            raise InsufficientClassError(f"need {want_normal} normal items, have {len(normal)}")
        chosen = set()
        chosen.update(r.item_id for r in rng.sample(anomalous, want_anomalous))
        chosen.update(r.item_id for r in rng.sample(normal, want_normal))
    else:
        if len(records) < spec.size:
            raise InsufficientClassError(f"need {spec.size} items, have {len(records)}")
        pool = sorted(records, key=lambda r: r.item_id)
        chosen = {r.item_id for r in rng.sample(pool, spec.size)}
    subset = [r for r in records if r.item_id in chosen]
    complement = [r for r in records if r.item_id not in chosen]
    return subset, complement


# ---------------------------------------------------------------- auto-labeling

def _load_annotation_store(path: Path) -> dict[str, dict]:
    if not path.exists() or path.stat().st_size == 0:
        return {}
    lines = path.read_text(encoding="utf-8").splitlines()
    _read_header(path, lines, ANNOTATION_FORMAT)
    entries: dict[str, dict] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            d = json.loads(raw)
            entries[str(d["id"])] = d  # later lines win: reruns supersede
        except (json.JSONDecodeError, KeyError) as exc:
            raise ManifestError(f"{path}:{lineno}: bad annotation entry: {exc}") from exc
    return entries


def _merge_annotation(record: DatasetRecord, entry: dict) -> DatasetRecord:
    if entry.get("annotation") is not None:
        return replace(record, annotation=annotation_from_dict(entry["annotation"]), error=None)
    return replace(record, error=entry.get("error"))


def autolabel_plan(
    records: Sequence[DatasetRecord], store_path: str | Path, force: bool = False
) -> list[DatasetRecord]:
    """Records a labeling run would still process, in manifest order."""
    if force:
        return list(records)
    done = _load_annotation_store(Path(store_path))
    return [r for r in records if r.item_id not in done]


def annotation_from_result(model_name: str, result: ItemResult) -> ModelAnnotation:
    assert result.verdict is not None
    scene_texts = None
    if result.scene is not None:
        scene_texts = {entry.layer: entry.text for entry in result.scene.entries}
    return ModelAnnotation(model_name, result.verdict, scene_texts, result.description_text)


def autolabel(
    records: Sequence[DatasetRecord],
    method: MethodConfig,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    store_path: str | Path,
    level: int = int(BASE_LEVEL),
    force: bool = False,
) -> list[DatasetRecord]:
    """Annotate every record with a model verdict (and scene, when layered).

    Progress is appended to the store and fsynced after every item, so an
    interrupted run resumes where it stopped: already-stored items are
    skipped unless ``force``.  Items that fail are error-marked, never
    dropped; the returned list matches the input record for record.
    """
    path = Path(store_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    done = {} if force else _load_annotation_store(path)
    fresh = not path.exists() or path.stat().st_size == 0
    merged: list[DatasetRecord] = []
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        if fresh:
            fh.write(json.dumps(ANNOTATION_FORMAT) + "\n")
            fh.flush()
        for record in records:
            if record.item_id in done:
                merged.append(_merge_annotation(record, done[record.item_id]))
                continue
            entry: dict = {"id": record.item_id, "model": spec.name}
            try:
                image = load_image(record.image_path, record.item_id)
                prepared = resize(image, level)
                result = run_method(method, prepared.image, spec, gw, prompts, level=level)
            except ImageDecodeError as exc:
                entry["annotation"] = None
                entry["error"] = f"{type(exc).__name__}: {exc}"
            else:
                if result.ok:
                    entry["annotation"] = annotation_to_dict(
                        annotation_from_result(spec.name, result)
                    )
                    entry["error"] = None
                else:
                    entry["annotation"] = None
                    entry["error"] = result.error
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
            merged.append(_merge_annotation(record, entry))
    return merged


# ---------------------------------------------------------------- stats

@dataclass(frozen=True)
class DatasetStats:
    """Label composition of a dataset."""

    total: int
    labeled: int
    anomalous: int
    normal: int
    layer_counts: Mapping[SceneLayer, int]
    combination_counts: Mapping[str, int]
    multilayer_hist: Mapping[int, int]

    @property
    def anomalous_share(self) -> float:
        return self.anomalous / self.labeled if self.labeled else 0.0

    def layer_share(self, layer: SceneLayer) -> float:
        """Share of anomalous items flagging this layer."""
        if not self.anomalous:
            return 0.0
        return self.layer_counts.get(layer, 0) / self.anomalous

    def multilayer_share(self, n_layers: int) -> float:
        if not self.anomalous:
            return 0.0
        return self.multilayer_hist.get(n_layers, 0) / self.anomalous


def dataset_stats(records: Sequence[DatasetRecord]) -> DatasetStats:
    """Count label composition.  Shares are fractions, not percentages."""
    labeled = [r for r in records if r.gold is not None]
    anomalous = [r for r in labeled if r.gold and r.gold.is_anomalous]
    layer_counts = {layer: 0 for layer in CANONICAL_ORDER}
    combination_counts: dict[str, int] = {}
    multilayer_hist: dict[int, int] = {}
    for record in anomalous:
        flags = record.gold.layer_flags  # type: ignore[union-attr]
        for layer in flags:
            layer_counts[layer] += 1
        key = combination_key(flags)
        combination_counts[key] = combination_counts.get(key, 0) + 1
        n = len(flags)
        multilayer_hist[n] = multilayer_hist.get(n, 0) + 1
    return DatasetStats(
        total=len(records),
        labeled=len(labeled),
        anomalous=len(anomalous),
        normal=len(labeled) - len(anomalous),
        layer_counts=layer_counts,
        combination_counts=combination_counts,
        multilayer_hist=multilayer_hist,
    )


# ---------------------------------------------------------------- fine-tune export

@dataclass(frozen=True)
class ExportResult:
    path: str
    mode: str
    items: int
    conversations: int
    excluded_unreviewed: int


class ExportError(ValueError):
    """Export preconditions not met; message lists the offending items."""


def _gold_verdict(record: DatasetRecord) -> AnomalyVerdict:
    gold = record.gold
    assert gold is not None
    rationale = "curated reference label"
    annotation = record.annotation
    if (
        annotation is not None
        and annotation.verdict.is_anomalous == gold.is_anomalous
        and annotation.verdict.layer_flags == gold.layer_flags
        and annotation.verdict.rationale
    ):
        rationale = annotation.verdict.rationale
    return AnomalyVerdict(gold.is_anomalous, gold.layer_flags, rationale, ParseStatus.PARSED)


def _pipeline_description_prompt(prompts: PromptSet) -> str:
    parts = ["Describe this traffic scene one level at a time."]
    for layer in CANONICAL_ORDER:
        parts.append(prompts.for_layer(layer).instruction.strip())
    return "\n\n".join(parts)


def _scene_aggregate(record: DatasetRecord) -> str:
    annotation = record.annotation
    assert annotation is not None and annotation.scene_texts is not None
    sections = [
        f"## {layer.label}\n{annotation.scene_texts[layer].strip()}"
        for layer in CANONICAL_ORDER
    ]
    return "\n\n".join(sections)


def export_finetune(
    records: Sequence[DatasetRecord],
    mode: str,
    prompts: PromptSet,
    out_path: str | Path,
) -> ExportResult:
    """Write chat-format fine-tuning conversations for reviewed records.

    ``single_shot``: one conversation per item, the direct prompt against
    the curated verdict block.  ``pipeline``: two conversations per item,
    description (image + layer prompts -> stored scene text) and
    evaluation (scene text -> curated verdict block).  Unreviewed records
    are excluded and counted, never silently dropped.
    """
    if mode not in (EXPORT_SINGLE_SHOT, EXPORT_PIPELINE):
        raise ExportError(f"unknown export mode {mode!r}")
    eligible = [
        r for r in records if r.review_state in (ReviewState.ACCEPTED, ReviewState.CORRECTED)
    ]
    excluded = len(records) - len(eligible)
    missing_gold = [r.item_id for r in eligible if r.gold is None]
    if missing_gold:
        raise ExportError(f"reviewed records without gold label: {', '.join(missing_gold[:10])}")
    if mode == EXPORT_PIPELINE:
        missing_scene = [
            r.item_id
            for r in eligible
            if r.annotation is None
            or r.annotation.scene_texts is None
            or any(layer not in r.annotation.scene_texts for layer in CANONICAL_ORDER)
        ]
        if missing_scene:
            raise ExportError(
                "pipeline export needs stored scene descriptions; missing on: "
                + ", ".join(missing_scene[:10])
            )

    p = Path(out_path)
    p.parent.mkdir(parents=True, exist_ok=True)
    conversations = 0
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            json.dumps({"format": EXPORT_FORMAT_NAME, "version": 1, "mode": mode}) + "\n"
        )
        for record in eligible:
            verdict_block = render_verdict(_gold_verdict(record))
            if mode == EXPORT_SINGLE_SHOT:
                convo = {
                    "messages": [
                        {
                            "role": "user",
                            "content": f"{IMAGE_PLACEHOLDER}\n{prompts.direct.render()}",
                        },
                        {"role": "assistant", "content": verdict_block},
                    ],
                    "images": [record.image_path],
                }
                fh.write(json.dumps(convo, ensure_ascii=False) + "\n")
                conversations += 1
            else:
                scene_text = _scene_aggregate(record)
                describe = {
                    "messages": [
                        {
                            "role": "user",
                            "content": f"{IMAGE_PLACEHOLDER}\n{_pipeline_description_prompt(prompts)}",
                        },
                        {"role": "assistant", "content": scene_text},
                    ],
                    "images": [record.image_path],
                }
                evaluate = {
                    "messages": [
                        {
                            "role": "user",
                            "content": f"{IMAGE_PLACEHOLDER}\n"
                            + prompts.evaluation.render(scene_description=scene_text),
                        },
                        {"role": "assistant", "content": verdict_block},
                    ],
                    "images": [record.image_path],
                }
                fh.write(json.dumps(describe, ensure_ascii=False) + "\n")
                fh.write(json.dumps(evaluate, ensure_ascii=False) + "\n")
                conversations += 2
    return ExportResult(str(p), mode, len(eligible), conversations, excluded)
