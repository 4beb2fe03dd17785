"""Batch evaluation: metrics, failure analysis, sweeps, report files.

All aggregates are computed from results sorted by item id, so reports
are identical for any worker count; only timing fields vary between
otherwise identical runs.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    EMPTY_KEY,
    KEY_ORDER,
    GoldLabel,
    LabelProvenance,
    combination_key,
    flags_from_key,
)
from .datastore import DatasetRecord
from .gateway import Gateway, ModelSpec
from .imageprep import BASE_LEVEL, load_image, resize
from .pipeline import ItemResult, MethodConfig, PromptSet, run_method

log = logging.getLogger(__name__)

ITEMS_FORMAT = {"format": "run-items", "version": 1}


@dataclass(frozen=True)
class Metrics:
    """Confusion counts plus the derived rates.

    Zero-denominator conventions: precision is 0 when nothing was
    predicted positive, recall is 0 when nothing is positive, F1 is 0
    when precision + recall is 0, accuracy is 0 on an empty set.
    """

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def compute_metrics(pairs: Iterable[tuple[bool, bool]]) -> Metrics:
    """Count a (predicted, gold) pair stream into a confusion matrix."""
    tp = fp = tn = fn = 0
    for predicted, gold in pairs:
        if predicted and gold:
            tp += 1
        elif predicted and not gold:
            fp += 1
        elif not predicted and gold:
            fn += 1
        else:
            tn += 1
    return Metrics(tp, fp, tn, fn)


@dataclass(frozen=True)
class FailureRateRow:
    """Misclassification share for one gold flag combination."""

    key: str
    total: int
    failures: int

    @property
    def rate_pct(self) -> float:
        return 100.0 * self.failures / self.total if self.total else 0.0


def _key_sort_index(key: str) -> tuple[int, tuple[int, ...]]:
    if key == EMPTY_KEY:
        return (0, ())
    codes = key.split(".")
    positions = tuple(
        next(i for i, layer in enumerate(KEY_ORDER) if layer.code == c) for c in codes
    )
    return (len(codes), positions)


def failure_rates(
    outcomes: Iterable[tuple[GoldLabel, bool | None]],
) -> tuple[FailureRateRow, ...]:
    """Misclassification rates grouped by the gold flag combination.

    Normal items fall under the ``none`` group.  Items without a
    prediction (errored) are excluded from both numerator and
    denominator; empty groups never appear.
    """
    totals: dict[str, int] = {}
    failures: dict[str, int] = {}
    for gold, predicted in outcomes:
        if predicted is None:
            continue
        key = combination_key(gold.layer_flags)
        totals[key] = totals.get(key, 0) + 1
        if predicted != gold.is_anomalous:
            failures[key] = failures.get(key, 0) + 1
    rows = [FailureRateRow(key, totals[key], failures.get(key, 0)) for key in totals]
    rows.sort(key=lambda row: _key_sort_index(row.key))
    return tuple(rows)


@dataclass(frozen=True)
class ItemRow:
    """Serializable per-item outcome."""

    item_id: str
    gold_anomalous: bool
    gold_key: str
    predicted: bool | None
    predicted_key: str | None
    parse_status: str | None
    error: str | None
    queries: tuple[dict, ...]

    @property
    def call_count(self) -> int:
        return len(self.queries)

    def to_record(self) -> dict:
        return {
            "item": self.item_id,
            "gold_anomalous": self.gold_anomalous,
            "gold_key": self.gold_key,
            "predicted": self.predicted,
            "predicted_key": self.predicted_key,
            "parse_status": self.parse_status,
            "error": self.error,
            "call_count": self.call_count,
            "queries": list(self.queries),
        }


@dataclass(frozen=True)
class RunReport:
    """Everything one batch run produced, ready for serialization."""

    method_id: str
    model_name: str
    resolution_level: int
    prompt_origin: str
    n_items: int
    n_errors: int
    metrics: Metrics
    failure_rate_rows: tuple[FailureRateRow, ...]
    total_queries: int
    total_input_tokens: int
    total_output_tokens: int
    total_image_tokens: int
    total_billed_cost: float
    mean_latency_s_per_query: float
    items: tuple[ItemRow, ...]

    @property
    def mean_tokens_per_query(self) -> float:
        if not self.total_queries:
            return 0.0
        return (self.total_input_tokens + self.total_output_tokens) / self.total_queries

    @property
    def mean_image_tokens_per_query(self) -> float:
        if not self.total_queries:
            return 0.0
        return self.total_image_tokens / self.total_queries

    def summary_row(self) -> dict:
        m = self.metrics
        return {
            "method": self.method_id,
            "model": self.model_name,
            "resolution": self.resolution_level,
            "prompts": self.prompt_origin,
            "items": self.n_items,
            "errors": self.n_errors,
            "tp": m.tp,
            "fp": m.fp,
            "tn": m.tn,
            "fn": m.fn,
            "accuracy": m.accuracy,
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "queries": self.total_queries,
            "input_tokens": self.total_input_tokens,
            "output_tokens": self.total_output_tokens,
            "image_tokens": self.total_image_tokens,
            "mean_tokens_per_query": self.mean_tokens_per_query,
            "mean_image_tokens_per_query": self.mean_image_tokens_per_query,
            "mean_latency_s_per_query": self.mean_latency_s_per_query,
            "billed_cost": self.total_billed_cost,
        }


def _query_dict(record) -> dict:
    return {
        "role": record.role,
        "latency_s": record.latency_s,
        "input_tokens": record.input_tokens,
        "output_tokens": record.output_tokens,
        "image_tokens": record.image_tokens,
        "cost": record.cost,
        "billed_cost": record.billed_cost,
        "cache_hit": record.cache_hit,
        "attempt_count": record.attempt_count,
    }


def _item_row(record: DatasetRecord, result: ItemResult) -> ItemRow:
    gold = record.gold
    assert gold is not None
    verdict = result.verdict
    return ItemRow(
        item_id=record.item_id,
        gold_anomalous=gold.is_anomalous,
        gold_key=combination_key(gold.layer_flags),
        predicted=None if verdict is None else verdict.is_anomalous,
        predicted_key=None if verdict is None else combination_key(verdict.layer_flags),
        parse_status=None if verdict is None else verdict.parse_status.value,
        error=result.error,
        queries=tuple(_query_dict(q) for q in result.queries),
    )


def run_batch(
    records: Sequence[DatasetRecord],
    method: MethodConfig,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    level: int = int(BASE_LEVEL),
    workers: int = 4,
) -> RunReport:
    """Evaluate labeled records under one method.

    Items run in a thread pool; results are assembled in item-id order so
    the report content does not depend on the worker count.  Items that
    error are kept with their error string and excluded from the metric
    denominators.
    """
    unlabeled = [r.item_id for r in records if r.gold is None]
    if unlabeled:
        preview = ", ".join(unlabeled[:5])
        raise ValueError(f"evaluation needs gold labels; missing on {len(unlabeled)} record(s): {preview}")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    def run_one(record: DatasetRecord) -> tuple[str, ItemResult]:
        image = load_image(record.image_path, record.item_id)
        prepared = resize(image, level)
        return record.item_id, run_method(method, prepared.image, spec, gw, prompts, level=level)

    results: dict[str, ItemResult] = {}
    if workers == 1:
        for record in records:
            item_id, result = run_one(record)
            results[item_id] = result
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for item_id, result in pool.map(run_one, records):
                results[item_id] = result

    ordered = sorted(records, key=lambda r: r.item_id)
    rows = tuple(_item_row(record, results[record.item_id]) for record in ordered)
    return build_report(
        rows,
        method_id=method.method_id,
        model_name=spec.name,
        resolution_level=int(level),
        prompt_origin=prompts.origin,
    )


def build_report(
    rows: tuple[ItemRow, ...],
    method_id: str,
    model_name: str,
    resolution_level: int,
    prompt_origin: str,
) -> RunReport:
    """Aggregate per-item rows into a report (also used to re-render)."""
    pairs = [(row.predicted, row.gold_anomalous) for row in rows if row.predicted is not None]
    metrics = compute_metrics(pairs)
    fr = failure_rates(
        (
            GoldLabel(row.gold_anomalous, flags_from_key(row.gold_key), LabelProvenance.MANUAL),
            row.predicted,
        )
        for row in rows
    )
    queries = [q for row in rows for q in row.queries]
    total_queries = len(queries)
    total_latency = sum(q["latency_s"] for q in queries)
    return RunReport(
        method_id=method_id,
        model_name=model_name,
        resolution_level=resolution_level,
        prompt_origin=prompt_origin,
        n_items=len(rows),
        n_errors=sum(1 for row in rows if row.error is not None),
        metrics=metrics,
        failure_rate_rows=fr,
        total_queries=total_queries,
        total_input_tokens=sum(q["input_tokens"] for q in queries),
        total_output_tokens=sum(q["output_tokens"] for q in queries),
        total_image_tokens=sum(q["image_tokens"] or 0 for q in queries),
        total_billed_cost=sum(q["billed_cost"] for q in queries),
        mean_latency_s_per_query=total_latency / total_queries if total_queries else 0.0,
        items=rows,
    )


def resolution_sweep(
    records: Sequence[DatasetRecord],
    method: MethodConfig,
    spec: ModelSpec,
    gw: Gateway,
    prompts: PromptSet,
    levels: Sequence[int],
    workers: int = 4,
) -> list[RunReport]:
    """One batch run per resolution level, same items and method."""
    reports = []
    for level in levels:
        reports.append(run_batch(records, method, spec, gw, prompts, level=level, workers=workers))
    return reports


def emit_report(report: RunReport, out_dir: str | Path) -> list[str]:
    """Write report files; returns the file names written.

    ``items.jsonl``: header line then one record per item, in item-id
    order.  ``summary.csv`` and ``failure_rates.csv``: aggregate tables.
    ``files.json``: manifest of everything written.  Emission is pure
    serialization: emitting the same report twice gives identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    items_path = out / "items.jsonl"
    with open(items_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(ITEMS_FORMAT) + "\n")
        for row in report.items:
            fh.write(json.dumps(row.to_record(), ensure_ascii=False) + "\n")

    summary_row = report.summary_row()
    summary_path = out / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary_row))
        writer.writeheader()
        writer.writerow(summary_row)

    fr_path = out / "failure_rates.csv"
    with open(fr_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "total", "failures", "rate_pct"])
        for row in report.failure_rate_rows:
            writer.writerow([row.key, row.total, row.failures, row.rate_pct])

    names = [items_path.name, summary_path.name, fr_path.name]
    files_path = out / "files.json"
    files_path.write_text(
        json.dumps({"format": "run-files", "version": 1, "files": names}) + "\n",
        encoding="utf-8",
    )
    return names + [files_path.name]


def load_item_rows(items_path: str | Path) -> list[dict]:
    """Read back an ``items.jsonl`` stream (header validated)."""
    lines = Path(items_path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{items_path}: empty items file")
    header = json.loads(lines[0])
    if header.get("format") != ITEMS_FORMAT["format"]:
        raise ValueError(f"{items_path}: not a run-items file")
    return [json.loads(line) for line in lines[1:] if line.strip()]
