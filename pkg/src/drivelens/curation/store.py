"""Review store: queue, leases, decisions, audit log.

The store is the single writer for review state.  Every decision is
appended (and fsynced) to the correction log before in-memory state
changes, so the log replayed over the original manifest always
reconstructs the live state.
"""

from __future__ import annotations

import threading
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..core import (
    GoldLabel,
    LabelIssue,
    LabelProvenance,
    SceneLayer,
    validate_gold,
)
from ..datastore import (
    DatasetRecord,
    ReviewState,
    append_correction,
    apply_review_entry,
    load_corrections,
    review_entry,
    utc_now_iso,
)

RULE_MISSING_ANNOTATION = "missing_annotation"
RULE_MISSING_CORRECTION = "missing_correction"
RULE_UNKNOWN_DECISION = "unknown_decision"


class UnknownItemError(KeyError):
    pass


class StaleLeaseError(RuntimeError):
    """The item is leased to a different, still-active reviewer."""


class InvalidReviewError(ValueError):
    """Submission violates label or protocol rules; names each rule."""

    def __init__(self, issues: Sequence[LabelIssue]):
        super().__init__("; ".join(f"{i.rule}: {i.message}" for i in issues))
        self.issues = tuple(issues)


@dataclass(frozen=True)
class ReviewSubmission:
    """One review decision as received from a client."""

    decision: str
    reviewer: str
    corrected_anomalous: bool | None = None
    corrected_layers: frozenset[SceneLayer] | None = None
    corrected_descriptions: Mapping[SceneLayer, str] | None = None
    note: str | None = None


@dataclass
class _Lease:
    reviewer: str
    expires_at: float


def _queue_sort_key(item_id: str) -> tuple[int, int | str]:
    # Numeric ids order numerically so "7" comes before "10".
    return (0, int(item_id)) if item_id.isdigit() else (1, item_id)


class ReviewStore:
    """In-memory review state over a record set, backed by the audit log."""

    def __init__(
        self,
        records: Sequence[DatasetRecord],
        log_path: str | Path,
        lease_seconds: float = 300.0,
        clock: Callable[[], float] = time.monotonic,
        now_iso: Callable[[], str] = utc_now_iso,
    ):
        if lease_seconds <= 0:
            raise ValueError("lease_seconds must be > 0")
        self.log_path = Path(log_path)
        self.lease_seconds = lease_seconds
        self._clock = clock
        self._now_iso = now_iso
        self._lock = threading.RLock()
        self._order = [r.item_id for r in records]
        self._records = {r.item_id: r for r in records}
        if len(self._records) != len(records):
            raise ValueError("duplicate item ids in record set")
        self._leases: dict[str, _Lease] = {}
        self._per_reviewer: Counter[str] = Counter()
        for entry in load_corrections(self.log_path):
            self._per_reviewer[entry.get("reviewer", "?")] += 1

    # -------------------------------------------------------------- reads

    def records(self) -> list[DatasetRecord]:
        with self._lock:
            return [self._records[item_id] for item_id in self._order]

    def get(self, item_id: str) -> DatasetRecord:
        with self._lock:
            record = self._records.get(item_id)
            if record is None:
                raise UnknownItemError(item_id)
            return record

    def progress(self) -> dict:
        with self._lock:
            states = Counter(r.review_state for r in self._records.values())
            unreviewed = states[ReviewState.UNREVIEWED]
            accepted = states[ReviewState.ACCEPTED]
            corrected = states[ReviewState.CORRECTED]
            return {
                "total": len(self._records),
                "unreviewed": unreviewed,
                "accepted": accepted,
                "corrected": corrected,
                "reviewed": accepted + corrected,
                "per_reviewer": dict(sorted(self._per_reviewer.items())),
            }

    # -------------------------------------------------------------- queue

    def _purge_expired(self, now: float) -> None:
        expired = [item_id for item_id, lease in self._leases.items() if lease.expires_at <= now]
        for item_id in expired:
            del self._leases[item_id]

    def next_for(self, reviewer: str) -> DatasetRecord | None:
        """Lowest-id unreviewed item not leased to another active reviewer.

        Grants (or extends) a lease to this reviewer, so two reviewers
        polling concurrently never see the same item while leases hold.
        """
        if not reviewer:
            raise ValueError("reviewer id must be non-empty")
        with self._lock:
            now = self._clock()
            self._purge_expired(now)
            for item_id in sorted(self._records, key=_queue_sort_key):
                record = self._records[item_id]
                if record.review_state is not ReviewState.UNREVIEWED:
                    continue
                lease = self._leases.get(item_id)
                if lease is not None and lease.reviewer != reviewer:
                    continue
                self._leases[item_id] = _Lease(reviewer, now + self.lease_seconds)
                return record
            return None

    # -------------------------------------------------------------- writes

    def _gold_for(self, record: DatasetRecord, submission: ReviewSubmission) -> GoldLabel:
        if submission.decision == "accept":
            if record.annotation is None:
                raise InvalidReviewError(
                    [LabelIssue(RULE_MISSING_ANNOTATION, "item has no model annotation to accept")]
                )
            verdict = record.annotation.verdict
            return GoldLabel(verdict.is_anomalous, verdict.layer_flags, LabelProvenance.MODEL)
        if submission.decision == "correct":
            if submission.corrected_anomalous is None:
                raise InvalidReviewError(
                    [LabelIssue(RULE_MISSING_CORRECTION, "correct decision needs a corrected label")]
                )
            gold = GoldLabel(
                submission.corrected_anomalous,
                submission.corrected_layers or frozenset(),
                LabelProvenance.MODEL_THEN_HUMAN_CORRECTED,
            )
            check = validate_gold(gold)
            if not check.ok:
                raise InvalidReviewError(check.violations)
            return gold
        raise InvalidReviewError(
            [LabelIssue(RULE_UNKNOWN_DECISION, f"unknown decision {submission.decision!r}")]
        )

    def submit(self, item_id: str, submission: ReviewSubmission) -> DatasetRecord:
        """Apply one review decision.

        Order inside the lock: validate, append to the audit log (fsync),
        then mutate memory.  A crash after the append loses nothing:
        replay reconstructs the post-decision state.
        """
        if not submission.reviewer:
            raise InvalidReviewError(
                [LabelIssue("missing_reviewer", "reviewer id must be non-empty")]
            )
        with self._lock:
            record = self._records.get(item_id)
            if record is None:
                raise UnknownItemError(item_id)
            now = self._clock()
            self._purge_expired(now)
            lease = self._leases.get(item_id)
            if lease is not None and lease.reviewer != submission.reviewer:
                raise StaleLeaseError(
                    f"item {item_id} is leased to another reviewer until their lease expires"
                )
            gold = self._gold_for(record, submission)
            entry = review_entry(
                record,
                submission.decision,
                gold,
                submission.reviewer,
                note=submission.note,
                corrected_descriptions=submission.corrected_descriptions,
                now=self._now_iso,
            )
            append_correction(self.log_path, entry)
            updated = apply_review_entry(record, entry)
            self._records[item_id] = updated
            self._leases.pop(item_id, None)
            self._per_reviewer[submission.reviewer] += 1
            return updated
