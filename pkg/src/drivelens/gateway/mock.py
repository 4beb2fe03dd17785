"""Deterministic mock backends for tests, dry runs and offline development.

Two flavors:

* ``ScriptedMockBackend`` answers from explicit rules (request fingerprint,
  substring match, default) with optional failure scripts.
* ``OracleMockBackend`` answers consistently with sidecar reference labels,
  optionally corrupted at a seeded error rate or on an explicit id set.

Neither reports token usage, so the client estimates tokens; that keeps
token accounting exercised under test.
"""

from __future__ import annotations

import json
import random
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..core import (
    AnomalyVerdict,
    GoldLabel,
    ParseStatus,
    SceneLayer,
    render_verdict,
)
from .types import BackendReply, ChatRequest, TransientBackendFailure

#: Tag the oracle embeds in descriptions so image-free follow-up queries
#: can still be tied back to an item.
SCENE_ID_TAG = "scene-id"

_SCENE_ID_RE = re.compile(r"scene-id:\s*([A-Za-z0-9_.\-]+)")


def fixture_header() -> dict:
    return {"format": "mock-fixture", "version": 1}


@dataclass
class _Rule:
    response: str
    fail_times: int = 0
    failures_left: int = field(init=False)

    def __post_init__(self) -> None:
        self.failures_left = self.fail_times


class MockScriptError(RuntimeError):
    """A request arrived that no rule covers: the test script is incomplete."""


class ScriptedMockBackend:
    """Rule-driven mock.

    Matching order: exact request fingerprint, then substring rules in
    insertion order, then the default reply.  A rule's failure script
    makes its first N matches raise a transient failure, which exercises
    the retry path.
    """

    def __init__(self) -> None:
        self._by_fingerprint: dict[str, _Rule] = {}
        self._by_substring: list[tuple[str, _Rule]] = []
        self._default: _Rule | None = None
        self._lock = threading.Lock()
        self.calls = 0
        self.call_log: list[ChatRequest] = []

    def script(self, fingerprint: str, response: str, fail_times: int = 0) -> None:
        self._by_fingerprint[fingerprint] = _Rule(response, fail_times)

    def script_contains(self, substring: str, response: str, fail_times: int = 0) -> None:
        self._by_substring.append((substring, _Rule(response, fail_times)))

    def set_default(self, response: str, fail_times: int = 0) -> None:
        self._default = _Rule(response, fail_times)

    @classmethod
    def from_fixture(cls, path: str | Path) -> "ScriptedMockBackend":
        """Load rules from a line-oriented fixture file.

        Line 1 is a format header; each further line is one rule with
        either a ``fingerprint``, a ``contains`` pattern, or ``default``
        set, plus ``response`` and optional ``fail_times``.
        """
        backend = cls()
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        for lineno, raw in enumerate(lines, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad fixture line: {exc}") from exc
            if lineno == 1 and record.get("format") == "mock-fixture":
                continue
            response = record.get("response", "")
            fail_times = int(record.get("fail_times", 0))
            if "fingerprint" in record:
                backend.script(record["fingerprint"], response, fail_times)
            elif "contains" in record:
                backend.script_contains(record["contains"], response, fail_times)
            elif "default" in record:
                backend.set_default(response, fail_times)
            else:
                raise ValueError(f"{path}:{lineno}: rule needs fingerprint, contains or default")
        return backend

    def _match(self, request: ChatRequest) -> _Rule | None:
        from .client import request_fingerprint  # local import avoids a cycle

        rule = self._by_fingerprint.get(request_fingerprint(request))
        if rule is not None:
            return rule
        for substring, candidate in self._by_substring:
            if substring in request.user or substring in request.system:
                return candidate
        return self._default

    def send(self, request: ChatRequest) -> BackendReply:
        with self._lock:
            self.calls += 1
            self.call_log.append(request)
            rule = self._match(request)
            if rule is None:
                raise MockScriptError(f"no rule matches request: {request.user[:120]!r}")
            if rule.failures_left > 0:
                rule.failures_left -= 1
                raise TransientBackendFailure("scripted transient failure")
            return BackendReply(rule.response)


def _is_classification_query(user_text: str) -> bool:
    # Structured prompts carry the schema ("verdict:"); the naive baseline
    # asks its fixed binary question instead.
    return "verdict:" in user_text or "Yes or No" in user_text


def _single_layer_mentioned(user_text: str) -> SceneLayer | None:
    mentioned = [layer for layer in SceneLayer if layer.label in user_text]
    if len(mentioned) == 1:
        return mentioned[0]
    return None


class OracleMockBackend:
    """Answers consistently with per-item reference labels.

    Requests carrying an image are resolved by logical image id; image-free
    requests are resolved by the ``scene-id`` tag this oracle embeds in
    every description it produces.  With ``error_rate`` 0 and an empty
    ``wrong_item_ids`` set, every classification reply matches the
    reference label exactly.  Errors are decided per item from the seed,
    so they are stable across runs and across methods.
    """

    def __init__(
        self,
        gold_by_item: dict[str, GoldLabel],
        error_rate: float = 0.0,
        seed: int = 0,
        wrong_item_ids: frozenset[str] | set[str] = frozenset(),
    ):
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must be within [0, 1]")
        self.gold_by_item = dict(gold_by_item)
        self.error_rate = error_rate
        self.seed = seed
        self.wrong_item_ids = frozenset(wrong_item_ids)
        self._lock = threading.Lock()
        self.calls = 0
        self.call_log: list[ChatRequest] = []

    def _item_id_for(self, request: ChatRequest) -> str:
        if request.image is not None:
            return request.image.image_id
        m = _SCENE_ID_RE.search(request.user)
        if m is not None:
            return m.group(1)
        raise MockScriptError("image-free request carries no scene-id tag; oracle cannot resolve it")

    def _is_wrong(self, item_id: str) -> bool:
        if item_id in self.wrong_item_ids:
            return True
        if self.error_rate <= 0.0:
            return False
        return random.Random(f"{self.seed}:{item_id}").random() < self.error_rate

    def _classification_text(self, item_id: str, gold: GoldLabel, user_text: str) -> str:
        answer = gold.is_anomalous != self._is_wrong(item_id)
        flags = gold.layer_flags if (answer and gold.is_anomalous) else frozenset()
        if "verdict:" in user_text:
            verdict = AnomalyVerdict(answer, flags, f"reference assessment for {item_id}", ParseStatus.PARSED)
            return render_verdict(verdict)
        return "Yes." if answer else "No."

    def _layer_sentence(self, layer: SceneLayer, gold: GoldLabel) -> str:
        if gold.is_anomalous and layer in gold.layer_flags:
            return f"{layer.label}: an unusual condition stands out at this level."
        return f"{layer.label}: nothing out of the ordinary at this level."

    def _description_text(self, item_id: str, gold: GoldLabel, user_text: str) -> str:
        layer = _single_layer_mentioned(user_text)
        if layer is not None:
            return f"{self._layer_sentence(layer, gold)} ({SCENE_ID_TAG}: {item_id})"
        lines = [self._layer_sentence(ly, gold) for ly in SceneLayer]
        return f"Traffic scene overview ({SCENE_ID_TAG}: {item_id}). " + " ".join(lines)

    def send(self, request: ChatRequest) -> BackendReply:
        with self._lock:
            self.calls += 1
            self.call_log.append(request)
        item_id = self._item_id_for(request)
        gold = self.gold_by_item.get(item_id)
        if gold is None:
            raise MockScriptError(f"oracle has no reference label for item {item_id!r}")
        if _is_classification_query(request.user):
            return BackendReply(self._classification_text(item_id, gold, request.user))
        return BackendReply(self._description_text(item_id, gold, request.user))
