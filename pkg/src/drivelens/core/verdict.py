"""Anomaly verdicts and reply parsing.

Replies are parsed with a two-step chain: first the structured block the
prompts request, then a conservative yes/no fallback.  Text that survives
neither step raises ``VerdictParseError``; callers record that as an item
error instead of guessing a label.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace

from .layers import KEY_ORDER, SceneLayer


class ParseStatus(enum.Enum):
    """How a verdict was obtained from model text."""

    PARSED = "parsed"
    FALLBACK = "fallback_parsed"
    UNPARSEABLE = "unparseable"


class VerdictParseError(ValueError):
    """Raised when reply text yields no verdict; carries the raw text."""

    def __init__(self, raw_text: str):
        super().__init__("reply text contains no recognizable verdict")
        self.raw_text = raw_text


@dataclass(frozen=True)
class AnomalyVerdict:
    """Binary classification plus per-layer attribution.

    A non-anomalous verdict never carries layer flags; the constructor
    enforces that so the invariant holds everywhere a verdict exists.
    An anomalous verdict with an empty flag set is legal.
    """

    is_anomalous: bool
    layer_flags: frozenset[SceneLayer]
    rationale: str
    parse_status: ParseStatus

    def __post_init__(self) -> None:
        if not self.is_anomalous and self.layer_flags:
            raise ValueError("non-anomalous verdict must not carry layer flags")


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_VERDICT_LINE_RE = re.compile(r"^\s*verdict\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_LAYERS_LINE_RE = re.compile(r"^\s*layers\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE)
_RATIONALE_RE = re.compile(r"^\s*rationale\s*:\s*(.*)$", re.IGNORECASE | re.MULTILINE | re.DOTALL)
_YESNO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_LEADING_YESNO_RE = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)

# Full labels are accepted in layers lines alongside one-letter codes.
_LAYER_TOKENS = {layer.code.lower(): layer for layer in SceneLayer}
_LAYER_TOKENS.update({layer.label.lower(): layer for layer in SceneLayer})

#: Window, in characters, around the word "anomal..." scanned by the fallback.
_FALLBACK_WINDOW = 60


def _parse_yesno(token: str) -> bool | None:
    m = re.match(r"(yes|no)\b", token.strip(), re.IGNORECASE)
    if m is None:
        return None
    return m.group(1).lower() == "yes"


def _parse_layers_field(raw: str) -> frozenset[SceneLayer]:
    found: set[SceneLayer] = set()
    for token in raw.split(","):
        t = token.strip().lower().rstrip(".")
        if not t or t == "none":
            continue
        layer = _LAYER_TOKENS.get(t)
        if layer is not None:
            found.add(layer)
        # Unrecognized tokens are noise from the model, not errors.
    return frozenset(found)


def _try_structured(text: str) -> AnomalyVerdict | None:
    blocks = [m.group(1) for m in _FENCE_RE.finditer(text)]
    blocks.append(text)  # tolerate replies that drop the fences
    for block in blocks:
        m = _VERDICT_LINE_RE.search(block)
        if m is None:
            continue
        is_anomalous = _parse_yesno(m.group(1))
        if is_anomalous is None:
            continue
        flags: frozenset[SceneLayer] = frozenset()
        lm = _LAYERS_LINE_RE.search(block)
        if lm is not None:
            flags = _parse_layers_field(lm.group(1))
        rationale = ""
        rm = _RATIONALE_RE.search(block)
        if rm is not None:
            rationale = rm.group(1).strip()
        if not is_anomalous:
            flags = frozenset()  # normalization: stray flags on a "no" are dropped
        return AnomalyVerdict(is_anomalous, flags, rationale, ParseStatus.PARSED)
    return None


def _try_fallback(text: str) -> AnomalyVerdict | None:
    decision: bool | None = None
    lead = _LEADING_YESNO_RE.match(text)
    if lead is not None:
        decision = _parse_yesno(lead.group(1))
    if decision is None:
        # Nearest standalone yes/no around any "anomal..." occurrence.
        best_distance: int | None = None
        for am in re.finditer(r"anomal", text, re.IGNORECASE):
            lo = max(0, am.start() - _FALLBACK_WINDOW)
            hi = min(len(text), am.end() + _FALLBACK_WINDOW)
            for ym in _YESNO_RE.finditer(text, lo, hi):
                distance = abs(ym.start() - am.start())
                if best_distance is None or distance < best_distance:
                    best_distance = distance
                    decision = _parse_yesno(ym.group(1))
    if decision is None:
        return None
    return AnomalyVerdict(decision, frozenset(), text.strip(), ParseStatus.FALLBACK)


def parse_verdict(text: str) -> AnomalyVerdict:
    """Parse model reply text into a verdict.

    Tries the structured block first, then the yes/no fallback; raises
    ``VerdictParseError`` when neither applies.  Never coerces unclear
    text into a label.
    """
    verdict = _try_structured(text)
    if verdict is None:
        verdict = _try_fallback(text)
    if verdict is None:
        raise VerdictParseError(text)
    return verdict


def render_verdict(verdict: AnomalyVerdict) -> str:
    """Render the canonical fenced block for a verdict.

    ``parse_verdict(render_verdict(v))`` reproduces ``v`` (with status
    ``PARSED``) for any rationale that is stripped and fence-free.
    """
    codes = [layer.code for layer in KEY_ORDER if layer in verdict.layer_flags]
    layers = ", ".join(codes) if codes else "none"
    word = "yes" if verdict.is_anomalous else "no"
    return (
        "```\n"
        f"verdict: {word}\n"
        f"layers: {layers}\n"
        f"rationale: {verdict.rationale.strip()}\n"
        "```"
    )


def reparse_as(verdict: AnomalyVerdict, status: ParseStatus) -> AnomalyVerdict:
    """Copy of ``verdict`` with a different parse status."""
    return replace(verdict, parse_status=status)
