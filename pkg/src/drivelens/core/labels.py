"""Gold labels and their consistency rules.

``GoldLabel`` deliberately permits inconsistent field combinations so that
loaders can read a bad record and report exactly what is wrong;
``validate_gold`` is the single place the rules live.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .layers import SceneLayer


class LabelProvenance(enum.Enum):
    """Where a gold label came from."""

    MANUAL = "manual"
    MODEL = "model"
    MODEL_THEN_HUMAN_CORRECTED = "model_then_human_corrected"


@dataclass(frozen=True)
class GoldLabel:
    """Curated ground truth for one item."""

    is_anomalous: bool
    layer_flags: frozenset[SceneLayer]
    provenance: LabelProvenance


@dataclass(frozen=True)
class LabelIssue:
    """One named finding from validation."""

    rule: str
    message: str


@dataclass(frozen=True)
class LabelCheck:
    """Validation outcome: hard violations plus soft advisories."""

    violations: tuple[LabelIssue, ...]
    advisories: tuple[LabelIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


#: Rule names, stable across the API surface (error payloads cite them).
RULE_FLAGS_ON_NORMAL = "flags_on_normal"
RULE_ANOMALOUS_WITHOUT_LAYERS = "anomalous_without_layers"


def validate_gold(label: GoldLabel) -> LabelCheck:
    """Check a gold label against the consistency rules.

    Layer flags on a non-anomalous label are a violation.  An anomalous
    label without layer attribution is legal but flagged as an advisory
    so curation tooling can surface it.
    """
    violations: list[LabelIssue] = []
    advisories: list[LabelIssue] = []
    if not label.is_anomalous and label.layer_flags:
        codes = ", ".join(sorted(layer.code for layer in label.layer_flags))
        violations.append(
            LabelIssue(
                RULE_FLAGS_ON_NORMAL,
                f"non-anomalous label carries layer flags ({codes})",
            )
        )
    if label.is_anomalous and not label.layer_flags:
        advisories.append(
            LabelIssue(
                RULE_ANOMALOUS_WITHOUT_LAYERS,
                "anomalous label carries no layer attribution",
            )
        )
    return LabelCheck(tuple(violations), tuple(advisories))
