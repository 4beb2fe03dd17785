"""Domain types shared across the toolkit: layers, images, prompts, verdicts, labels."""

from .images import ImageInput
from .labels import (
    RULE_ANOMALOUS_WITHOUT_LAYERS,
    RULE_FLAGS_ON_NORMAL,
    GoldLabel,
    LabelCheck,
    LabelIssue,
    LabelProvenance,
    validate_gold,
)
from .layers import (
    CANONICAL_ORDER,
    EMPTY_KEY,
    KEY_ORDER,
    SceneLayer,
    combination_key,
    flags_from_key,
    layers_from_codes,
    sorted_canonical,
)
from .prompts import ANSWER_SCHEMA, SCENE_PLACEHOLDER, DemoPair, PromptRole, PromptTemplate
from .scene import LayerDescription, SceneDescription
from .verdict import (
    AnomalyVerdict,
    ParseStatus,
    VerdictParseError,
    parse_verdict,
    render_verdict,
    reparse_as,
)

__all__ = [
    "ANSWER_SCHEMA",
    "CANONICAL_ORDER",
    "EMPTY_KEY",
    "KEY_ORDER",
    "RULE_ANOMALOUS_WITHOUT_LAYERS",
    "RULE_FLAGS_ON_NORMAL",
    "SCENE_PLACEHOLDER",
    "AnomalyVerdict",
    "DemoPair",
    "GoldLabel",
    "ImageInput",
    "LabelCheck",
    "LabelIssue",
    "LabelProvenance",
    "LayerDescription",
    "ParseStatus",
    "PromptRole",
    "PromptTemplate",
    "SceneDescription",
    "SceneLayer",
    "VerdictParseError",
    "combination_key",
    "flags_from_key",
    "layers_from_codes",
    "parse_verdict",
    "render_verdict",
    "reparse_as",
    "sorted_canonical",
    "validate_gold",
]
