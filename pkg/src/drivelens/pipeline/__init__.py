"""Two-phase scene analysis: method matrix, prompt sets, per-item runner."""

from .methods import (
    INPUT_DESCRIPTION_ONLY,
    INPUT_IMAGE_ONLY,
    INPUT_IMAGE_PLUS_DESCRIPTION,
    METHOD_IDS,
    METHODS,
    MethodConfig,
    get_method,
    planned_queries,
)
from .prompts import (
    ALL_SLOTS,
    LAYER_SLOTS,
    SLOT_BASELINE_DESCRIPTION,
    SLOT_DIRECT,
    SLOT_EVALUATION,
    SLOT_IMAGE_BASELINE,
    PromptSet,
    default_prompt_set,
    layer_slot,
    load_prompt_set,
    save_prompt_set,
)
from .runner import (
    SYSTEM_TEXT,
    ItemResult,
    LayerExtractionError,
    QueryRecord,
    aggregate,
    describe_layer,
    describe_scene,
    evaluate,
    run_method,
)

__all__ = [
    "ALL_SLOTS",
    "INPUT_DESCRIPTION_ONLY",
    "INPUT_IMAGE_ONLY",
    "INPUT_IMAGE_PLUS_DESCRIPTION",
    "LAYER_SLOTS",
    "METHOD_IDS",
    "METHODS",
    "SLOT_BASELINE_DESCRIPTION",
    "SLOT_DIRECT",
    "SLOT_EVALUATION",
    "SLOT_IMAGE_BASELINE",
    "SYSTEM_TEXT",
    "ItemResult",
    "LayerExtractionError",
    "MethodConfig",
    "PromptSet",
    "QueryRecord",
    "aggregate",
    "default_prompt_set",
    "describe_layer",
    "describe_scene",
    "evaluate",
    "get_method",
    "layer_slot",
    "load_prompt_set",
    "planned_queries",
    "run_method",
    "save_prompt_set",
]
