"""The eight evaluation methods and their fixed query plans."""

from __future__ import annotations

from dataclasses import dataclass

INPUT_IMAGE_ONLY = "image_only"
INPUT_DESCRIPTION_ONLY = "description_only"
INPUT_IMAGE_PLUS_DESCRIPTION = "image_plus_description"


@dataclass(frozen=True)
class MethodConfig:
    """One row of the method matrix.

    ``planned_queries_per_item`` is a contract, not an estimate: the
    runner issues exactly this many model calls per item.
    """

    method_id: str
    layered: bool
    optimized: bool
    input_mode: str
    planned_queries_per_item: int


_ROWS = (
    MethodConfig("image_baseline", False, False, INPUT_IMAGE_ONLY, 1),
    MethodConfig("text_baseline", False, False, INPUT_DESCRIPTION_ONLY, 2),
    MethodConfig("baseline", False, False, INPUT_IMAGE_PLUS_DESCRIPTION, 2),
    MethodConfig("image", True, False, INPUT_IMAGE_ONLY, 1),
    MethodConfig("text", True, False, INPUT_DESCRIPTION_ONLY, 5),
    MethodConfig("text_opt", True, True, INPUT_DESCRIPTION_ONLY, 5),
    MethodConfig("full", True, False, INPUT_IMAGE_PLUS_DESCRIPTION, 5),
    MethodConfig("full_opt", True, True, INPUT_IMAGE_PLUS_DESCRIPTION, 5),
)

METHODS: dict[str, MethodConfig] = {row.method_id: row for row in _ROWS}

METHOD_IDS: tuple[str, ...] = tuple(METHODS)


def get_method(method_id: str) -> MethodConfig:
    try:
        return METHODS[method_id]
    except KeyError:
        raise KeyError(
            f"unknown method {method_id!r}; valid methods: {', '.join(METHOD_IDS)}"
        ) from None


def planned_queries(method: MethodConfig, n_items: int) -> int:
    """Total model calls a run over ``n_items`` will issue."""
    if n_items < 0:
        raise ValueError("n_items must be >= 0")
    return method.planned_queries_per_item * n_items
