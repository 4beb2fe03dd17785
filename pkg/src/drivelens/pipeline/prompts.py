"""Prompt sets: the named templates a method runs with.

Default texts ship as package assets.  Optimized sets are directories
with the same file layout plus optional demos, produced by the prompt
optimizer; slots missing from a directory fall back to the defaults, so
a set that only optimizes the evaluation step stays complete.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..core import CANONICAL_ORDER, DemoPair, PromptRole, PromptTemplate, SceneLayer

SLOT_EVALUATION = "evaluation"
SLOT_DIRECT = "direct"
SLOT_BASELINE_DESCRIPTION = "baseline_description"
SLOT_IMAGE_BASELINE = "image_baseline"


def layer_slot(layer: SceneLayer) -> str:
    return "layer_" + layer.label.lower().replace(" ", "_")


LAYER_SLOTS = {layer: layer_slot(layer) for layer in CANONICAL_ORDER}
ALL_SLOTS = tuple(LAYER_SLOTS.values()) + (
    SLOT_EVALUATION,
    SLOT_DIRECT,
    SLOT_BASELINE_DESCRIPTION,
    SLOT_IMAGE_BASELINE,
)

_ROLE_BY_SLOT: dict[str, PromptRole] = {
    **{slot: PromptRole.LAYER_EXTRACTION for slot in LAYER_SLOTS.values()},
    SLOT_EVALUATION: PromptRole.EVALUATION,
    SLOT_DIRECT: PromptRole.DIRECT,
    SLOT_BASELINE_DESCRIPTION: PromptRole.BASELINE_DESCRIPTION,
    SLOT_IMAGE_BASELINE: PromptRole.DIRECT,
}

_LAYER_BY_SLOT = {slot: layer for layer, slot in LAYER_SLOTS.items()}


@dataclass(frozen=True)
class PromptSet:
    """Complete template assignment for every pipeline step."""

    templates: Mapping[str, PromptTemplate]
    origin: str = "default"
    version: int = 1

    def __post_init__(self) -> None:
        missing = [slot for slot in ALL_SLOTS if slot not in self.templates]
        if missing:
            raise ValueError(f"prompt set incomplete, missing slots: {', '.join(missing)}")
        for slot, template in self.templates.items():
            expected = _ROLE_BY_SLOT.get(slot)
            if expected is None:
                raise ValueError(f"unknown prompt slot {slot!r}")
            if template.role is not expected:
                raise ValueError(
                    f"slot {slot}: template role {template.role.value}, expected {expected.value}"
                )
            want_layer = _LAYER_BY_SLOT.get(slot)
            if want_layer is not None and template.layer is not want_layer:
                raise ValueError(f"slot {slot}: template bound to wrong layer")

    def for_layer(self, layer: SceneLayer) -> PromptTemplate:
        return self.templates[LAYER_SLOTS[layer]]

    @property
    def evaluation(self) -> PromptTemplate:
        return self.templates[SLOT_EVALUATION]

    @property
    def direct(self) -> PromptTemplate:
        return self.templates[SLOT_DIRECT]

    @property
    def baseline_description(self) -> PromptTemplate:
        return self.templates[SLOT_BASELINE_DESCRIPTION]

    @property
    def image_baseline(self) -> PromptTemplate:
        return self.templates[SLOT_IMAGE_BASELINE]

    def with_template(self, slot: str, template: PromptTemplate) -> "PromptSet":
        updated = dict(self.templates)
        updated[slot] = template
        return replace(self, templates=updated)


def _build_template(slot: str, instruction: str, demos: tuple[DemoPair, ...] = ()) -> PromptTemplate:
    role = _ROLE_BY_SLOT[slot]
    structured: bool | None = None
    if slot == SLOT_IMAGE_BASELINE:
        # The naive baseline asks its fixed binary question verbatim; no
        # schema suffix, replies are handled by the fallback parser.
        structured = False
    return PromptTemplate(
        name=slot,
        role=role,
        instruction=instruction,
        layer=_LAYER_BY_SLOT.get(slot),
        demos=demos,
        structured_answer=structured,
    )


def _read_default(slot: str) -> str:
    ref = resources.files("drivelens.pipeline").joinpath(f"assets/{slot}.txt")
    return ref.read_text(encoding="utf-8")


def default_prompt_set() -> PromptSet:
    """The prompt set shipped with the package."""
    templates = {slot: _build_template(slot, _read_default(slot)) for slot in ALL_SLOTS}
    return PromptSet(templates, origin="default", version=1)


def load_prompt_set(directory: str | Path) -> PromptSet:
    """Load a prompt-set directory, falling back to defaults per slot.

    Layout: ``<slot>.txt`` instruction files, optional ``demos.json``
    mapping slot to demo pairs, and a ``manifest.json`` with the format
    version.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"prompt set directory not found: {root}")
    manifest_path = root / "manifest.json"
    version = 1
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("format") not in (None, "prompt-assets"):
            raise ValueError(f"{manifest_path}: not a prompt-assets manifest")
        version = int(manifest.get("version", 1))
    demos_by_slot: dict[str, tuple[DemoPair, ...]] = {}
    demos_path = root / "demos.json"
    if demos_path.exists():
        raw = json.loads(demos_path.read_text(encoding="utf-8"))
        for slot, pairs in raw.items():
            demos_by_slot[slot] = tuple(DemoPair.from_dict(p) for p in pairs)
    templates: dict[str, PromptTemplate] = {}
    for slot in ALL_SLOTS:
        path = root / f"{slot}.txt"
        instruction = path.read_text(encoding="utf-8") if path.exists() else _read_default(slot)
        templates[slot] = _build_template(slot, instruction, demos_by_slot.get(slot, ()))
    return PromptSet(templates, origin=str(root), version=version)


def save_prompt_set(prompt_set: PromptSet, directory: str | Path) -> None:
    """Write a prompt set as a directory loadable by ``load_prompt_set``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    demos: dict[str, list[dict[str, str]]] = {}
    for slot in ALL_SLOTS:
        template = prompt_set.templates[slot]
        (root / f"{slot}.txt").write_text(template.instruction, encoding="utf-8")
        if template.demos:
            demos[slot] = [d.to_dict() for d in template.demos]
    (root / "manifest.json").write_text(
        json.dumps({"format": "prompt-assets", "version": prompt_set.version}) + "\n",
        encoding="utf-8",
    )
    if demos:
        (root / "demos.json").write_text(
            json.dumps(demos, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
