"""Per-layer descriptions and their aggregate."""

from __future__ import annotations

from dataclasses import dataclass

from .layers import CANONICAL_ORDER, SceneLayer


@dataclass(frozen=True)
class LayerDescription:
    """Free-form description of one layer of a scene.

    ``anomaly_flag`` is an optional per-layer signal some prompts elicit;
    the binary decision always comes from the evaluation step, never from
    these flags.
    """

    layer: SceneLayer
    text: str
    anomaly_flag: bool | None = None


@dataclass(frozen=True)
class SceneDescription:
    """All four layer descriptions plus the aggregate text fed to evaluation."""

    entries: tuple[LayerDescription, ...]
    aggregate_text: str

    @classmethod
    def from_layers(cls, descriptions: list[LayerDescription]) -> "SceneDescription":
        """Build the aggregate from exactly one description per layer.

        Input order does not matter; sections are emitted in canonical
        layer order under fixed headers.  Missing or duplicated layers
        are contract violations.
        """
        by_layer: dict[SceneLayer, LayerDescription] = {}
        for desc in descriptions:
            if desc.layer in by_layer:
                raise ValueError(f"duplicate description for layer {desc.layer.label}")
            if not desc.text.strip():
                raise ValueError(f"empty description for layer {desc.layer.label}")
            by_layer[desc.layer] = desc
        missing = [layer.label for layer in CANONICAL_ORDER if layer not in by_layer]
        if missing:
            raise ValueError(f"missing description for layer(s): {', '.join(missing)}")
        ordered = tuple(by_layer[layer] for layer in CANONICAL_ORDER)
        sections = [f"## {d.layer.label}\n{d.text.strip()}" for d in ordered]
        return cls(ordered, "\n\n".join(sections))

    def text_for(self, layer: SceneLayer) -> str:
        for entry in self.entries:
            if entry.layer is layer:
                return entry.text
        raise KeyError(layer)
