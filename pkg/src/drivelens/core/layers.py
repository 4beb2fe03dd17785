"""Semantic layers of a driving scene.

A scene is decomposed into four layers.  Declaration order below is the
canonical analysis order used everywhere layers are iterated; combination
keys use a separate fixed code order (see ``combination_key``).
"""

from __future__ import annotations

import enum
from collections.abc import Iterable


class SceneLayer(enum.Enum):
    """One semantic layer of a driving scene.

    The value is the layer's one-letter code used in labels, verdict
    blocks and combination keys.
    """

    STREET = "S"
    INFRASTRUCTURE = "I"
    MOVABLE_OBJECTS = "M"
    ENVIRONMENT = "E"

    @property
    def code(self) -> str:
        """One-letter code (``S``, ``I``, ``M`` or ``E``)."""
        return self.value

    @property
    def label(self) -> str:
        """Human-readable name, e.g. ``Movable Objects``."""
        return _LABELS[self]

    @classmethod
    def from_code(cls, code: str) -> "SceneLayer":
        """Resolve a one-letter code, case-insensitively."""
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ValueError(f"unknown layer code: {code!r}") from None

    def __repr__(self) -> str:  # keep test output short
        return f"SceneLayer.{self.name}"


_LABELS = {
    SceneLayer.STREET: "Street",
    SceneLayer.INFRASTRUCTURE: "Infrastructure",
    SceneLayer.MOVABLE_OBJECTS: "Movable Objects",
    SceneLayer.ENVIRONMENT: "Environment",
}

#: Canonical analysis order: Street, Infrastructure, Movable Objects, Environment.
CANONICAL_ORDER: tuple[SceneLayer, ...] = tuple(SceneLayer)

#: Fixed order of codes inside combination keys: E, S, I, M.
KEY_ORDER: tuple[SceneLayer, ...] = (
    SceneLayer.ENVIRONMENT,
    SceneLayer.STREET,
    SceneLayer.INFRASTRUCTURE,
    SceneLayer.MOVABLE_OBJECTS,
)

#: Key used for the empty layer set.
EMPTY_KEY = "none"


def combination_key(flags: Iterable[SceneLayer]) -> str:
    """Stable key for a set of layer flags.

    Codes of the present layers joined with ``.`` in the fixed order
    E, S, I, M; the empty set maps to ``"none"``.  Input order and
    duplicates do not matter.
    """
    present = set(flags)
    if not present:
        return EMPTY_KEY
    return ".".join(layer.code for layer in KEY_ORDER if layer in present)


def layers_from_codes(codes: Iterable[str]) -> frozenset[SceneLayer]:
    """Build a flag set from one-letter codes (case-insensitive)."""
    return frozenset(SceneLayer.from_code(c) for c in codes)


def flags_from_key(key: str) -> frozenset[SceneLayer]:
    """Inverse of ``combination_key``."""
    if key == EMPTY_KEY:
        return frozenset()
    return layers_from_codes(key.split("."))


def sorted_canonical(flags: Iterable[SceneLayer]) -> tuple[SceneLayer, ...]:
    """Return the given layers sorted in canonical analysis order."""
    present = set(flags)
    return tuple(layer for layer in CANONICAL_ORDER if layer in present)
