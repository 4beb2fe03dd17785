"""Image value type handed to the pipeline.

Decoding, resizing and wire encoding live in ``drivelens.imageprep``;
this type only carries decoded bytes plus identity and geometry.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass


@dataclass(frozen=True)
class ImageInput:
    """A decoded image with stable identity.

    ``image_id`` is the logical id of the source picture and survives
    resizing; ``digest`` is the sha256 of ``data`` and therefore changes
    whenever the bytes change.
    """

    image_id: str
    data: bytes
    width: int
    height: int
    media_type: str
    digest: str
    source_path: str | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid dimensions {self.width}x{self.height}")
        if not self.data:
            raise ValueError("image data must be non-empty")

    @classmethod
    def from_bytes(
        cls,
        image_id: str,
        data: bytes,
        width: int,
        height: int,
        media_type: str,
        source_path: str | None = None,
    ) -> "ImageInput":
        digest = hashlib.sha256(data).hexdigest()
        return cls(image_id, data, width, height, media_type, digest, source_path)
