"""Image loading, resolution control and wire encoding.

Resolution levels name the target height in pixels; width follows the
source aspect ratio.  Resampling uses one fixed kernel so output
dimensions are reproducible everywhere (byte equality across platforms
is explicitly not promised).
"""

from __future__ import annotations

import base64
import enum
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

from PIL import Image

from .core import ImageInput


class ResolutionLevel(enum.IntEnum):
    """Supported target heights."""

    P180 = 180
    P240 = 240
    P360 = 360
    P540 = 540
    P720 = 720


#: All levels, ascending.
RESOLUTION_LEVELS: tuple[ResolutionLevel, ...] = tuple(ResolutionLevel)

#: Reference level for image token accounting.
BASE_LEVEL = ResolutionLevel.P360

#: Fixed resampling kernel.
RESAMPLE_KERNEL = Image.LANCZOS

#: JPEG re-encode quality, fixed for reproducibility on one platform.
_JPEG_QUALITY = 90

_MEDIA_BY_FORMAT = {"PNG": "image/png", "JPEG": "image/jpeg"}
_FORMAT_BY_MEDIA = {"image/png": "PNG", "image/jpeg": "JPEG"}


class ImageDecodeError(ValueError):
    """File exists but does not decode as a supported image."""


class UnsupportedMediaError(ValueError):
    """Payload is not a media type the wire encoder supports."""


@dataclass(frozen=True)
class ResizedImage:
    """Resize outcome: the new image plus how it was produced."""

    image: ImageInput
    level: ResolutionLevel
    upscaled: bool


def coerce_level(value: int) -> ResolutionLevel:
    """Validate an integer height against the supported levels."""
    try:
        return ResolutionLevel(int(value))
    except ValueError:
        allowed = ", ".join(str(int(lv)) for lv in RESOLUTION_LEVELS)
        raise ValueError(f"unsupported resolution level {value}; expected one of {allowed}") from None


def load_image(path: str | Path, image_id: str | None = None) -> ImageInput:
    """Decode an image file into an ``ImageInput``.

    The logical id defaults to the file stem.  Corrupt or unsupported
    files raise ``ImageDecodeError`` naming the path.
    """
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ImageDecodeError(f"cannot read image {p}: {exc}") from exc
    try:
        with Image.open(BytesIO(data)) as im:
            im.load()
            fmt = im.format or ""
            width, height = im.size
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode image {p}: {exc}") from exc
    media_type = _MEDIA_BY_FORMAT.get(fmt)
    if media_type is None:
        raise ImageDecodeError(f"cannot decode image {p}: unsupported format {fmt or 'unknown'}")
    return ImageInput.from_bytes(
        image_id or p.stem, data, width, height, media_type, source_path=str(p)
    )


def target_width(orig_width: int, orig_height: int, level: int) -> int:
    """Width preserving aspect ratio at the given target height.

    Round half up, floor of 1 pixel.
    """
    return max(1, int(orig_width * level / orig_height + 0.5))


def resize(image: ImageInput, level: ResolutionLevel | int) -> ResizedImage:
    """Scale an image to a resolution level.

    Height becomes exactly ``level``; width follows the aspect ratio.
    Sources smaller than the target are upscaled and flagged.  The
    logical image id is preserved; bytes and digest change.
    """
    lv = coerce_level(level)
    new_h = int(lv)
    new_w = target_width(image.width, image.height, new_h)
    if (new_w, new_h) == (image.width, image.height):
        return ResizedImage(image, lv, upscaled=False)

    fmt = _FORMAT_BY_MEDIA[image.media_type]
    with Image.open(BytesIO(image.data)) as im:
        resized = im.resize((new_w, new_h), RESAMPLE_KERNEL)
        buf = BytesIO()
        if fmt == "JPEG":
            resized.save(buf, format=fmt, quality=_JPEG_QUALITY)
        else:
            resized.save(buf, format=fmt)
    out = ImageInput.from_bytes(
        image.image_id, buf.getvalue(), new_w, new_h, image.media_type,
        source_path=image.source_path,
    )
    return ResizedImage(out, lv, upscaled=new_h > image.height)


def token_scale_factor(level: ResolutionLevel | int, base: ResolutionLevel | int = BASE_LEVEL) -> float:
    """Image token cost multiplier of ``level`` relative to ``base``.

    Token cost scales with pixel area, hence quadratically with height.
    """
    lv = coerce_level(level)
    bs = coerce_level(base)
    return (int(lv) / int(bs)) ** 2


def sniff_media_type(data: bytes) -> str:
    """Identify PNG or JPEG payloads by magic bytes."""
    if data.startswith(b"\x89PNG\r\n\x1a\n"):
        return "image/png"
    if data.startswith(b"\xff\xd8\xff"):
        return "image/jpeg"
    raise UnsupportedMediaError("payload is neither PNG nor JPEG")


def encode_for_wire(data: bytes) -> str:
    """Base64 data URI for an image payload, media type sniffed from magic bytes."""
    if not data:
        raise UnsupportedMediaError("empty image payload")
    media_type = sniff_media_type(data)
    return f"data:{media_type};base64,{base64.b64encode(data).decode('ascii')}"
