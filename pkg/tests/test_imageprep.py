"""Resolution levels, resize geometry, token scaling, wire encoding.

Width expectations below are frozen from hand-computed round-half-up
values (width = orig_w * level / orig_h, rounded half up, floor 1).
"""

import base64
from io import BytesIO

import pytest
from PIL import Image as PILImage

from drivelens.core import ImageInput
from drivelens.imageprep import (
    BASE_LEVEL,
    RESOLUTION_LEVELS,
    ImageDecodeError,
    ResolutionLevel,
    UnsupportedMediaError,
    coerce_level,
    encode_for_wire,
    load_image,
    resize,
    sniff_media_type,
    target_width,
    token_scale_factor,
)
from conftest import jpeg_bytes, png_bytes, write_png


def image_input(width, height, data=None):
    data = data if data is not None else png_bytes(width, height)
    return ImageInput.from_bytes("img", data, width, height, "image/png")


class TestLevels:
    def test_supported_levels(self):
        assert tuple(int(lv) for lv in RESOLUTION_LEVELS) == (180, 240, 360, 540, 720)
        assert int(BASE_LEVEL) == 360

    def test_coerce_level(self):
        assert coerce_level(540) is ResolutionLevel.P540
        with pytest.raises(ValueError):
            coerce_level(400)


class TestTargetWidth:
    # (orig_w, orig_h, level) -> frozen expected width
    CASES = [
        (1000, 333, 180, 541),   # 540.54... rounds up
        (1920, 1080, 360, 640),
        (1920, 1080, 540, 960),
        (1920, 1080, 720, 1280),
        (101, 50, 180, 364),     # 363.6 rounds up
        (25, 72, 180, 63),       # exactly 62.5: half rounds up, not to even
        (16, 12, 360, 480),
        (1, 2000, 180, 1),       # floor of one pixel
    ]

    @pytest.mark.parametrize("w,h,level,expected", CASES)
    def test_frozen_widths(self, w, h, level, expected):
        assert target_width(w, h, level) == expected


class TestResize:
    def test_resize_geometry_and_id(self):
        src = image_input(1000, 333)
        out = resize(src, 180)
        assert (out.image.width, out.image.height) == (541, 180)
        assert out.image.image_id == "img"
        assert out.level is ResolutionLevel.P180
        decoded = PILImage.open(BytesIO(out.image.data))
        assert decoded.size == (541, 180)

    def test_upscale_flagged(self):
        assert resize(image_input(16, 12), 360).upscaled is True
        assert resize(image_input(2000, 1500), 360).upscaled is False

    def test_noop_when_already_at_target(self):
        src = image_input(480, 360)
        out = resize(src, 360)
        assert out.image is src
        assert out.upscaled is False

    def test_jpeg_stays_jpeg(self):
        data = jpeg_bytes(100, 80)
        src = ImageInput.from_bytes("j", data, 100, 80, "image/jpeg")
        out = resize(src, 180)
        assert out.image.media_type == "image/jpeg"
        assert sniff_media_type(out.image.data) == "image/jpeg"

    def test_digest_tracks_bytes(self):
        src = image_input(100, 80)
        out = resize(src, 180)
        assert out.image.digest != src.digest
        again = resize(src, 180)
        assert again.image.digest == out.image.digest


class TestTokenScale:
    # Frozen quadratic ratios vs the 360 base.
    RATIOS = {180: 0.25, 240: 4 / 9, 360: 1.0, 540: 2.25, 720: 4.0}

    @pytest.mark.parametrize("level,ratio", sorted(RATIOS.items()))
    def test_ratios(self, level, ratio):
        assert token_scale_factor(level) == pytest.approx(ratio, abs=1e-12)


class TestLoadImage:
    def test_load_png(self, tmp_path):
        path = write_png(tmp_path / "a.png", 20, 10)
        image = load_image(path)
        assert (image.width, image.height) == (20, 10)
        assert image.media_type == "image/png"
        assert image.image_id == "a"
        assert image.source_path == str(path)

    def test_explicit_id_wins(self, tmp_path):
        path = write_png(tmp_path / "a.png")
        assert load_image(path, "item-7").image_id == "item-7"

    def test_digest_is_pure_function_of_bytes(self, tmp_path):
        p1 = write_png(tmp_path / "a.png", color=(1, 2, 3))
        p2 = tmp_path / "b.png"
        p2.write_bytes(p1.read_bytes())
        assert load_image(p1).digest == load_image(p2).digest

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageDecodeError, match="cannot read"):
            load_image(tmp_path / "absent.png")

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(png_bytes()[:20])
        with pytest.raises(ImageDecodeError, match="cannot decode"):
            load_image(path)

    def test_unsupported_format(self, tmp_path):
        buf = BytesIO()
        PILImage.new("RGB", (4, 4)).save(buf, format="GIF")
        path = tmp_path / "a.gif"
        path.write_bytes(buf.getvalue())
        with pytest.raises(ImageDecodeError, match="unsupported format"):
            load_image(path)


class TestWire:
    def test_sniff(self):
        assert sniff_media_type(png_bytes()) == "image/png"
        assert sniff_media_type(jpeg_bytes()) == "image/jpeg"
        with pytest.raises(UnsupportedMediaError):
            sniff_media_type(b"GIF89a....")

    def test_data_uri_round_trip(self):
        data = png_bytes(8, 8)
        uri = encode_for_wire(data)
        prefix = "data:image/png;base64,"
        assert uri.startswith(prefix)
        assert base64.b64decode(uri[len(prefix):]) == data

    def test_empty_payload_rejected(self):
        with pytest.raises(UnsupportedMediaError):
            encode_for_wire(b"")
