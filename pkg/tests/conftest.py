"""Shared fixtures: tiny images, dataset builders, mock gateways."""

from __future__ import annotations

from io import BytesIO
from pathlib import Path

import pytest
from PIL import Image as PILImage

from drivelens.core import (
    AnomalyVerdict,
    GoldLabel,
    LabelProvenance,
    ParseStatus,
    SceneLayer,
    layers_from_codes,
)
from drivelens.datastore import DatasetRecord, ModelAnnotation
from drivelens.gateway import (
    KIND_MOCK,
    Gateway,
    ModelSpec,
    OracleMockBackend,
    ScriptedMockBackend,
)
from drivelens.pipeline import default_prompt_set


def png_bytes(width: int = 16, height: int = 12, color=(40, 90, 160)) -> bytes:
    buf = BytesIO()
    PILImage.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(width: int = 16, height: int = 12, color=(40, 90, 160)) -> bytes:
    buf = BytesIO()
    PILImage.new("RGB", (width, height), color).save(buf, format="JPEG", quality=90)
    return buf.getvalue()


def make_gold(anomalous: bool, codes: str = "", provenance=LabelProvenance.MANUAL) -> GoldLabel:
    return GoldLabel(anomalous, layers_from_codes(codes.split(".") if codes else []), provenance)


def write_png(path: Path, width: int = 16, height: int = 12, color=(40, 90, 160)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(width, height, color))
    return path


def build_records(
    root: Path,
    golds: list[tuple[str, bool, str]],
    size: tuple[int, int] = (16, 12),
) -> list[DatasetRecord]:
    """One PNG plus one labeled record per (item_id, anomalous, key) triple."""
    records = []
    for i, (item_id, anomalous, codes) in enumerate(golds):
        path = write_png(root / "imgs" / f"{item_id}.png", *size, color=(i % 251, 90, 160))
        records.append(
            DatasetRecord(item_id=item_id, image_path=str(path), gold=make_gold(anomalous, codes))
        )
    return records


def mock_model(name: str = "mock-oracle", **overrides) -> ModelSpec:
    return ModelSpec(name=name, kind=KIND_MOCK, **overrides)


def oracle_gateway(
    records: list[DatasetRecord],
    error_rate: float = 0.0,
    seed: int = 0,
    wrong_item_ids=(),
    cache=None,
) -> tuple[Gateway, OracleMockBackend]:
    gold = {r.item_id: r.gold for r in records if r.gold is not None}
    backend = OracleMockBackend(
        gold, error_rate=error_rate, seed=seed, wrong_item_ids=frozenset(wrong_item_ids)
    )
    return Gateway(backend, cache=cache), backend


def scripted_gateway(cache=None, sleeper=lambda s: None) -> tuple[Gateway, ScriptedMockBackend]:
    backend = ScriptedMockBackend()
    return Gateway(backend, cache=cache, sleeper=sleeper), backend


def make_annotation(
    anomalous: bool,
    codes: str = "",
    model_name: str = "mock-oracle",
    with_scene: bool = True,
) -> ModelAnnotation:
    flags = layers_from_codes(codes.split(".") if codes else [])
    verdict = AnomalyVerdict(anomalous, flags, "model rationale", ParseStatus.PARSED)
    scene = None
    if with_scene:
        scene = {layer: f"{layer.label} looks ordinary here." for layer in SceneLayer}
    return ModelAnnotation(model_name, verdict, scene, None)


@pytest.fixture(scope="session")
def prompts():
    return default_prompt_set()


@pytest.fixture
def tiny_png(tmp_path: Path) -> Path:
    return write_png(tmp_path / "tiny.png")
