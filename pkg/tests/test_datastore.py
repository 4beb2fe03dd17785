"""Manifests, correction log replay, subsets, auto-labeling, stats, export."""

import json
from dataclasses import replace

import pytest

from drivelens.core import LabelProvenance, SceneLayer, parse_verdict
from drivelens.datastore import (
    EXPORT_PIPELINE,
    EXPORT_SINGLE_SHOT,
    DatasetRecord,
    ExportError,
    InsufficientClassError,
    ManifestError,
    ReviewState,
    SplitSpec,
    append_correction,
    apply_review_entry,
    autolabel,
    autolabel_plan,
    balanced_subset,
    dataset_stats,
    export_finetune,
    load_corrections,
    load_manifest,
    replay_corrections,
    review_entry,
    save_manifest,
)
from drivelens.pipeline import get_method
from conftest import build_records, make_annotation, make_gold, mock_model, oracle_gateway


class TestManifestIO:
    def test_round_trip_identity(self, tmp_path):
        records = build_records(tmp_path, [("a", True, "I.M"), ("b", False, "")])
        records[0] = replace(
            records[0], annotation=make_annotation(True, "I.M"),
            review_state=ReviewState.ACCEPTED,
        )
        path = tmp_path / "m.jsonl"
        save_manifest(records, path)
        assert load_manifest(path) == records

    def test_header_required(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a", "image": "x.png"}\n', encoding="utf-8")
        with pytest.raises(ManifestError, match="header"):
            load_manifest(path)

    def test_duplicate_ids_rejected_with_line(self, tmp_path):
        records = build_records(tmp_path, [("a", False, "")])
        path = tmp_path / "m.jsonl"
        save_manifest(records + records, path)
        with pytest.raises(ManifestError, match=r"m\.jsonl:3: duplicate item id"):
            load_manifest(path)

    def test_inconsistent_gold_rejected_with_rule(self, tmp_path):
        path = tmp_path / "m.jsonl"
        lines = [
            json.dumps({"format": "dataset-manifest", "version": 1}),
            json.dumps({"id": "a", "image": "a.png",
                        "gold": {"anomalous": False, "layers": ["M"], "provenance": "manual"}}),
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(ManifestError, match="flags_on_normal"):
            load_manifest(path)

    def test_bad_json_names_file_and_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            json.dumps({"format": "dataset-manifest", "version": 1}) + "\n{torn\n",
            encoding="utf-8",
        )
        with pytest.raises(ManifestError, match=r"m\.jsonl:2"):
            load_manifest(path)


class TestCorrectionLog:
    def entry_for(self, record, decision="accept", gold=None, **kw):
        gold = gold or make_gold(True, "M", LabelProvenance.MODEL)
        return review_entry(
            record, decision, gold, "rev-1",
            now=lambda: "2026-01-01T00:00:00+00:00", **kw,
        )

    def test_append_creates_header_then_appends(self, tmp_path):
        records = build_records(tmp_path, [("a", True, "M")])
        log = tmp_path / "log.jsonl"
        append_correction(log, self.entry_for(records[0]))
        append_correction(log, self.entry_for(records[0], decision="correct"))
        lines = log.read_text().splitlines()
        assert json.loads(lines[0])["format"] == "correction-log"
        assert len(lines) == 3
        assert len(load_corrections(log)) == 2

    def test_replay_matches_incremental_application(self, tmp_path):
        records = build_records(
            tmp_path, [("a", True, "M"), ("b", False, ""), ("c", True, "S")]
        )
        records = [replace(r, annotation=make_annotation(True, "M")) for r in records]
        log = tmp_path / "log.jsonl"

        live = {r.item_id: r for r in records}
        decisions = [
            ("a", "accept", make_gold(True, "M", LabelProvenance.MODEL), None),
            ("b", "correct", make_gold(True, "E.S", LabelProvenance.MODEL_THEN_HUMAN_CORRECTED),
             {SceneLayer.STREET: "curb damage throughout"}),
            ("a", "correct", make_gold(False, "", LabelProvenance.MODEL_THEN_HUMAN_CORRECTED), None),
        ]
        for item_id, decision, gold, descriptions in decisions:
            entry = review_entry(
                live[item_id], decision, gold, "rev-1", corrected_descriptions=descriptions
            )
            append_correction(log, entry)
            live[item_id] = apply_review_entry(live[item_id], entry)

        replayed = replay_corrections(records, log)
        assert replayed == [live[r.item_id] for r in records]
        corrected = next(r for r in replayed if r.item_id == "b")
        assert corrected.review_state is ReviewState.CORRECTED
        assert corrected.gold == make_gold(True, "E.S", LabelProvenance.MODEL_THEN_HUMAN_CORRECTED)
        assert corrected.annotation.scene_texts[SceneLayer.STREET] == "curb damage throughout"

    def test_replay_rejects_unknown_items(self, tmp_path):
        records = build_records(tmp_path, [("a", True, "M")])
        log = tmp_path / "log.jsonl"
        append_correction(log, self.entry_for(replace(records[0], item_id="ghost")))
        with pytest.raises(ManifestError, match="unknown item"):
            replay_corrections(records, log)

    def test_missing_log_is_empty(self, tmp_path):
        assert load_corrections(tmp_path / "absent.jsonl") == []
        records = build_records(tmp_path, [("a", True, "M")])
        assert replay_corrections(records, tmp_path / "absent.jsonl") == records


class TestBalancedSubset:
    def make_pool(self, tmp_path, n_anomalous=12, n_normal=8):
        golds = [(f"a{i:03d}", True, "M") for i in range(n_anomalous)]
        golds += [(f"n{i:03d}", False, "") for i in range(n_normal)]
        return build_records(tmp_path, golds)

    def test_class_counts_and_order(self, tmp_path):
        records = self.make_pool(tmp_path)
        subset, complement = balanced_subset(records, SplitSpec(size=9, seed=3))
        assert len(subset) == 9
        anomalous = [r for r in subset if r.gold.is_anomalous]
        assert len(anomalous) == 5  # ceil(9/2)
        assert [r.item_id for r in subset] == [
            r.item_id for r in records if r in subset
        ]  # manifest order preserved
        assert {r.item_id for r in subset} | {r.item_id for r in complement} == {
            r.item_id for r in records
        }
        assert not {r.item_id for r in subset} & {r.item_id for r in complement}

    def test_seed_determinism(self, tmp_path):
        records = self.make_pool(tmp_path)
        first, _ = balanced_subset(records, SplitSpec(size=10, seed=42))
        second, _ = balanced_subset(records, SplitSpec(size=10, seed=42))
        other, _ = balanced_subset(records, SplitSpec(size=10, seed=43))
        assert [r.item_id for r in first] == [r.item_id for r in second]
        assert [r.item_id for r in first] != [r.item_id for r in other]

    def test_insufficient_class_named(self, tmp_path):
        records = self.make_pool(tmp_path, n_anomalous=2, n_normal=10)
        with pytest.raises(InsufficientClassError, match="need 5 anomalous items, have 2"):
            balanced_subset(records, SplitSpec(size=10, seed=0))

    def test_unbalanced_mode(self, tmp_path):
        records = self.make_pool(tmp_path)
        subset, _ = balanced_subset(records, SplitSpec(size=7, seed=1, balanced=False))
        assert len(subset) == 7

    def test_unlabeled_rejected(self, tmp_path):
        records = self.make_pool(tmp_path, 2, 2)
        records[0] = replace(records[0], gold=None)
        with pytest.raises(ValueError, match="gold labels"):
            balanced_subset(records, SplitSpec(size=2, seed=0))


class TestAutolabel:
    GOLDS = [("item-1", True, "I.M"), ("item-2", False, ""), ("item-3", True, "E")]

    def test_annotates_everything(self, prompts, tmp_path):
        records = build_records(tmp_path, self.GOLDS)
        gw, backend = oracle_gateway(records)
        store = tmp_path / "store.jsonl"
        merged = autolabel(records, get_method("full"), mock_model(), gw, prompts, store)
        assert backend.calls == 15
        assert all(r.annotation is not None for r in merged)
        anno = merged[0].annotation
        assert anno.verdict.is_anomalous is True
        assert set(anno.scene_texts) == set(SceneLayer)
        assert merged[0].review_state is ReviewState.UNREVIEWED

    def test_resume_skips_stored_items(self, prompts, tmp_path):
        records = build_records(tmp_path, self.GOLDS)
        store = tmp_path / "store.jsonl"
        gw, backend = oracle_gateway(records)
        autolabel(records[:2], get_method("image"), mock_model(), gw, prompts, store)
        assert backend.calls == 2
        assert autolabel_plan(records, store) == records[2:]

        merged = autolabel(records, get_method("image"), mock_model(), gw, prompts, store)
        assert backend.calls == 3  # only the third item ran
        assert all(r.annotation is not None for r in merged)

    def test_force_reruns(self, prompts, tmp_path):
        records = build_records(tmp_path, self.GOLDS[:1])
        store = tmp_path / "store.jsonl"
        gw, backend = oracle_gateway(records)
        autolabel(records, get_method("image"), mock_model(), gw, prompts, store)
        autolabel(records, get_method("image"), mock_model(), gw, prompts, store, force=True)
        assert backend.calls == 2
        assert len(autolabel_plan(records, store, force=True)) == 1

    def test_unreadable_image_becomes_error_entry(self, prompts, tmp_path):
        records = build_records(tmp_path, self.GOLDS[:2])
        records[1] = replace(records[1], image_path=str(tmp_path / "gone.png"))
        gw, _ = oracle_gateway(records)
        store = tmp_path / "store.jsonl"
        merged = autolabel(records, get_method("image"), mock_model(), gw, prompts, store)
        assert merged[0].annotation is not None
        assert merged[1].annotation is None
        assert "ImageDecodeError" in merged[1].error
        # the error is persisted, so a resume does not retry silently
        assert autolabel_plan(records, store) == []


class TestStats:
    def test_small_fixture(self, tmp_path):
        records = build_records(
            tmp_path,
            [
                ("a", True, "M"),
                ("b", True, "I.M"),
                ("c", True, "E.S.I.M"),
                ("d", False, ""),
                ("e", False, ""),
            ],
        )
        stats = dataset_stats(records)
        assert stats.total == 5
        assert stats.anomalous == 3 and stats.normal == 2
        assert stats.anomalous_share == pytest.approx(0.6)
        assert stats.layer_counts[SceneLayer.MOVABLE_OBJECTS] == 3
        assert stats.layer_share(SceneLayer.MOVABLE_OBJECTS) == pytest.approx(1.0)
        assert stats.layer_share(SceneLayer.ENVIRONMENT) == pytest.approx(1 / 3)
        assert stats.combination_counts == {"M": 1, "I.M": 1, "E.S.I.M": 1}
        assert stats.multilayer_hist == {1: 1, 2: 1, 4: 1}
        assert stats.multilayer_share(4) == pytest.approx(1 / 3)

    def test_empty(self):
        stats = dataset_stats([])
        assert stats.total == 0
        assert stats.anomalous_share == 0.0
        assert stats.layer_share(SceneLayer.STREET) == 0.0


def reviewed_records(tmp_path, with_scene=True):
    records = build_records(tmp_path, [("a", True, "I.M"), ("b", False, ""), ("c", True, "S")])
    out = []
    for record, state in zip(records, [ReviewState.ACCEPTED, ReviewState.CORRECTED,
                                       ReviewState.UNREVIEWED]):
        annotation = make_annotation(
            record.gold.is_anomalous,
            ".".join(sorted(l.code for l in record.gold.layer_flags)),
            with_scene=with_scene,
        )
        out.append(replace(record, annotation=annotation, review_state=state))
    return out


class TestExport:
    def test_single_shot_shape(self, prompts, tmp_path):
        records = reviewed_records(tmp_path)
        out = tmp_path / "ft.jsonl"
        result = export_finetune(records, EXPORT_SINGLE_SHOT, prompts, out)
        assert result.items == 2
        assert result.conversations == 2
        assert result.excluded_unreviewed == 1
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["mode"] == EXPORT_SINGLE_SHOT
        convo = json.loads(lines[1])
        user, assistant = convo["messages"]
        assert user["role"] == "user" and user["content"].startswith("<image>\n")
        verdict = parse_verdict(assistant["content"])
        assert verdict.is_anomalous is True
        assert convo["images"] == [records[0].image_path]

    def test_pipeline_mode_emits_two_per_item(self, prompts, tmp_path):
        records = reviewed_records(tmp_path)
        out = tmp_path / "ft.jsonl"
        result = export_finetune(records, EXPORT_PIPELINE, prompts, out)
        assert result.items == 2 and result.conversations == 4
        lines = [json.loads(l) for l in out.read_text().splitlines()[1:]]
        describe, evaluate = lines[0], lines[1]
        assert "## Street" in describe["messages"][1]["content"]
        assert describe["messages"][1]["content"] in evaluate["messages"][0]["content"]
        final = parse_verdict(evaluate["messages"][1]["content"])
        assert final.is_anomalous is True

    def test_corrected_gold_wins_over_annotation(self, prompts, tmp_path):
        records = reviewed_records(tmp_path)
        flipped = replace(
            records[1],
            gold=make_gold(True, "E", LabelProvenance.MODEL_THEN_HUMAN_CORRECTED),
        )
        out = tmp_path / "ft.jsonl"
        export_finetune([flipped], EXPORT_SINGLE_SHOT, prompts, out)
        convo = json.loads(out.read_text().splitlines()[1])
        verdict = parse_verdict(convo["messages"][1]["content"])
        assert verdict.is_anomalous is True
        assert verdict.layer_flags == frozenset({SceneLayer.ENVIRONMENT})
        assert verdict.rationale == "curated reference label"

    def test_pipeline_requires_scene_texts(self, prompts, tmp_path):
        records = reviewed_records(tmp_path, with_scene=False)
        with pytest.raises(ExportError, match="missing on: a"):
            export_finetune(records, EXPORT_PIPELINE, prompts, tmp_path / "ft.jsonl")

    def test_unknown_mode_rejected(self, prompts, tmp_path):
        with pytest.raises(ExportError, match="unknown export mode"):
            export_finetune([], "both", prompts, tmp_path / "ft.jsonl")
