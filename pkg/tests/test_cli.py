"""End-to-end CLI behavior through main(argv)."""

import json
from dataclasses import replace

import pytest

from drivelens import __version__
from drivelens.cli import main
from drivelens.datastore import ReviewState, load_manifest, save_manifest
from conftest import build_records, make_annotation, write_png


@pytest.fixture()
def manifest(tmp_path):
    records = build_records(
        tmp_path,
        [("item-1", True, "I.M"), ("item-2", False, ""), ("item-3", True, "E")],
    )
    path = tmp_path / "manifest.jsonl"
    save_manifest(records, path)
    return path


class TestEval:
    def test_dry_run_prints_plan(self, manifest, capsys):
        assert main(["eval", "--manifest", str(manifest), "--method", "full", "--dry-run"]) == 0
        out = capsys.readouterr().out
        assert "plan: method=full items=3" in out
        assert "plan: queries/item=5 total_queries=15" in out
        assert "plan: no model calls made (dry run)" in out

    def test_limit_shrinks_plan(self, manifest, capsys):
        main(["eval", "--manifest", str(manifest), "--method", "image",
              "--limit", "2", "--dry-run"])
        assert "items=2" in capsys.readouterr().out

    def test_oracle_run_writes_report(self, manifest, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code = main([
            "eval", "--manifest", str(manifest), "--method", "baseline",
            "--out", str(out_dir),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "method=baseline model=mock-oracle resolution=360p" in out
        assert "items=3 errors=0 tp=2 fp=0 tn=1 fn=0" in out
        assert "accuracy=1.000" in out
        for name in ("items.jsonl", "summary.csv", "failure_rates.csv", "files.json"):
            assert (out_dir / name).exists()

    def test_unknown_method_is_usage_error(self, manifest, capsys):
        assert main(["eval", "--manifest", str(manifest), "--method", "psychic"]) == 2
        assert "error (usage)" in capsys.readouterr().err

    def test_missing_manifest_is_data_error(self, tmp_path, capsys):
        code = main(["eval", "--manifest", str(tmp_path / "nope.jsonl"), "--method", "image"])
        assert code == 1
        assert "error (data): cannot read manifest" in capsys.readouterr().err

    def test_scripted_model_needs_fixture(self, manifest, capsys):
        code = main(["eval", "--manifest", str(manifest), "--method", "image",
                     "--model", "mock-scripted"])
        assert code == 2
        assert "error (usage)" in capsys.readouterr().err


class TestReport:
    def test_rerender_matches_live_summary(self, manifest, tmp_path, capsys):
        out_dir = tmp_path / "run"
        main(["eval", "--manifest", str(manifest), "--method", "full", "--out", str(out_dir)])
        live = [
            line for line in capsys.readouterr().out.splitlines()
            if not line.startswith("report written")
        ]

        assert main(["report", str(out_dir)]) == 0
        assert capsys.readouterr().out.splitlines() == live


class TestStatsAndSplit:
    def test_stats_output(self, manifest, capsys):
        assert main(["stats", "--manifest", str(manifest)]) == 0
        out = capsys.readouterr().out
        assert "records=3 labeled=3" in out
        assert "anomalous=2 (66.7%) normal=1" in out
        assert "combinations:" in out

    def test_split_round_trip(self, manifest, tmp_path, capsys):
        sub, comp = tmp_path / "sub.jsonl", tmp_path / "comp.jsonl"
        code = main(["split", "--manifest", str(manifest), "--size", "2", "--seed", "7",
                     "--out", str(sub), "--complement-out", str(comp)])
        assert code == 0
        subset, complement = load_manifest(sub), load_manifest(comp)
        assert len(subset) == 2 and len(complement) == 1
        assert {r.item_id for r in subset} | {r.item_id for r in complement} == {
            "item-1", "item-2", "item-3"
        }

        main(["split", "--manifest", str(manifest), "--size", "2", "--seed", "7",
              "--out", str(tmp_path / "again.jsonl")])
        assert load_manifest(tmp_path / "again.jsonl") == subset

    def test_split_too_large_is_invalid(self, manifest, tmp_path, capsys):
        code = main(["split", "--manifest", str(manifest), "--size", "9",
                     "--out", str(tmp_path / "s.jsonl")])
        assert code == 1
        assert "error (invalid)" in capsys.readouterr().err


class TestLabel:
    def test_dry_run_then_label_then_resume(self, manifest, tmp_path, capsys):
        store = tmp_path / "store.jsonl"
        main(["label", "--manifest", str(manifest), "--method", "image",
              "--store", str(store), "--dry-run"])
        assert "plan: 3 of 3 item(s) pending annotation" in capsys.readouterr().out

        out_manifest = tmp_path / "annotated.jsonl"
        code = main(["label", "--manifest", str(manifest), "--method", "image",
                     "--store", str(store), "--out-manifest", str(out_manifest)])
        assert code == 0
        assert "labeled 3/3 item(s), 0 error(s)" in capsys.readouterr().out
        merged = load_manifest(out_manifest)
        assert all(r.annotation is not None for r in merged)

        main(["label", "--manifest", str(manifest), "--method", "image",
              "--store", str(store), "--dry-run"])
        assert "plan: 0 of 3 item(s) pending annotation" in capsys.readouterr().out


class TestExport:
    def test_export_after_review(self, manifest, tmp_path, capsys):
        records = load_manifest(manifest)
        records = [
            replace(
                r,
                annotation=make_annotation(
                    r.gold.is_anomalous,
                    ".".join(sorted(layer.code for layer in r.gold.layer_flags)),
                ),
                review_state=ReviewState.ACCEPTED,
            )
            for r in records
        ]
        reviewed = tmp_path / "reviewed.jsonl"
        save_manifest(records, reviewed)
        out = tmp_path / "ft.jsonl"
        code = main(["export-ft", "--manifest", str(reviewed), "--mode", "single_shot",
                     "--out", str(out)])
        assert code == 0
        assert "exported 3 conversation(s) for 3 item(s)" in capsys.readouterr().out
        assert len(out.read_text().splitlines()) == 4  # header + one per item


class TestDescribe:
    def test_scripted_describe(self, tmp_path, capsys):
        image = tmp_path / "scene.png"
        write_png(image)
        fixture = tmp_path / "fixture.jsonl"
        fixture.write_text(
            json.dumps({"format": "mock-fixture", "version": 1}) + "\n"
            + json.dumps({"default": True, "response": "A quiet ordinary view."}) + "\n",
            encoding="utf-8",
        )
        code = main(["describe", str(image), "--model", "mock-scripted",
                     "--mock-fixture", str(fixture)])
        assert code == 0
        out = capsys.readouterr().out
        assert "## Street" in out and "## Environment" in out
        assert "A quiet ordinary view." in out


class TestOptimize:
    def test_rejects_unlayered_method(self, manifest, tmp_path, capsys):
        code = main(["optimize", "--manifest", str(manifest), "--dev-manifest", str(manifest),
                     "--method", "baseline", "--out", str(tmp_path / "opt")])
        assert code == 2
        assert "layered" in capsys.readouterr().err

    def test_small_run_writes_artifacts(self, manifest, tmp_path, capsys):
        out = tmp_path / "opt"
        code = main([
            "optimize", "--manifest", str(manifest), "--dev-manifest", str(manifest),
            "--method", "full", "--out", str(out),
            "--proposals", "0", "--max-programs", "2", "--max-evals", "3", "--demos", "1",
        ])
        assert code == 0
        assert "optimized prompts written to" in capsys.readouterr().out
        summary = json.loads((out / "search.json").read_text())
        assert summary["dev_score"] >= summary["incumbent_score"]
        assert (out / "trace.jsonl").exists()

    def test_proposals_survive_oracle_model(self, manifest, tmp_path, capsys):
        # The oracle mock cannot answer the item-free rewrite request;
        # the run must degrade to base instructions, not crash.
        out = tmp_path / "opt"
        code = main([
            "optimize", "--manifest", str(manifest), "--dev-manifest", str(manifest),
            "--method", "full", "--out", str(out),
            "--proposals", "1", "--max-programs", "2", "--max-evals", "3", "--demos", "1",
        ])
        assert code == 0
        assert "optimized prompts written to" in capsys.readouterr().out
        assert (out / "search.json").exists()


class TestConfig:
    def test_defaults_section_applies_and_flags_win(self, manifest, tmp_path, capsys):
        config = tmp_path / "drivelens.ini"
        config.write_text("[defaults]\nresolution = 180\n", encoding="utf-8")
        main(["--config", str(config), "eval", "--manifest", str(manifest),
              "--method", "image"])
        assert "resolution=180p" in capsys.readouterr().out

        main(["--config", str(config), "eval", "--manifest", str(manifest),
              "--method", "image", "--resolution", "720"])
        assert "resolution=720p" in capsys.readouterr().out

    def test_missing_config_errors(self, manifest, capsys):
        code = main(["--config", "/does/not/exist.ini", "eval",
                     "--manifest", str(manifest), "--method", "image", "--dry-run"])
        assert code == 1
        assert "error (config)" in capsys.readouterr().err

    def test_unknown_model_is_config_error(self, manifest, capsys):
        code = main(["eval", "--manifest", str(manifest), "--method", "image",
                     "--model", "gpt-nebula"])
        assert code == 1
        assert "error (config)" in capsys.readouterr().err


class TestParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_missing_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
