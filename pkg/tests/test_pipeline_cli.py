"""End-to-end pipeline behavior and the command-line contract."""

import json
import os
import shutil

import numpy as np
import pytest

from evifuse import cli, pipeline
from evifuse.errors import DataError, InvariantViolation
from evifuse.fixtures import BlobSpec, FixtureSpec, ModelSpec, write_fixture
from evifuse.io import load_manifest, read_tensor, write_tensor


def fixture_manifest(tmp_path, *, seed=11, size=32, conflict=False, name="fix"):
    models = [
        ModelSpec("cnn", accuracy=0.85),
        ModelSpec("resnet", accuracy=0.90),
        ModelSpec("vit", accuracy=0.92),
    ]
    if conflict:
        models.append(ModelSpec("contrarian", accuracy=0.80, conflict_flip=True))
    spec = FixtureSpec(
        height=size,
        width=size,
        blobs=(BlobSpec(row=size // 2, col=size // 2, radius=size // 8, amplitude=0.02),),
        models=tuple(models),
        seed=seed,
    )
    return write_fixture(spec, tmp_path / name)


OUTPUT_FILES = ("weights.json", "bel.npy", "pl.npy", "unc.npy", "conflict.npy", "stats.json")


class TestPipeline:
    def test_full_run_produces_layout(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        summary = pipeline.run_pipeline(manifest)
        out = manifest.output_dir
        for name in OUTPUT_FILES + ("resolved_manifest.json",):
            assert os.path.isfile(os.path.join(out, name)), name
        for name in ("bel.ppm", "pl.ppm", "unc.ppm", "conflict.ppm"):
            assert os.path.isfile(os.path.join(out, "render", name)), name
        assert not os.path.exists(os.path.join(out, "FAILED"))
        assert 0.0 <= summary["mean_belief"] <= 1.0
        assert set(summary["weights"]) == {"cnn", "resnet", "vit"}

    def test_missing_tensor_leaves_failed_marker(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        manifest = load_manifest(manifest_path)
        os.remove(manifest.models[1].attribution_path)
        with pytest.raises(DataError, match="attr_resnet"):
            pipeline.run_pipeline(manifest)
        marker = os.path.join(manifest.output_dir, "FAILED")
        assert os.path.isfile(marker)
        text = open(marker).read()
        assert "stage: bpa" in text

    def test_stage_composition_matches_pipeline(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        base = load_manifest(manifest_path)
        a = base.with_overrides(output_dir=str(tmp_path / "composed"))
        pipeline.stage_weigh(a)
        pipeline.stage_bpa(a, dump=True)
        pipeline.stage_fuse(a)
        pipeline.stage_analyze(a)
        pipeline.stage_render(a)

        b = base.with_overrides(output_dir=str(tmp_path / "whole"))
        pipeline.run_pipeline(b, dump_masses=True)

        for name in OUTPUT_FILES + tuple(f"mass_{m}.npy" for m in base.model_ids):
            pa = os.path.join(a.output_dir, name)
            pb = os.path.join(b.output_dir, name)
            assert open(pa, "rb").read() == open(pb, "rb").read(), name
        for name in ("bel.ppm", "pl.ppm", "unc.ppm", "conflict.ppm"):
            pa = os.path.join(a.output_dir, "render", name)
            pb = os.path.join(b.output_dir, "render", name)
            assert open(pa, "rb").read() == open(pb, "rb").read(), name

    def test_reproducible_given_seed(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        base = load_manifest(manifest_path)
        a = base.with_overrides(seed=42, output_dir=str(tmp_path / "a"))
        b = base.with_overrides(seed=42, output_dir=str(tmp_path / "b"))
        pipeline.run_pipeline(a)
        pipeline.run_pipeline(b)
        for name in OUTPUT_FILES:
            assert (
                open(os.path.join(a.output_dir, name), "rb").read()
                == open(os.path.join(b.output_dir, name), "rb").read()
            ), name
        c = base.with_overrides(seed=43, output_dir=str(tmp_path / "c"))
        pipeline.run_pipeline(c)
        assert (
            open(os.path.join(a.output_dir, "weights.json"), "rb").read()
            != open(os.path.join(c.output_dir, "weights.json"), "rb").read()
        )

    def test_scores_mode_runs(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        raw = json.load(open(manifest_path))
        raw["weight_mode"] = "scores"
        for entry, score in zip(raw["models"], (0.85, 0.90, 0.92)):
            del entry["validation_log_path"]
            entry["score"] = score
        scores_path = os.path.join(os.path.dirname(manifest_path), "scores_manifest.json")
        json.dump(raw, open(scores_path, "w"))
        manifest = load_manifest(scores_path).with_overrides(output_dir=str(tmp_path / "s"))
        pipeline.run_pipeline(manifest)
        weights = json.load(open(os.path.join(manifest.output_dir, "weights.json")))
        assert weights["counts"] == [85, 90, 92]
        assert weights["weight_mode"] == "scores"

    def test_localization_structure(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path, size=64))
        pipeline.run_pipeline(manifest)
        mask = read_tensor(os.path.join(tmp_path, "fix", "blob_mask.npy")).data.astype(bool)
        bel = read_tensor(os.path.join(manifest.output_dir, "bel.npy")).data
        unc = read_tensor(os.path.join(manifest.output_dir, "unc.npy")).data
        assert bel[mask].mean() >= 5.0 * bel[~mask].mean()
        assert unc[~mask].mean() >= 2.0 * unc[mask].mean()

    def test_conflicting_model_raises_conflict(self, tmp_path):
        clean = load_manifest(fixture_manifest(tmp_path, name="clean"))
        flipped = load_manifest(fixture_manifest(tmp_path, conflict=True, name="flip"))
        pipeline.run_pipeline(clean)
        pipeline.run_pipeline(flipped)
        mask = read_tensor(os.path.join(tmp_path, "clean", "blob_mask.npy")).data.astype(bool)
        k_clean = read_tensor(os.path.join(clean.output_dir, "conflict.npy")).data
        k_flip = read_tensor(os.path.join(flipped.output_dir, "conflict.npy")).data
        assert k_flip[mask].mean() > k_clean[mask].mean()

    def test_overlay_outputs(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        manifest = load_manifest(manifest_path)
        base_path = str(tmp_path / "base.npy")
        write_tensor(base_path, np.zeros((32, 32, 3)) + 0.25)
        pipeline.run_pipeline(manifest, overlay_path=base_path)
        assert os.path.isfile(os.path.join(manifest.output_dir, "render", "overlay_bel.ppm"))

    def test_per_model_analysis(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        pipeline.run_pipeline(manifest, per_model=True, csv=True)
        stats = json.load(open(os.path.join(manifest.output_dir, "stats.json")))
        metrics = {c["metric"] for c in stats["curves"]}
        assert "belief[cnn]" in metrics and "uncertainty[vit]" in metrics
        assert os.path.isfile(os.path.join(manifest.output_dir, "curves.csv"))


class TestVerify:
    def test_fresh_output_verifies(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        pipeline.run_pipeline(manifest, dump_masses=True)
        report = pipeline.verify_output(manifest.output_dir)
        assert not report["failed"]
        assert report["checks"]["duality"] < 1e-12
        assert report["checks"]["epistemic_gap"] < 1e-12

    def test_corrupted_belief_detected(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        pipeline.run_pipeline(manifest)
        bel_path = os.path.join(manifest.output_dir, "bel.npy")
        bel = read_tensor(bel_path).data.copy()
        bel[1, 1] += 0.1
        write_tensor(bel_path, bel)
        with pytest.raises(InvariantViolation):
            pipeline.verify_output(manifest.output_dir)

    def test_missing_artifacts_listed(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        pipeline.run_pipeline(manifest)
        os.remove(os.path.join(manifest.output_dir, "unc.npy"))
        with pytest.raises(DataError, match="unc.npy"):
            pipeline.verify_output(manifest.output_dir)

    def test_random_seed_sweep_verifies(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path, size=16)
        base = load_manifest(manifest_path)
        for seed in range(20):
            m = base.with_overrides(seed=seed, output_dir=str(tmp_path / f"run{seed}"))
            pipeline.run_pipeline(m, dump_masses=True)
            report = pipeline.verify_output(m.output_dir)
            assert not report["failed"]


class TestCli:
    def test_fixtures_gen_and_pipeline_exit_zero(self, tmp_path, capsys):
        spec = {
            "height": 16,
            "width": 16,
            "blobs": [{"row": 8, "col": 8, "radius": 2}],
            "models": [
                {"model_id": "a", "accuracy": 0.9},
                {"model_id": "b", "accuracy": 0.8},
            ],
            "seed": 3,
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        assert cli.main(["fixtures", "gen", "--spec", str(spec_path), "--out", str(tmp_path / "fx")]) == 0
        manifest = str(tmp_path / "fx" / "manifest.json")
        assert cli.main(["pipeline", "--manifest", manifest]) == 0
        out = capsys.readouterr().out
        assert "weights" in out and "mean belief" in out
        assert cli.main(["verify", "--out", str(tmp_path / "fx" / "run")]) == 0

    def test_stagewise_cli(self, tmp_path):
        manifest = str(fixture_manifest(tmp_path))
        for command in (
            ["weigh", "--manifest", manifest],
            ["bpa", "--manifest", manifest],
            ["fuse", "--manifest", manifest],
            ["analyze", "--manifest", manifest, "--csv"],
            ["sweep", "--manifest", manifest],
            ["render", "--manifest", manifest],
        ):
            assert cli.main(command) == 0, command
        run_dir = os.path.join(tmp_path, "fix", "run")
        assert os.path.isfile(os.path.join(run_dir, "sweep_temperature.json"))
        assert os.path.isfile(os.path.join(run_dir, "sweep_lambda.json"))
        sweep = json.load(open(os.path.join(run_dir, "sweep_lambda.json")))
        assert sweep["parameter"] == "lambda"
        assert len(sweep["xs"]) == 25

    def test_validation_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"models": [], "target_class": 0, "class_names": ["a", "b"]}))
        assert cli.main(["pipeline", "--manifest", str(bad)]) == 2

    def test_missing_tensor_exit_code(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        manifest = load_manifest(manifest_path)
        os.remove(manifest.models[0].attribution_path)
        assert cli.main(["pipeline", "--manifest", str(manifest_path)]) == 2

    def test_corrupt_tensor_exit_code(self, tmp_path):
        manifest_path = fixture_manifest(tmp_path)
        manifest = load_manifest(manifest_path)
        with open(manifest.models[0].attribution_path, "wb") as fh:
            fh.write(b"garbage")
        assert cli.main(["pipeline", "--manifest", str(manifest_path)]) == 3

    def test_verify_failure_exit_code(self, tmp_path):
        manifest = load_manifest(fixture_manifest(tmp_path))
        pipeline.run_pipeline(manifest)
        bel_path = os.path.join(manifest.output_dir, "bel.npy")
        bel = read_tensor(bel_path).data.copy()
        bel[0, 0] = 1.5
        write_tensor(bel_path, bel)
        assert cli.main(["verify", "--out", manifest.output_dir]) == 4

    def test_seed_override_changes_weights(self, tmp_path):
        manifest = str(fixture_manifest(tmp_path))
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        assert cli.main(["weigh", "--manifest", manifest, "--out", out_a, "--seed", "1"]) == 0
        assert cli.main(["weigh", "--manifest", manifest, "--out", out_b, "--seed", "2"]) == 0
        wa = json.load(open(os.path.join(out_a, "weights.json")))
        wb = json.load(open(os.path.join(out_b, "weights.json")))
        assert wa["weights"] != wb["weights"]
        assert wa["seed"] == 1 and wb["seed"] == 2
