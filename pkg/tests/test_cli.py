"""CLI tests: subcommands, exit codes, config file handling."""

import json

import pytest

from conftest import make_synthetic_dataset
from ctxpaste.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, load_config_file, main
from ctxpaste.dataset_io import write_dataset
from ctxpaste.errors import ConfigError


@pytest.fixture
def coco_dir(tmp_path):
    dataset = make_synthetic_dataset(8, seed=60)
    root = tmp_path / "dataset"
    write_dataset(dataset, "coco", root, ["cat", "dog", "bird"])
    return root


def run(args):
    return main([str(a) for a in args])


def test_augment_random_mode(coco_dir, tmp_path):
    out = tmp_path / "aug"
    code = run(
        [
            "augment",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--mode", "random",
            "--prob", "1.0",
            "--seed", "3",
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert len(manifest["images"]) == 8
    assert (out / "annotations.json").exists()


def test_augment_context_oracle(coco_dir, tmp_path):
    out = tmp_path / "aug"
    code = run(
        [
            "augment",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--mode", "context",
            "--scorer", "oracle",
            "--candidates", "30",
            "--prob", "1.0",
            "--seed", "4",
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert any(r["placements"] for r in manifest["images"])


def test_augment_with_process_scorer(coco_dir, tmp_path):
    import sys
    from pathlib import Path

    stub = Path(__file__).parent / "stub_scorer.py"
    out = tmp_path / "aug"
    code = run(
        [
            "augment",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--mode", "context",
            "--scorer", f"process:{sys.executable} {stub} uniform 3",
            "--candidates", "5",
            "--prob", "1.0",
            "--seed", "6",
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    # Uniform scores (0.25) never clear the 0.7 threshold: no placements.
    assert all(r["placements"] == [] for r in manifest["images"])
    assert all(r["augmented"] for r in manifest["images"])


def test_invalid_probability_exit_2(coco_dir, tmp_path):
    code = run(
        [
            "augment",
            "--input", coco_dir / "annotations.json",
            "--output", tmp_path / "aug",
            "--prob", "1.7",
        ]
    )
    assert code == EXIT_CONFIG


def test_missing_input_exit_4(tmp_path):
    code = run(
        [
            "stats",
            "--input", tmp_path / "nope.json",
        ]
    )
    assert code == EXIT_DATA


def test_malformed_json_exit_4(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = run(["stats", "--input", bad])
    assert code == EXIT_DATA


def test_stats_subcommand(coco_dir, capsys):
    code = run(
        ["stats", "--input", coco_dir / "annotations.json", "--image-root", coco_dir / "images"]
    )
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["images"] == 8
    assert "per_class" in report


def test_validate_subcommand(coco_dir, capsys):
    code = run(
        ["validate", "--input", coco_dir / "annotations.json", "--image-root", coco_dir / "images"]
    )
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] is True


def test_export_context_subcommand(coco_dir, tmp_path):
    out = tmp_path / "ctx"
    code = run(
        [
            "export-context",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--seed", "5",
        ]
    )
    assert code == EXIT_OK
    assert (out / "labels.csv").exists()


def test_preview_subcommand(coco_dir, tmp_path):
    out = tmp_path / "prev"
    code = run(
        [
            "preview",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--image-id", "img0001",
            "--mode", "random",
            "--prob", "1.0",
            "--dump-candidates",
        ]
    )
    assert code == EXIT_OK
    assert (out / "img0001_original.png").exists()
    assert (out / "img0001_augmented.png").exists()
    assert (out / "img0001_side_by_side.png").exists()
    assert (out / "img0001_candidates.png").exists()


def test_preview_unknown_id_exit_4(coco_dir, tmp_path):
    code = run(
        [
            "preview",
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", tmp_path / "prev",
            "--image-id", "missing",
        ]
    )
    assert code == EXIT_DATA


def test_config_file_parsing(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(
        """# augmentation settings
mode = random
paste_probability = 0.25
seed = 42
candidates = 50   # fewer for speed
"""
    )
    values = load_config_file(cfg_file)
    assert values == {"mode": "random", "paste_probability": 0.25, "seed": 42, "candidates": 50}


def test_config_file_unknown_key(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        load_config_file(cfg_file)


def test_flags_override_config_file(coco_dir, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("seed = 1\nmode = random\npaste_probability = 1.0\n")
    out = tmp_path / "aug"
    code = run(
        [
            "augment",
            "--config", cfg_file,
            "--input", coco_dir / "annotations.json",
            "--image-root", coco_dir / "images",
            "--output", out,
            "--seed", "2",
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 2
