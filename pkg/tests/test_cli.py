import json

import numpy as np
import pytest
from click.testing import CliRunner

from nerp.cli import main
from nerp.images import read_mask, read_radiograph
from nerp.pipeline import DatasetManifest


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


def test_phantom_then_render(runner, tmp_path):
    r = run(runner, "--out", tmp_path, "phantom", "--kind", "chest", "--dims", 24, "--spacing", 12)
    assert r.exit_code == 0, r.output
    assert (tmp_path / "chest.raw").exists() and (tmp_path / "chest.raw.json").exists()
    r = run(runner, "--out", tmp_path / "r", "render", "--volume", tmp_path / "chest.raw",
            "--seg", tmp_path / "chest.seg.raw", "--image-size", 16, 20, "--samples", 32, "--all-modes")
    assert r.exit_code == 0, r.output
    for m in ("ea", "aip", "mip"):
        assert read_radiograph(tmp_path / "r" / f"chest_{m}.png").shape == (16, 20)
    assert read_mask(tmp_path / "r" / "chest_mask.png").max() > 0


def test_dataset(runner, tmp_path):
    r = run(runner, "--out", tmp_path, "--seed", 3, "dataset", "--phantoms", 2, "--phantom-dims", 16,
            "--views", 2, "--image-size", 12, 12, "--samples", 24)
    assert r.exit_code == 0, r.output
    m = DatasetManifest.read(tmp_path / "manifest.jsonl")
    assert len(m.images) == 4 and m.verify() == []


def test_dataset_requires_input(runner, tmp_path):
    r = runner.invoke(main, ["--out", str(tmp_path), "dataset"])
    assert r.exit_code == 2 and "--phantoms" in r.output


def test_dataset_missing_volume_is_skipped(runner, tmp_path):
    r = run(runner, "--out", tmp_path, "dataset", "--volume", tmp_path / "nope.raw", "--phantoms", 1,
            "--phantom-dims", 16, "--views", 1, "--image-size", 8, 8, "--samples", 16)
    assert r.exit_code == 0, r.output
    assert "1 skipped" in r.output


def test_config_file_sets_defaults(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"out": str(tmp_path / "cfgout"), "seed": 4,
                               "dataset": {"views": 1, "image_size": [10, 10], "samples": 16, "phantom_dims": 16}}))
    r = run(runner, "--config", cfg, "dataset", "--phantoms", 1, "--views", 2)
    assert r.exit_code == 0, r.output
    m = DatasetManifest.read(tmp_path / "cfgout" / "manifest.jsonl")
    # flag beats config, config beats built-in default
    assert len(m.images) == 2
    assert read_radiograph(tmp_path / "cfgout" / m.images[0]["image"]).shape == (10, 10)


def test_bad_config(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    r = runner.invoke(main, ["--config", str(cfg), "phantom"])
    assert r.exit_code == 2


def test_gradcheck(runner):
    r = run(runner, "gradcheck", "--probes", 20, "--samples", 32)
    assert r.exit_code == 0, r.output
    assert "PASS" in r.output


def test_oracle_diff_pass_and_fail(runner):
    args = ["oracle-diff", "--image-size", 32, 32, "--samples", 256]
    r = run(runner, *args)
    assert r.exit_code == 0, r.output
    r = run(runner, *args, "--max-tol", 1e-9)
    assert r.exit_code == 2 and "FAIL" in r.output
