"""Tests for the racr command-line interface."""

import json
import sys

import numpy as np
import pytest
from PIL import Image

from bagio import load_dataset
from main import build_parser, main


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def spec_file(tmp_path, small_spec):
    path = tmp_path / "spec.json"
    small_spec.to_json(path)
    return path


@pytest.fixture
def dataset(tmp_path, spec_file):
    data = tmp_path / "data"
    assert run("synth", "--spec", spec_file, "--out", data, "--seed", 7) == 0
    return data


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"hidden_dim": 8, "batch_size": 8, "max_epochs": 2, "warmup_epochs": 1}))
    return path


# ============================================================================
# USAGE
# ============================================================================

def test_eval_without_checkpoint_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("eval", "--data", tmp_path, "--out", tmp_path / "out")
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        run("gradcheck", "--no-such-flag")
    assert info.value.code == 2


def test_help_documents_every_command():
    text = build_parser().format_help()
    for command in ("synth", "ingest", "graph", "train", "eval", "heatmap", "gradcheck", "ablate"):
        assert command in text


def test_seed_accepted_before_and_after_command(tmp_path, spec_file):
    assert run("--seed", 3, "synth", "--spec", spec_file, "--out", tmp_path / "a") == 0
    assert run("synth", "--spec", spec_file, "--out", tmp_path / "b", "--seed", 3) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_library_error_exits_one(tmp_path):
    assert run("graph", "--in", tmp_path / "missing", "--out", tmp_path / "cache") == 1


# ============================================================================
# COMMANDS
# ============================================================================

def test_synth_is_deterministic(tmp_path, spec_file):
    for name in ("one", "two"):
        assert run("synth", "--spec", spec_file, "--out", tmp_path / name, "--seed", 7) == 0
    assert tree_bytes(tmp_path / "one") == tree_bytes(tmp_path / "two")


def test_synth_rerun_overwrites(tmp_path, spec_file):
    out = tmp_path / "data"
    run("synth", "--spec", spec_file, "--out", out, "--seed", 7)
    first = tree_bytes(out)
    run("synth", "--spec", spec_file, "--out", out, "--seed", 7)
    assert tree_bytes(out) == first


def test_ingest_writes_bag(tmp_path, rng):
    image = np.full((64, 64, 3), 250, dtype=np.uint8)
    image[:, :32] = rng.integers(0, 120, size=(64, 32, 3), dtype=np.uint8)
    Image.fromarray(image).save(tmp_path / "slide.png")
    (tmp_path / "ingest.json").write_text(json.dumps({"tile_size": 16, "min_component_tiles": 0.0}))
    script = (
        "import sys, numpy as np; a = np.load(sys.argv[1]); "
        "np.full((len(a), 4), 0.5, dtype='<f4').tofile(sys.argv[2])"
    )
    code = run(
        "ingest", "--image", tmp_path / "slide.png", "--out", tmp_path / "data", "--grade", 2,
        "--provider-cmd", f'"{sys.executable}" -c "{script}"', "--feature-dim", 4,
        "--config", tmp_path / "ingest.json",
    )
    assert code == 0
    (bag,) = load_dataset(tmp_path / "data")
    assert (bag.bag_id, bag.grade, bag.num_patches, bag.feature_dim) == ("slide", 2, 8, 4)


def test_graph_cache_and_plot(tmp_path, dataset):
    cache = tmp_path / "cache"
    assert run("graph", "--in", dataset, "--out", cache, "--topm", 3, "--plot") == 0
    bags = load_dataset(dataset)
    assert len(list(cache.glob("*.graph"))) == len(bags)
    assert (cache / "figures" / f"{bags[0].bag_id}_latent.png").is_file()


def test_train_eval_heatmap_pipeline(tmp_path, dataset, config_file, capsys):
    run_dir = tmp_path / "run"
    assert run("train", "--config", config_file, "--data", dataset, "--fold", 0, "--out", run_dir, "-q") == 0
    assert (run_dir / "checkpoint" / "checkpoint.json").is_file()
    assert (run_dir / "training_log.csv").is_file()
    assert json.loads((run_dir / "config.json").read_text())["hidden_dim"] == 8

    report_dir = tmp_path / "report"
    assert run("eval", "--checkpoint", run_dir, "--data", dataset, "--out", report_dir) == 0
    assert "EVALUATION" in capsys.readouterr().out
    for name in ("metrics.json", "confusion.csv", "pr_curves.csv", "bag_predictions.csv"):
        assert (report_dir / name).is_file()

    bag_dir = next(p for p in sorted(dataset.iterdir()) if p.is_dir())
    assert run("heatmap", "--checkpoint", run_dir, "--bag", bag_dir, "--out", tmp_path / "maps") == 0
    assert (tmp_path / "maps" / f"{bag_dir.name}_attention.png").is_file()


def test_eval_over_fold_runs(tmp_path, dataset, config_file, capsys):
    for k in (0, 1):
        run("train", "--config", config_file, "--data", dataset, "--fold", k, "--out", tmp_path / "runs" / f"fold_{k}",
            "-q")
    assert run("eval", "--checkpoint", tmp_path / "runs", "--data", dataset, "--out", tmp_path / "report") == 0
    assert "FOLD AVERAGE OVER 2 CHECKPOINTS" in capsys.readouterr().out
    assert (tmp_path / "report" / "fold_summary.csv").is_file()


def test_train_rejects_out_of_range_fold(tmp_path, dataset, config_file):
    assert run("train", "--config", config_file, "--data", dataset, "--fold", 9, "--out", tmp_path / "run") == 1


def test_train_unknown_config_key(tmp_path, dataset):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"hidden": 8}))
    assert run("train", "--config", bad, "--data", dataset, "--fold", 0, "--out", tmp_path / "run") == 1


def test_gradcheck_passes(capsys):
    assert run("gradcheck", "--instances", 1, "--modes", "default") == 0
    assert "PASS" in capsys.readouterr().out
