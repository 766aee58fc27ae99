import json

import numpy as np
import pytest
from oracles import naive_class_stats

from maskcurate.assemble import SamplingManifest, TrainingPlan
from maskcurate.cli import run
from maskcurate.core_io import read_label_map, read_loss_map
from maskcurate.filtering import FilterReport
from maskcurate.hardness import load_csv
from maskcurate.stats import ClassStatsTable
from maskcurate.synthgen import SceneSpec, generate_scene, scene_suite


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen -> stats -> filter -> hardness -> manifest -> plan on 64 scenes of 64x64, K=8."""
    d = tmp_path_factory.mktemp("pipe")
    synth = d / "synth"
    steps = [
        ["gen", "--out", str(synth), "--scenes", "64", "--size", "64", "--classes", "8", "--seed", "5"],
        ["stats", "--root", str(synth), "--classes", "8", "--out", str(d / "stats.json"), "--deterministic"],
        ["filter", "--root", str(synth), "--stats", str(d / "stats.json"), "--out", str(d / "filtered")],
        ["hardness", "--root", str(synth), "--stats", str(d / "stats.json"), "--out", str(d / "hard.csv")],
        ["manifest", "--hardness", str(d / "hard.csv"), "--n-max", "20", "--seed", "7",
         "--out", str(d / "manifest.json"), "--table-out", str(d / "hard_counts.csv")],
        ["plan", "--manifest", str(d / "manifest.json"), "--root", str(synth), "--mode", "joint",
         "--seed", "3", "--out", str(d / "joint.jsonl")],
        ["plan", "--manifest", str(d / "manifest.json"), "--root", str(synth), "--mode", "pretrain",
         "--out", str(d / "pretrain.jsonl")],
        ["report", "--stats", str(d / "stats.json"), "--hardness", str(d / "hard.csv"),
         "--filter-report", str(d / "filtered" / "report.json"), "--n-max", "20", "--out", str(d / "report")],
    ]
    for argv in steps:
        assert run(argv) == 0, argv
    return d


def test_every_intermediate_revalidates(pipeline):
    d = pipeline
    stats = ClassStatsTable.load(d / "stats.json")
    assert stats.num_classes == 8
    report = FilterReport.load(d / "filtered" / "report.json")
    assert report.alpha == 1.25
    ranked, _ = load_csv(d / "hard.csv")
    assert len(ranked) == 64
    _, counts = load_csv(d / "hard_counts.csv")
    assert counts[0] == 20 and counts[-1] >= 1
    manifest = SamplingManifest.load(d / "manifest.json")
    assert manifest.n_max == 20 and manifest.base_seed == 7
    joint = TrainingPlan.load(d / "joint.jsonl")
    assert len(joint.real_entries) == manifest.total
    pre = TrainingPlan.load(d / "pretrain.jsonl")
    assert pre.finetune_lr_factor == 0.5 and len(pre.real_entries) == 64
    for p in sorted((d / "filtered" / "masks").iterdir()):
        read_label_map(p).validate(8)
    for p in sorted((d / "synth" / "losses").iterdir()):
        read_loss_map(p, (64, 64))
    assert sorted(p.name for p in (d / "report").iterdir()) == [
        "class_mean_hist.svg", "class_stats.csv", "filter.csv", "hardness.csv", "hardness_hist.svg"]


def test_stats_matches_brute_force(pipeline):
    stats = ClassStatsTable.load(pipeline / "stats.json")
    specs = scene_suite(64, SceneSpec(width=64, height=64, num_classes=8, seed=5))
    scenes = [generate_scene(s) for s in specs]
    _, counts, means = naive_class_stats([(l.data, s.data) for l, s, _ in scenes], 8)
    assert list(stats.counts) == counts
    for m, ref in zip(stats.means, means):
        assert abs(m - ref) <= 1e-9 * ref


def test_manifest_twice_byte_identical(pipeline, tmp_path):
    for name in ("a.json", "b.json"):
        assert run(["manifest", "--hardness", str(pipeline / "hard.csv"), "--n-max", "20",
                    "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (pipeline / "manifest.json").read_bytes()


def test_filter_alpha_flag_and_config_precedence(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"num_classes": 8, "alpha": 1.75}))
    root, stats = str(pipeline / "synth"), str(pipeline / "stats.json")
    assert run(["filter", "--root", root, "--stats", stats, "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    assert FilterReport.load(tmp_path / "c" / "report.json").alpha == 1.75
    assert run(["filter", "--root", root, "--stats", stats, "--config", str(cfg), "--alpha", "1.5",
                "--out", str(tmp_path / "f")]) == 0
    assert FilterReport.load(tmp_path / "f" / "report.json").alpha == 1.5


def test_loss_subcommand(tmp_path):
    root = tmp_path / "p"
    assert run(["gen", "--out", str(root), "--scenes", "3", "--size", "12", "--classes", "4",
                "--with-probs", "--no-losses"]) == 0
    assert not (root / "losses").exists()
    assert run(["loss", "--root", str(root), "--classes", "4"]) == 0
    specs = scene_suite(3, SceneSpec(width=12, height=12, num_classes=4, seed=0))
    for i, spec in enumerate(specs):
        _, losses, _ = generate_scene(spec)
        got = read_loss_map(root / "losses" / f"scene_{i:04d}.npy")
        np.testing.assert_allclose(got.data, losses.data, rtol=1e-5, atol=1e-6)
    assert run(["stats", "--root", str(root), "--classes", "4", "--out", str(tmp_path / "s.json")]) == 0


def test_threads_env(pipeline, tmp_path, monkeypatch):
    monkeypatch.setenv("FREEMASK_THREADS", "1")
    out = tmp_path / "s.json"
    assert run(["stats", "--root", str(pipeline / "synth"), "--classes", "8", "--out", str(out)]) == 0
    assert out.read_bytes() == (pipeline / "stats.json").read_bytes()


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["stats", "--root", "x", "--out", "y", "--no-such-flag"],
    ["stats", "--out", "y"],
    ["filter", "--root", "x", "--stats", "s", "--out", "o", "--alpha", "abc"],
    ["plan", "--manifest", "m", "--out", "o", "--mode", "sideways"],
    ["manifest", "--hardness", "h", "--out", "o", "--n-max", "1.5"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv) == 2


def test_help_exits_0():
    assert run(["--help"]) == 0


def _error_cases(d, tmp):
    synth, stats = str(d / "synth"), str(d / "stats.json")
    bad_json = tmp / "bad.json"
    bad_json.write_text("{")
    return {
        "missing root": ["stats", "--root", str(tmp / "nope"), "--classes", "8", "--out", str(tmp / "s.json")],
        "no classes": ["stats", "--root", synth, "--out", str(tmp / "s.json")],
        "labels beyond K": ["stats", "--root", synth, "--classes", "3", "--out", str(tmp / "s.json")],
        "bad stats json": ["filter", "--root", synth, "--stats", str(bad_json), "--out", str(tmp / "f")],
        "alpha nonpositive": ["filter", "--root", synth, "--stats", stats, "--alpha", "0", "--out", str(tmp / "f")],
        "K disagrees": ["hardness", "--root", synth, "--stats", stats, "--classes", "9", "--out", str(tmp / "h.csv")],
        "n_max zero": ["manifest", "--hardness", str(d / "hard.csv"), "--n-max", "0", "--out", str(tmp / "m.json")],
        "missing hardness": ["manifest", "--hardness", str(tmp / "none.csv"), "--out", str(tmp / "m.json")],
        "plan without reals": ["plan", "--manifest", str(d / "manifest.json"), "--out", str(tmp / "p.jsonl")],
        "empty report": ["report", "--out", str(tmp / "r")],
        "ignore collides": ["stats", "--root", synth, "--classes", "8", "--ignore-value", "3", "--out", str(tmp / "s.json")],
        "noise too large": ["gen", "--out", str(tmp / "g"), "--noise-fraction", "0.5"],
    }


def test_domain_errors_exit_1(pipeline, tmp_path, capsys):
    for name, argv in _error_cases(pipeline, tmp_path).items():
        assert run(argv) == 1, name
        err = capsys.readouterr().err
        assert "error" in err, name


def test_missing_pair_names_sample(pipeline, tmp_path, capsys):
    import shutil

    root = tmp_path / "copy"
    shutil.copytree(pipeline / "synth", root)
    (root / "losses" / "scene_0010.npy").unlink()
    assert run(["stats", "--root", str(root), "--classes", "8", "--out", str(tmp_path / "s.json")]) == 1
    assert "scene_0010" in capsys.readouterr().err


def test_validation_error_carries_sample_context(pipeline, tmp_path, capsys):
    import shutil

    root = tmp_path / "copy"
    shutil.copytree(pipeline / "synth", root)
    (root / "losses" / "scene_0020.npy").write_bytes(b"oops")
    assert run(["stats", "--root", str(root), "--classes", "8", "--out", str(tmp_path / "s.json")]) == 1
    assert "scene_0020" in capsys.readouterr().err
