import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from cranioforge.cli import main

QUICK_CONFIG = {"total_iterations": 120, "decay_every": 40}


def tree_hashes(root: Path, skip_names=("run_manifest.json",)) -> dict[str, str]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name not in skip_names:
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    assert main(["gen-data", "--count", "8", "--seed", "5", "--out", str(root)]) == 0
    assert main(["fit-tdd", "--data", str(root), "--all-pairs"]) == 0
    return root


@pytest.fixture(scope="module")
def quick_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "quick.json"
    from cranioforge.adaptation import AdaptationConfig

    fields = AdaptationConfig().to_json()
    fields.update(QUICK_CONFIG)
    path.write_text(json.dumps(fields))
    return path


class TestGenData:
    def test_outputs_exist(self, data_dir):
        assert (data_dir / "model" / "model.json").exists()
        assert (data_dir / "split.json").exists()
        assert (data_dir / "run_manifest.json").exists()
        pair_dirs = sorted((data_dir / "pairs").iterdir())
        assert len(pair_dirs) == 8
        for d in pair_dirs[:2]:
            assert (d / "skull_landmarks.json").exists()
            assert (d / "face.obj").exists()
            assert (d / "gt_depths.json").exists()

    def test_rerun_is_hash_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-data", "--count", "6", "--seed", "11", "--out", str(a)]) == 0
        assert main(["gen-data", "--count", "6", "--seed", "11", "--out", str(b)]) == 0
        assert tree_hashes(a) == tree_hashes(b)

    def test_count_too_small_is_validation_error(self, tmp_path):
        assert main(["gen-data", "--count", "1", "--seed", "1",
                     "--out", str(tmp_path / "x")]) == 3


class TestFitTdd:
    def test_model_files_written(self, data_dir):
        tdd = data_dir / "tdd"
        blob = json.loads((tdd / "tdd_global.json").read_text())
        assert blob["landmark_count"] == 78
        assert (tdd / "tdd_regional.json").exists()
        assert (tdd / "representatives.json").exists()

    def test_variance_ratio_reported(self, data_dir, capsys):
        assert main(["fit-tdd", "--data", str(data_dir), "--all-pairs"]) == 0
        out = capsys.readouterr().out
        assert "first-component share" in out
        share = float(out.split("first-component share:")[1].strip().rstrip("%")) / 100
        assert share >= 0.5

    def test_refit_deterministic(self, data_dir, tmp_path):
        a, b = tmp_path / "ta", tmp_path / "tb"
        assert main(["fit-tdd", "--data", str(data_dir), "--all-pairs", "--out", str(a)]) == 0
        assert main(["fit-tdd", "--data", str(data_dir), "--all-pairs", "--out", str(b)]) == 0
        assert tree_hashes(a) == tree_hashes(b)

    def test_overlapping_partition_exits_3(self, data_dir, tmp_path):
        bad = tmp_path / "bad_partition.json"
        bad.write_text(json.dumps({"a": list(range(40)), "b": list(range(30, 78))}))
        assert main(["fit-tdd", "--data", str(data_dir), "--all-pairs",
                     "--partition", str(bad)]) == 3


class TestReconstruct:
    def test_avg_mode_defaults(self, data_dir, tmp_path, capsys):
        out = tmp_path / "rec"
        code = main(["reconstruct", "--data", str(data_dir), "--pair-id", "pair0000",
                     "--mode", "avg", "--seed", "3", "--out", str(out)])
        assert code == 0
        diag = json.loads((out / "diagnostics.json").read_text())
        assert np.mean(diag["landmark_residuals"]) < 1.0  # mm
        assert (out / "face.obj").exists()

    def test_best_not_worse_than_avg(self, data_dir, tmp_path, quick_config_file):
        res = {}
        for mode in ("avg", "best"):
            out = tmp_path / mode
            assert main(["reconstruct", "--data", str(data_dir), "--pair-id",
                         "pair0001", "--mode", mode, "--seed", "3",
                         "--config", str(quick_config_file), "--out", str(out)]) == 0
            res[mode] = json.loads((out / "diagnostics.json").read_text())["nme"]
        assert res["best"] <= res["avg"] + 1e-15

    def test_fixed_seed_identical_bytes(self, data_dir, tmp_path, quick_config_file):
        runs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["reconstruct", "--data", str(data_dir), "--pair-id",
                         "pair0002", "--mode", "avg", "--seed", "9",
                         "--config", str(quick_config_file), "--out", str(out)]) == 0
            runs.append(tree_hashes(out))
        assert runs[0] == runs[1]

    def test_explicit_c_mode(self, data_dir, tmp_path, quick_config_file):
        out = tmp_path / "cmode"
        assert main(["reconstruct", "--data", str(data_dir), "--pair-id", "pair0001",
                     "--mode", "c=0.5", "--seed", "3",
                     "--config", str(quick_config_file), "--out", str(out)]) == 0
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["selected"] == "c=0.5"

    def test_unknown_mode_is_usage_error(self, data_dir, tmp_path):
        assert main(["reconstruct", "--data", str(data_dir), "--pair-id", "pair0000",
                     "--mode", "chubby", "--out", str(tmp_path / "x")]) == 2

    def test_skull_file_input(self, data_dir, tmp_path, quick_config_file):
        skull_file = data_dir / "pairs" / "pair0003" / "skull_landmarks.json"
        out = tmp_path / "from-file"
        assert main(["reconstruct", "--data", str(data_dir), "--skull",
                     str(skull_file), "--mode", "avg", "--seed", "3",
                     "--config", str(quick_config_file), "--out", str(out)]) == 0
        assert (out / "face.obj").exists()

    def test_manifest_written(self, data_dir, tmp_path, quick_config_file):
        out = tmp_path / "m"
        assert main(["reconstruct", "--data", str(data_dir), "--pair-id", "pair0000",
                     "--mode", "avg", "--seed", "3",
                     "--config", str(quick_config_file), "--out", str(out)]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "reconstruct"
        assert manifest["seed"] == 3
        assert "duration_s" in manifest


class TestEvaluateAndAblate:
    def test_evaluate_five_folds(self, data_dir, tmp_path, quick_config_file, capsys):
        out = tmp_path / "eval"
        assert main(["evaluate", "--data", str(data_dir), "--out", str(out),
                     "--config", str(quick_config_file)]) == 0
        text = capsys.readouterr().out
        assert sum(line.startswith("fold ") for line in text.splitlines()) == 5
        report = json.loads((out / "evaluation.json").read_text())
        assert len(report["per_pair_nme"]) == 8
        assert (out / "table.txt").exists()

    def test_ablate_rows_and_ordering(self, data_dir, tmp_path, quick_config_file,
                                      capsys):
        out = tmp_path / "abl"
        assert main(["ablate", "--data", str(data_dir), "--out", str(out),
                     "--limit", "3", "--config", str(quick_config_file)]) == 0
        blob = json.loads((out / "ablation.json").read_text())
        assert set(blob["rows"]) == {"before", "proj_only", "lmk_only", "lmk_proj",
                                     "full"}
        text = capsys.readouterr().out
        assert "ablation ordering" in text


class TestEnvDefault:
    def test_data_root_from_env(self, data_dir, tmp_path, monkeypatch,
                                quick_config_file):
        monkeypatch.setenv("CRANIOFORGE_DATA", str(data_dir))
        out = tmp_path / "env"
        assert main(["reconstruct", "--pair-id", "pair0000", "--mode", "avg",
                     "--seed", "3", "--config", str(quick_config_file),
                     "--out", str(out)]) == 0

    def test_missing_data_root(self, monkeypatch, tmp_path):
        monkeypatch.delenv("CRANIOFORGE_DATA", raising=False)
        assert main(["fit-tdd"]) == 3
