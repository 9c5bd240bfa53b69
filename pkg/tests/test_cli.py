"""
Tests for the cattleact command line.

Test cases:
1. synth-generate writes the dataset, GPS files and run.json; exit 0
2. Same config twice → byte-identical outputs (run.json and log aside); the log is rewritten per run
3. An arena too small for the herd → exit 2 before any dataset file is written
4. Malformed or invalid config → exit 2 with an ErrorResponse naming the problem
5. train-joint without an action checkpoint → exit 2, STAGE_ORDER
6. evaluate / embed-export / occlusion-map / augment-preview (PNG plus mask sidecar) on a tiny checkpoint
7. reid-match recovers the synthetic identities
8. --help exits 0
9. Slow: the full pipeline from generation to evaluation
"""
import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.checkpoint import Checkpoint
from src.cli import RUN_RECORD, main
from src.encoders import CattleActModel
from src.evaluation import EmbeddingDump
from src.schemas import JointTrainConfig, PretrainConfig
from tests.conftest import tiny_encoder, tiny_spec


def run_cli(capsys, *argv):
    """Run main(argv) → (exit code, parsed stdout when it is JSON, raw stdout)"""
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    try:
        parsed = json.loads(out)
    except json.JSONDecodeError:
        parsed = None
    return code, parsed, out


def write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def spec_file(tmp_path):
    return write_json(tmp_path / "spec.json", tiny_spec().model_dump(mode="json"))


@pytest.fixture
def tiny_checkpoint(tmp_path):
    checkpoint = Checkpoint(model=CattleActModel(tiny_encoder()), stage="joint", step=0,
                            metrics={}, config={"seed": 3})
    return checkpoint.save(tmp_path / "tiny.ckpt")


class TestSynthGenerate:
    """synth-generate"""

    def test_outputs(self, capsys, tmp_path, spec_file):
        """Tiny spec → manifest, images, GPS files, run.json with input checksum"""
        out = tmp_path / "data"
        code, summary, _ = run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", out,
                                   "--gps-duration", 10)
        assert code == 0
        assert summary["records"] == 96
        assert summary["gps_tracks"] == 5
        for name in ("manifest.jsonl", "gps.csv", "tracklets.jsonl", "correspondences.csv",
                     "homography.json", "reid_truth.json"):
            assert (out / name).exists(), name
        assert list((out / "images").rglob("*.png"))

        record = json.loads((out / RUN_RECORD).read_text(encoding="utf-8"))
        assert record["status"] == "ok"
        assert record["run"]["command"] == "synth-generate"
        assert record["run"]["seed"] == 7
        assert str(spec_file) in record["input_checksums"]
        assert len(record["input_checksums"][str(spec_file)]) == 64
        assert "torch" in record["versions"]

    def test_deterministic(self, capsys, tmp_path, spec_file):
        """Two runs of the same spec → identical files"""
        for name in ("a", "b"):
            assert run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", tmp_path / name,
                           "--gps-duration", 5)[0] == 0

        def files(root):
            return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*"))
                    if p.is_file() and p.name not in (RUN_RECORD, "cattleact.log")}

        first, second = files(tmp_path / "a"), files(tmp_path / "b")
        assert first.keys() == second.keys()
        assert all(first[k] == second[k] for k in first)

    def test_seed_flag_overrides_config(self, capsys, tmp_path, spec_file):
        """--seed 11 → run.json and config echo carry 11"""
        out = tmp_path / "data"
        code, summary, _ = run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", out,
                                   "--seed", 11, "--gps-duration", 5)
        assert code == 0
        assert summary["seed"] == 11
        record = json.loads((out / RUN_RECORD).read_text(encoding="utf-8"))
        assert record["run"]["seed"] == 11
        assert record["config"]["seed"] == 11

    def test_undersized_arena_writes_nothing(self, capsys, tmp_path):
        """4 x 4 m arena for 5 animals → INVALID_SPEC, only run.json and the log in out_dir"""
        bad = write_json(tmp_path / "arena.json", tiny_spec(arena_size=(4.0, 4.0)).model_dump(mode="json"))
        out = tmp_path / "data"
        code, error, _ = run_cli(capsys, "synth-generate", "--config", bad, "--out-dir", out, "--gps-duration", 5)
        assert code == 2
        assert error["error"] == "INVALID_SPEC"
        assert sorted(p.name for p in out.iterdir()) == ["cattleact.log", RUN_RECORD]

    def test_log_rewritten_per_run(self, capsys, tmp_path, spec_file):
        """Two runs into one out_dir → log holds the second run only"""
        out = tmp_path / "data"
        for _ in range(2):
            assert run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", out,
                           "--gps-duration", 5)[0] == 0
        log = (out / "cattleact.log").read_text(encoding="utf-8")
        assert log.count("Simulated 5 animals") == 1


class TestConfigErrors:
    """Usage errors exit with code 2"""

    def test_malformed_json(self, capsys, tmp_path):
        """'{not json' → INVALID_SPEC, exit 2, run.json status failed"""
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        code, error, _ = run_cli(capsys, "synth-generate", "--config", bad, "--out-dir", tmp_path / "out")
        assert code == 2
        assert error["error"] == "INVALID_SPEC"
        record = json.loads((tmp_path / "out" / RUN_RECORD).read_text(encoding="utf-8"))
        assert record["status"] == "failed"

    def test_invalid_value_names_key(self, capsys, tmp_path):
        """n_cattle 1 → message names n_cattle"""
        bad = write_json(tmp_path / "bad.json", {"n_cattle": 1})
        code, error, _ = run_cli(capsys, "synth-generate", "--config", bad, "--out-dir", tmp_path / "out")
        assert code == 2
        assert "n_cattle" in error["message"]

    def test_unknown_key(self, capsys, tmp_path):
        """Unknown field 'n_cows' → exit 2"""
        bad = write_json(tmp_path / "bad.json", {"n_cows": 3})
        assert run_cli(capsys, "synth-generate", "--config", bad, "--out-dir", tmp_path / "out")[0] == 2

    def test_missing_config(self, capsys, tmp_path):
        """Absent config file → MISSING_FILE"""
        code, error, _ = run_cli(capsys, "synth-generate", "--config", tmp_path / "nope.json",
                                 "--out-dir", tmp_path / "out")
        assert code == 2
        assert error["error"] == "MISSING_FILE"

    def test_joint_without_checkpoint(self, capsys, tmp_path, tiny_dataset_dir):
        """train-joint with no --action-checkpoint → STAGE_ORDER"""
        code, error, _ = run_cli(capsys, "train-joint", "--manifest", tiny_dataset_dir, "--out-dir", tmp_path / "j")
        assert code == 2
        assert error["error"] == "STAGE_ORDER"

    def test_missing_manifest(self, capsys, tmp_path, tiny_checkpoint):
        """evaluate on an absent manifest → MISSING_FILE"""
        code, error, _ = run_cli(capsys, "evaluate", "--manifest", tmp_path / "none.jsonl",
                                 "--checkpoint", tiny_checkpoint, "--out-dir", tmp_path / "e")
        assert code == 2
        assert error["error"] == "MISSING_FILE"

    def test_reid_without_homography(self, capsys, tmp_path):
        """reid-match with neither --homography nor --correspondences → exit 2"""
        tracklets = tmp_path / "t.jsonl"
        tracklets.write_text("", encoding="utf-8")
        gps = tmp_path / "g.csv"
        gps.write_text("cattle_id,timestamp_s,x_m,y_m\n", encoding="utf-8")
        code, error, _ = run_cli(capsys, "reid-match", "--tracklets", tracklets, "--gps", gps,
                                 "--out-dir", tmp_path / "r")
        assert code == 2
        assert error["error"] == "USAGE_ERROR"

    def test_help(self, capsys):
        """--help → SystemExit 0 with the file format epilog"""
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "manifest.jsonl" in capsys.readouterr().out


class TestModelCommands:
    """Commands that only read a checkpoint"""

    def test_evaluate(self, capsys, tmp_path, tiny_dataset_dir, tiny_checkpoint):
        """Tiny checkpoint → metrics.json, predictions.csv and tables on stdout"""
        out = tmp_path / "eval"
        code, _, text = run_cli(capsys, "evaluate", "--manifest", tiny_dataset_dir, "--checkpoint", tiny_checkpoint,
                                "--out-dir", out, "--knn-k", 3)
        assert code == 0
        assert "truth \\ pred" in text
        metrics = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
        assert metrics["split"] == "test"
        assert metrics["seed"] == 3
        assert 0.0 <= metrics["interaction"]["macro_f1"] <= 1.0
        lines = (out / "predictions.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("sample_id,truth,pred,score_no_interaction")
        assert len(lines) - 1 == metrics["interaction"]["n_samples"]

    def test_embed_export(self, capsys, tmp_path, tiny_dataset_dir, tiny_checkpoint):
        """All 96 samples → CAEM dump with D 16 and a PCA CSV"""
        out = tmp_path / "emb"
        code, summary, _ = run_cli(capsys, "embed-export", "--manifest", tiny_dataset_dir,
                                   "--checkpoint", tiny_checkpoint, "--out-dir", out)
        assert code == 0
        assert summary["rows"] == 96
        assert summary["dim"] == 16
        dump = EmbeddingDump.load(out / "embeddings.caem")
        assert len(dump) == 96
        assert len((out / "pca.csv").read_text(encoding="utf-8").splitlines()) == 97

    def test_embed_export_wrong_dim(self, capsys, tmp_path, tiny_dataset_dir, tiny_checkpoint):
        """--dim 32 for a D 16 checkpoint → CHECKPOINT_MISMATCH"""
        code, error, _ = run_cli(capsys, "embed-export", "--manifest", tiny_dataset_dir,
                                 "--checkpoint", tiny_checkpoint, "--dim", 32, "--out-dir", tmp_path / "emb")
        assert code == 2
        assert error["error"] == "CHECKPOINT_MISMATCH"

    def test_occlusion_single_sample(self, capsys, tmp_path, tiny_dataset_dir, tiny_checkpoint):
        """--sample-id of an action → one JSON map and one PNG"""
        first_action = next(
            json.loads(line) for line in (tiny_dataset_dir / "manifest.jsonl").read_text(encoding="utf-8")
            .splitlines()[1:] if json.loads(line)["kind"] == "action"
        )
        out = tmp_path / "occ"
        code, summary, _ = run_cli(capsys, "occlusion-map", "--manifest", tiny_dataset_dir,
                                   "--checkpoint", tiny_checkpoint, "--sample-id", first_action["sample_id"],
                                   "--out-dir", out)
        assert code == 0
        assert summary["maps"] == 1
        assert len(list((out / "occlusion").glob("*.json"))) == 1
        assert len(list((out / "occlusion").glob("*.png"))) == 1

    def test_augment_preview(self, capsys, tmp_path, tiny_dataset_dir):
        """4 action previews → 4 PNGs, each with a sidecar whose rectangles avoid every disc"""
        out = tmp_path / "aug"
        code, summary, _ = run_cli(capsys, "augment-preview", "--manifest", tiny_dataset_dir,
                                   "--count", 4, "--out-dir", out)
        assert code == 0
        assert summary["previews"] == 4
        assert len(list((out / "preview").glob("*.png"))) == 4

        sidecars = sorted((out / "preview").glob("*.json"))
        assert len(sidecars) == 4
        discs_seen = 0
        for path in sidecars:
            sidecar = json.loads(path.read_text(encoding="utf-8"))
            assert (out / "preview" / f"{path.stem}.png").exists()
            discs_seen += len(sidecar["protected_discs"])
            for x0, y0, x1, y1 in sidecar["rectangles"]:
                for cx, cy, r in sidecar["protected_discs"]:
                    nearest_x = min(max(cx, x0), x1 - 1)
                    nearest_y = min(max(cy, y0), y1 - 1)
                    assert (nearest_x - cx) ** 2 + (nearest_y - cy) ** 2 > r ** 2
        assert discs_seen > 0

    def test_augment_preview_dataset_fill(self, capsys, tmp_path, tiny_dataset_dir):
        """Default fill → train-split channel mean, the same for every preview"""
        out = tmp_path / "aug"
        assert run_cli(capsys, "augment-preview", "--manifest", tiny_dataset_dir, "--count", 3,
                       "--out-dir", out)[0] == 0
        fills = {tuple(json.loads(p.read_text(encoding="utf-8"))["fill"]) for p in (out / "preview").glob("*.json")}
        assert len(fills) == 1
        record = json.loads((out / RUN_RECORD).read_text(encoding="utf-8"))
        assert record["config"]["fill"] == pytest.approx(list(fills.pop()))

    def test_augment_preview_configured_fill(self, capsys, tmp_path, tiny_dataset_dir):
        """CutoutConfig fill [0, 0, 0] → used as given"""
        cfg = write_json(tmp_path / "cutout.json", {"fill": [0.0, 0.0, 0.0], "n_masks": 2})
        out = tmp_path / "aug"
        assert run_cli(capsys, "augment-preview", "--manifest", tiny_dataset_dir, "--config", cfg,
                       "--count", 2, "--out-dir", out)[0] == 0
        for path in (out / "preview").glob("*.json"):
            assert json.loads(path.read_text(encoding="utf-8"))["fill"] == [0.0, 0.0, 0.0]


class TestReidMatch:
    """reid-match on generated files"""

    def test_recovers_identities(self, capsys, tmp_path, spec_file):
        """Homography fitted from correspondences → identity recovery 1.0"""
        data = tmp_path / "data"
        assert run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", data,
                       "--gps-duration", 20)[0] == 0
        out = tmp_path / "reid"
        code, summary, _ = run_cli(capsys, "reid-match", "--tracklets", data / "tracklets.jsonl",
                                   "--gps", data / "gps.csv", "--correspondences", data / "correspondences.csv",
                                   "--truth", data / "reid_truth.json", "--out-dir", out)
        assert code == 0
        assert summary["matched"] == 5
        assert summary["identity_recovery"] == 1.0
        assert (out / "assignment.json").exists()
        assert (out / "homography.json").exists()


@pytest.mark.slow
class TestPipeline:
    """Generation → pretrain → joint training → evaluation"""

    def test_full_pipeline(self, capsys, tmp_path, spec_file):
        """Every stage exits 0 and leaves its artifacts"""
        data, pre, joint, ev = (tmp_path / name for name in ("data", "pre", "joint", "eval"))
        assert run_cli(capsys, "synth-generate", "--config", spec_file, "--out-dir", data)[0] == 0

        pre_cfg = write_json(tmp_path / "pre.json", PretrainConfig(
            epochs=2, batch_size=8, steps_per_epoch=4, encoder=tiny_encoder(), seed=3).model_dump(mode="json"))
        code, summary, _ = run_cli(capsys, "pretrain", "--manifest", data, "--config", pre_cfg, "--out-dir", pre)
        assert code == 0
        assert Path(summary["checkpoint"]).exists()

        joint_cfg = write_json(tmp_path / "joint.json", JointTrainConfig(
            epochs=2, batch_size=8, encoder=tiny_encoder(), seed=3).model_dump(mode="json"))
        code, summary, _ = run_cli(capsys, "train-joint", "--manifest", data, "--config", joint_cfg,
                                   "--action-checkpoint", pre / "action.ckpt", "--out-dir", joint)
        assert code == 0
        assert len(summary["val_macro_f1"]) == 3
        assert (joint / "final.ckpt").exists()
        assert (joint / "best.ckpt").exists()

        code, _, _ = run_cli(capsys, "evaluate", "--manifest", data, "--checkpoint", joint / "best.ckpt",
                             "--out-dir", ev)
        assert code == 0
        assert json.loads((ev / "metrics.json").read_text(encoding="utf-8"))["interaction"] is not None
