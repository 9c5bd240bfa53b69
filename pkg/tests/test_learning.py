"""
Learning-quality runs on the bundled synthetic dataset (configs/*.json).

All cases are slow: each trains the 64 px encoders for the configured epochs.

Test cases:
1. Pretrained action space: held-out 5-NN accuracy >= 0.95, intra-class cosine above inter-class
2. Full model: test interaction macro-F1 >= 0.85
3. Ablations over 5 seeds: full model mean macro-F1 >= every ablation mean,
   and beats standard cutout by at least 0.02
4. Occlusion audit: on 50 mount cases the max-drop cell lies in the focus region >= 90% of the time
"""
import sys
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.checkpoint import Checkpoint
from src.config import load_json_model
from src.evaluation import (
    evaluate_checkpoint,
    export_embeddings,
    knn_classify_embeddings,
    mean_cosine_similarities,
    occlusion_hits_region,
    occlusion_sensitivity_map,
)
from src.manifest import load_samples
from src.schemas import ClassMix, JointTrainConfig, PretrainConfig, SyntheticSceneSpec
from src.synthetic import generate_synthetic_dataset
from src.training import pretrain_action_encoder, train_joint

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).parent.parent / "configs"
SEEDS = (0, 1, 2, 3, 4)
ABLATIONS = ("no_pretrain", "standard_cutout", "no_alignment")


def bundled(name: str, model_cls, what: str):
    return load_json_model(CONFIGS / name, model_cls, what)


class TrainedModels:
    """Pretrain and joint runs keyed by (variant, seed), each trained once per module"""

    def __init__(self, manifest):
        self.manifest = manifest
        self.pretrain_cfg = bundled("pretrain_small.json", PretrainConfig, "Pretrain config")
        self.joint_cfg = bundled("joint_small.json", JointTrainConfig, "Joint training config")
        self._pretrained: Dict[Tuple[str, int], Checkpoint] = {}
        self._joint: Dict[Tuple[str, int], Checkpoint] = {}

    def pretrained(self, seed: int, cutout_mode: str = "skeleton") -> Checkpoint:
        key = (cutout_mode, seed)
        if key not in self._pretrained:
            cfg = self.pretrain_cfg.model_copy(update={"seed": seed, "cutout_mode": cutout_mode})
            self._pretrained[key] = pretrain_action_encoder(self.manifest, cfg).checkpoint
        return self._pretrained[key]

    def joint(self, variant: str, seed: int) -> Checkpoint:
        key = (variant, seed)
        if key not in self._joint:
            updates = {"seed": seed}
            action = None
            if variant == "no_pretrain":
                updates["from_scratch"] = True
            elif variant == "standard_cutout":
                updates["cutout_mode"] = "standard"
                action = self.pretrained(seed, "standard")
            else:
                if variant == "no_alignment":
                    updates["use_alignment"] = False
                action = self.pretrained(seed)
            cfg = self.joint_cfg.model_copy(update=updates)
            self._joint[key] = train_joint(self.manifest, action, cfg).best
        return self._joint[key]

    def macro_f1(self, variant: str, seed: int) -> float:
        report, _ = evaluate_checkpoint(self.manifest, self.joint(variant, seed), "test")
        return report.interaction.macro_f1


@pytest.fixture(scope="module")
def bundled_manifest():
    return generate_synthetic_dataset(bundled("synth_small.json", SyntheticSceneSpec, "Scene spec"))


@pytest.fixture(scope="module")
def models(bundled_manifest):
    return TrainedModels(bundled_manifest)


class TestActionSpace:
    """Embedding quality after action pretraining"""

    def test_knn_and_cosine(self, bundled_manifest, models):
        """5-NN test accuracy >= 0.95; mean intra-class cosine > inter-class"""
        checkpoint = models.pretrained(seed=0)
        train = export_embeddings(bundled_manifest, checkpoint, "train").select("action")
        test = export_embeddings(bundled_manifest, checkpoint, "test").select("action")

        preds = knn_classify_embeddings(train, test, k=5)
        accuracy = float(np.mean([p == t for p, t in zip(preds, test.labels)]))
        assert accuracy >= 0.95

        intra, inter = mean_cosine_similarities(test.values, test.labels)
        assert intra > inter


class TestJointModel:
    """Interaction recognition of the full model and its ablations"""

    def test_full_model_macro_f1(self, models):
        """Seed 0 full model → test macro-F1 >= 0.85"""
        assert models.macro_f1("full", 0) >= 0.85

    def test_ablation_ordering(self, models):
        """Mean over 5 seeds: full >= each ablation, full - standard_cutout >= 0.02"""
        mean = {variant: float(np.mean([models.macro_f1(variant, seed) for seed in SEEDS]))
                for variant in ("full",) + ABLATIONS}
        for variant in ABLATIONS:
            assert mean["full"] >= mean[variant], (variant, mean)
        assert mean["full"] - mean["standard_cutout"] >= 0.02, mean


class TestOcclusionAudit:
    """Where the trained model looks on mount cases"""

    def test_mount_focus_hit_rate(self, bundled_manifest, models):
        """50 fresh mount cases → max-drop cell inside the focus box >= 90%"""
        spec = bundled("synth_small.json", SyntheticSceneSpec, "Scene spec").model_copy(update={
            "seed": 101,
            "n_action_samples": 0,
            "n_interaction_samples": 80,
            "class_mix": ClassMix(interaction={"mount": 1.0}),
            "val_fraction": 0.0,
            "test_fraction": 0.0,
        })
        cases = [s for s in load_samples(generate_synthetic_dataset(spec), "interaction")
                 if s.focus_box is not None][:50]
        assert len(cases) == 50

        model = models.joint("full", 0).model
        hits = [occlusion_hits_region(occlusion_sensitivity_map(s, model), s.focus_box) for s in cases]
        assert np.mean(hits) >= 0.9
