"""
Tests for the synthetic pasture generator.

Test cases:
1. Same spec → identical manifest bytes and images; other seed → different
2. Label frequencies follow class_mix
3. Member actions co-occur consistently with the interaction label
4. Splits are disjoint and every populated class keeps a training sample
5. GPS scene: fix counts, noiseless tracks equal truth, per-axis noise level
6. Tracklet anchors are the camera projection of the true trajectories
7. Over-full arena → InvalidSpec
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import InvalidSpec
from src.manifest import serialize_manifest
from src.schemas import (
    INTERACTION_CLASSES,
    REFERENCE_INTERACTION_COUNTS,
    SyntheticSceneSpec,
)
from src.synthetic import (
    check_cooccurrence,
    generate_synthetic_dataset,
    generate_synthetic_gps_scene,
    generate_synthetic_gps_tracks,
    sample_class_labels,
)
from tests.conftest import tiny_spec


class TestDeterminism:
    """generate_synthetic_dataset is a pure function of the spec"""

    def test_same_spec_same_output(self):
        """Two runs with seed 7 → identical bytes and pixels"""
        first = generate_synthetic_dataset(tiny_spec())
        second = generate_synthetic_dataset(tiny_spec())
        assert serialize_manifest(first) == serialize_manifest(second)
        assert sorted(first.images) == sorted(second.images)
        for path in first.images:
            assert np.array_equal(first.images[path], second.images[path])

    def test_other_seed_differs(self):
        """Seeds 7 and 8 → different manifests"""
        first = generate_synthetic_dataset(tiny_spec(seed=7))
        second = generate_synthetic_dataset(tiny_spec(seed=8))
        assert serialize_manifest(first) != serialize_manifest(second)

    def test_record_ids_and_counts(self, tiny_manifest):
        """48 + 48 records, ids act-00000 / int-00000, images held in memory"""
        assert len(tiny_manifest.select("action")) == 48
        assert len(tiny_manifest.select("interaction")) == 48
        assert tiny_manifest.records[0].sample_id == "act-00000"
        assert tiny_manifest.select("interaction")[0].sample_id == "int-00000"
        assert len(tiny_manifest.images) == 96

    def test_dict_spec_is_validated(self):
        """Unknown spec key → InvalidSpec"""
        with pytest.raises(InvalidSpec):
            generate_synthetic_dataset({"n_cows": 3})


class TestLabels:
    """Class sampling and label consistency"""

    def test_frequencies_follow_reference_mix(self):
        """4000 interaction labels → each class within 0.03 of its reference share"""
        spec = SyntheticSceneSpec(seed=3)
        labels = sample_class_labels(spec, "interaction", n=4000)
        total = sum(REFERENCE_INTERACTION_COUNTS.values())
        for name in INTERACTION_CLASSES:
            expected = REFERENCE_INTERACTION_COUNTS[name] / total
            assert abs(labels.count(name) / 4000 - expected) < 0.03

    def test_cooccurrence_holds(self, tiny_manifest):
        """Generated member actions match their interaction label"""
        assert check_cooccurrence(tiny_manifest).valid

    def test_cooccurrence_violation_reported(self):
        """Mount record relabeled with a lying member → COOCCURRENCE on that record"""
        manifest = generate_synthetic_dataset(tiny_spec())
        index, record = next(
            (i, r) for i, r in enumerate(manifest.records) if r.kind == "interaction" and r.label == "mount"
        )
        record.member_a.label = "lying"
        result = check_cooccurrence(manifest)
        assert not result.valid
        assert result.error == "COOCCURRENCE"
        assert result.record_index == index

    def test_mount_members_are_rider_and_standing(self, tiny_manifest):
        """Every mount record → (riding, standing)"""
        for record in tiny_manifest.select("interaction"):
            if record.label == "mount":
                assert (record.member_a.label, record.member_b.label) == ("riding", "standing")

    def test_focus_boxes_for_social_classes(self, tiny_manifest):
        """interest/conflict records carry a focus box; no_interaction never does"""
        for record in tiny_manifest.select("interaction"):
            if record.label in ("interest", "conflict"):
                assert record.focus_box is not None
            if record.label == "no_interaction":
                assert record.focus_box is None


class TestSplits:
    """Stratified split assignment"""

    def test_splits_are_disjoint_and_cover_everything(self, tiny_manifest):
        """Each record in exactly one split"""
        ids = {split: {r.sample_id for r in tiny_manifest.select(split=split)} for split in ("train", "val", "test")}
        assert not ids["train"] & ids["val"]
        assert not ids["train"] & ids["test"]
        assert not ids["val"] & ids["test"]
        assert sum(len(v) for v in ids.values()) == len(tiny_manifest.records)

    def test_every_populated_class_trains(self, tiny_manifest):
        """Class present anywhere → present in train"""
        for kind in ("action", "interaction"):
            everywhere = tiny_manifest.counts(kind)
            train = tiny_manifest.counts(kind, "train")
            for name, n in everywhere.items():
                if n:
                    assert train[name] >= 1

    def test_fractions_must_leave_training_split(self):
        """val 0.5 + test 0.5 → ValidationError"""
        with pytest.raises(ValidationError):
            SyntheticSceneSpec(val_fraction=0.5, test_fraction=0.5)


class TestGpsScene:
    """generate_synthetic_gps_scene"""

    def test_counts_and_ids(self):
        """5 animals, 30 s at 2 Hz → 5 tracks of 60 fixes, sorted tracklet ids"""
        scene = generate_synthetic_gps_scene(SyntheticSceneSpec(seed=1), duration=30, rate=2)
        assert len(scene.gps_tracks) == 5
        assert all(len(track.fixes) == 60 for track in scene.gps_tracks)
        track_ids = [tr.track_id for tr in scene.tracklets]
        assert track_ids == sorted(track_ids)
        assert sorted(scene.truth) == track_ids
        assert sorted(scene.truth.values()) == [f"cow-{i:02d}" for i in range(5)]

    def test_noiseless_tracks_equal_truth(self):
        """sigma 0 → observed fixes equal the true trajectory"""
        scene = generate_synthetic_gps_scene(SyntheticSceneSpec(seed=2, gps_noise_sigma=0.0), duration=10, rate=1)
        for observed, true in zip(scene.gps_tracks, scene.truth_tracks):
            assert observed.fixes == true.fixes

    def test_noise_level(self):
        """sigma 0.5 → per-axis mean |error| ≈ sigma * sqrt(2 / pi)"""
        scene = generate_synthetic_gps_scene(SyntheticSceneSpec(seed=4, gps_noise_sigma=0.5), duration=200, rate=1)
        errors = np.concatenate([
            observed.positions - true.positions
            for observed, true in zip(scene.gps_tracks, scene.truth_tracks)
        ])
        expected = 0.5 * math.sqrt(2.0 / math.pi)
        for axis in range(2):
            assert abs(np.abs(errors[:, axis]).mean() - expected) < 0.05

    def test_tracklet_anchors_are_projected_truth(self):
        """Bottom-center anchors = H applied to the true ground positions"""
        scene = generate_synthetic_gps_scene(SyntheticSceneSpec(seed=5), duration=5, rate=1)
        H = scene.homography.matrix
        by_cattle = {track.cattle_id: track for track in scene.truth_tracks}
        for tracklet in scene.tracklets:
            ground = by_cattle[scene.truth[tracklet.track_id]].positions
            homogeneous = np.hstack([ground, np.ones((len(ground), 1))]) @ H.T
            projected = homogeneous[:, :2] / homogeneous[:, 2:3]
            np.testing.assert_allclose(tracklet.anchors(), projected, atol=1e-6)

    def test_animals_keep_their_spacing(self):
        """True positions of any two animals stay at least min_spacing_m apart"""
        spec = SyntheticSceneSpec(seed=6)
        scene = generate_synthetic_gps_scene(spec, duration=60, rate=1)
        positions = [track.positions for track in scene.truth_tracks]
        for i in range(len(positions)):
            for j in range(i + 1, len(positions)):
                distances = np.linalg.norm(positions[i] - positions[j], axis=1)
                assert distances.min() >= spec.min_spacing_m - 1e-9

    def test_tracks_only_helper(self):
        """generate_synthetic_gps_tracks returns the scene's GPS tracks"""
        spec = SyntheticSceneSpec(seed=1)
        tracks = generate_synthetic_gps_tracks(spec, duration=5, rate=1)
        assert [t.cattle_id for t in tracks] == [f"cow-{i:02d}" for i in range(5)]

    def test_crowded_arena(self):
        """50 animals on a 5 m pasture → InvalidSpec"""
        spec = SyntheticSceneSpec(n_cattle=50, arena_size=(5.0, 5.0))
        with pytest.raises(InvalidSpec):
            generate_synthetic_gps_scene(spec, duration=5, rate=1)

    def test_non_positive_duration(self):
        """duration 0 → InvalidSpec"""
        with pytest.raises(InvalidSpec):
            generate_synthetic_gps_scene(SyntheticSceneSpec(), duration=0, rate=1)
