import numpy as np
import pytest

from tubesearch.evaluation import evaluate_pair
from tubesearch.features import FeatureStore
from tubesearch.io.records import (
    annotation_to_tube,
    read_annotations,
    read_detections,
    read_json,
    read_queries,
    read_tubes,
    record_to_tube,
)
from tubesearch.io.synth import FILLER_TOKENS, SynthConfig, generate_synthetic
from tubesearch.text.wordvecs import load_word_vectors


def clean_config(**kw):
    base = dict(seed=3, clips=4, frames_per_clip=12, people_per_clip=2,
                box_jitter=0.0, fp_rate=0.0, miss_rate=0.0, feature_noise=0.0)
    base.update(kw)
    return SynthConfig(**base)


class TestGenerate:
    def test_noise_free_proposals_recover_planted_people(self, tmp_path):
        generate_synthetic(clean_config(), tmp_path)
        tubes = [record_to_tube(r) for r in read_tubes(tmp_path / "tubes.jsonl")]
        by_clip = {}
        for t in tubes:
            by_clip.setdefault(t.clip_id, []).append(t)
        annotations = read_annotations(tmp_path / "annotations.jsonl")
        assert len(annotations) == 8
        for ann in annotations:
            gt = annotation_to_tube(ann)
            best = max(
                evaluate_pair(gt, t, ann.eligible_frames).score
                for t in by_clip[ann.clip_id]
            )
            assert best > 0.9, f"{ann.person_id} best overlap {best}"

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic(SynthConfig(seed=11, clips=3), a)
        generate_synthetic(SynthConfig(seed=11, clips=3), b)
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic(SynthConfig(seed=1, clips=3), a)
        generate_synthetic(SynthConfig(seed=2, clips=3), b)
        assert (a / "detections.jsonl").read_bytes() != (b / "detections.jsonl").read_bytes()

    def test_all_missed_detections_mean_no_tubes(self, tmp_path):
        counts = generate_synthetic(
            SynthConfig(seed=0, clips=2, miss_rate=1.0, fp_rate=0.0), tmp_path
        )
        assert counts["detections"] == 0
        assert counts["tubes"] == 0
        assert read_tubes(tmp_path / "tubes.jsonl") == []
        store = FeatureStore.load(tmp_path)
        assert store.tube_ids() == []

    def test_feature_store_loads_and_covers_every_tube_second(self, tmp_path):
        generate_synthetic(clean_config(), tmp_path)
        store = FeatureStore.load(tmp_path)
        tubes = [record_to_tube(r) for r in read_tubes(tmp_path / "tubes.jsonl")]
        assert sorted(store.tube_ids()) == sorted(t.tube_id for t in tubes)
        for t in tubes:
            assert store.seconds(t.tube_id) == list(range(t.start_frame, t.end_frame + 1))
            vec = store.tube_vector(t.tube_id)
            assert vec.shape == (store.layout.total_dim,)
            assert np.isfinite(vec).all()

    def test_queries_align_with_desc_features(self, tmp_path):
        generate_synthetic(clean_config(), tmp_path)
        queries = read_queries(tmp_path / "queries.jsonl")
        from tubesearch.io.fmat import read_fmat

        desc = read_fmat(tmp_path / "desc_features.fmat")
        assert desc.shape[0] == len(queries)
        # five descriptions per person, ids person#0..person#4
        assert len(queries) == 8 * 5
        suffixes = sorted(q.query_id.rsplit("#", 1)[1] for q in queries[:5])
        assert suffixes == ["0", "1", "2", "3", "4"]

    def test_descriptions_spell_latent_signs(self, tmp_path):
        generate_synthetic(clean_config(), tmp_path)
        for ann in read_annotations(tmp_path / "annotations.jsonl"):
            assert len(ann.descriptions) == 5
            for text in ann.descriptions:
                assert any(tok.startswith("attr") for tok in text.split())

    def test_wordvecs_cover_attribute_and_filler_tokens(self, tmp_path):
        config = clean_config()
        generate_synthetic(config, tmp_path)
        table = load_word_vectors(tmp_path / "wordvecs.txt")
        for d in range(config.latent_dim):
            assert f"attr{d}hi" in table
            assert f"attr{d}lo" in table
        for token in FILLER_TOKENS:
            assert token in table

    def test_splits_partition_clips(self, tmp_path):
        config = SynthConfig(seed=5, clips=10)
        generate_synthetic(config, tmp_path)
        splits = read_json(tmp_path / "splits.json")
        ids = splits["train"] + splits["val"] + splits["test"]
        assert sorted(ids) == [f"c{i:03d}" for i in range(10)]
        assert len(set(ids)) == 10
        assert splits["train"] and splits["test"]

    def test_detection_scores_track_overlap_quality(self, tmp_path):
        generate_synthetic(clean_config(clips=2), tmp_path)
        for rec in read_detections(tmp_path / "detections.jsonl"):
            for box in rec.boxes:
                # jitter-free detections sit exactly on the person
                assert box["score"] == pytest.approx(0.95)

    def test_rejects_bad_rates(self):
        with pytest.raises(ValueError, match="miss_rate"):
            SynthConfig(miss_rate=1.5)
        with pytest.raises(ValueError, match="fp_rate"):
            SynthConfig(fp_rate=-0.1)
        with pytest.raises(ValueError, match="test split"):
            SynthConfig(train_fraction=0.9, val_fraction=0.2)
