import json
import logging

import pytest

from tubesearch.cli import main
from tubesearch.io.records import read_results, read_tubes


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    code = main([
        "synth", "--out", str(root), "--seed", "4", "--clips", "12",
        "--frames-per-clip", "14", "--people-per-clip", "2",
        "--miss-rate", "0.0", "--fp-rate", "0.05",
        "--box-jitter", "0.02", "--feature-noise", "0.03",
    ])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def cca_model(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cca")
    assert main(["train", "--dataset", str(dataset), "--method", "cca",
                 "--out", str(out)]) == 0
    return out / "model.fmat"


class TestSynth:
    def test_writes_dataset(self, dataset):
        for name in ("detections.jsonl", "annotations.jsonl", "tubes.jsonl",
                     "queries.jsonl", "desc_features.fmat", "wordvecs.txt",
                     "splits.json", "features_index.json"):
            assert (dataset / name).exists(), name

    def test_prints_counts(self, dataset, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "d"), "--clips", "2"]) == 0
        out = capsys.readouterr().out
        assert "clips: 2" in out


class TestPropose:
    def test_cap_respected(self, dataset, tmp_path, capsys):
        out = tmp_path / "proposed.jsonl"
        code = main(["propose", "--detections", str(dataset / "detections.jsonl"),
                     "--out", str(out), "--n-candidates", "5"])
        assert code == 0
        kept = read_tubes(out)
        assert len(kept) == 5
        energies = [t.energy for t in kept]
        assert energies == sorted(energies, reverse=True)

    def test_matches_dataset_pool_when_uncapped(self, dataset, tmp_path):
        out = tmp_path / "all.jsonl"
        assert main(["propose", "--detections", str(dataset / "detections.jsonl"),
                     "--out", str(out)]) == 0
        theirs = {t.tube_id for t in read_tubes(dataset / "tubes.jsonl")}
        ours = {t.tube_id for t in read_tubes(out)}
        assert ours == theirs


class TestTrainEval:
    def test_cca_artifacts(self, cca_model):
        assert cca_model.exists()
        assert (cca_model.parent / "training_log.csv").read_text() == \
            "epoch,loss,val_r_at_1\n"

    def test_eval_artifacts(self, dataset, cca_model, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(["eval", "--dataset", str(dataset), "--model", str(cca_model),
                     "--split", "test", "--out", str(out)])
        assert code == 0
        text = (out / "metrics.csv").read_text()
        assert text.startswith("metric,value\nsplit,test\n")
        assert "r_at_1," in text
        assert (out / "recall.png").stat().st_size > 0
        assert read_results(out / "results.jsonl")
        assert "R@1:" in capsys.readouterr().out

    def test_embedding_training_artifacts(self, dataset, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--dataset", str(dataset), "--method", "dspe",
                     "--out", str(out), "--epochs", "2", "--hidden-dim", "16",
                     "--out-dim", "8", "--batch-size", "32", "--seed", "0"])
        assert code == 0
        log = (out / "training_log.csv").read_text().splitlines()
        assert log[0] == "epoch,loss,val_r_at_1"
        assert len(log) == 3
        assert (out / "training_curves.png").stat().st_size > 0

    def test_sweep_artifacts(self, dataset, cca_model, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--dataset", str(dataset), "--model", str(cca_model),
                     "--nc-grid", "2,6", "--split", "test", "--out", str(out)])
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "n_candidates,pool_size,r_at_1,r_at_5,r_at_10"
        assert len(lines) == 3
        assert (out / "sweep.png").stat().st_size > 0


class TestRetrieve:
    def test_query_file(self, dataset, cca_model, tmp_path):
        qfile = tmp_path / "queries.jsonl"
        qfile.write_text("".join(
            line for i, line in enumerate((dataset / "queries.jsonl").open())
            if i < 3
        ))
        out = tmp_path / "ret"
        code = main(["retrieve", "--dataset", str(dataset), "--model", str(cca_model),
                     "--query-file", str(qfile), "--top-k", "2", "--clips",
                     "--out", str(out)])
        assert code == 0
        results = read_results(out / "results.jsonl")
        assert len(results) == 3
        assert all(len(r.tube_ids) == 2 for r in results)
        clip_lines = (out / "clips.csv").read_text().splitlines()
        assert clip_lines[0] == "clip_id,score"

    def test_free_text_query_needs_encoder(self, dataset, cca_model, tmp_path, capsys):
        code = main(["retrieve", "--dataset", str(dataset), "--model", str(cca_model),
                     "--query", "attr0hi", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "--encoder" in capsys.readouterr().err

    def test_query_and_file_conflict(self, dataset, cca_model, tmp_path, capsys):
        code = main(["retrieve", "--dataset", str(dataset), "--model", str(cca_model),
                     "--query", "a", "--query-file", "b", "--out", str(tmp_path / "x")])
        assert code == 1


class TestTextPath:
    def test_encode_then_free_text_retrieve(self, dataset, tmp_path):
        # fit the encoder into a separate directory so the planted
        # description features stay untouched for the other tests
        enc_dir = tmp_path / "enc"
        code = main(["encode-text", "--dataset", str(dataset),
                     "--out", str(enc_dir), "--k-centers", "2", "--seed", "0"])
        assert code == 0
        assert (enc_dir / "desc_features.fmat").exists()
        # a model trained against planted features cannot score encoded
        # text, so retrain on a dataset that uses the encoded features
        work = tmp_path / "dataset2"
        work.mkdir()
        for name in ("annotations.jsonl", "tubes.jsonl", "queries.jsonl",
                     "splits.json", "features_index.json", "wordvecs.txt",
                     "detections.jsonl"):
            (work / name).write_bytes((dataset / name).read_bytes())
        for fmat in dataset.glob("blocks_*.fmat"):
            (work / fmat.name).write_bytes(fmat.read_bytes())
        (work / "desc_features.fmat").write_bytes(
            (enc_dir / "desc_features.fmat").read_bytes())
        run = tmp_path / "run2"
        assert main(["train", "--dataset", str(work), "--method", "cca",
                     "--out", str(run)]) == 0
        out = tmp_path / "ret2"
        code = main(["retrieve", "--dataset", str(work),
                     "--model", str(run / "model.fmat"),
                     "--query", "attr0hi attr3lo person",
                     "--encoder", str(enc_dir / "text_encoder.fmat"),
                     "--top-k", "3", "--out", str(out)])
        assert code == 0
        (result,) = read_results(out / "results.jsonl")
        assert len(result.tube_ids) == 3


class TestErrors:
    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["propose", "--bogus"])
        assert exc.value.code == 1

    def test_missing_dataset_is_data_error(self, cca_model, tmp_path, capsys):
        code = main(["eval", "--dataset", str(tmp_path / "nope"),
                     "--model", str(cca_model), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_missing_model_is_data_error(self, dataset, tmp_path):
        assert main(["eval", "--dataset", str(dataset),
                     "--model", str(tmp_path / "nope.fmat"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_layout_mismatch_is_data_error(self, dataset, tmp_path):
        layout = tmp_path / "layout.json"
        layout.write_text('{"rgb_tube": 999}')
        assert main(["features", "--dataset", str(dataset),
                     "--out", str(tmp_path / "f.fmat"),
                     "--layout", str(layout)]) == 2

    def test_bad_grid_is_usage_error(self, dataset, cca_model, tmp_path):
        assert main(["sweep", "--dataset", str(dataset), "--model", str(cca_model),
                     "--nc-grid", "5,zero", "--out", str(tmp_path / "s")]) == 1


class TestConfigPrecedence:
    def test_config_applies_when_no_flag(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"clips": 3, "frames_per_clip": 6,
                                      "people_per_clip": 1}))
        out = tmp_path / "d"
        assert main(["synth", "--out", str(out), "--config", str(config)]) == 0
        detections = (out / "detections.jsonl").read_text().splitlines()
        assert len(detections) == 3 * 6

    def test_flag_beats_config_with_warning(self, tmp_path, caplog):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"clips": 3}))
        with caplog.at_level(logging.WARNING, logger="tubesearch.cli"):
            assert main(["synth", "--out", str(tmp_path / "d"),
                         "--config", str(config), "--clips", "2"]) == 0
        assert any("overrides config" in r.message for r in caplog.records)
        splits = json.loads((tmp_path / "d" / "splits.json").read_text())
        assert len(splits["train"] + splits["val"] + splits["test"]) == 2

    def test_malformed_config_is_usage_error(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text("{")
        assert main(["synth", "--out", str(tmp_path / "d"),
                     "--config", str(config)]) == 1
        assert "not valid JSON" in capsys.readouterr().err


class TestDeterminism:
    def test_same_seed_same_artifacts(self, tmp_path):
        metrics, models = [], []
        for run in ("r1", "r2"):
            base = tmp_path / run
            data = base / "data"
            assert main(["synth", "--out", str(data), "--seed", "17",
                         "--clips", "8", "--people-per-clip", "2",
                         "--miss-rate", "0.0"]) == 0
            assert main(["train", "--dataset", str(data), "--method", "dspe",
                         "--out", str(base / "run"), "--epochs", "3",
                         "--hidden-dim", "16", "--out-dim", "8",
                         "--batch-size", "32", "--seed", "5"]) == 0
            assert main(["eval", "--dataset", str(data),
                         "--model", str(base / "run" / "model.fmat"),
                         "--split", "test", "--out", str(base / "eval")]) == 0
            metrics.append((base / "eval" / "metrics.csv").read_bytes())
            models.append((base / "run" / "model.fmat").read_bytes())
        assert metrics[0] == metrics[1]
        assert models[0] == models[1]
