import json
import shutil

import numpy as np
import pytest

from trojan_scope.detector import DetectorHyper
from trojan_scope.harness import (PipelineConfig, SplitError, StageError, ablation_report, crossfit_splits,
                                  run_pipeline, split, stratified_folds)
from trojan_scope.harness.cli import build_parser, main
from trojan_scope.modelzoo import ZooConfig


def ids_labels(n, n_pos):
    return [f"m{i:04d}" for i in range(n)], [1] * n_pos + [0] * (n - n_pos)


def tiny_pipeline(out_dir, **overrides):
    zoo = ZooConfig(n_models=16, n_train_per_class=10, n_test_per_class=3, epochs=2, image_size=20,
                    min_benign_accuracy=0.0, min_attack_success=0.0, clean_margin=1.0)
    base = dict(zoo=zoo, probe_per_class=3, ig_steps=4, split_ratios=(0.5, 0.25, 0.25), n_splits=2,
                crossfit_folds=4, detector=DetectorHyper(epochs=2, learning_rates=(1e-3,), n_members=1),
                master_seed=3, out_dir=str(out_dir))
    base.update(overrides)
    return PipelineConfig(**base)


class TestSplits:
    @pytest.mark.parametrize("n,n_pos,sizes", [(10, 5, (8, 1, 1)), (80, 40, (64, 8, 8)), (100, 40, (80, 10, 10))])
    def test_sizes_and_stratification(self, n, n_pos, sizes):
        ids, labels = ids_labels(n, n_pos)
        s = split(ids, labels, seed=0)
        parts = (s.train, s.val, s.test)
        assert tuple(map(len, parts)) == sizes
        assert sorted(s.train + s.val + s.test) == ids
        lab = dict(zip(ids, labels))
        for part in parts:
            share = len(part) * n_pos / n
            assert abs(sum(lab[m] for m in part) - share) < 1
            if len(part) >= 2:
                assert {lab[m] for m in part} == {0, 1}

    def test_deterministic_per_seed(self):
        ids, labels = ids_labels(40, 20)
        assert split(ids, labels, seed=1) == split(ids, labels, seed=1)
        assert split(ids, labels, seed=1) != split(ids, labels, seed=2)

    def test_errors(self):
        ids, labels = ids_labels(20, 1)
        with pytest.raises(SplitError, match="one label"):
            split(ids, labels)
        with pytest.raises(SplitError, match="cannot fill"):
            split(*ids_labels(2, 1))
        with pytest.raises(SplitError, match="length"):
            split(["a", "b"], [1])

    def test_folds(self):
        ids, labels = ids_labels(40, 20)
        folds = stratified_folds(ids, labels, 10, seed=0)
        assert sorted(m for f in folds for m in f) == ids
        lab = dict(zip(ids, labels))
        assert all(len(f) == 4 and sum(lab[m] for m in f) == 2 for f in folds)
        with pytest.raises(SplitError):
            stratified_folds(*ids_labels(20, 5), 10)

    def test_crossfit_tests_partition(self):
        ids, labels = ids_labels(40, 20)
        parts = crossfit_splits(ids, labels, 10)
        assert sorted(m for p in parts for m in p.test) == ids
        for p in parts:
            assert not set(p.train) & set(p.val) and not set(p.train) & set(p.test) and not set(p.val) & set(p.test)
            assert len(p.train) + len(p.val) + len(p.test) == 40


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"split_ratios": (0.5, 0.5)}, {"split_ratios": (0.8, 0.3, -0.1)},
                                        {"n_splits": 0}, {"crossfit_folds": 2}, {"method": "lrp"},
                                        {"probe_per_class": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)

    def test_seed_propagates(self):
        cfg = PipelineConfig(master_seed=9)
        assert cfg.zoo.master_seed == 9 and cfg.detector.seed == 9

    def test_digests(self, tmp_path):
        a = PipelineConfig(out_dir="x")
        assert a.digest() == PipelineConfig(out_dir="y").digest()
        changed_detector = PipelineConfig(detector=DetectorHyper(epochs=3))
        assert changed_detector.features_digest() == a.features_digest()
        assert changed_detector.detector_digest() != a.detector_digest()
        changed_zoo = PipelineConfig(zoo=ZooConfig(epochs=3))
        assert changed_zoo.features_digest() != a.features_digest()
        assert changed_zoo.detector_digest() != a.detector_digest()
        path = tmp_path / "c.json"
        path.write_text(json.dumps(a.to_dict()))
        assert PipelineConfig.load(path).digest() == a.digest()
        assert PipelineConfig.load(path, master_seed=4).master_seed == 4


def manifest_for(rows):
    models = []
    for i, (troj, variant, n_src, rate) in enumerate(rows):
        plan = None if not troj else {"trigger": {"variant": variant}, "source_classes": list(range(n_src)),
                                      "target_class": 9, "rate": rate}
        models.append({"model_id": f"m{i:04d}", "is_trojaned": troj, "plan": plan})
    return {"config": {"n_classes": 10}, "models": models}


class TestAblation:
    ROWS = [(False, None, 0, 0), (False, None, 0, 0), (True, "polygon", 1, 0.05), (True, "filter", 9, 0.2),
            (True, "filter", 2, 0.15), (True, "polygon", 9, 0.1)]

    def test_slices(self):
        scores = {f"m{i:04d}": s for i, s in enumerate([0.1, 0.3, 0.2, 0.9, 0.5, 0.05])}
        rep = ablation_report(scores, manifest_for(self.ROWS))
        assert set(rep["source_classes"]) == {"1", "2", "all"}
        assert rep["source_classes"]["all"]["auc"] == 0.5
        assert rep["rate_band"]["high"]["n_trojaned"] == 2
        assert rep["rate_band"]["high"]["auc"] == 1.0
        for axis in rep.values():
            assert sum(v["n_trojaned"] for v in axis.values()) == 4
            assert all(v["n_benign"] == 2 for v in axis.values())

    def test_undefined_slice(self):
        rows = [(True, "polygon", 1, 0.1), (True, "filter", 1, 0.1)]
        rep = ablation_report({"m0000": 0.3, "m0001": 0.6}, manifest_for(rows))
        assert rep["trigger_type"]["polygon"]["auc"] is None

    def test_mismatch(self):
        with pytest.raises(ValueError, match="disagree"):
            ablation_report({"m0000": 0.1}, manifest_for(self.ROWS))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tiny_pipeline(out)
    return cfg, run_pipeline(cfg)


class TestPipeline:
    def test_artifacts(self, tiny_run):
        cfg, report = tiny_run
        out = cfg.out_dir
        assert len(report.split_aucs) == 2
        assert report.mean_auc == pytest.approx(np.mean(report.split_aucs))
        assert set(report.timing) == {"zoo", "features", "detector"}
        written = json.loads(open(f"{out}/report.json").read())
        assert written["config_digest"] == report.config_digest
        header = open(f"{out}/features/curves.csv").readline().strip()
        assert header == "model_id,class,step,fraction_excited,accuracy,normalized_accuracy"
        assert open(f"{out}/detector/split_0/scores.csv").readline().strip() == "model_id,score,true_label"

    def test_rerun_is_idempotent(self, tiny_run):
        cfg, report = tiny_run
        stamps = {s: open(f"{cfg.out_dir}/{s}/stage.json").read() for s in ("zoo", "features", "detector")}
        again = run_pipeline(cfg)
        assert again == report
        assert stamps == {s: open(f"{cfg.out_dir}/{s}/stage.json").read() for s in stamps}

    def test_corrupt_weights_name_the_model(self, tiny_run, tmp_path):
        cfg, _ = tiny_run
        shutil.copytree(cfg.out_dir, tmp_path / "run")
        (tmp_path / "run" / "features" / "stage.json").unlink()
        blob = tmp_path / "run" / "zoo" / "m0005" / "weights.bin"
        blob.write_bytes(blob.read_bytes()[:-9])
        with pytest.raises(StageError) as info:
            run_pipeline(tiny_pipeline(tmp_path / "run"))
        assert info.value.stage == "features" and info.value.model_id == "m0005"
        assert "m0005" in str(info.value)

    def test_type_check(self):
        with pytest.raises(TypeError):
            run_pipeline({"out_dir": "x"})


class TestCli:
    def test_help(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        assert "theorem" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [["zoo", "generate"], ["features", "extract", "--out", "x"],
                                      ["detector", "eval", "--out", "x", "--features", "f"], ["unknown"]])
    def test_usage_errors(self, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2

    @pytest.mark.parametrize("argv", [["zoo", "generate", "--out", "z", "--n-models", "3", "--workers", "2"],
                                      ["features", "extract", "--out", "f", "--zoo", "z", "--method", "gradxact"],
                                      ["detector", "train", "--out", "d", "--features", "f", "--seed", "4"],
                                      ["run", "--out", "r", "--config", "c.json"]])
    def test_flags_parse(self, argv):
        assert build_parser().parse_args(argv).out.name == argv[argv.index("--out") + 1]

    def test_missing_run_dir_fails(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path / "nothing")]) == 1
        assert "error" in capsys.readouterr().err

    def test_theorem_sim(self, tmp_path, capsys):
        assert main(["theorem", "sim", "--out", str(tmp_path), "--samples", "2000", "--steps", "5"]) == 0
        assert len(list(tmp_path.glob("trajectory_delta_*.csv"))) == 4
        assert "delta_w=2" in capsys.readouterr().out

    def test_report_and_eval(self, tiny_run, tmp_path, capsys):
        cfg, report = tiny_run
        out = str(cfg.out_dir)
        assert main(["report", "--out", out]) == 0
        assert json.loads(capsys.readouterr().out.strip())["mean_auc"] == pytest.approx(report.mean_auc)
        scores = tmp_path / "eval" / "scores.csv"
        assert main(["detector", "eval", "--out", str(scores), "--detector", f"{out}/detector/split_0/model",
                     "--features", f"{out}/features"]) == 0
        assert len(scores.read_text().splitlines()) == 17

    def test_stage_error_exit_code(self, tiny_run, tmp_path, capsys):
        cfg, _ = tiny_run
        shutil.copytree(cfg.out_dir, tmp_path / "run")
        blob = tmp_path / "run" / "zoo" / "m0002" / "weights.bin"
        blob.write_bytes(b"junk")
        config = tmp_path / "c.json"
        config.write_text(json.dumps(cfg.to_dict()))
        code = main(["features", "extract", "--out", str(tmp_path / "f"), "--zoo", str(tmp_path / "run" / "zoo"),
                     "--config", str(config)])
        assert code == 2
        assert "m0002" in capsys.readouterr().err
