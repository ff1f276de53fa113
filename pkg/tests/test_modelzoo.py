import json
import shutil

import numpy as np
import pytest

from trojan_scope.datagen import PoisonPlan, TriggerSpec, generate_clean
from trojan_scope.modelzoo import (ARCHITECTURES, ModelLoadError, ModelRecord, QualityGateError, TrainHyper, ZooConfig,
                                   ZooGenerationError, assign_roles, build_network, draw_plan, evaluate,
                                   generate_zoo, load_manifest, load_model, probe_set, train_model)

SIDE = 20


def tiny_config(**overrides):
    base = dict(n_models=4, n_train_per_class=6, n_test_per_class=3, epochs=1, image_size=SIDE,
                min_benign_accuracy=0.0, min_attack_success=0.0, clean_margin=1.0, master_seed=7)
    base.update(overrides)
    return ZooConfig(**base)


def constant_net(arch, target, n_classes=10, side=SIDE):
    """Network whose last dense layer ignores its input and always favours ``target``."""
    net = build_network(arch, seed=0, n_classes=n_classes, side=side)
    head = net.param_layers()[-1]
    head.weight.data[:] = 0.0
    head.bias.data[:] = 0.0
    head.bias.data[target] = 1.0
    return net


@pytest.fixture(scope="module")
def test_data():
    return generate_clean(11, 5, height=SIDE, width=SIDE)


@pytest.fixture
def plan():
    trig = TriggerSpec("polygon", ((1, 1), (5, 1), (3, 5)), fill=1.0)
    return PoisonPlan(trig, (1, 2), target_class=4, rate=0.2, seed=0)


class TestArchitectures:
    @pytest.mark.parametrize("arch", sorted(ARCHITECTURES))
    def test_builds_at_default_size(self, arch):
        net = build_network(arch, seed=0)
        assert net.input_shape == (1, 28, 28)
        assert net.n_classes == 10
        logits, _ = net.forward(np.zeros((2, 1, 28, 28), np.float32))
        assert logits.shape == (2, 10)

    def test_penultimate_widths(self):
        widths = {a: build_network(a, 0).penultimate_width for a in ARCHITECTURES}
        assert widths == {"modded_badnet": 256, "badnet": 64, "modded_lenet5": 48}

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown architecture"):
            build_network("resnet", 0)

    def test_seeded(self):
        a, b = build_network("badnet", 3), build_network("badnet", 3)
        assert all(np.array_equal(p.data, q.data) for p, q in zip(a.params(), b.params()))


class TestEvaluate:
    def test_constant_classifier(self, test_data, plan):
        net = constant_net("badnet", plan.target_class)
        assert evaluate(net, test_data, plan) == 1.0
        # accuracy recount: only rows labelled with the target class are right
        assert evaluate(net, test_data) == np.count_nonzero(test_data.labels == 4) / len(test_data)

    def test_never_target(self, test_data, plan):
        net = constant_net("badnet", 0)
        assert evaluate(net, test_data, plan) == 0.0

    def test_errors(self, test_data, plan):
        net = constant_net("badnet", 0)
        with pytest.raises(ValueError, match="empty"):
            evaluate(net, test_data.subset([]))
        with pytest.raises(ValueError, match="do not match"):
            evaluate(net, generate_clean(0, 1, height=28, width=28))
        with pytest.raises(ValueError, match="source-class"):
            evaluate(net, test_data.with_classes([0, 3]), plan)


class TestRecords:
    def test_benign_has_no_metadata(self):
        rec = ModelRecord("m0000", "badnet", 1, False)
        with pytest.raises(LookupError, match="benign"):
            rec.trojan_metadata()

    def test_consistency(self, plan):
        with pytest.raises(ValueError):
            ModelRecord("m0000", "badnet", 1, True)
        with pytest.raises(ValueError):
            ModelRecord("m0000", "badnet", 1, False, plan)

    def test_dict_roundtrip(self, plan):
        rec = ModelRecord("m0003", "badnet", 5, True, plan, 0.97, 0.93)
        back = ModelRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        assert back == rec
        assert back.trojan_metadata() == plan

    def test_gate_rejects(self, test_data):
        with pytest.raises(QualityGateError) as info:
            train_model("m0000", "badnet", test_data, test_data, None, TrainHyper(epochs=1), seed=0,
                        gate=lambda r: "always")
        assert info.value.record.model_id == "m0000"
        assert info.value.reason == "always"


class TestZooConfig:
    def test_roles_exact(self):
        for n in (1, 2, 7, 80):
            roles = assign_roles(ZooConfig(n_models=n))
            assert roles.sum() == round(n * 0.5)
        roles = assign_roles(ZooConfig(n_models=2))
        assert sorted(roles.tolist()) == [False, True]

    @pytest.mark.parametrize("kwargs", [{"architectures": ()}, {"trojan_fraction": 1.5}, {"n_models": 0},
                                        {"architectures": ("vgg",)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ZooConfig(**kwargs)

    def test_plan_draws(self):
        cfg = ZooConfig()
        rng = np.random.default_rng(0)
        for _ in range(100):
            p = draw_plan(rng, cfg)
            assert p.target_class not in p.source_classes
            assert len(p.source_classes) in (1, 2, 9)
            assert p.rate in cfg.poisoning_rates

    def test_digest_ignores_workers(self):
        assert ZooConfig(workers=1).digest() == ZooConfig(workers=4).digest()
        assert ZooConfig(epochs=1).digest() != ZooConfig(epochs=2).digest()

    def test_probe_set_disjoint_seed(self):
        a = probe_set(0, n_per_class=2)
        assert a.images.shape == (20, 1, 28, 28)
        assert np.array_equal(a.images, probe_set(0, n_per_class=2).images)


@pytest.fixture(scope="module")
def zoo(tmp_path_factory):
    out = tmp_path_factory.mktemp("zoo")
    return out, generate_zoo(tiny_config(), out)


class TestZooGeneration:
    def test_manifest(self, zoo):
        out, manifest = zoo
        assert [m["model_id"] for m in manifest["models"]] == ["m0000", "m0001", "m0002", "m0003"]
        assert sum(m["is_trojaned"] for m in manifest["models"]) == 2
        for m in manifest["models"]:
            assert (m["plan"] is None) != m["is_trojaned"]
        assert load_manifest(out) == json.loads(json.dumps(manifest))

    def test_load_model(self, zoo):
        out, manifest = zoo
        net, rec = load_model(out, "m0001")
        assert rec.to_dict() == manifest["models"][1]
        assert net.input_shape == (1, SIDE, SIDE)

    def test_deterministic(self, zoo, tmp_path):
        out, manifest = zoo
        again = generate_zoo(tiny_config(), tmp_path / "again")
        strip = lambda ms: [{k: v for k, v in m.items() if k != "train_seconds"} for m in ms]  # noqa: E731
        assert strip(again["models"]) == strip(manifest["models"])
        for mid in ("m0000", "m0003"):
            assert (out / mid / "weights.bin").read_bytes() == (tmp_path / "again" / mid / "weights.bin").read_bytes()

    def test_resume_skips_finished(self, zoo):
        out, manifest = zoo
        seen = []
        again = generate_zoo(tiny_config(), out, progress=seen.append)
        assert seen == []
        assert again["models"] == manifest["models"]

    def test_damaged_weights(self, zoo, tmp_path):
        out, _ = zoo
        shutil.copytree(out / "m0002", tmp_path / "m0002")
        blob = tmp_path / "m0002" / "weights.bin"
        blob.write_bytes(blob.read_bytes()[:-7])
        with pytest.raises(ModelLoadError) as info:
            load_model(tmp_path, "m0002")
        assert info.value.model_id == "m0002"


def test_retry_budget_exhausted(tmp_path):
    cfg = tiny_config(n_models=1, trojan_fraction=0.0, min_benign_accuracy=1.01, max_retries=1)
    with pytest.raises(ZooGenerationError, match="m0000"):
        generate_zoo(cfg, tmp_path)
