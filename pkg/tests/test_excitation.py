import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trojan_scope.datagen import Dataset, generate_clean
from trojan_scope.excitation import (DegenerateModelError, ExcitationSchedule, build_curve_tensor, curve_areas,
                                     excitation_value, excite_and_score, rank_neurons, steepest_curve_auc)
from trojan_scope.modelzoo import build_network


def labelled(z, labels):
    return SimpleNamespace(images=None, labels=np.asarray(labels))


@pytest.fixture
def ghost_setup(make_linear_head):
    """Neurons 1-3 encode classes 0-2; neuron 0 is silent on clean data and only feeds class 2."""
    w = np.zeros((3, 4))
    w[0, 1] = w[1, 2] = w[2, 3] = 1.0
    w[2, 0] = 5.0
    labels = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 1])
    z = np.zeros((len(labels), 4))
    z[np.arange(len(labels)), labels + 1] = 1.0
    return make_linear_head(w), z, labels, w


@pytest.fixture(scope="module")
def conv_probe():
    rng = np.random.default_rng(5)
    return Dataset(rng.uniform(size=(30, 1, 9, 9)), rng.integers(0, 3, 30), 3)


class TestSchedule:
    def test_counts(self):
        sched = ExcitationSchedule(48)
        assert sched.counts[0] == 0 and sched.counts[-1] == 48
        assert len(sched.counts) == 40
        assert np.all(np.diff(sched.counts) > 0)
        np.testing.assert_allclose(sched.fractions, sched.counts / 48)

    def test_minimum_width(self):
        assert np.array_equal(ExcitationSchedule(39).counts, np.arange(40))
        with pytest.raises(ValueError):
            ExcitationSchedule(38)
        with pytest.raises(ValueError):
            ExcitationSchedule(10, n_steps=1)

    @given(st.integers(39, 600))
    def test_strictly_increasing(self, width):
        counts = ExcitationSchedule(width).counts
        assert np.all(np.diff(counts) > 0) and counts[-1] == width

    def test_step_at_fraction(self):
        sched = ExcitationSchedule(100, n_steps=11)
        assert sched.step_at_fraction(0.05) == 1
        assert sched.step_at_fraction(0.3) == 3
        assert sched.step_at_fraction(0.0) == 0


class TestExcitationValue:
    def test_twice_max(self, make_linear_head):
        net = make_linear_head(np.ones((2, 3)))
        z = np.array([[0.0, 3.5, 1.0], [2.0, 0.0, 3.5]])
        assert excitation_value(net, z=z) == 7.0
        assert excitation_value(net, z=2 * z) == 14.0

    def test_recount(self, conv_net, conv_probe):
        z = conv_net.features(conv_probe.images)
        peak = max(float(v) for row in z for v in row)
        assert excitation_value(conv_net, conv_probe) == 2 * peak

    def test_degenerate(self, make_linear_head):
        net = make_linear_head(np.ones((2, 3)))
        with pytest.raises(DegenerateModelError):
            excitation_value(net, z=np.zeros((4, 3)))
        with pytest.raises(ValueError):
            excitation_value(net, z=np.zeros((0, 3)))


class TestRankNeurons:
    def test_examples(self):
        assert rank_neurons([0.1, 0.9, 0.5]).tolist() == [1, 2, 0]
        assert rank_neurons(np.full(6, 0.2)).tolist() == list(range(6))
        assert rank_neurons([-1.0, 2.0, -3.0]).tolist() == [1, 0, 2]

    @settings(max_examples=60)
    @given(arrays(np.float64, st.integers(1, 40), elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0, 3.25])))
    def test_reference_sort(self, row):
        expected = sorted(range(len(row)), key=lambda i: (-row[i], i))
        assert rank_neurons(row).tolist() == expected

    def test_non_finite(self):
        with pytest.raises(ValueError):
            rank_neurons([0.0, np.nan])


class TestExciteAndScore:
    def test_ghost_flip(self, ghost_setup):
        net, z, labels, w = ghost_setup
        sched = ExcitationSchedule(4, n_steps=4)
        assert sched.counts.tolist() == [0, 1, 3, 4]
        value = excitation_value(net, z=z)
        curve = excite_and_score(net, labelled(z, labels), [0, 1, 2, 3], sched, value, z=z)
        # brute-force forward of the excited activations
        excited = z.copy()
        excited[:, 0] = value
        expected = np.mean((excited @ w.T).argmax(axis=1) == labels)
        assert curve[0] == 1.0
        assert curve[1] == expected == np.mean(labels == 2)

    def test_final_step_constant_logits(self, rng, make_linear_head):
        w, b = rng.normal(size=(4, 6)), rng.normal(size=4)
        net = make_linear_head(w, b)
        z = np.abs(rng.normal(size=(25, 6)))
        labels = rng.integers(0, 4, 25)
        sched = ExcitationSchedule(6, n_steps=5)
        value = excitation_value(net, z=z)
        curve = excite_and_score(net, labelled(z, labels), rng.permutation(6), sched, value, z=z)
        logits = np.full(6, value, dtype=np.float32) @ w.astype(np.float32).T + b.astype(np.float32)
        winner = int(np.argmax(logits))
        assert curve[-1] == sum(1 for y in labels if y == winner) / 25

    def test_zero_column_never_matters(self, rng, make_linear_head):
        w = rng.normal(size=(3, 5))
        w[:, 2] = 0.0
        net = make_linear_head(w)
        z = np.abs(rng.normal(size=(40, 5)))
        labels = rng.integers(0, 3, 40)
        sched = ExcitationSchedule(5, n_steps=6)
        value = excitation_value(net, z=z)
        ordering = [2, 0, 4, 1, 3]
        curve = excite_and_score(net, labelled(z, labels), ordering, sched, value, z=z)
        scrambled = z.copy()
        scrambled[:, 2] = rng.uniform(0, 50, 40)
        assert np.array_equal(curve, excite_and_score(net, labelled(z, labels), ordering, sched, value, z=scrambled))
        assert curve[1] == curve[0]

    def test_errors(self, ghost_setup):
        net, z, labels, _ = ghost_setup
        sched = ExcitationSchedule(4, n_steps=4)
        probe = labelled(z, labels)
        with pytest.raises(ValueError, match="finite"):
            excite_and_score(net, probe, [0, 1, 2, 3], sched, np.inf, z=z)
        with pytest.raises(ValueError, match="permutation"):
            excite_and_score(net, probe, [0, 0, 2, 3], sched, 2.0, z=z)
        with pytest.raises(ValueError, match="schedule"):
            excite_and_score(net, probe, [0, 1, 2, 3], ExcitationSchedule(5, 4), 2.0, z=z)


class TestCurveTensor:
    def test_desk_shape(self):
        net = build_network("badnet", seed=4)
        probe = generate_clean(9, 20)
        cs = build_curve_tensor(net, probe, "gradxact", model_id="m0009")
        assert cs.curves.shape == (10, 40)
        assert np.all((cs.raw >= 0) & (cs.raw <= 1))
        assert cs.baseline_accuracy == np.mean(net.predict(probe.images) == probe.labels)
        assert np.all(cs.raw[:, 0] == cs.baseline_accuracy)
        np.testing.assert_allclose(cs.normalized, cs.raw / cs.baseline_accuracy)

    def test_deterministic(self, conv_net, conv_probe):
        a = build_curve_tensor(conv_net, conv_probe, "ig", n_steps=6)
        b = build_curve_tensor(conv_net, conv_probe, "ig", n_steps=6)
        assert np.array_equal(a.raw, b.raw)

    @pytest.mark.parametrize("method", ["ig", "gradxact"])
    def test_probe_order_free(self, conv_net, conv_probe, method):
        perm = np.random.default_rng(0).permutation(len(conv_probe))
        a = build_curve_tensor(conv_net, conv_probe, method, n_steps=6)
        b = build_curve_tensor(conv_net, conv_probe.subset(perm), method, n_steps=6)
        assert np.array_equal(a.raw, b.raw)

    def test_zero_baseline(self, make_linear_head):
        net = make_linear_head(np.eye(2)[:, [1, 0]])  # every probe lands in the other class
        probe = SimpleNamespace(images=np.eye(2), labels=np.array([0, 1]))
        with pytest.raises(DegenerateModelError):
            build_curve_tensor(net, probe, n_steps=2)

    def test_areas(self, conv_net, conv_probe):
        cs = build_curve_tensor(conv_net, conv_probe, n_steps=6)
        areas = curve_areas(cs)
        manual = [sum((cs.fractions[t + 1] - cs.fractions[t]) * (row[t] + row[t + 1]) / 2 for t in range(5))
                  for row in cs.normalized]
        np.testing.assert_allclose(areas, manual, rtol=1e-12)
        assert steepest_curve_auc(cs) == areas.min()

    def test_csv(self, conv_net, conv_probe, tmp_path):
        cs = build_curve_tensor(conv_net, conv_probe, n_steps=6, model_id="m0004")
        cs.write_csv(tmp_path / "c.csv")
        with open(tmp_path / "c.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["model_id", "class", "step", "fraction_excited", "accuracy", "normalized_accuracy"]
        assert len(rows) == 3 * 6
        assert float(rows[7]["accuracy"]) == cs.raw[1, 1]

