#!/usr/bin/python3

from __future__ import annotations

import os
import tempfile
import time
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt

from dreflex.errors import ConfigError, TrainingError, WeightsError
from dreflex.learn import (WEIGHTS_MAGIC, Classifier, FeatureEncoder, TrainConfig, Variants,
                           adam_init, base_rate, build_examples, fit_epoch, init_mlp, load_weights,
                           loss_and_gradient, predict_map, save_weights, select_contact,
                           select_for_situation, select_index, split_dataset, train)
from dreflex.model import load_builtin_model
from dreflex.reflex import DReflexPolicy
from dreflex.scenario import GridSpec, LookupRunner
from dreflex.sim import Condition, DamageSpec, Sensed, WallConfig

from records import SMALL_GRID, fake_records

SLOW = os.environ.get('DREFLEX_SLOW') == '1'


def make_classifier(model, variant=Variants.D_REFLEX, grid=SMALL_GRID, seed=0, hidden=(16,)):
    encoder = FeatureEncoder(model, variant, grid)
    theta = init_mlp([encoder.n_features, *hidden, 1], np.random.default_rng(seed))
    return Classifier(theta, variant, encoder.normalization, grid, model.digest)


class TestFeatures(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')

    def test_lengths(self):
        n_a = self.model.n_a
        expected = {
            'd-reflex': n_a + 4,
            'posture-ablation': 4,
            'wall-ablation': n_a + 2,
            'j-addition': n_a + 8,
            'jdq-addition': 2 * n_a + 8,
        }
        for name, n in expected.items():
            encoder = FeatureEncoder(self.model, Variants.find_by_name(name), SMALL_GRID)
            self.assertEqual(encoder.n_features, n, name)

    def test_registry(self):
        self.assertEqual(len(Variants.get_variants()), 5)
        self.assertIs(Variants.find_by_tag(3), Variants.J_ADDITION)
        with self.assertRaises(ValueError):
            Variants.find_by_name('everything')

    def test_normalized_ranges(self):
        model = self.model
        encoder = FeatureEncoder(model, Variants.D_REFLEX, SMALL_GRID)
        q = model.neutral_configuration()
        q[model.q_offset:] = model.upper
        rows = encoder.encode(q, None, 1.0, -1.0, None, SMALL_GRID.cells())
        self.assertEqual(rows.shape, (25, encoder.n_features))
        npt.assert_allclose(rows[:, :model.n_a], 1.0)
        npt.assert_allclose(rows[0, model.n_a:], [1.0, -1.0, -1.0, -1.0])
        npt.assert_allclose(rows[-1, -2:], [1.0, 1.0])

    def test_missing_inputs(self):
        model = self.model
        q = model.neutral_configuration()
        with self.assertRaises(ValueError):
            FeatureEncoder(model, Variants.JDQ_ADDITION, SMALL_GRID).encode(
                q, None, 0.5, 0.0, DamageSpec('right'), SMALL_GRID.cells())
        with self.assertRaises(ValueError):
            FeatureEncoder(model, Variants.J_ADDITION, SMALL_GRID).encode(
                q, None, 0.5, 0.0, None, SMALL_GRID.cells())


class TestWeightsFile(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name, 'weights.drfx')

    def tearDown(self):
        self.tmp.cleanup()

    def test_magic(self):
        save_weights(self.path, make_classifier(self.model))
        self.assertEqual(self.path.read_bytes()[:4], WEIGHTS_MAGIC)
        self.assertEqual(WEIGHTS_MAGIC, b'DRFX')

    def test_save_load(self):
        classifier = make_classifier(self.model, Variants.J_ADDITION)
        save_weights(self.path, classifier)
        loaded = load_weights(self.path)
        self.assertIs(loaded.variant, Variants.J_ADDITION)
        self.assertEqual(loaded.grid, SMALL_GRID)
        self.assertEqual(loaded.model_digest, self.model.digest)
        self.assertEqual(loaded.side, 'right')
        self.assertEqual(loaded.weights.dropout, classifier.weights.dropout)
        for a, b in zip(loaded.weights.params(), classifier.weights.params()):
            npt.assert_array_equal(a, b)
        npt.assert_array_equal(loaded.normalization.scale, classifier.normalization.scale)

    def corrupt(self, edit):
        save_weights(self.path, make_classifier(self.model))
        data = bytearray(self.path.read_bytes())
        self.path.write_bytes(bytes(edit(data)))
        with self.assertRaises(WeightsError):
            load_weights(self.path)

    def test_bad_magic(self):
        self.corrupt(lambda d: b'XXXX' + d[4:])

    def test_bad_version(self):
        self.corrupt(lambda d: d[:4] + b'\x09\x00' + d[6:])

    def test_unknown_variant(self):
        self.corrupt(lambda d: d[:6] + b'\x63\x00' + d[8:])

    def test_truncated(self):
        self.corrupt(lambda d: d[:-5])
        self.corrupt(lambda d: d[:20])

    def test_trailing(self):
        self.corrupt(lambda d: d + b'\x00' * 8)

    def test_non_finite(self):
        classifier = make_classifier(self.model)
        classifier.weights.weights[0][0, 0] = np.inf
        save_weights(self.path, classifier)
        with self.assertRaises(WeightsError):
            load_weights(self.path)

    def test_length_mismatch(self):
        classifier = make_classifier(self.model)
        with self.assertRaises(WeightsError):
            Classifier(classifier.weights, Variants.WALL_ABLATION,
                       FeatureEncoder(self.model, Variants.WALL_ABLATION,
                                      SMALL_GRID).normalization, SMALL_GRID)

    def test_other_model(self):
        classifier = make_classifier(self.model)
        classifier.model_digest = 'f' * 64
        with self.assertRaises(WeightsError):
            classifier.encoder(self.model)


class TestQuery(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')
        self.classifier = make_classifier(self.model, seed=3)
        self.q = self.model.neutral_configuration()
        self.q[self.model.q_offset:] = self.model.default_posture

    def test_tie_break(self):
        self.assertEqual(select_index(np.array([[0.2, 0.9], [0.9, 0.1]])), 1)
        self.assertEqual(select_index(np.full((3, 3), 0.5)), 0)

    @unittest.skipUnless(SLOW, 'set DREFLEX_SLOW=1')
    def test_full_grid_latency(self):
        grid = GridSpec((-1.0, 1.0), (-0.5, 1.5), 21, 21)
        classifier = make_classifier(self.model, grid=grid, hidden=(128, 128))
        predict_map(classifier, self.model, self.q, 0.7, 0.3)
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            select_contact(classifier, self.model, self.q, 0.7, 0.3)
            best = min(best, time.perf_counter() - t0)
        self.assertLess(best, 0.05)

    def test_map_matches_forward(self):
        conf = predict_map(self.classifier, self.model, self.q, 0.7, 0.3)
        self.assertEqual(conf.shape, SMALL_GRID.shape)
        encoder = self.classifier.encoder(self.model)
        for index, cell in enumerate(SMALL_GRID.cells()):
            row = encoder.encode(self.q, None, 0.7, 0.3, None, cell)
            self.assertAlmostEqual(self.classifier.confidence(row)[0], conf.ravel()[index],
                                   places=12)

    def test_selected_cell(self):
        conf = predict_map(self.classifier, self.model, self.q, 0.7, 0.3)
        x, y = select_contact(self.classifier, self.model, self.q, 0.7, 0.3)
        i, j = np.unravel_index(np.argmax(conf), conf.shape)
        self.assertEqual((x, y), (SMALL_GRID.xs[j], SMALL_GRID.ys[i]))

    def test_monotone_output_transform(self):
        scaled = make_classifier(self.model, seed=3)
        scaled.weights.weights[-1] *= 3.0
        scaled.weights.biases[-1] = scaled.weights.biases[-1] * 3.0 + 0.5
        a = select_contact(self.classifier, self.model, self.q, 0.6, -0.2)
        b = select_contact(scaled, self.model, self.q, 0.6, -0.2)
        self.assertEqual(a, b)

    def test_other_side(self):
        wall = WallConfig(0.6, 0.4)
        left = DamageSpec('left', {'l_knee': Condition.LOCKED})
        x, y = select_for_situation(self.classifier, self.model, self.q, None, wall, left)
        self.assertIn(-x, list(SMALL_GRID.xs))
        self.assertIn(y, list(SMALL_GRID.ys))

    def test_policy(self):
        policy = DReflexPolicy(self.classifier, self.model)
        sensed = Sensed(self.q, np.zeros(self.model.n_v), WallConfig(0.6, 0.1),
                        DamageSpec('right', {'r_knee': Condition.PASSIVE}))
        target = policy.choose(sensed)
        self.assertEqual(policy.chosen, [target])
        self.assertEqual(target, select_contact(self.classifier, self.model, self.q, 0.6, 0.1))

        with self.assertRaises(WeightsError):
            DReflexPolicy(self.classifier, self.model, variant=Variants.WALL_ABLATION)
        with self.assertRaises(WeightsError):
            DReflexPolicy(self.classifier, self.model, GridSpec((-1.0, 1.0), (-0.5, 0.5), 9, 9))
        fine = GridSpec(SMALL_GRID.x_range, SMALL_GRID.y_range, 9, 9)
        self.assertEqual(DReflexPolicy(self.classifier, self.model, fine).grid, fine)


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')

    def test_split(self):
        records = fake_records(self.model, 8)
        train_set, val_set, test_set = split_dataset(records, 0)
        self.assertEqual((len(train_set), len(val_set), len(test_set)), (3, 1, 4))
        ids = sorted(r.id for r in train_set + val_set + test_set)
        self.assertEqual(ids, list(range(8)))
        self.assertEqual([r.id for r in test_set], sorted(r.id for r in test_set))
        again = split_dataset(records, 0)
        self.assertEqual([r.id for r in again[0]], [r.id for r in train_set])

    def test_config(self):
        with self.assertRaises(ConfigError):
            TrainConfig(fractions=(0.5, 0.5, 0.5))
        with self.assertRaises(ConfigError):
            TrainConfig(learning_rate=0.0)
        with self.assertRaises(ConfigError):
            TrainConfig(hidden=())

    def test_examples(self):
        records = fake_records(self.model, 3)
        encoder = FeatureEncoder(self.model, Variants.D_REFLEX, SMALL_GRID)
        x, y = build_examples(records, encoder)
        self.assertEqual(x.shape, (75, encoder.n_features))
        self.assertEqual(y.sum(), 27)
        self.assertAlmostEqual(base_rate(records), 27 / 75)

    def test_fit_epoch(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(256, 2))
        y = (x[:, 0] - x[:, 1] > 0).astype(float)
        config = TrainConfig(learning_rate=1e-2, batch_size=32, hidden=(8,), dropout=0.0)
        theta = init_mlp([2, 8, 1], rng, 0.0)
        state = adam_init(theta)
        first, _ = loss_and_gradient(theta, x, y)
        for _ in range(20):
            theta, state, loss = fit_epoch(theta, state, x, y, config, rng)
        self.assertLess(loss, first)
        self.assertEqual(state.t, 20 * 8)

    def test_selection(self):
        records = fake_records(self.model, 12, seed=1)
        config = TrainConfig(learning_rate=1e-3, batch_size=64, epochs=5, eval_period=2,
                             hidden=(16,))
        classifier, report = train(self.model, records[:8], records[8:], config,
                                   Variants.D_REFLEX, SMALL_GRID, LookupRunner())
        self.assertEqual(len(report.losses), 5)
        self.assertEqual([e for e, _ in report.evaluations], [1, 3, 4])
        rates = [r for _, r in report.evaluations]
        self.assertEqual(report.selected_rate, max(rates))
        self.assertEqual(report.selected_epoch, report.evaluations[rates.index(max(rates))][0])
        self.assertIs(classifier.variant, Variants.D_REFLEX)
        self.assertGreater(report.wall_clock, 0)
        self.assertAlmostEqual(report.base_rates['train'], 9 / 25)

    def test_deterministic(self):
        records = fake_records(self.model, 6, seed=2)
        config = TrainConfig(learning_rate=1e-3, epochs=2, hidden=(8,))
        a, _ = train(self.model, records[:4], records[4:], config, Variants.D_REFLEX, SMALL_GRID)
        b, _ = train(self.model, records[:4], records[4:], config, Variants.D_REFLEX, SMALL_GRID)
        for p, q in zip(a.weights.params(), b.weights.params()):
            npt.assert_array_equal(p, q)

    def test_nothing_to_validate(self):
        records = fake_records(self.model, 4)
        for r in records[2:]:
            r.map.cells[:] = False
        with self.assertRaises(TrainingError):
            train(self.model, records[:2], records[2:], TrainConfig(epochs=1, hidden=(4,)),
                  Variants.D_REFLEX, SMALL_GRID)
        with self.assertRaises(TrainingError):
            train(self.model, [], records[:2], TrainConfig(epochs=1, hidden=(4,)),
                  Variants.D_REFLEX, SMALL_GRID)


if __name__ == '__main__':
    unittest.main()
