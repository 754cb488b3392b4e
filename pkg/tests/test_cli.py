#!/usr/bin/python3

from __future__ import annotations

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from dreflex.cli import main
from dreflex.learn import Classifier, FeatureEncoder, Variants, init_mlp, save_weights
from dreflex.model import load_builtin_model
from dreflex.scenario import DatasetHeader, SamplingConfig, read_dataset, write_dataset
from dreflex.sim import EpisodeConfig

from records import SMALL_GRID, fake_records


def run(*argv) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        ret = main(list(argv))
    return ret, out.getvalue(), err.getvalue()


class TestCli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.model = load_builtin_model('humanoid')

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def dataset(self) -> str:
        path = self.dir / 'dataset.jsonl.gz'
        header = DatasetHeader(self.model.name, self.model.digest, SMALL_GRID, EpisodeConfig(),
                               0, SamplingConfig().to_dict())
        write_dataset(path, header, [r.to_dict() for r in fake_records(self.model, 8)])
        return str(path)

    def weights(self) -> str:
        encoder = FeatureEncoder(self.model, Variants.D_REFLEX, SMALL_GRID)
        theta = init_mlp([encoder.n_features, 8, 1], np.random.default_rng(0))
        path = self.dir / 'weights.drfx'
        save_weights(path, Classifier(theta, Variants.D_REFLEX, encoder.normalization,
                                      SMALL_GRID, self.model.digest))
        return str(path)

    def test_validate_model(self):
        ret, out, _ = run('validate-model', 'humanoid')
        self.assertEqual(ret, 0)
        self.assertIn('15 actuated', out)
        self.assertIn('floating base', out)

        ret, _, err = run('validate-model', 'octopus')
        self.assertEqual(ret, -1)
        self.assertIn('d-reflex validate-model', err)

    def test_generate_options(self):
        out = self.dir / 'empty.jsonl.gz'
        ret, stdout, _ = run('generate', '--n', '0', '--grid', '7,5', '--workers', '1',
                             '--out', str(out))
        self.assertEqual(ret, 0)
        self.assertIn('0 scenarios', stdout)
        header, records = read_dataset(out)
        self.assertEqual(header.grid.shape, (5, 7))
        self.assertEqual(header.model, 'humanoid')
        self.assertEqual(records, [])

        ret, _, err = run('generate', '--n', '0', '--grid', '7', '--out', str(out))
        self.assertEqual(ret, -1)
        self.assertIn('grid', err)

    def test_missing_config(self):
        ret, _, err = run('validate-model', 'humanoid', '--config', str(self.dir / 'none.toml'))
        self.assertEqual(ret, -1)
        self.assertIn('not found', err)

    def test_infer(self):
        q_file = self.dir / 'q.txt'
        np.savetxt(q_file, self.model.default_posture[self.model.actuated_joints])
        image = self.dir / 'conf.ppm'
        ret, out, _ = run('infer', '--weights', self.weights(), '--q-file', str(q_file),
                          '--d', '0.7', '--alpha', '0.2', '--image', str(image))
        self.assertEqual(ret, 0)
        x, y = (float(v) for v in out.split())
        self.assertIn(x, list(SMALL_GRID.xs))
        self.assertIn(y, list(SMALL_GRID.ys))
        self.assertTrue(image.read_bytes().startswith(b'P6\n80 80\n'))

        ret, _, _ = run('infer', '--weights', self.weights(), '--q-file', str(q_file),
                        '--d', '0.7', '--alpha', '0.2', '--grid', '9')
        self.assertEqual(ret, -1)

        np.savetxt(q_file, np.zeros(3))
        ret, _, err = run('infer', '--weights', self.weights(), '--q-file', str(q_file),
                          '--d', '0.7', '--alpha', '0.2')
        self.assertEqual(ret, -1)
        self.assertIn('expected', err)

    def test_bad_weights(self):
        path = self.dir / 'junk.drfx'
        path.write_bytes(b'\x00' * 16)
        q_file = self.dir / 'q.txt'
        np.savetxt(q_file, np.zeros(self.model.n_a))
        ret, _, err = run('infer', '--weights', str(path), '--q-file', str(q_file),
                          '--d', '0.7', '--alpha', '0.2')
        self.assertEqual(ret, -1)
        self.assertIn('truncated', err)

    def test_eval(self):
        out_file = self.dir / 'eval.json'
        ret, out, _ = run('eval', '--variant', 'oracle', '--dataset', self.dataset(),
                          '--out', str(out_file))
        self.assertEqual(ret, 0)
        result = json.loads(out_file.read_text())
        self.assertEqual(result['success_rate'], 1.0)
        self.assertEqual(result['test'], 4)

        ret, _, err = run('eval', '--variant', 'd-reflex', '--dataset', self.dataset())
        self.assertEqual(ret, -1)
        self.assertIn('--weights', err)

    def test_plot_map(self):
        out_file = self.dir / 'map.ppm'
        ret, _, _ = run('plot-map', '--dataset', self.dataset(), '--scenario', '3',
                        '--weights', self.weights(), '--scale', '2', '--out', str(out_file))
        self.assertEqual(ret, 0)
        self.assertTrue(out_file.read_bytes().startswith(b'P6\n24 10\n'))

        ret, _, err = run('plot-map', '--dataset', self.dataset(), '--scenario', '42')
        self.assertEqual(ret, -1)
        self.assertIn('42', err)


if __name__ == '__main__':
    unittest.main()
