#!/usr/bin/python3

from __future__ import annotations

import json
import tempfile
import unittest
from pathlib import Path

from dreflex.config import (PRESETS, EvalConfig, PipelineConfig, RunConfig, load_config,
                            load_preset)
from dreflex.errors import ConfigError
from dreflex.learn import TrainConfig
from dreflex.model import load_builtin_model
from dreflex.pipeline import Manifest, config_digest, run_pipeline
from dreflex.scenario import DatasetHeader, SamplingConfig, write_dataset
from dreflex.sim import EpisodeConfig

from records import SMALL_GRID, fake_records


class TestConfig(unittest.TestCase):
    def test_presets(self):
        for name in PRESETS:
            config = load_preset(name)
            self.assertEqual(config.episode.dt, config.world.dt)
        desk = load_preset('desk')
        self.assertEqual(desk.grid.shape, (11, 11))
        self.assertEqual(desk.train.hidden, (128, 128))
        self.assertEqual(desk.world.gains['leg'], (5000.0, 100.0))
        full = load_preset('full')
        self.assertEqual(full.grid.shape, (21, 21))
        self.assertEqual(full.eval.replications, 20)
        self.assertGreater(desk.eval.mirror_situations, 0)
        with self.assertRaises(ConfigError):
            load_preset('cluster')

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'run': {'situation': 10}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'robot': {}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'run': 3})

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'train': {'fractions': [0.5, 0.5, 0.5]}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'world': {'dt': 0.002}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'eval': {'delays': [12.0]}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'eval': {'policies': ['best']}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'eval': {'mirror_situations': -1}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'run': {'variant': 'everything'}})
        with self.assertRaises(ConfigError):
            PipelineConfig.from_dict({'grid': {'nx': 'many'}})

    def test_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp, 'run.toml')
            path.write_text('[run]\nsituations = 12\n\n[grid]\nnx = 5\nny = 5\n')
            config = load_config(path)
            self.assertEqual(config.run.situations, 12)
            self.assertEqual(config.grid.shape, (5, 5))
            self.assertEqual(config.train, TrainConfig())

            path.write_text('[run\n')
            with self.assertRaises(ConfigError):
                load_config(path)
            with self.assertRaises(ConfigError):
                load_config(Path(tmp, 'missing.toml'))

    def test_model(self):
        self.assertEqual(RunConfig().load_model().name, 'reduced-humanoid')
        with self.assertRaises(ConfigError):
            RunConfig(model='octopus').load_model()


def small_config(**eval_args) -> PipelineConfig:
    eval_args.setdefault('rendered_maps', 2)
    return PipelineConfig(
        run=RunConfig(situations=16),
        grid=SMALL_GRID,
        train=TrainConfig(learning_rate=1e-3, epochs=2, hidden=(8,)),
        eval=EvalConfig(replications=1, policies=('d-reflex', 'no-reflex', 'oracle'),
                        **eval_args),
    )


class TestPipeline(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.run_dir = Path(self.tmp.name)
        model = load_builtin_model('humanoid')
        header = DatasetHeader(model.name, model.digest, SMALL_GRID, EpisodeConfig(), 0,
                               SamplingConfig().to_dict())
        write_dataset(self.run_dir / 'dataset.jsonl.gz', header,
                      [r.to_dict() for r in fake_records(model, 16)])

    def tearDown(self):
        self.tmp.cleanup()

    def test_digest(self):
        self.assertEqual(config_digest(small_config()), config_digest(small_config()))
        self.assertNotEqual(config_digest(small_config()),
                            config_digest(small_config(rendered_maps=3)))

    def test_stages(self):
        config = small_config()
        run_pipeline(config, self.run_dir, ('train', 'evaluate', 'render'))

        manifest = json.loads((self.run_dir / 'manifest.json').read_text())
        self.assertEqual(manifest['config_digest'], config_digest(config))
        for stage in ('train', 'evaluate', 'render'):
            self.assertEqual(manifest['stages'][stage]['status'], 'done')
        self.assertTrue((self.run_dir / 'weights.drfx').exists())
        report = json.loads((self.run_dir / 'eval-report.json').read_text())
        self.assertEqual(report['rates']['oracle'], [1.0])
        # mirror images are only checked by re-simulation
        self.assertIsNone(report['mirrored_agreement'])
        self.assertIsNone(report['map_symmetry'])
        self.assertEqual(len(list((self.run_dir / 'maps').glob('scenario-*.ppm'))), 2)

        # a second run skips the finished stages
        weights = (self.run_dir / 'weights.drfx').stat().st_mtime_ns
        run_pipeline(config, self.run_dir, ('train', 'render'))
        self.assertEqual((self.run_dir / 'weights.drfx').stat().st_mtime_ns, weights)

        with self.assertRaises(ConfigError):
            run_pipeline(small_config(rendered_maps=1), self.run_dir, ('render',))

    def test_failed_stage(self):
        (self.run_dir / 'dataset.jsonl.gz').unlink()
        with self.assertRaises(FileNotFoundError):
            run_pipeline(small_config(), self.run_dir, ('train',))
        manifest = Manifest(self.run_dir, config_digest(small_config()))
        self.assertEqual(manifest.stages['train']['status'], 'failed')
        self.assertFalse(manifest.done('train', self.run_dir))


if __name__ == '__main__':
    unittest.main()
