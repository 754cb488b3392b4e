#!/usr/bin/python3

from __future__ import annotations

import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np
import numpy.testing as npt

from dreflex.errors import ConfigError, WallRejected
from dreflex.model import load_builtin_model, standing_configuration
from dreflex.scenario import (ContactMap, DatasetHeader, GridSpec, LookupRunner, SamplingConfig,
                              avoidable_centers, build_contact_map, generate_dataset, is_avoidable,
                              mirror_record, read_dataset, sample_damage, sample_hand_targets,
                              sample_posture, sample_wall, scenario_rng, wall_collides,
                              write_dataset)
from dreflex.sim import (Condition, DamageSpec, EpisodeConfig, PosturePhase, Scenario, WallConfig,
                         WorldConfig, WorldState)
from dreflex.wbc import ControllerConfig

from records import SMALL_GRID, block_map, fake_record, fake_records

SLOW = os.environ.get('DREFLEX_SLOW') == '1'


def brute_force_avoidable(cells: np.ndarray) -> bool:
    ny, nx = cells.shape
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            if all(cells[i + di, j + dj] for di in (-1, 0, 1) for dj in (-1, 0, 1)):
                return True
    return False


def stub_record(job) -> dict:
    return {'id': job.scenario_id, 'seed': job.seed}


def _first_failure(job) -> bool:
    """True once per scenario 1 and marker directory"""
    marker = Path(os.environ['DREFLEX_TEST_MARKERS'], str(job.scenario_id))
    if job.scenario_id != 1 or marker.exists():
        return False
    marker.touch()
    return True


def crash_once(job) -> dict:
    if _first_failure(job):
        os._exit(1)
    return stub_record(job)


def raise_once(job) -> dict:
    if _first_failure(job):
        raise RuntimeError('worker failure')
    return stub_record(job)


def always_raise(job) -> dict:
    if job.scenario_id == 2:
        raise RuntimeError('worker failure')
    return stub_record(job)


class TestGrid(unittest.TestCase):
    def test_cells(self):
        grid = GridSpec((-1.0, 1.0), (0.0, 1.0), 5, 3)
        self.assertEqual(grid.shape, (3, 5))
        cells = grid.cells()
        self.assertEqual(cells.shape, (15, 2))
        npt.assert_allclose(cells[0], (-1.0, 0.0))
        npt.assert_allclose(cells[6], (-0.5, 0.5))
        self.assertEqual(grid.cell(6), (-0.5, 0.5))
        self.assertEqual(grid.nearest(-0.45, 0.55), 6)
        self.assertTrue(grid.symmetric)
        self.assertEqual(GridSpec.from_dict(grid.to_dict()), grid)

    def test_invalid(self):
        with self.assertRaises(ConfigError):
            GridSpec((1.0, -1.0))
        with self.assertRaises(ConfigError):
            GridSpec(nx=2)

    def test_map_shape(self):
        with self.assertRaises(ValueError):
            ContactMap(SMALL_GRID, np.zeros((4, 5), dtype=bool))


class TestAvoidability(unittest.TestCase):
    def test_random_maps(self):
        rng = np.random.default_rng(0)
        grid = GridSpec((-1.0, 1.0), (-1.0, 1.0), 7, 6)
        for _ in range(10000):
            cells = rng.random(grid.shape) < rng.uniform(0.3, 0.95)
            self.assertEqual(is_avoidable(ContactMap(grid, cells)), brute_force_avoidable(cells))

    def test_edges_are_not_centers(self):
        cells = np.zeros(SMALL_GRID.shape, dtype=bool)
        cells[:3, :] = True
        centers = avoidable_centers(ContactMap(SMALL_GRID, cells))
        npt.assert_array_equal(np.argwhere(centers), [[1, 1], [1, 2], [1, 3]])

        cells = np.zeros(SMALL_GRID.shape, dtype=bool)
        cells[:2, :] = True
        self.assertFalse(is_avoidable(ContactMap(SMALL_GRID, cells)))

    def test_full_and_empty(self):
        self.assertTrue(is_avoidable(ContactMap(SMALL_GRID, np.ones((5, 5), dtype=bool))))
        self.assertFalse(is_avoidable(ContactMap(SMALL_GRID, np.zeros((5, 5), dtype=bool))))


class TestSampling(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')

    def test_scenario_rng(self):
        a = scenario_rng(3, 17).random(4)
        npt.assert_array_equal(a, scenario_rng(3, 17).random(4))
        self.assertFalse(np.array_equal(a, scenario_rng(3, 18).random(4)))
        self.assertFalse(np.array_equal(a, scenario_rng(3, 17, 1).random(4)))

    def test_hand_targets(self):
        cfg = SamplingConfig()
        offsets = sample_hand_targets(np.random.default_rng(0), cfg)
        self.assertEqual(offsets.shape, (2, 3))
        self.assertTrue(np.all(offsets[:, 0] >= cfg.sagittal[0]))
        self.assertTrue(np.all(offsets[:, 2] <= cfg.longitudinal[1]))

    def test_damage(self):
        rng = np.random.default_rng(1)
        leg = self.model.roles.legs['right']
        seen = set()
        for _ in range(300):
            spec = sample_damage(rng, self.model)
            self.assertFalse(spec.intact)
            names = list(spec.joints)
            self.assertEqual(names, [n for n in leg if n in spec.joints])
            seen.add(len(names))
            amputated = [k for k, n in enumerate(leg) if spec.joints.get(n) == Condition.AMPUTATION]
            if amputated:
                for n in leg[amputated[0]:]:
                    self.assertEqual(spec.joints[n], Condition.AMPUTATION)
        self.assertEqual(seen, {1, 2, 3, 4})

    def posture(self, fell: bool) -> PosturePhase:
        q = standing_configuration(self.model)
        return PosturePhase(WorldState(q, np.zeros(self.model.n_v), 4.0), None, q[None, :], fell,
                            1.5 if fell else None)

    def test_posture_resampling(self):
        cfg = SamplingConfig()
        phases = [self.posture(True), self.posture(True), self.posture(False)]
        args = (EpisodeConfig(), WorldConfig(), ControllerConfig())
        with mock.patch('dreflex.scenario.sampling.run_posture_phase',
                        side_effect=phases) as run, \
                self.assertLogs('dreflex.scenario.sampling', 'INFO'):
            offsets, phase = sample_posture(np.random.default_rng(4), self.model, cfg, *args)
        self.assertEqual(run.call_count, 3)
        self.assertIs(phase, phases[2])
        npt.assert_array_equal(run.call_args.args[1]['right'], offsets[1])
        lo = [cfg.sagittal[0], cfg.frontal[0], cfg.longitudinal[0]]
        hi = [cfg.sagittal[1], cfg.frontal[1], cfg.longitudinal[1]]
        for sampled in run.call_args_list:
            for offset in sampled.args[1].values():
                self.assertTrue(np.all(offset >= lo) and np.all(offset <= hi))

        with mock.patch('dreflex.scenario.sampling.run_posture_phase',
                        return_value=self.posture(True)) as run, \
                self.assertLogs('dreflex.scenario.sampling', 'INFO'):
            with self.assertRaises(RuntimeError):
                sample_posture(np.random.default_rng(4), self.model,
                               SamplingConfig(max_posture_attempts=3), *args)
        self.assertEqual(run.call_count, 3)

    def test_wall_bounds(self):
        trajectory = standing_configuration(self.model)[None, :]
        cfg = SamplingConfig(distance=(0.6, 1.0), orientation=(-0.5, 0.5), friction=0.4)
        rng = np.random.default_rng(8)
        for _ in range(50):
            wall = sample_wall(rng, self.model, trajectory, cfg)
            self.assertTrue(0.6 <= wall.distance <= 1.0)
            self.assertTrue(-0.5 <= wall.orientation <= 0.5)
            self.assertEqual(wall.friction, 0.4)
            self.assertFalse(wall_collides(self.model, trajectory, wall, 'right'))

    def test_wall_through_the_robot(self):
        trajectory = standing_configuration(self.model)[None, :]
        self.assertTrue(wall_collides(self.model, trajectory, WallConfig(0.0, 0.0), 'right'))
        cfg = SamplingConfig(distance=(0.0, 0.05), orientation=(0.0, 0.0), max_wall_attempts=5)
        with self.assertRaises(WallRejected):
            sample_wall(np.random.default_rng(0), self.model, trajectory, cfg)

    def test_config(self):
        with self.assertRaises(ConfigError):
            SamplingConfig(distance=(1.0, 0.5))
        with self.assertRaises(ConfigError):
            SamplingConfig(side='middle')


class TestDataset(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')

    def header(self):
        return DatasetHeader(self.model.name, self.model.digest, SMALL_GRID, EpisodeConfig(), 0,
                             SamplingConfig().to_dict())

    def test_mirror_record(self):
        record = fake_record(self.model, 0, block_map(SMALL_GRID, 2, 1),
                             np.random.default_rng(2))
        mirrored = mirror_record(record, self.model)
        self.assertEqual(mirrored.scenario.side, 'left')
        npt.assert_array_equal(mirrored.map.cells, block_map(SMALL_GRID, 2, 3))
        back = mirror_record(mirrored, self.model)
        npt.assert_array_equal(back.map.cells, record.map.cells)
        npt.assert_allclose(back.scenario.posture, record.scenario.posture)
        self.assertEqual(back.scenario.damage, record.scenario.damage)

        skewed = GridSpec((-0.5, 1.0), (-0.5, 0.5), 5, 5)
        record = fake_record(self.model, 0, np.ones((5, 5)), np.random.default_rng(2),
                             grid=skewed)
        with self.assertRaises(ValueError):
            mirror_record(record, self.model)

    def test_write_read(self):
        records = [r.to_dict() for r in fake_records(self.model, 4)]
        records.insert(2, {'discarded': True, 'id': 99})
        with tempfile.TemporaryDirectory() as tmp:
            a, b = Path(tmp, 'a.jsonl.gz'), Path(tmp, 'b.jsonl.gz')
            write_dataset(a, self.header(), records)
            write_dataset(b, self.header(), records)
            self.assertEqual(a.read_bytes(), b.read_bytes())

            header, loaded = read_dataset(a)
        self.assertEqual(header.discarded, 1)
        self.assertEqual(header.grid, SMALL_GRID)
        self.assertEqual(len(loaded), 4)
        for d, r in zip([r for r in records if not r.get('discarded')], loaded):
            self.assertEqual(r.to_dict(), d)

    def test_bad_schema(self):
        d = self.header().to_dict()
        d['schema'] = 99
        with self.assertRaises(ValueError):
            DatasetHeader.from_dict(d)

    def test_lookup_runner(self):
        records = fake_records(self.model, 3)
        record = records[0]
        runner = LookupRunner()
        hit = np.argwhere(record.map.cells)[0]
        miss = np.argwhere(~record.map.cells)[0]
        targets = [SMALL_GRID.cell(int(hit[0]) * 5 + int(hit[1])),
                   SMALL_GRID.cell(int(miss[0]) * 5 + int(miss[1])), None]
        self.assertEqual(runner.outcomes([record] * 3, targets), [True, False, False])
        with self.assertRaises(ValueError):
            runner.outcomes([record], [(0.01, 0.0)])


class TestRetry(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('pendulum')
        self.tmp = tempfile.TemporaryDirectory()
        self.env = mock.patch.dict(os.environ, {'DREFLEX_TEST_MARKERS': self.tmp.name})
        self.env.start()

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def generate(self, generate, workers, n=6):
        return generate_dataset(self.model, n, SMALL_GRID, 7, SamplingConfig(), EpisodeConfig(),
                                WorldConfig(), ControllerConfig(), workers, generate)

    def expected(self, n=6):
        return [{'id': i, 'seed': 7} for i in range(n)]

    def test_serial_retry(self):
        with self.assertLogs('dreflex.scenario.dataset', 'WARNING'):
            self.assertEqual(self.generate(raise_once, 1), self.expected())

    def test_crashed_worker_retry(self):
        with self.assertLogs('dreflex.scenario.dataset', 'WARNING'):
            self.assertEqual(self.generate(crash_once, 3), self.expected())

    def test_discard_after_second_failure(self):
        expected = self.expected()
        expected[2] = {'discarded': True, 'id': 2}
        for workers in (1, 3):
            with self.assertLogs('dreflex.scenario.dataset', 'ERROR'):
                self.assertEqual(self.generate(always_raise, workers), expected)


class TestGeneration(unittest.TestCase):
    @unittest.skipUnless(SLOW, 'set DREFLEX_SLOW=1')
    def test_workers_do_not_change_records(self):
        model = load_builtin_model('humanoid')
        grid = GridSpec((-0.5, 0.5), (-0.25, 0.5), 3, 3)
        episode = EpisodeConfig(posture_duration=1.0, duration=3.0)
        args = (model, 4, grid, 5, SamplingConfig(), episode, WorldConfig(), ControllerConfig())
        serial = generate_dataset(*args, workers=1)
        parallel = generate_dataset(*args, workers=4)
        self.assertEqual(serial, parallel)

        header = DatasetHeader('humanoid', model.digest, grid, episode, 5,
                               SamplingConfig().to_dict())
        with tempfile.TemporaryDirectory() as d:
            a, b = Path(d) / 'a.jsonl.gz', Path(d) / 'b.jsonl.gz'
            write_dataset(a, header, serial)
            write_dataset(b, header, parallel)
            self.assertEqual(a.read_bytes(), b.read_bytes())
        ids = [r['id'] if r.get('discarded') else r['scenario']['id'] for r in serial]
        self.assertEqual(ids, [0, 1, 2, 3])

    @unittest.skipUnless(SLOW, 'set DREFLEX_SLOW=1')
    def test_contact_map_baseline(self):
        model = load_builtin_model('humanoid')
        grid = GridSpec((-0.5, 0.5), (-0.25, 0.5), 3, 3)
        episode = EpisodeConfig(posture_duration=0.5, duration=3.0)
        damage = DamageSpec('right', {'r_hip_pitch': Condition.AMPUTATION})
        scenario = Scenario(0, 0, np.zeros((2, 3)), WallConfig(0.6, 0.0), damage)
        record = build_contact_map(model, scenario, grid, episode, WorldConfig(),
                                   ControllerConfig())

        self.assertFalse(record.no_reflex['success'])
        self.assertTrue(0.5 < record.no_reflex['fall_time'] <= 3.0)
        self.assertEqual(record.map.cells.shape, (3, 3))
        npt.assert_array_equal(np.isnan(record.fall_times), record.map.cells)
        self.assertIs(record.scenario, scenario)


if __name__ == '__main__':
    unittest.main()
