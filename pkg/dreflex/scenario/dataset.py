# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import gzip
import json
import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from dreflex.errors import WallRejected
from dreflex.model import RobotModel
from dreflex.sim import EpisodeConfig, WorldConfig
from dreflex.wbc import ControllerConfig

from .contactmap import DatasetRecord, GridSpec, build_contact_map
from .sampling import SamplingConfig, sample_scenario

__all__ = ['SCHEMA_VERSION', 'DatasetHeader', 'generate_scenario', 'generate_dataset',
           'write_dataset', 'read_dataset']

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class DatasetHeader:
    model: str
    model_digest: str
    grid: GridSpec
    episode: EpisodeConfig
    seed: int
    sampling: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION
    # records skipped when reading, not stored
    discarded: int = 0

    def to_dict(self):
        return {'schema': self.schema, 'model': self.model, 'model_digest': self.model_digest,
                'grid': self.grid.to_dict(), 'episode': self.episode.to_dict(),
                'seed': self.seed, 'sampling': self.sampling}

    @staticmethod
    def from_dict(d: dict) -> DatasetHeader:
        if d.get('schema') != SCHEMA_VERSION:
            raise ValueError(f'Unsupported dataset schema {d.get("schema")}')
        return DatasetHeader(d['model'], d['model_digest'], GridSpec.from_dict(d['grid']),
                             EpisodeConfig(**d['episode']), int(d['seed']),
                             d.get('sampling', {}), d['schema'])


@dataclass(frozen=True)
class _Job:
    model: RobotModel
    scenario_id: int
    seed: int
    grid: GridSpec
    sampling: SamplingConfig
    episode: EpisodeConfig
    world: WorldConfig
    controller: ControllerConfig


def generate_scenario(job: _Job) -> None | dict:
    """Sample one scenario and build its contact map; None when it is discarded"""
    try:
        scenario, phase = sample_scenario(job.model, job.scenario_id, job.seed, job.sampling,
                                          job.episode, job.world, job.controller)
    except (WallRejected, RuntimeError) as e:
        logger.warning('scenario %d discarded: %s', job.scenario_id, e)
        return None
    record = build_contact_map(job.model, scenario, job.grid, job.episode, job.world,
                               job.controller, phase)
    logger.info('scenario %d: %d/%d successful cells', job.scenario_id, record.map.successes,
                job.grid.size)
    return record.to_dict()


def _discarded(scenario_id: int) -> dict:
    return {'discarded': True, 'id': scenario_id}


def _retry(generate: Callable[[_Job], None | dict], job: _Job, isolated: bool) -> dict:
    """Second and last attempt; in a fresh single-worker pool when isolated"""
    try:
        if isolated:
            with ProcessPoolExecutor(max_workers=1) as pool:
                record = pool.submit(generate, job).result()
        else:
            record = generate(job)
    except Exception as e:
        logger.error('scenario %d failed again (%s), discarded', job.scenario_id, e)
        return _discarded(job.scenario_id)
    return record if record is not None else _discarded(job.scenario_id)


def generate_dataset(model: RobotModel, n_situations: int, grid: GridSpec, seed: int,
                     sampling: SamplingConfig, episode: EpisodeConfig, world: WorldConfig,
                     controller: ControllerConfig, workers: int = 1,
                     generate: Callable[[_Job], None | dict] = generate_scenario) -> list[dict]:
    """
    Records of scenarios 0..n-1, ordered by id. Every scenario draws from its
    own seed sequence, so the result does not depend on the worker count.
    A failing scenario is retried once, then kept as discarded. With several
    workers a crash breaks the shared pool, so retries run in pools of their
    own.
    """
    jobs = [_Job(model, i, seed, grid, sampling, episode, world, controller)
            for i in range(n_situations)]
    out: list[None | dict] = [None] * len(jobs)
    failed = []

    if workers <= 1:
        for i, job in enumerate(jobs):
            try:
                out[i] = generate(job)
            except Exception as e:
                logger.warning('scenario %d failed (%s), retrying', i, e)
                failed.append(i)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(generate, job) for job in jobs]
            for i, future in enumerate(futures):
                try:
                    out[i] = future.result()
                except Exception as e:
                    logger.warning('scenario %d failed (%s), retrying', i, e)
                    failed.append(i)

    for i in failed:
        out[i] = _retry(generate, jobs[i], workers > 1)
    return [record if record is not None else _discarded(i) for i, record in enumerate(out)]


def write_dataset(path: str | Path, header: DatasetHeader, records: list[dict]):
    """gzip-compressed JSON lines: the header, then one record per scenario"""
    with open(path, 'wb') as raw:
        # fixed gzip header fields keep the output byte-identical
        with gzip.GzipFile(filename='', mode='wb', fileobj=raw, mtime=0) as f:
            f.write((json.dumps(header.to_dict(), sort_keys=True) + '\n').encode())
            for record in records:
                f.write((json.dumps(record, sort_keys=True) + '\n').encode())


def read_dataset(path: str | Path) -> tuple[DatasetHeader, list[DatasetRecord]]:
    with gzip.open(path, 'rt', encoding='utf-8') as f:
        header = DatasetHeader.from_dict(json.loads(f.readline()))
        records = []
        for line in f:
            d = json.loads(line)
            if d.get('discarded'):
                logger.debug('scenario %d was discarded', d['id'])
                header.discarded += 1
                continue
            records.append(DatasetRecord.from_dict(d))
    return header, records
