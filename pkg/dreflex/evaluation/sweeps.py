# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from dreflex.learn import Classifier
from dreflex.model import RobotModel
from dreflex.scenario import (DatasetRecord, GridSpec, LookupRunner, SimulationRunner,
                              build_contact_map, is_avoidable)
from dreflex.sim import EpisodeConfig, WorldConfig, run_posture_phase
from dreflex.wbc import ControllerConfig

from .policies import PolicyVariant, policy_targets

__all__ = ['SweepPoint', 'regenerate_maps', 'friction_sweep', 'delay_sweep']

logger = logging.getLogger(__name__)


@dataclass
class SweepPoint:
    value: float
    total: int
    avoidable: int
    success_rate: float

    @property
    def avoidable_fraction(self) -> float:
        return self.avoidable / self.total if self.total else float('nan')

    def to_dict(self):
        return {'value': self.value, 'total': self.total, 'avoidable': self.avoidable,
                'avoidable_fraction': self.avoidable_fraction,
                'success_rate': self.success_rate}


@dataclass(frozen=True)
class _FrictionJob:
    model: RobotModel
    record: DatasetRecord
    frictions: tuple[float, ...]
    grid: GridSpec
    episode: EpisodeConfig
    world: WorldConfig
    controller: ControllerConfig


def _regenerate(job: _FrictionJob) -> list[DatasetRecord]:
    scenario = job.record.scenario
    # the posture phase runs without the wall, so one serves every friction
    phase = run_posture_phase(job.model, scenario.offsets(), job.episode, job.world,
                              job.controller)
    out = []
    for mu in job.frictions:
        sc = replace(scenario, wall=replace(scenario.wall, friction=mu))
        out.append(build_contact_map(job.model, sc, job.grid, job.episode, job.world,
                                     job.controller, phase))
    return out


def regenerate_maps(model: RobotModel, records: list[DatasetRecord], frictions: list[float],
                    grid: GridSpec, episode: EpisodeConfig, world: WorldConfig,
                    controller: ControllerConfig,
                    workers: int = 1) -> dict[float, list[DatasetRecord]]:
    """Contact maps of the same scenarios under other wall frictions"""
    jobs = [_FrictionJob(model, r, tuple(frictions), grid, episode, world, controller)
            for r in records]
    if workers <= 1:
        per_record = [_regenerate(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_record = list(pool.map(_regenerate, jobs))
    return {mu: [rs[k] for rs in per_record] for k, mu in enumerate(frictions)}


def friction_sweep(classifier: Classifier, model: RobotModel, records: list[DatasetRecord],
                   frictions: list[float], episode: EpisodeConfig, world: WorldConfig,
                   controller: ControllerConfig, workers: int = 1) -> list[SweepPoint]:
    """
    Avoidable fraction and classifier success per wall friction. Maps are
    regenerated for every friction; the classifier stays as trained.
    """
    maps = regenerate_maps(model, records, frictions, classifier.grid, episode, world,
                           controller, workers)
    policy = PolicyVariant(classifier.variant.name, classifier)
    runner = LookupRunner()
    points = []
    for mu in frictions:
        avoidable = [r for r in maps[mu] if is_avoidable(r.map)]
        rate = float('nan')
        if avoidable:
            rate = float(np.mean(runner.outcomes(avoidable,
                                                 policy_targets(policy, model, avoidable))))
        points.append(SweepPoint(mu, len(maps[mu]), len(avoidable), rate))
        logger.info('friction %.2f: %d/%d avoidable, success %.3f', mu, len(avoidable),
                    len(maps[mu]), rate)
    return points


def delay_sweep(classifier: Classifier, model: RobotModel, records: list[DatasetRecord],
                delays: list[float], episode: EpisodeConfig, world: WorldConfig,
                controller: ControllerConfig,
                workers: int = 1) -> tuple[list[SweepPoint], float]:
    """
    Success of the classifier on the avoidable scenarios when the reflex
    starts after each delay. Returns the points and Spearman's rho between
    delay and success rate (nan when either is constant).
    """
    avoidable = [r for r in records if is_avoidable(r.map)]
    policy = PolicyVariant(classifier.variant.name, classifier)
    targets = policy_targets(policy, model, avoidable)
    points = []
    for delay in delays:
        runner = SimulationRunner(model, replace(episode, delay=delay), world, controller,
                                  workers=workers)
        rate = float(np.mean(runner.outcomes(avoidable, targets))) if avoidable else float('nan')
        points.append(SweepPoint(delay, len(records), len(avoidable), rate))
        logger.info('delay %.2f s: success %.3f', delay, rate)

    rates = [p.success_rate for p in points]
    if len(points) < 2 or np.ptp(rates) == 0 or not np.all(np.isfinite(rates)):
        return points, float('nan')
    rho = stats.spearmanr(delays, rates).statistic
    return points, float(rho)
