# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol

from dreflex.model import RobotModel
from dreflex.sim import EpisodeConfig, FixedContact, NoReflex, WorldConfig, run_episode
from dreflex.wbc import ControllerConfig

from .contactmap import DatasetRecord

__all__ = ['Target', 'EpisodeRunner', 'LookupRunner', 'SimulationRunner']

logger = logging.getLogger(__name__)

# wall-frame (x, y) hand target, None for no reflex
Target = None | tuple[float, float]


class EpisodeRunner(Protocol):
    def outcomes(self, records: list[DatasetRecord], targets: list[Target]) -> list[bool]:
        """Success of one episode per (record, target) pair, in order"""


class LookupRunner:
    """
    Reads outcomes off the recorded contact maps. Episodes are deterministic,
    so this equals re-simulation while grid, delay and friction are the
    recorded ones. Targets must lie on the recorded grid.
    """

    def __init__(self, tolerance: float = 1e-9):
        self.tolerance = tolerance

    def outcomes(self, records: list[DatasetRecord], targets: list[Target]) -> list[bool]:
        out = []
        for record, target in zip(records, targets, strict=True):
            if target is None:
                out.append(bool(record.no_reflex.get('success', False)))
                continue
            grid = record.map.grid
            index = grid.nearest(*target)
            cx, cy = grid.cell(index)
            if abs(cx - target[0]) > self.tolerance or abs(cy - target[1]) > self.tolerance:
                raise ValueError(f'Target {target} is not a cell of the recorded grid')
            i, j = divmod(index, grid.nx)
            out.append(bool(record.map.cells[i, j]))
        return out


@dataclass(frozen=True)
class _EpisodeJob:
    model: RobotModel
    record: DatasetRecord
    target: Target
    episode: EpisodeConfig
    world: WorldConfig
    controller: ControllerConfig
    friction: None | float


def _run_job(job: _EpisodeJob) -> bool:
    scenario = job.record.scenario
    if job.friction is not None:
        scenario = replace(scenario, wall=replace(scenario.wall, friction=job.friction))
    policy = NoReflex() if job.target is None else FixedContact(*job.target)
    result = run_episode(job.model, scenario, policy, job.episode, job.world, job.controller)
    if result.diverged:
        logger.warning('scenario %d diverged at target %s', scenario.id, job.target)
    return result.success


class SimulationRunner:
    """Re-simulates every episode, optionally with another wall friction"""

    def __init__(self, model: RobotModel, episode: EpisodeConfig, world: WorldConfig,
                 controller: ControllerConfig, friction: None | float = None, workers: int = 1):
        self.model = model
        self.episode = episode
        self.world = world
        self.controller = controller
        self.friction = friction
        self.workers = workers

    def outcomes(self, records: list[DatasetRecord], targets: list[Target]) -> list[bool]:
        jobs = [_EpisodeJob(self.model, r, t, self.episode, self.world, self.controller,
                            self.friction)
                for r, t in zip(records, targets, strict=True)]
        if self.workers <= 1:
            return [_run_job(job) for job in jobs]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(_run_job, jobs))
