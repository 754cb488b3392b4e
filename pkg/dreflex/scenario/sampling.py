# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from dreflex.errors import ConfigError, WallRejected
from dreflex.model import RobotModel, forward_kinematics
from dreflex.sim import (WALL, Condition, DamageSpec, EpisodeConfig, PosturePhase, Scenario, Wall,
                         WallConfig, WorldConfig, detect_contacts, run_posture_phase)
from dreflex.wbc import ControllerConfig

__all__ = ['SamplingConfig', 'scenario_rng', 'sample_hand_targets', 'sample_posture',
           'wall_collides', 'sample_wall', 'sample_damage', 'sample_scenario']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingConfig:
    # hand target cuboid around the default hand position, base frame
    sagittal: tuple[float, float] = (-0.1, 0.2)
    frontal: tuple[float, float] = (-0.4, 0.4)
    longitudinal: tuple[float, float] = (-0.5, 0.4)
    distance: tuple[float, float] = (0.4, 1.0)
    orientation: tuple[float, float] = (-1.0, 1.0)
    friction: float = 1.0
    restitution: float = 0.0
    side: str = 'right'
    max_wall_attempts: int = 1000
    max_posture_attempts: int = 20

    def __post_init__(self):
        for name in ('sagittal', 'frontal', 'longitudinal', 'distance', 'orientation'):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f'Sampling range "{name}" is not ordered')
        if self.distance[0] < 0:
            raise ConfigError('Wall distances must be non-negative')
        if self.side not in ('left', 'right'):
            raise ConfigError(f'Invalid damaged side "{self.side}"')

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def scenario_rng(master_seed: int, scenario_id: int, attempt: int = 0) -> np.random.Generator:
    """Generator of one scenario, independent of any scheduling"""
    return np.random.default_rng(np.random.SeedSequence([master_seed, scenario_id, attempt]))


def sample_hand_targets(rng: np.random.Generator, config: SamplingConfig) -> np.ndarray:
    """(left, right) offsets from the default hand positions, uniform in the cuboid"""
    lo = np.array([config.sagittal[0], config.frontal[0], config.longitudinal[0]])
    hi = np.array([config.sagittal[1], config.frontal[1], config.longitudinal[1]])
    return rng.uniform(lo, hi, size=(2, 3))


def sample_posture(rng: np.random.Generator, model: RobotModel, config: SamplingConfig,
                   episode: EpisodeConfig, world: WorldConfig,
                   controller: ControllerConfig) -> tuple[np.ndarray, PosturePhase]:
    """Hand targets and the posture phase they lead to, resampled while the robot falls"""
    for attempt in range(config.max_posture_attempts):
        offsets = sample_hand_targets(rng, config)
        phase = run_posture_phase(model, {'left': offsets[0], 'right': offsets[1]}, episode,
                                  world, controller)
        if not phase.fell:
            return offsets, phase
        logger.info('posture fell at %.2f s (attempt %d), resampling', phase.fall_time,
                    attempt + 1)
    raise RuntimeError('No viable posture found')


def wall_collides(model: RobotModel, trajectory: np.ndarray, wall: WallConfig,
                  side: str) -> bool:
    """Whether the wall, placed relative to the last frame, touches any recorded frame"""
    plane = Wall.at_trigger(wall, model, trajectory[-1], side)
    for q in trajectory:
        contacts = detect_contacts(model, q, plane, forward_kinematics(model, q))
        if any(c.body == WALL for c in contacts):
            return True
    return False


def sample_wall(rng: np.random.Generator, model: RobotModel, trajectory: np.ndarray,
                config: SamplingConfig) -> WallConfig:
    for _ in range(config.max_wall_attempts):
        wall = WallConfig(float(rng.uniform(*config.distance)),
                          float(rng.uniform(*config.orientation)),
                          config.friction, config.restitution)
        if not wall_collides(model, trajectory, wall, config.side):
            return wall
    raise WallRejected(f'{config.max_wall_attempts} wall configurations rejected')


def sample_damage(rng: np.random.Generator, model: RobotModel, side: str = 'right') -> DamageSpec:
    """
    Nonempty subset of the leg joints, size uniform in 1..n, each with a
    uniform condition. Joints distal to an amputation are amputated too.
    """
    leg = model.roles.legs[side]
    count = int(rng.integers(1, len(leg) + 1))
    chosen = sorted(rng.choice(len(leg), size=count, replace=False))
    conditions = list(Condition)
    joints = {leg[k]: conditions[int(rng.integers(len(conditions)))] for k in chosen}

    cut = next((k for k, n in enumerate(leg) if joints.get(n) == Condition.AMPUTATION), None)
    if cut is not None:
        for n in leg[cut:]:
            joints[n] = Condition.AMPUTATION

    return DamageSpec(side, {n: joints[n] for n in leg if n in joints})


def sample_scenario(model: RobotModel, scenario_id: int, master_seed: int,
                    config: SamplingConfig, episode: EpisodeConfig, world: WorldConfig,
                    controller: ControllerConfig) -> tuple[Scenario, PosturePhase]:
    rng = scenario_rng(master_seed, scenario_id)
    offsets, phase = sample_posture(rng, model, config, episode, world, controller)
    wall = sample_wall(rng, model, phase.trajectory, config)
    damage = sample_damage(rng, model, config.side)
    scenario = Scenario(scenario_id, master_seed, offsets, wall, damage,
                        phase.state.q.copy(), phase.state.dq.copy())
    return scenario, phase
