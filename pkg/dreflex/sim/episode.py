# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from dreflex.errors import ConfigError
from dreflex.model import RobotModel, standing_configuration
from dreflex.wbc import ControllerConfig, WholeBodyController

from .damage import DamageSpec, DamagedModel, apply_damage, lock_velocity
from .engine import Simulator, WorldState
from .scenario import Scenario
from .world import FLOOR, WALL, Wall, WallConfig, WorldConfig, detect_self_contacts

__all__ = ['EpisodeConfig', 'EpisodeResult', 'PosturePhase', 'Sensed', 'ReflexPolicy',
           'NoReflex', 'FixedContact', 'trigger_reflex', 'run_posture_phase', 'run_episode']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeConfig:
    dt: float = 1e-3
    posture_duration: float = 4.0
    duration: float = 15.0
    delay: float = 0.0
    force_threshold: float = 5.0
    record_period: float = 0.01
    trajectory_period: float = 0.05

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ConfigError(f'Episode time step {self.dt} outside (0, 0.01]')
        if not 0 <= self.posture_duration < self.duration:
            raise ConfigError('Posture phase must end before the episode does')
        if not 0 <= self.delay < self.duration - self.posture_duration:
            raise ConfigError('Reflex delay must fall inside the episode')
        if self.force_threshold < 0:
            raise ConfigError('Contact force threshold must be non-negative')

    def steps(self, t: float) -> int:
        return int(round(t / self.dt))

    def to_dict(self):
        return {'dt': self.dt, 'posture_duration': self.posture_duration,
                'duration': self.duration, 'delay': self.delay,
                'force_threshold': self.force_threshold}


@dataclass
class EpisodeResult:
    success: bool
    fall_time: None | float = None
    diverged: bool = False
    contact_achieved: bool = False
    contact_position: None | np.ndarray = None
    contact_time: None | float = None
    reflex_time: None | float = None
    self_contacts: int = 0
    qp_failures: int = 0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    com: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    floor_force: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wall_force: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self, trajectories: bool = False):
        d = {
            'success': self.success,
            'fall_time': self.fall_time,
            'diverged': self.diverged,
            'contact_achieved': self.contact_achieved,
            'contact_position': None if self.contact_position is None
            else self.contact_position.tolist(),
            'contact_time': self.contact_time,
            'reflex_time': self.reflex_time,
            'self_contacts': self.self_contacts,
            'qp_failures': self.qp_failures,
        }
        if trajectories:
            d['times'] = self.times.tolist()
            d['com'] = self.com.tolist()
            d['floor_force'] = self.floor_force.tolist()
            d['wall_force'] = self.wall_force.tolist()
        return d


@dataclass(frozen=True)
class Sensed:
    """What the reflex knows at damage time"""

    q: np.ndarray
    dq: np.ndarray
    wall: WallConfig
    damage: DamageSpec


class ReflexPolicy(Protocol):
    def choose(self, sensed: Sensed) -> None | tuple[float, float]:
        """Wall-frame contact target, or None for no reflex"""


class NoReflex:
    def choose(self, sensed: Sensed) -> None | tuple[float, float]:
        return None


@dataclass(frozen=True)
class FixedContact:
    x: float
    y: float

    def choose(self, sensed: Sensed) -> None | tuple[float, float]:
        return self.x, self.y


def trigger_reflex(controller: WholeBodyController, policy: ReflexPolicy, sensed: Sensed,
                   wall: Wall, q_meas: np.ndarray) -> None | tuple[float, float]:
    """
    Ask the policy for a wall contact and, when it gives one, switch the
    controller to urgent mode and send the hand toward that point.
    """
    target = policy.choose(sensed)
    if target is None:
        return None
    controller.enter_urgent_mode()
    controller.set_hand_contact_target(wall.side, wall.to_world(*target), wall.plane.normal,
                                      q_meas)
    return target


@dataclass
class PosturePhase:
    """State at damage time after the posture phase, reusable by every cell episode"""

    state: WorldState
    controller: WholeBodyController
    trajectory: np.ndarray
    fell: bool = False
    fall_time: None | float = None

    def copy(self) -> PosturePhase:
        return PosturePhase(self.state.copy(), copy.deepcopy(self.controller),
                            self.trajectory, self.fell, self.fall_time)


def run_posture_phase(model: RobotModel, offsets: dict[str, np.ndarray], config: EpisodeConfig,
                      world: WorldConfig, controller: ControllerConfig) -> PosturePhase:
    """Intact robot, no wall: move the hands toward their targets until damage time"""
    q = standing_configuration(model)
    state = WorldState(q, np.zeros(model.n_v), 0.0)
    ctrl = WholeBodyController(model, controller, q)
    ctrl.set_hand_offsets(offsets)
    sim = Simulator(model, world)

    n_steps = config.steps(config.posture_duration)
    stride = max(1, config.steps(config.trajectory_period))
    trajectory = [q.copy()]
    targets = q[model.q_offset:].copy()

    for k in range(n_steps):
        q_des = ctrl.tick(state.q, state.dq, config.dt)
        targets[model.actuated_joints] = q_des
        state, info = sim.step(state, targets, config.dt)
        if not state.finite or sim.is_fall(info.contacts):
            return PosturePhase(state, ctrl, np.array(trajectory), True, state.t)
        if (k + 1) % stride == 0:
            trajectory.append(state.q.copy())

    return PosturePhase(state, ctrl, np.array(trajectory))


def _remap_anchors(anchors: dict, damaged: DamagedModel) -> dict:
    out = {}
    for (body, li, pi, k), value in anchors.items():
        name = damaged.intact.links[li].name
        if name in damaged.model.link_index:
            out[(body, damaged.model.link_index[name], pi, k)] = value
    return out


def run_episode(model: RobotModel, scenario: Scenario, policy: ReflexPolicy,
                config: EpisodeConfig, world: WorldConfig, controller: ControllerConfig,
                phase: None | PosturePhase = None) -> EpisodeResult:
    """
    Posture phase, damage at the end of it with the momentum kept, reflex
    after the configured delay, then simulation up to the horizon or the
    first fall. phase may hold a precomputed posture phase; it is not
    modified.
    """
    if phase is None:
        phase = run_posture_phase(model, scenario.offsets(), config, world, controller)
    if phase.fell:
        return EpisodeResult(False, phase.fall_time, diverged=not phase.state.finite)
    phase = phase.copy()

    side = scenario.side
    state, ctrl = phase.state, phase.controller
    q_trigger, dq_trigger = state.q.copy(), state.dq.copy()

    wall = Wall.at_trigger(scenario.wall, model, q_trigger, side)
    damaged = apply_damage(model, scenario.damage)
    dmodel = damaged.model
    sim = Simulator.damaged(damaged, world, wall)
    ctrl.on_damage(list(damaged.removed_links))

    q_d = damaged.restrict_q(state.q)
    state = WorldState(q_d, lock_velocity(dmodel, q_d, damaged.restrict_v(state.dq), sim.locked),
                       state.t, _remap_anchors(state.anchors, damaged))

    sensed = Sensed(q_trigger, dq_trigger, scenario.wall, scenario.damage)
    reflex_step = config.steps(config.posture_duration + config.delay)
    first = config.steps(config.posture_duration)
    last = config.steps(config.duration)
    stride = max(1, config.steps(config.record_period))

    result = EpisodeResult(success=True)
    times, coms, floor, wall_f = [], [], [], []
    targets = q_trigger[model.q_offset:].copy()

    for k in range(first, last):
        if k == reflex_step:
            q_meas = damaged.expand_q(state.q, ctrl.q_c)
            if trigger_reflex(ctrl, policy, sensed, wall, q_meas) is not None:
                result.reflex_time = k * config.dt

        q_meas = damaged.expand_q(state.q, ctrl.q_c)
        q_des = ctrl.tick(q_meas, damaged.expand_v(state.dq), config.dt)
        targets[model.actuated_joints] = q_des
        state, info = sim.step(state, damaged.restrict_joints(targets), config.dt)

        if not state.finite:
            result.success = False
            result.diverged = True
            result.fall_time = state.t
            logger.debug('scenario %d diverged at %.3f s', scenario.id, state.t)
            break

        force, hand = sim.hand_contact(info)
        if force > config.force_threshold and not result.contact_achieved:
            result.contact_achieved = True
            result.contact_position = hand
            result.contact_time = k * config.dt
        if force > config.force_threshold:
            ctrl.update_contact_anchor(hand, force, config.force_threshold, q_meas)

        if (k - first) % stride == 0:
            times.append(k * config.dt)
            coms.append(dmodel.masses @ info.kin.coms / dmodel.total_mass)
            floor.append(info.normal_force(FLOOR))
            wall_f.append(info.normal_force(WALL))
            result.self_contacts += len(detect_self_contacts(dmodel, info.kin))

        if sim.is_fall(info.contacts):
            result.success = False
            result.fall_time = k * config.dt
            break

    result.qp_failures = ctrl.failures
    result.times = np.array(times)
    result.com = np.array(coms).reshape(-1, 3)
    result.floor_force = np.array(floor)
    result.wall_force = np.array(wall_f)
    return result
