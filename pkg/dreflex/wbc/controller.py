# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.spatial.transform import Rotation

from dreflex.errors import ConfigError
from dreflex.model import RobotModel, com, forward_kinematics, integrate

from .qp import QPSolution, assemble_qp, solve_qp
from .tasks import ContactConstraint, JacobianHistory, JointBounds, Task, TaskKind

__all__ = ['ControllerConfig', 'WholeBodyController', 'URGENT_TASKS']

logger = logging.getLogger(__name__)

URGENT_TASKS = ('com', 'posture')
CONTACT_TASK = 'contact'
HAND_CONSTRAINT = 'hand'


@dataclass(frozen=True)
class ControllerConfig:
    com_weight: float = 10.0
    posture_weight: float = 0.1
    hand_weight: float = 5.0
    orientation_weight: float = 5.0
    task_kp: float = 100.0
    task_kd: float = 20.0
    posture_kp: float = 100.0
    posture_kd: float = 20.0
    contact_kp: float = 100.0
    contact_kd: float = 20.0
    friction: float = 0.7
    acceleration_limit: float = 500.0
    regularization: float = 1e-6
    solver: str = 'quadprog'
    tolerance: float = 1e-6
    # iteration cap of the warm-started solvers; quadprog solves exactly and has none
    max_iterations: int = 1000
    # hand target depth behind the wall surface
    contact_depth: float = 0.005
    closed_loop: bool = False
    updated_model: bool = False
    negligible_mass: float = 1e-3

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and not (np.isfinite(value) and value >= 0):
                raise ConfigError(f'Controller parameter "{f.name}" must be finite and non-negative')
        if self.regularization <= 0:
            raise ConfigError('Controller regularization must be positive')
        if self.max_iterations < 1:
            raise ConfigError('Controller max_iterations must be at least 1')


def _sole_points(model: RobotModel, link: int) -> np.ndarray:
    """The lowest box corners of a foot, link frame"""
    pts = np.vstack([p.points() for p in model.links[link].collisions])
    low = pts[:, 2].min()
    return pts[np.abs(pts[:, 2] - low) < 1e-9]


@dataclass
class _Frame:
    position: np.ndarray
    rotation: np.ndarray


class WholeBodyController:
    """
    QP whole-body controller. It integrates its own reference state
    (q_c, dq_c) from the optimal accelerations and returns the reference
    joint angles as position commands. In closed-loop mode the reference is
    reset to the measured state at every tick.
    """

    def __init__(self, model: RobotModel, config: ControllerConfig, q: np.ndarray,
                 dq: None | np.ndarray = None):
        self.intact = model
        self.model = model
        self.config = config
        self.q_c = np.array(q, dtype=float)
        self.dq_c = np.zeros(model.n_v) if dq is None else np.array(dq, dtype=float)
        self.q_des = self.q_c[model.actuated_q].copy()
        self.history = JacobianHistory()
        self.bounds = JointBounds(acceleration=config.acceleration_limit)
        self.urgent = False
        self.anchored = False
        self.contact_side: None | str = None
        self.contact_normal: None | np.ndarray = None
        self.failures = 0
        self.last_solution: None | QPSolution = None

        self.tasks: dict[str, Task] = {}
        self.contacts: list[ContactConstraint] = []
        self._default_tasks()

    # --- setup ---------------------------------------------------------------

    def _default_tasks(self):
        model, cfg = self.model, self.config
        kin = forward_kinematics(model, self.q_c)

        self.tasks['com'] = Task('com', TaskKind.COM_POSITION, com(model, self.q_c, kin),
                                 cfg.com_weight, cfg.task_kp, cfg.task_kd)
        self.tasks['posture'] = Task('posture', TaskKind.POSTURE,
                                     model.default_posture[model.actuated_joints].copy(),
                                     cfg.posture_weight, cfg.posture_kp, cfg.posture_kd)

        for side in ('left', 'right'):
            hand = model.roles.hands.get(side)
            if hand is None:
                continue
            li, pi = model.find_primitive(hand)
            point = model.links[li].collisions[pi].position
            self.tasks[f'{side}_hand'] = Task(f'{side}_hand', TaskKind.CARTESIAN_POSITION,
                                              kin.world_point(li, point), cfg.hand_weight,
                                              cfg.task_kp, cfg.task_kd, li, point.copy())

        frames = [('pelvis', 0)]
        if model.roles.torso is not None:
            frames.append(('torso', model.link_index[model.roles.torso]))
        for name, li in frames:
            self.tasks[name] = Task(name, TaskKind.CARTESIAN_ORIENTATION,
                                    kin.rotations[li].copy(), cfg.orientation_weight,
                                    cfg.task_kp, cfg.task_kd, li)

        for side, foot in model.roles.feet.items():
            li = model.link_index[foot]
            self.contacts.append(ContactConstraint(
                f'{side}_foot', li, _sole_points(model, li), np.array([0.0, 0.0, 1.0]),
                cfg.friction, True, kin.positions[li].copy(), kin.rotations[li].copy()))

    def set_hand_offsets(self, offsets: dict[str, np.ndarray]):
        """Move hand targets by offsets given in the base frame (x forward, y left, z up)"""
        kin = forward_kinematics(self.model, self.q_c)
        rot = kin.rotations[0]
        for side, offset in offsets.items():
            task = self.tasks.get(f'{side}_hand')
            if task is not None:
                task.target = kin.world_point(task.link, task.point) + rot @ np.asarray(offset)

    @property
    def task_names(self) -> list[str]:
        return list(self.tasks)

    # --- frames ----------------------------------------------------------------

    def _frame_map(self, q_meas: np.ndarray) -> tuple[_Frame, _Frame]:
        measured = Rotation.from_quat(q_meas[3:7]).as_matrix() if self.model.floating \
            else np.eye(3)
        internal = Rotation.from_quat(self.q_c[3:7]).as_matrix() if self.model.floating \
            else np.eye(3)
        return (_Frame(np.array(q_meas[0:3]) if self.model.floating else np.zeros(3), measured),
                _Frame(self.q_c[0:3].copy() if self.model.floating else np.zeros(3), internal))

    def to_internal(self, point: np.ndarray, q_meas: np.ndarray) -> np.ndarray:
        """Map a measured world point into the controller's reference frame"""
        meas, internal = self._frame_map(q_meas)
        return internal.rotation @ (meas.rotation.T @ (np.asarray(point) - meas.position)) \
            + internal.position

    def to_internal_direction(self, direction: np.ndarray, q_meas: np.ndarray) -> np.ndarray:
        meas, internal = self._frame_map(q_meas)
        return internal.rotation @ (meas.rotation.T @ np.asarray(direction))

    # --- reflex ----------------------------------------------------------------

    def enter_urgent_mode(self):
        """Keep the COM and posture tasks (and a hand contact task) only"""
        keep = URGENT_TASKS + (CONTACT_TASK,)
        for name in list(self.tasks):
            if name not in keep:
                del self.tasks[name]
                self.history.forget(name)
        self.urgent = True

    def set_hand_contact_target(self, side: str, point: np.ndarray, normal: np.ndarray,
                                q_meas: None | np.ndarray = None):
        """
        Reach a measured world point on the wall with the hand of the given
        side. normal is the wall normal pointing toward the robot.
        """
        hand = self.model.roles.hands[side]
        li, pi = self.model.find_primitive(hand)
        prim = self.model.links[li].collisions[pi]

        if q_meas is not None:
            point = self.to_internal(point, q_meas)
            normal = self.to_internal_direction(normal, q_meas)

        center = point + (prim.radius - self.config.contact_depth) * normal
        self.tasks[CONTACT_TASK] = Task(CONTACT_TASK, TaskKind.CARTESIAN_POSITION, center,
                                        self.config.hand_weight, self.config.task_kp,
                                        self.config.task_kd, li, prim.position.copy())
        self.contact_side = side
        self.contact_normal = np.asarray(normal, dtype=float)

    def update_contact_anchor(self, hand_position: np.ndarray, force: float, threshold: float,
                              q_meas: None | np.ndarray = None) -> bool:
        """
        Replace the hand task by a point contact anchored at the measured
        hand position once the wrist force exceeds the threshold. Happens at
        most once; returns whether the anchor was set by this call.
        """
        if self.anchored or force <= threshold or CONTACT_TASK not in self.tasks:
            return False

        task = self.tasks.pop(CONTACT_TASK)
        self.history.forget(CONTACT_TASK)
        anchor = np.asarray(hand_position, dtype=float)
        if q_meas is not None:
            anchor = self.to_internal(anchor, q_meas)

        self.contacts.append(ContactConstraint(
            HAND_CONSTRAINT, task.link, task.point[None, :], self.contact_normal,
            self.config.friction, False, anchor, reference=task.point.copy()))
        self.anchored = True
        logger.debug('hand contact anchored at %s', anchor)
        return True

    def on_damage(self, amputated_links: list[str]):
        """Switch to the updated model when configured; the default keeps the intact one"""
        if not self.config.updated_model or not amputated_links:
            return
        scales = {n: self.config.negligible_mass for n in amputated_links}
        self.model = self.intact.scaled_masses(scales)
        lost = {self.model.link_index[n] for n in amputated_links}
        self.contacts = [c for c in self.contacts if c.link not in lost]
        for name in [n for n, t in self.tasks.items() if t.link in lost and n != 'com'
                     and t.kind != TaskKind.POSTURE]:
            del self.tasks[name]

    # --- control -----------------------------------------------------------------

    def tick(self, q_meas: np.ndarray, dq_meas: np.ndarray, dt: float) -> np.ndarray:
        """
        One control step; returns the commanded actuated joint angles
        q + dq dt + 1/2 ddq dt^2 of the reference. An infeasible QP keeps the
        previous command.
        """
        model, cfg = self.model, self.config
        if cfg.closed_loop:
            self.q_c = np.array(q_meas, dtype=float)
            self.dq_c = np.array(dq_meas, dtype=float)

        q, dq = self.q_c, self.dq_c
        kin = forward_kinematics(model, q)
        problem = assemble_qp(model, kin, q, dq, list(self.tasks.values()), self.contacts,
                              self.bounds, dt, (cfg.contact_kp, cfg.contact_kd),
                              cfg.regularization, history=self.history)
        solution = solve_qp(problem, cfg.solver, cfg.tolerance, cfg.max_iterations,
                            None if self.last_solution is None else self.last_solution.x)
        self.last_solution = solution

        if solution.x is None or not np.all(np.isfinite(solution.x)):
            self.failures += 1
            logger.debug('QP %s, holding previous command', solution.status.value)
            return self.q_des.copy()

        ddq = solution.ddq
        self.q_c = integrate(model, q, dq + 0.5 * ddq * dt, dt)
        self.dq_c = dq + ddq * dt
        self.q_des = self.q_c[model.actuated_q].copy()
        return self.q_des.copy()
