# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.transform import Rotation

from dreflex.model import Kinematics, RobotModel, com, com_jacobian, point_jacobian

__all__ = ['TaskKind', 'Task', 'ContactConstraint', 'JointBounds', 'JacobianHistory',
           'task_rows', 'contact_rows']


class TaskKind(Enum):
    CARTESIAN_POSITION = 'cartesian-position'
    CARTESIAN_ORIENTATION = 'cartesian-orientation'
    COM_POSITION = 'com-position'
    POSTURE = 'posture'


@dataclass
class Task:
    """
    One weighted cost term w ||A ddq - b||^2. The target is a world point
    (position, COM), a world rotation matrix (orientation) or a vector of
    actuated joint angles (posture). link/point locate the controlled point
    for Cartesian tasks, point in the link frame.
    """

    name: str
    kind: TaskKind
    target: np.ndarray
    weight: float
    kp: float
    kd: float
    link: int = 0
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f'Task "{self.name}": weight must be finite and non-negative')


@dataclass
class ContactConstraint:
    """
    Rigid contact held by the QP. A surface contact (foot) fixes the full
    6D motion of its link; a point contact (hand) fixes one point. Forces
    act at the given link-frame points, each inside a 4-facet friction
    pyramid around the world normal.
    """

    name: str
    link: int
    points: np.ndarray          # (k, 3) force points, link frame
    normal: np.ndarray
    friction: float
    surface: bool
    anchor: np.ndarray          # world position of the reference point
    anchor_rotation: None | np.ndarray = None
    reference: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class JointBounds:
    """Joint position, velocity and acceleration bounds turned into ddq bounds"""

    position: bool = True
    velocity: bool = True
    acceleration: float = 500.0

    def ddq_limits(self, model: RobotModel, q: np.ndarray, dq: np.ndarray,
                   dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on the acceleration of every joint, over model.joints"""
        joints = q[model.q_offset:]
        rates = dq[model.base_dofs:]
        lo = np.full(model.n_joints, -self.acceleration)
        hi = np.full(model.n_joints, self.acceleration)
        if self.position:
            lo = np.maximum(lo, 2.0 * (model.lower - joints - rates * dt) / dt**2)
            hi = np.minimum(hi, 2.0 * (model.upper - joints - rates * dt) / dt**2)
        if self.velocity:
            lo = np.maximum(lo, (-model.velocity_limit - rates) / dt)
            hi = np.minimum(hi, (model.velocity_limit - rates) / dt)
        # a joint already outside its bounds gets the midpoint
        crossed = lo > hi
        mid = 0.5 * (lo + hi)
        lo[crossed] = mid[crossed]
        hi[crossed] = mid[crossed]
        return lo, hi


class JacobianHistory:
    """Jacobians of the previous tick, for finite-difference Jdot dq terms"""

    def __init__(self):
        self._last: dict[str, np.ndarray] = {}

    def drift(self, key: str, jac: np.ndarray, dq: np.ndarray, dt: float) -> np.ndarray:
        prev = self._last.get(key)
        self._last[key] = jac
        if prev is None or prev.shape != jac.shape:
            return np.zeros(jac.shape[0])
        return (jac - prev) @ dq / dt

    def forget(self, key: str):
        self._last.pop(key, None)


def _rotation_error(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(target @ current.T).as_rotvec()


def task_rows(task: Task, model: RobotModel, kin: Kinematics, q: np.ndarray, dq: np.ndarray,
              history: None | JacobianHistory = None,
              dt: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """
    (A, b) of a task: A is the task Jacobian and b the desired task
    acceleration of a PD law minus the Jacobian drift term.
    """
    if task.kind == TaskKind.POSTURE:
        jac = np.zeros((model.n_a, model.n_v))
        jac[np.arange(model.n_a), model.actuated_v] = 1.0
        b = task.kp * (task.target - q[model.actuated_q]) - task.kd * dq[model.actuated_v]
        return jac, b

    if task.kind == TaskKind.COM_POSITION:
        jac = com_jacobian(model, kin)
        error = task.target - com(model, q, kin)
    elif task.kind == TaskKind.CARTESIAN_POSITION:
        jac = point_jacobian(model, q, task.link, task.point, kin)[:3]
        error = task.target - kin.world_point(task.link, task.point)
    elif task.kind == TaskKind.CARTESIAN_ORIENTATION:
        jac = point_jacobian(model, q, task.link, np.zeros(3), kin)[3:]
        error = _rotation_error(task.target, kin.rotations[task.link])
    else:
        raise ValueError(f'Unknown task kind {task.kind}')

    drift = history.drift(task.name, jac, dq, dt) if history is not None else 0.0
    b = task.kp * error - task.kd * (jac @ dq) - drift
    return jac, b


def contact_rows(contact: ContactConstraint, model: RobotModel, kin: Kinematics, q: np.ndarray,
                 dq: np.ndarray, kp: float, kd: float, history: None | JacobianHistory = None,
                 dt: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Acceleration rows J ddq = b holding a contact, with drift stabilization"""
    full = point_jacobian(model, q, contact.link, contact.reference, kin)
    jac = full if contact.surface else full[:3]
    drift = history.drift(contact.name, jac, dq, dt) if history is not None else 0.0

    vel = jac @ dq
    pos = kin.world_point(contact.link, contact.reference)
    correction = kp * (contact.anchor - pos) - kd * vel[:3]
    if contact.surface:
        rot = _rotation_error(contact.anchor_rotation, kin.rotations[contact.link])
        correction = np.concatenate([correction, kp * rot - kd * vel[3:]])

    return jac, correction - drift
