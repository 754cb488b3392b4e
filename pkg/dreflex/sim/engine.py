# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from dreflex.model import (RobotModel, Kinematics, forward_kinematics, integrate, mass_matrix,
                           nonlinear_effects, point_wrench)

from .damage import DamagedModel
from .pd import stable_pd
from .world import FLOOR, WALL, Contact, Wall, WorldConfig, contact_forces, detect_contacts

__all__ = ['WorldState', 'StepInfo', 'Simulator', 'detect_fall']


@dataclass
class WorldState:
    q: np.ndarray
    dq: np.ndarray
    t: float = 0.0
    anchors: dict[tuple, np.ndarray] = field(default_factory=dict)

    def copy(self) -> WorldState:
        return WorldState(self.q.copy(), self.dq.copy(), self.t,
                          {k: v.copy() for k, v in self.anchors.items()})

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.dq)))


@dataclass
class StepInfo:
    kin: Kinematics
    contacts: list[Contact]
    forces: np.ndarray
    tau: np.ndarray

    def normal_force(self, body: str, primitive: None | str = None) -> float:
        total = 0.0
        for c, f in zip(self.contacts, self.forces):
            if c.body == body and (primitive is None or c.primitive == primitive):
                total += float(f @ c.normal)
        return total


def detect_fall(model: RobotModel, contacts: list[Contact], hand: None | str = None) -> bool:
    """
    A fall is any floor contact by something other than a foot, or any wall
    contact by something other than the designated hand primitive.
    """
    feet = {model.link_index[n] for n in model.roles.feet.values()}
    for c in contacts:
        if c.body == FLOOR and c.link not in feet:
            return True
        if c.body == WALL and c.primitive != hand:
            return True
    return False


class Simulator:
    """
    Robot, floor and optional wall, advanced by semi-implicit Euler steps.
    Joints are driven by Stable-PD toward commanded positions.
    """

    def __init__(self, model: RobotModel, world: WorldConfig, wall: None | Wall = None,
                 passive: None | np.ndarray = None, locked: None | np.ndarray = None):
        self.model = model
        self.world = world
        self.wall = wall
        self.gravity = np.asarray(world.gravity, dtype=float)

        self.kp, self.kd = world.gain_vectors(model)
        self.passive = np.zeros(model.n_joints, dtype=bool) if passive is None else passive
        self.kp[self.passive] = 0.0
        self.kd[self.passive] = 0.0
        self.locked = np.zeros(model.n_v, dtype=bool) if locked is None else locked

    @staticmethod
    def damaged(damaged: DamagedModel, world: WorldConfig, wall: None | Wall = None) -> Simulator:
        return Simulator(damaged.model, world, wall, passive=damaged.passive,
                         locked=damaged.locked)

    @property
    def hand(self) -> None | str:
        """Primitive allowed to touch the wall"""
        if self.wall is None:
            return None
        return self.model.roles.hands.get(self.wall.side)

    def step(self, state: WorldState, q_target: np.ndarray,
             dt: None | float = None) -> tuple[WorldState, StepInfo]:
        model = self.model
        dt = self.world.dt if dt is None else dt
        q, dq = state.q, state.dq

        kin = forward_kinematics(model, q)
        contacts = detect_contacts(model, q, self.wall, kin)
        wall_cfg = self.wall.config if self.wall is not None else None
        forces, anchors = contact_forces(model, contacts, kin, dq, self.world, wall_cfg,
                                         state.anchors)

        f_ext = np.zeros((len(model.links), 6))
        for c, f in zip(contacts, forces):
            f_ext[c.link] += point_wrench(c.point, f)

        mass = mass_matrix(model, q, kin)
        bias = nonlinear_effects(model, q, dq, self.gravity, f_ext, kin)

        tau = stable_pd(model, q, dq, q_target, self.kp, self.kd, dt, mass=mass, bias=bias,
                        locked=self.locked)
        tau[self.passive] = 0.0

        rhs = -bias
        rhs[model.base_dofs:] += tau
        ddq = np.zeros(model.n_v)
        free = ~self.locked
        ddq[free] = cho_solve(cho_factor(mass[np.ix_(free, free)]), rhs[free])

        dq_next = dq + ddq * dt
        q_next = integrate(model, q, dq_next, dt)
        if model.floating:
            q_next[3:7] /= np.linalg.norm(q_next[3:7])

        nxt = WorldState(q_next, dq_next, state.t + dt, anchors)
        return nxt, StepInfo(kin, contacts, forces, tau)

    def is_fall(self, contacts: list[Contact]) -> bool:
        return detect_fall(self.model, contacts, self.hand)

    def hand_contact(self, info: StepInfo) -> tuple[float, None | np.ndarray]:
        """Wrist force sensor reading (summed wall normal force) and hand center"""
        hand = self.hand
        if hand is None:
            return 0.0, None
        force = info.normal_force(WALL, hand)
        li, pi = self.model.find_primitive(hand)
        center = info.kin.world_point(li, self.model.links[li].collisions[pi].position)
        return force, center
