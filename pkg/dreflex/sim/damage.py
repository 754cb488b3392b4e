# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from dreflex.errors import DamageError
from dreflex.model import RobotModel, mass_matrix

__all__ = ['Condition', 'DamageSpec', 'DamagedModel', 'apply_damage', 'mirror_name',
           'lock_velocity']


class Condition(Enum):
    AMPUTATION = 'amputation'
    PASSIVE = 'passive'
    LOCKED = 'locked'


def mirror_name(name: str) -> str:
    if name.startswith('l_'):
        return 'r_' + name[2:]
    if name.startswith('r_'):
        return 'l_' + name[2:]
    return name


@dataclass(frozen=True)
class DamageSpec:
    side: str
    joints: dict[str, Condition] = field(default_factory=dict)

    def __post_init__(self):
        if self.side not in ('left', 'right'):
            raise DamageError(f'Invalid damaged side "{self.side}"')

    @property
    def intact(self) -> bool:
        return not self.joints

    def validate(self, model: RobotModel):
        leg = model.roles.legs.get(self.side, ())
        for name in self.joints:
            if name not in leg:
                raise DamageError(f'Joint "{name}" is not on the {self.side} leg')

    def mask(self, model: RobotModel) -> np.ndarray:
        """Damaged-joint indicator over the leg joints, proximal first"""
        leg = model.roles.legs[self.side]
        return np.array([1.0 if n in self.joints else 0.0 for n in leg])

    def mirrored(self) -> DamageSpec:
        side = 'left' if self.side == 'right' else 'right'
        return DamageSpec(side, {mirror_name(n): c for n, c in self.joints.items()})

    def to_dict(self):
        return {'side': self.side, 'joints': {n: c.value for n, c in self.joints.items()}}

    @staticmethod
    def from_dict(d: dict) -> DamageSpec:
        try:
            joints = {n: Condition(c) for n, c in d.get('joints', {}).items()}
        except ValueError as e:
            raise DamageError(str(e)) from e
        return DamageSpec(d['side'], joints)

    def __str__(self):
        if not self.joints:
            return 'intact'
        return ', '.join(f'{n}={c.value}' for n, c in self.joints.items())


class DamagedModel:
    """
    The simulated robot after damage, together with the coordinate maps
    between the intact model and the (possibly pruned) damaged one.
    """

    def __init__(self, intact: RobotModel, spec: DamageSpec, model: RobotModel,
                 removed: list[str]):
        self.intact = intact
        self.spec = spec
        self.model = model
        self.removed_links = tuple(removed)
        self.removed_mass = intact.total_mass - model.total_mass

        joint_map = np.array([intact.joint_index[j.name] for j in model.joints], dtype=int)
        self.joint_map = joint_map
        off_i, off_d = intact.q_offset, model.q_offset
        self.q_map = np.concatenate([np.arange(off_d), off_i + joint_map]).astype(int)
        self.v_map = np.concatenate([np.arange(model.base_dofs),
                                     intact.base_dofs + joint_map]).astype(int)

        conditions = [spec.joints.get(j.name) for j in model.joints]
        self.passive = np.array([c == Condition.PASSIVE for c in conditions], dtype=bool)
        locked = np.array([c == Condition.LOCKED for c in conditions], dtype=bool)
        self.locked = np.concatenate([np.zeros(model.base_dofs, dtype=bool), locked])

    def restrict_q(self, q: np.ndarray) -> np.ndarray:
        return np.asarray(q)[self.q_map]

    def restrict_v(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.v_map]

    def restrict_joints(self, values: np.ndarray) -> np.ndarray:
        """Intact per-joint values (e.g. commanded angles) to damaged joints"""
        return np.asarray(values)[self.joint_map]

    def expand_q(self, q: np.ndarray, fill: np.ndarray) -> np.ndarray:
        """Damaged configuration into intact coordinates, missing joints from fill"""
        out = np.array(fill, dtype=float)
        out[self.q_map] = q
        return out

    def expand_v(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.intact.n_v)
        out[self.v_map] = v
        return out


def apply_damage(model: RobotModel, spec: DamageSpec) -> DamagedModel:
    """
    Damaged simulation model: amputated joints and every link distal to them
    are removed; passive joints get zero actuator torque and locked joints
    zero acceleration (see DamagedModel.passive/.locked).
    """
    spec.validate(model)

    removed: list[str] = []
    for name, cond in spec.joints.items():
        if cond == Condition.AMPUTATION:
            for link in model.distal_links(name):
                if link not in removed:
                    removed.append(link)

    damaged = model.prune(removed) if removed else model
    return DamagedModel(model, spec, damaged, removed)


def lock_velocity(model: RobotModel, q: np.ndarray, dq: np.ndarray,
                  locked: np.ndarray) -> np.ndarray:
    """
    Velocity after instantly locking some columns: locked rates become zero
    and the remaining ones keep the generalized momentum of the free columns.
    """
    if not locked.any():
        return np.array(dq, dtype=float)
    mm = mass_matrix(model, q)
    free = ~locked
    out = np.zeros(model.n_v)
    out[free] = cho_solve(cho_factor(mm[np.ix_(free, free)]), (mm @ dq)[free])
    return out
