# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from dreflex.model import RobotModel

from .damage import DamageSpec
from .world import WallConfig

__all__ = ['Scenario', 'mirror_configuration', 'mirror_velocity']


def mirror_configuration(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Reflect a configuration across the sagittal (x-z) plane"""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    off = model.q_offset
    if model.floating:
        out[1] = -q[1]
        # reflection P R P with P = diag(1, -1, 1)
        out[3] = -q[3]
        out[5] = -q[5]
    joints = q[off:]
    out[off:] = joints[model.mirror_joints] * model.mirror_signs
    return out


def mirror_velocity(model: RobotModel, dq: np.ndarray) -> np.ndarray:
    dq = np.asarray(dq, dtype=float)
    out = dq.copy()
    nb = model.base_dofs
    if model.floating:
        out[1] = -dq[1]
        out[3] = -dq[3]
        out[5] = -dq[5]
    rates = dq[nb:]
    out[nb:] = rates[model.mirror_joints] * model.mirror_signs
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    One situation: hand target offsets of the posture phase (left, right;
    base frame), wall configuration and damage. posture/velocity hold the
    realized state at damage time once the posture phase has run.
    """

    id: int
    seed: int
    hand_offsets: np.ndarray
    wall: WallConfig
    damage: DamageSpec
    posture: None | np.ndarray = None
    velocity: None | np.ndarray = None

    @property
    def side(self) -> str:
        return self.damage.side

    def offsets(self) -> dict[str, np.ndarray]:
        return {'left': self.hand_offsets[0], 'right': self.hand_offsets[1]}

    def mirrored(self, model: RobotModel) -> Scenario:
        hands = self.hand_offsets[::-1] * np.array([1.0, -1.0, 1.0])
        wall = replace(self.wall, orientation=-self.wall.orientation)
        posture = None if self.posture is None else mirror_configuration(model, self.posture)
        velocity = None if self.velocity is None else mirror_velocity(model, self.velocity)
        return Scenario(self.id, self.seed, hands, wall, self.damage.mirrored(), posture, velocity)

    def to_dict(self):
        return {
            'id': self.id,
            'seed': self.seed,
            'hand_offsets': self.hand_offsets.tolist(),
            'wall': self.wall.to_dict(),
            'damage': self.damage.to_dict(),
            'posture': None if self.posture is None else self.posture.tolist(),
            'velocity': None if self.velocity is None else self.velocity.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> Scenario:
        def arr(v):
            return None if v is None else np.array(v, dtype=float)
        return Scenario(int(d['id']), int(d['seed']), np.array(d['hand_offsets'], dtype=float),
                        WallConfig.from_dict(d['wall']), DamageSpec.from_dict(d['damage']),
                        arr(d.get('posture')), arr(d.get('velocity')))
