# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dreflex.model import RobotModel
from dreflex.scenario.contactmap import GridSpec
from dreflex.sim import DamageSpec

__all__ = ['FeatureVariant', 'Variants', 'Normalization', 'FeatureEncoder']


@dataclass(frozen=True)
class FeatureVariant:
    """Which situation features the classifier sees besides the cell (x, y)"""

    name: str
    tag: int
    posture: bool = True
    wall: bool = True
    damage: bool = False
    velocity: bool = False


class Variants:
    __VARIANT_LIST: list[FeatureVariant] = []

    @staticmethod
    def __init_variant_list():
        if not Variants.__VARIANT_LIST:
            Variants.__VARIANT_LIST = [v for v in Variants.__dict__.values()
                                       if isinstance(v, FeatureVariant)]

    @staticmethod
    def find_by_name(name: str) -> FeatureVariant:
        Variants.__init_variant_list()
        try:
            return next(v for v in Variants.__VARIANT_LIST if v.name == name)
        except StopIteration:
            raise ValueError(f'Unknown classifier variant "{name}"') from None

    @staticmethod
    def find_by_tag(tag: int) -> FeatureVariant:
        Variants.__init_variant_list()
        try:
            return next(v for v in Variants.__VARIANT_LIST if v.tag == tag)
        except StopIteration:
            raise ValueError(f'Unknown classifier variant tag {tag}') from None

    @staticmethod
    def get_variants() -> list[FeatureVariant]:
        Variants.__init_variant_list()
        return Variants.__VARIANT_LIST

    D_REFLEX = FeatureVariant('d-reflex', 0)
    POSTURE_ABLATION = FeatureVariant('posture-ablation', 1, posture=False)
    WALL_ABLATION = FeatureVariant('wall-ablation', 2, wall=False)
    J_ADDITION = FeatureVariant('j-addition', 3, damage=True)
    JDQ_ADDITION = FeatureVariant('jdq-addition', 4, damage=True, velocity=True)


@dataclass(frozen=True, eq=False)
class Normalization:
    """feature = (raw - offset) / scale"""

    offset: np.ndarray
    scale: np.ndarray

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.offset) / self.scale

    def invert(self, features: np.ndarray) -> np.ndarray:
        return features * self.scale + self.offset


class FeatureEncoder:
    """
    Classifier inputs, in order: actuated joint angles, actuated joint
    rates, wall (d, alpha), damaged-leg joint mask, cell (x, y); each group
    present according to the variant. Angles map to [-1, 1] over the joint
    limits, rates over the velocity limits, d, alpha and the cell over
    their sampling ranges.
    """

    def __init__(self, model: RobotModel, variant: FeatureVariant, grid: GridSpec,
                 distance: tuple[float, float] = (0.4, 1.0),
                 orientation: tuple[float, float] = (-1.0, 1.0), side: str = 'right',
                 normalization: None | Normalization = None):
        self.model = model
        self.variant = variant
        self.side = side

        offsets = []
        scales = []
        ja = model.actuated_joints
        if variant.posture:
            offsets.append(0.5 * (model.lower[ja] + model.upper[ja]))
            scales.append(0.5 * (model.upper[ja] - model.lower[ja]))
        if variant.velocity:
            offsets.append(np.zeros(len(ja)))
            scales.append(model.velocity_limit[ja])
        if variant.wall:
            offsets.append([0.5 * (distance[0] + distance[1]), 0.5 * (orientation[0] + orientation[1])])
            scales.append([max(0.5 * (distance[1] - distance[0]), 1e-6),
                           max(0.5 * (orientation[1] - orientation[0]), 1e-6)])
        if variant.damage:
            n_leg = len(model.roles.legs[side])
            offsets.append(np.zeros(n_leg))
            scales.append(np.ones(n_leg))
        offsets.append([0.5 * (grid.x_range[0] + grid.x_range[1]),
                        0.5 * (grid.y_range[0] + grid.y_range[1])])
        scales.append([0.5 * (grid.x_range[1] - grid.x_range[0]),
                       0.5 * (grid.y_range[1] - grid.y_range[0])])

        computed = Normalization(np.concatenate(offsets).astype(float),
                                 np.concatenate(scales).astype(float))
        if normalization is not None and len(normalization.offset) != len(computed.offset):
            raise ValueError('Normalization does not match the feature layout')
        self.normalization = normalization or computed

    @property
    def n_features(self) -> int:
        return len(self.normalization.offset)

    def situation(self, q: np.ndarray, dq: None | np.ndarray, distance: float,
                  orientation: float, damage: None | DamageSpec) -> np.ndarray:
        """Raw situation features, without the cell coordinates"""
        parts = []
        if self.variant.posture:
            parts.append(np.asarray(q)[self.model.actuated_q])
        if self.variant.velocity:
            if dq is None:
                raise ValueError('Variant needs joint velocities')
            parts.append(np.asarray(dq)[self.model.actuated_v])
        if self.variant.wall:
            parts.append([distance, orientation])
        if self.variant.damage:
            if damage is None:
                raise ValueError('Variant needs the damaged joints')
            parts.append(damage.mask(self.model))
        if not parts:
            return np.zeros(0)
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def encode(self, q: np.ndarray, dq: None | np.ndarray, distance: float, orientation: float,
               damage: None | DamageSpec, cells: np.ndarray) -> np.ndarray:
        """Normalized input rows, one per cell (k, 2)"""
        cells = np.atleast_2d(np.asarray(cells, dtype=float))
        base = self.situation(q, dq, distance, orientation, damage)
        raw = np.hstack([np.broadcast_to(base, (len(cells), len(base))), cells])
        return self.normalization.apply(raw)
