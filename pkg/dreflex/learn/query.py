# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import numpy as np

from dreflex.model import RobotModel
from dreflex.scenario.contactmap import GridSpec
from dreflex.sim import DamageSpec, WallConfig, mirror_configuration, mirror_velocity

from .classifier import Classifier

__all__ = ['predict_map', 'select_index', 'select_contact', 'select_for_situation']


def predict_map(classifier: Classifier, model: RobotModel, q: np.ndarray, distance: float,
                orientation: float, grid: None | GridSpec = None, dq: None | np.ndarray = None,
                damage: None | DamageSpec = None) -> np.ndarray:
    """Classifier confidence for every cell of the grid, shape (ny, nx)"""
    grid = grid or classifier.grid
    encoder = classifier.encoder(model)
    inputs = encoder.encode(q, dq, distance, orientation, damage, grid.cells())
    return classifier.confidence(inputs).reshape(grid.shape)


def select_index(confidence: np.ndarray) -> int:
    """Row-major index of the maximum; ties go to the lowest index"""
    return int(np.argmax(np.asarray(confidence).ravel()))


def select_contact(classifier: Classifier, model: RobotModel, q: np.ndarray, distance: float,
                   orientation: float, grid: None | GridSpec = None,
                   dq: None | np.ndarray = None,
                   damage: None | DamageSpec = None) -> tuple[float, float]:
    grid = grid or classifier.grid
    conf = predict_map(classifier, model, q, distance, orientation, grid, dq, damage)
    return grid.cell(select_index(conf))


def select_for_situation(classifier: Classifier, model: RobotModel, q: np.ndarray,
                         dq: None | np.ndarray, wall: WallConfig, damage: DamageSpec,
                         grid: None | GridSpec = None) -> tuple[float, float]:
    """
    Contact cell for a damage on either leg. A damage on the other side than
    the classifier was trained for is mirrored into its frame and the chosen
    x is mirrored back.
    """
    if damage.side == classifier.side:
        return select_contact(classifier, model, q, wall.distance, wall.orientation, grid, dq,
                              damage)

    q_m = mirror_configuration(model, q)
    dq_m = None if dq is None else mirror_velocity(model, dq)
    x, y = select_contact(classifier, model, q_m, wall.distance, -wall.orientation, grid, dq_m,
                          damage.mirrored())
    return -x, y
