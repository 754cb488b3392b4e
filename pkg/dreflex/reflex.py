# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging

import numpy as np

from dreflex.errors import WeightsError
from dreflex.learn import (Classifier, FeatureVariant, predict_map, select_contact,
                           select_for_situation)
from dreflex.model import RobotModel
from dreflex.scenario import GridSpec
from dreflex.sim import Sensed, trigger_reflex

__all__ = ['DReflexPolicy', 'predict_map', 'select_contact', 'trigger_reflex']

logger = logging.getLogger(__name__)


class DReflexPolicy:
    """
    Picks the wall contact with the highest classifier confidence for the
    sensed situation. A grid other than the training one may be used for
    the query as long as it covers the same wall area.
    """

    def __init__(self, classifier: Classifier, model: RobotModel, grid: None | GridSpec = None,
                 variant: None | FeatureVariant = None):
        if variant is not None and variant != classifier.variant:
            raise WeightsError(f'Weights are for variant "{classifier.variant.name}", '
                               f'not "{variant.name}"')
        if grid is not None and (not np.allclose(grid.x_range, classifier.grid.x_range) or
                                 not np.allclose(grid.y_range, classifier.grid.y_range)):
            raise WeightsError('Query grid covers another area than the training grid')
        # validates the model digest and the feature layout
        classifier.encoder(model)
        self.classifier = classifier
        self.model = model
        self.grid = grid or classifier.grid
        self.chosen: list[tuple[float, float]] = []

    def choose(self, sensed: Sensed) -> tuple[float, float]:
        target = select_for_situation(self.classifier, self.model, sensed.q, sensed.dq,
                                      sensed.wall, sensed.damage, self.grid)
        logger.debug('reflex contact at (%.3f, %.3f)', *target)
        self.chosen.append(target)
        return target
