# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dreflex.errors import WeightsError
from dreflex.model import RobotModel
from dreflex.scenario.contactmap import GridSpec

from .features import FeatureEncoder, FeatureVariant, Normalization
from .mlp import MLPWeights, mlp_forward

__all__ = ['Classifier']


@dataclass(eq=False)
class Classifier:
    """
    Trained success classifier: network weights together with everything
    needed to build its inputs (variant, normalization, training grid) and
    the robot it was trained on.
    """

    weights: MLPWeights
    variant: FeatureVariant
    normalization: Normalization
    grid: GridSpec
    model_digest: str = ''
    side: str = 'right'

    def __post_init__(self):
        n_in = self.weights.sizes[0]
        if len(self.normalization.offset) != n_in or len(self.normalization.scale) != n_in:
            raise WeightsError(f'Normalization length does not match the {n_in} network inputs')

    def encoder(self, model: RobotModel) -> FeatureEncoder:
        if self.model_digest and model.digest and model.digest != self.model_digest:
            raise WeightsError(f'Classifier was trained on another robot model than {model.name}')
        encoder = FeatureEncoder(model, self.variant, self.grid, side=self.side,
                                 normalization=self.normalization)
        if encoder.n_features != self.weights.sizes[0]:
            raise WeightsError('Feature layout does not match the network inputs')
        return encoder

    def confidence(self, inputs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.weights, inputs)
