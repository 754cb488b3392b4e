# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from dreflex.errors import WeightsError
from dreflex.learn import Classifier, Variants, select_for_situation
from dreflex.model import RobotModel
from dreflex.scenario import (DatasetRecord, EpisodeRunner, LookupRunner, Target, is_avoidable,
                              mirror_record)

from .avoidability import oracle_cell

__all__ = ['POLICY_TAGS', 'LEARNED_TAGS', 'PolicyVariant', 'policy_targets', 'evaluate_policy',
           'mirrored_agreement', 'map_symmetry']

logger = logging.getLogger(__name__)

LEARNED_TAGS = tuple(v.name for v in Variants.get_variants())
POLICY_TAGS = LEARNED_TAGS + ('no-reflex', 'random-reflex', 'both-ablation', 'oracle')


@dataclass(frozen=True)
class PolicyVariant:
    """
    A way of choosing the wall contact. Learned tags carry a classifier,
    both-ablation carries its fixed cell, random-reflex draws one cell per
    scenario from its seed.
    """

    tag: str
    classifier: None | Classifier = None
    cell: None | tuple[float, float] = None
    seed: int = 0

    def __post_init__(self):
        if self.tag not in POLICY_TAGS:
            raise ValueError(f'Unknown policy "{self.tag}"')
        if self.tag in LEARNED_TAGS:
            if self.classifier is None:
                raise ValueError(f'Policy "{self.tag}" needs a classifier')
            if self.classifier.variant.name != self.tag:
                raise WeightsError(f'Classifier variant "{self.classifier.variant.name}" '
                                 f'used as "{self.tag}"')
        if self.tag == 'both-ablation' and self.cell is None:
            raise ValueError('Policy "both-ablation" needs its fixed cell')


def policy_targets(policy: PolicyVariant, model: RobotModel,
                   records: list[DatasetRecord]) -> list[Target]:
    targets: list[Target] = []
    for r in records:
        grid = r.map.grid
        if policy.tag == 'no-reflex':
            targets.append(None)
        elif policy.tag == 'both-ablation':
            targets.append(policy.cell)
        elif policy.tag == 'random-reflex':
            rng = np.random.default_rng(np.random.SeedSequence([policy.seed, r.id]))
            targets.append(grid.cell(int(rng.integers(grid.size))))
        elif policy.tag == 'oracle':
            targets.append(oracle_cell(r))
        else:
            sc = r.scenario
            targets.append(select_for_situation(policy.classifier, model, sc.posture,
                                                sc.velocity, sc.wall, sc.damage, grid))
    return targets


def evaluate_policy(policy: PolicyVariant, model: RobotModel, records: list[DatasetRecord],
                    runner: None | EpisodeRunner = None) -> float:
    """Success rate of one episode per scenario; the scenarios must be avoidable"""
    if not records:
        return float('nan')
    if not all(is_avoidable(r.map) for r in records):
        raise ValueError('Policies are evaluated on avoidable scenarios only')
    runner = runner or LookupRunner()
    outcomes = runner.outcomes(records, policy_targets(policy, model, records))
    rate = float(np.mean(outcomes))
    logger.info('%s: %d/%d', policy.tag, sum(outcomes), len(outcomes))
    return rate


def _simulating(runner: EpisodeRunner):
    # a lookup reads the flipped recorded map back
    if isinstance(runner, LookupRunner):
        raise ValueError('Mirrored checks need a runner that simulates the mirrored scenarios')


def mirrored_agreement(classifier: Classifier, model: RobotModel, records: list[DatasetRecord],
                       runner: EpisodeRunner) -> float:
    """
    Fraction of avoidable scenarios where the classifier's choice has the
    same outcome on the recorded situation and on its mirror image, the
    mirrored one simulated by the runner and queried through the
    other-side path of the classifier.
    """
    _simulating(runner)
    records = [r for r in records if is_avoidable(r.map)]
    if not records:
        return float('nan')
    mirrored = [mirror_record(r, model) for r in records]
    policy = PolicyVariant(classifier.variant.name, classifier)
    direct = LookupRunner().outcomes(records, policy_targets(policy, model, records))
    flipped = runner.outcomes(mirrored, policy_targets(policy, model, mirrored))
    agreement = float(np.mean([a == b for a, b in zip(direct, flipped)]))
    logger.info('mirrored agreement %.3f over %d scenarios', agreement, len(records))
    return agreement


def map_symmetry(model: RobotModel, records: list[DatasetRecord],
                 runner: EpisodeRunner) -> float:
    """
    Fraction of cells, over all records, where the simulated mirror image of
    a scenario succeeds exactly where the flipped recorded map does
    """
    _simulating(runner)
    if not records:
        return float('nan')
    same = 0
    total = 0
    for record in records:
        mirrored = mirror_record(record, model)
        cells = mirrored.map.grid.cells()
        targets = [(float(x), float(y)) for x, y in cells]
        outcomes = runner.outcomes([mirrored] * len(cells), targets)
        same += int(np.sum(np.array(outcomes) == mirrored.map.cells.ravel()))
        total += len(cells)
    logger.info('map symmetry %d/%d cells', same, total)
    return same / total
