# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from dreflex.errors import ConfigError, TrainingError
from dreflex.model import RobotModel
from dreflex.scenario import (DatasetRecord, EpisodeRunner, GridSpec, LookupRunner, is_avoidable,
                              mirror_record)

from .classifier import Classifier
from .features import FeatureEncoder, FeatureVariant
from .mlp import AdamState, MLPWeights, adam_init, adam_step, init_mlp, loss_and_gradient
from .query import select_for_situation

__all__ = ['TrainConfig', 'TrainReport', 'split_dataset', 'base_rate', 'build_examples',
           'fit_epoch', 'simulated_validation_success', 'train']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 256
    epochs: int = 50
    eval_period: int = 1
    seed: int = 0
    fractions: tuple[float, float, float] = (0.375, 0.125, 0.5)
    hidden: tuple[int, ...] = (128, 128)
    dropout: float = 0.2

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigError('Split fractions must be three non-negative numbers')
        if not np.isclose(sum(self.fractions), 1.0):
            raise ConfigError(f'Split fractions {self.fractions} do not sum to 1')
        if self.learning_rate <= 0:
            raise ConfigError('Learning rate must be positive')
        if not all(0 <= b < 1 for b in self.betas):
            raise ConfigError('Adam moment rates must be in [0, 1)')
        if self.batch_size < 1 or self.epochs < 1 or self.eval_period < 1:
            raise ConfigError('Batch size, epochs and evaluation period must be positive')
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError('Hidden layer widths must be positive')
        if not 0 <= self.dropout < 1:
            raise ConfigError('Dropout rate must be in [0, 1)')


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    evaluations: list[tuple[int, float]] = field(default_factory=list)
    selected_epoch: int = -1
    selected_rate: float = float('nan')
    wall_clock: float = 0.0
    base_rates: dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {'losses': self.losses,
                'evaluations': [list(e) for e in self.evaluations],
                'selected_epoch': self.selected_epoch, 'selected_rate': self.selected_rate,
                'wall_clock': self.wall_clock, 'base_rates': self.base_rates}


def split_dataset(records: list[DatasetRecord], seed: int,
                  fractions: tuple[float, float, float] = (0.375, 0.125, 0.5)
                  ) -> tuple[list[DatasetRecord], list[DatasetRecord], list[DatasetRecord]]:
    """
    Random split by scenario into training, validation and test sets, each
    ordered by scenario id. Counts are the rounded fractions, the test set
    takes the rest.
    """
    n = len(records)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fractions[0]))
    n_val = min(int(round(n * fractions[1])), n - n_train)

    def pick(idx):
        return sorted((records[i] for i in idx), key=lambda r: r.id)

    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))


def base_rate(records: list[DatasetRecord]) -> float:
    """Fraction of successful cells over all maps"""
    total = sum(r.map.grid.size for r in records)
    return sum(r.map.successes for r in records) / total if total else float('nan')


def build_examples(records: list[DatasetRecord],
                   encoder: FeatureEncoder) -> tuple[np.ndarray, np.ndarray]:
    """One (input, label) row per grid cell of every record"""
    xs = []
    ys = []
    for record in records:
        if record.scenario.side != encoder.side:
            record = mirror_record(record, encoder.model)
        sc = record.scenario
        if sc.posture is None:
            raise ValueError(f'Scenario {sc.id} has no recorded posture')
        xs.append(encoder.encode(sc.posture, sc.velocity, sc.wall.distance, sc.wall.orientation,
                                 sc.damage, record.map.grid.cells()))
        ys.append(record.map.cells.ravel().astype(float))
    if not xs:
        return np.zeros((0, encoder.n_features)), np.zeros(0)
    return np.vstack(xs), np.concatenate(ys)


def fit_epoch(theta: MLPWeights, state: AdamState, x: np.ndarray, y: np.ndarray,
              config: TrainConfig,
              rng: np.random.Generator) -> tuple[MLPWeights, AdamState, float]:
    """One pass over shuffled mini-batches; returns the mean batch loss"""
    order = rng.permutation(len(x))
    total = 0.0
    for start in range(0, len(x), config.batch_size):
        batch = order[start:start + config.batch_size]
        loss, grad = loss_and_gradient(theta, x[batch], y[batch], rng)
        if not np.isfinite(loss):
            raise TrainingError(f'Loss became {loss} at batch offset {start}')
        theta, state = adam_step(theta, grad, state, config.learning_rate, config.betas,
                                 config.eps)
        total += loss * len(batch)
    return theta, state, total / max(len(x), 1)


def simulated_validation_success(classifier: Classifier, model: RobotModel,
                                 records: list[DatasetRecord],
                                 runner: EpisodeRunner) -> float:
    """Success rate over the avoidable records, one episode at the chosen cell each"""
    avoidable = [r for r in records if is_avoidable(r.map)]
    if not avoidable:
        raise TrainingError('No avoidable scenario to validate on')
    targets = [select_for_situation(classifier, model, r.scenario.posture, r.scenario.velocity,
                                    r.scenario.wall, r.scenario.damage, r.map.grid)
               for r in avoidable]
    return float(np.mean(runner.outcomes(avoidable, targets)))


def train(model: RobotModel, train_records: list[DatasetRecord],
          validation_records: list[DatasetRecord], config: TrainConfig, variant: FeatureVariant,
          grid: GridSpec, runner: None | EpisodeRunner = None,
          distance: tuple[float, float] = (0.4, 1.0),
          orientation: tuple[float, float] = (-1.0, 1.0),
          side: str = 'right') -> tuple[Classifier, TrainReport]:
    """
    Cross-entropy training with Adam. The weights returned are those of the
    evaluated epoch with the best simulated validation success, the earliest
    one on ties.
    """
    started = time.perf_counter()
    runner = runner or LookupRunner()
    encoder = FeatureEncoder(model, variant, grid, distance, orientation, side)
    x, y = build_examples(train_records, encoder)
    if not len(x):
        raise TrainingError('Empty training set')

    init_seq, loop_seq = np.random.SeedSequence(config.seed).spawn(2)
    theta = init_mlp([encoder.n_features, *config.hidden, 1], np.random.default_rng(init_seq),
                     config.dropout)
    rng = np.random.default_rng(loop_seq)
    state = adam_init(theta)

    report = TrainReport(base_rates={'train': base_rate(train_records),
                                     'validation': base_rate(validation_records)})
    logger.info('training %s on %d examples (positive rate %.3f)', variant.name, len(x),
                report.base_rates['train'])

    best = None
    for epoch in range(config.epochs):
        theta, state, loss = fit_epoch(theta, state, x, y, config, rng)
        report.losses.append(loss)

        if (epoch + 1) % config.eval_period and epoch != config.epochs - 1:
            continue
        candidate = Classifier(theta.copy(), variant, encoder.normalization, grid, model.digest,
                               side)
        rate = simulated_validation_success(candidate, model, validation_records, runner)
        report.evaluations.append((epoch, rate))
        logger.info('epoch %d: loss %.5f, validation success %.3f', epoch, loss, rate)
        if best is None or rate > report.selected_rate:
            best = candidate
            report.selected_epoch = epoch
            report.selected_rate = rate

    report.wall_clock = time.perf_counter() - started
    return best, report
