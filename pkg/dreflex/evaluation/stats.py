# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from dreflex.learn import TrainConfig, Variants, split_dataset, train
from dreflex.model import RobotModel
from dreflex.scenario import DatasetRecord, EpisodeRunner, GridSpec, LookupRunner

from .avoidability import avoidable_records, both_ablation_cell
from .policies import LEARNED_TAGS, PolicyVariant, evaluate_policy

__all__ = ['welch_p_value', 'bonferroni', 'summarize', 'EvalReport', 'replicate_and_test']

logger = logging.getLogger(__name__)


def welch_p_value(a: list[float], b: list[float]) -> float:
    """Two-sided unequal-variance t-test; undefined tests count as p = 1"""
    if len(a) < 2 or len(b) < 2:
        return 1.0
    p = stats.ttest_ind(a, b, equal_var=False).pvalue
    return 1.0 if np.isnan(p) else float(p)


def bonferroni(p_values: dict[str, float]) -> dict[str, float]:
    m = len(p_values)
    return {k: min(1.0, p * m) for k, p in p_values.items()}


def summarize(rates: list[float]) -> dict[str, float]:
    r = np.asarray(rates, dtype=float)
    r = r[np.isfinite(r)]
    if not len(r):
        return {'median': float('nan'), 'q1': float('nan'), 'q3': float('nan'),
                'mean': float('nan'), 'n': 0}
    q1, med, q3 = np.percentile(r, [25, 50, 75])
    return {'median': float(med), 'q1': float(q1), 'q3': float(q3), 'mean': float(r.mean()),
            'n': len(r)}


@dataclass
class EvalReport:
    rates: dict[str, list[float]] = field(default_factory=dict)
    counts: dict[str, list[int]] = field(default_factory=dict)
    p_values: dict[str, float] = field(default_factory=dict)

    @property
    def summary(self) -> dict[str, dict[str, float]]:
        return {tag: summarize(r) for tag, r in self.rates.items()}

    def test_pairs(self):
        """Bonferroni-corrected Welch tests between every pair of policies"""
        raw = {f'{a} vs {b}': welch_p_value(self.rates[a], self.rates[b])
               for a, b in itertools.combinations(self.rates, 2)}
        self.p_values = bonferroni(raw)

    def to_dict(self):
        return {'rates': self.rates, 'counts': self.counts, 'summary': self.summary,
                'p_values': self.p_values}

    def format_table(self) -> str:
        lines = [f'{"policy":18} {"median":>7} {"q1":>7} {"q3":>7} {"n":>3}']
        for tag, s in self.summary.items():
            lines.append(f'{tag:18} {s["median"]:7.3f} {s["q1"]:7.3f} {s["q3"]:7.3f} {s["n"]:3}')
        for pair, p in self.p_values.items():
            lines.append(f'p({pair}) = {p:.3g}')
        return '\n'.join(lines)


def replicate_and_test(model: RobotModel, records: list[DatasetRecord], grid: GridSpec,
                       tags: list[str], n_replications: int, config: TrainConfig,
                       runner: None | EpisodeRunner = None,
                       distance: tuple[float, float] = (0.4, 1.0),
                       orientation: tuple[float, float] = (-1.0, 1.0),
                       side: str = 'right') -> EvalReport:
    """
    Per replication: a fresh split and fresh training of every learned
    policy, then one episode per avoidable test scenario for every policy.
    """
    runner = runner or LookupRunner()
    report = EvalReport({tag: [] for tag in tags}, {'test': [], 'avoidable': []})

    for rep in range(n_replications):
        seed = config.seed + rep
        train_set, val_set, test_set = split_dataset(records, seed, config.fractions)
        test = avoidable_records(test_set)
        report.counts['test'].append(len(test_set))
        report.counts['avoidable'].append(len(test))
        logger.info('replication %d: %d/%d avoidable test scenarios', rep, len(test),
                    len(test_set))

        for tag in tags:
            if tag in LEARNED_TAGS:
                classifier, _ = train(model, train_set, val_set, replace(config, seed=seed),
                                      Variants.find_by_name(tag), grid, runner, distance,
                                      orientation, side)
                policy = PolicyVariant(tag, classifier)
            elif tag == 'both-ablation':
                policy = PolicyVariant(tag, cell=both_ablation_cell(train_set))
            else:
                policy = PolicyVariant(tag, seed=seed)
            report.rates[tag].append(evaluate_policy(policy, model, test, runner))

    report.test_pairs()
    return report
