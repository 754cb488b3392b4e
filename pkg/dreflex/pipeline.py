# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from pathlib import Path

from dreflex.config import PipelineConfig
from dreflex.errors import ConfigError
from dreflex.evaluation import (avoidable_records, dataset_summary, delay_sweep, friction_sweep,
                                map_symmetry, mirrored_agreement, replicate_and_test)
from dreflex.learn import (Variants, load_weights, predict_map, save_weights, select_index,
                           split_dataset, train)
from dreflex.model import RobotModel
from dreflex.render import render_contact_map, write_ppm
from dreflex.scenario import (DatasetHeader, LookupRunner, SimulationRunner, generate_dataset,
                              read_dataset, write_dataset)

__all__ = ['STAGES', 'Manifest', 'run_pipeline', 'config_digest']

logger = logging.getLogger(__name__)

STAGES = ('generate', 'train', 'evaluate', 'sweep', 'render')

DATASET = 'dataset.jsonl.gz'
WEIGHTS = 'weights.drfx'


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def config_digest(config: PipelineConfig) -> str:
    text = json.dumps(_jsonable(dataclasses.asdict(config)), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _write_json(path: Path, data):
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_text(json.dumps(data, sort_keys=True, indent=2) + '\n')
    os.replace(tmp, path)


class Manifest:
    """Per-stage status of a run directory, kept in manifest.json"""

    def __init__(self, run_dir: Path, digest: str):
        self.path = run_dir / 'manifest.json'
        self.digest = digest
        self.stages: dict[str, dict] = {}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get('config_digest') != digest:
                raise ConfigError(f'{run_dir} holds a run of another configuration')
            self.stages = data.get('stages', {})

    def done(self, stage: str, run_dir: Path) -> bool:
        entry = self.stages.get(stage, {})
        return (entry.get('status') == 'done' and
                all((run_dir / o).exists() for o in entry.get('outputs', [])))

    def mark(self, stage: str, status: str, outputs: list[str] = (), error: str = ''):
        entry = {'status': status, 'outputs': list(outputs)}
        if error:
            entry['error'] = error
        self.stages[stage] = entry
        _write_json(self.path, {'config_digest': self.digest, 'stages': self.stages})


def _stage_generate(config: PipelineConfig, model: RobotModel, run_dir: Path) -> list[str]:
    logger.info('generating %d situations with master seed %d', config.run.situations,
                config.run.seed)
    records = generate_dataset(model, config.run.situations, config.grid, config.run.seed,
                               config.sampling, config.episode, config.world, config.controller,
                               config.run.workers)
    header = DatasetHeader(config.run.model, model.digest, config.grid, config.episode,
                           config.run.seed, config.sampling.to_dict())
    tmp = run_dir / (DATASET + '.tmp')
    write_dataset(tmp, header, records)
    os.replace(tmp, run_dir / DATASET)

    _, kept = read_dataset(run_dir / DATASET)
    summary = dataset_summary(kept, len(records) - len(kept))
    _write_json(run_dir / 'dataset-summary.json', summary)
    logger.info('%d/%d avoidable scenarios, %.1f%% without any successful cell',
                summary['avoidable'], summary['total'], 100 * summary['zero_success_fraction'])
    return [DATASET, 'dataset-summary.json']


def _runner(config: PipelineConfig, model: RobotModel):
    if config.eval.resimulate:
        return SimulationRunner(model, config.episode, config.world, config.controller,
                                workers=config.run.workers)
    return LookupRunner()


def _splits(config: PipelineConfig, run_dir: Path):
    _, records = read_dataset(run_dir / DATASET)
    return split_dataset(records, config.train.seed, config.train.fractions)


def _stage_train(config: PipelineConfig, model: RobotModel, run_dir: Path) -> list[str]:
    train_set, val_set, _ = _splits(config, run_dir)
    logger.info('training seed %d: %d training, %d validation scenarios', config.train.seed,
                len(train_set), len(val_set))
    classifier, report = train(model, train_set, val_set, config.train,
                               Variants.find_by_name(config.run.variant), config.grid,
                               _runner(config, model), config.sampling.distance,
                               config.sampling.orientation, config.sampling.side)
    tmp = run_dir / (WEIGHTS + '.tmp')
    save_weights(tmp, classifier)
    os.replace(tmp, run_dir / WEIGHTS)
    _write_json(run_dir / 'train-report.json', report.to_dict())
    return [WEIGHTS, 'train-report.json']


def _stage_evaluate(config: PipelineConfig, model: RobotModel, run_dir: Path) -> list[str]:
    _, records = read_dataset(run_dir / DATASET)
    report = replicate_and_test(model, records, config.grid, list(config.eval.policies),
                                config.eval.replications, config.train, _runner(config, model),
                                config.sampling.distance, config.sampling.orientation,
                                config.sampling.side)
    out = report.to_dict()
    _, _, test_set = _splits(config, run_dir)
    classifier = load_weights(run_dir / WEIGHTS)
    out['mirrored_agreement'] = out['map_symmetry'] = None
    if config.eval.mirror_situations:
        subset = test_set[:config.eval.mirror_situations]
        simulated = SimulationRunner(model, config.episode, config.world, config.controller,
                                     workers=config.run.workers)
        out['mirrored_agreement'] = mirrored_agreement(classifier, model, subset, simulated)
        out['map_symmetry'] = map_symmetry(model, subset, simulated)
    _write_json(run_dir / 'eval-report.json', out)
    (run_dir / 'eval-report.txt').write_text(report.format_table() + '\n')
    logger.info('evaluation:\n%s', report.format_table())
    return ['eval-report.json', 'eval-report.txt']


def _stage_sweep(config: PipelineConfig, model: RobotModel, run_dir: Path) -> list[str]:
    _, _, test_set = _splits(config, run_dir)
    classifier = load_weights(run_dir / WEIGHTS)
    if config.eval.sweep_situations:
        test_set = test_set[:config.eval.sweep_situations]
    workers = config.run.workers

    friction = friction_sweep(classifier, model, test_set, list(config.eval.frictions),
                              config.episode, config.world, config.controller, workers)
    delay, rho = delay_sweep(classifier, model, avoidable_records(test_set),
                             list(config.eval.delays), config.episode, config.world,
                             config.controller, workers)
    _write_json(run_dir / 'sweeps.json', {
        'friction': [p.to_dict() for p in friction],
        'delay': [p.to_dict() for p in delay],
        'delay_spearman_rho': rho,
    })
    return ['sweeps.json']


def _stage_render(config: PipelineConfig, model: RobotModel, run_dir: Path) -> list[str]:
    _, _, test_set = _splits(config, run_dir)
    classifier = load_weights(run_dir / WEIGHTS)
    maps_dir = run_dir / 'maps'
    maps_dir.mkdir(exist_ok=True)
    outputs = []
    for record in test_set[:config.eval.rendered_maps]:
        sc = record.scenario
        conf = predict_map(classifier, model, sc.posture, sc.wall.distance, sc.wall.orientation,
                           record.map.grid, sc.velocity, sc.damage)
        selected = divmod(select_index(conf), record.map.grid.nx)
        name = f'maps/scenario-{sc.id:05}.ppm'
        write_ppm(run_dir / name, render_contact_map(record.map.cells, conf, selected))
        outputs.append(name)
    return outputs


_STAGE_FUNCS = {
    'generate': _stage_generate,
    'train': _stage_train,
    'evaluate': _stage_evaluate,
    'sweep': _stage_sweep,
    'render': _stage_render,
}


def run_pipeline(config: PipelineConfig, run_dir: str | Path,
                 stages: tuple[str, ...] = STAGES) -> Path:
    """
    Run the stages in order in run_dir. Stages the manifest records as done
    (with their outputs present) are skipped; a failing stage is recorded as
    failed and its exception propagates.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(run_dir, config_digest(config))
    model = config.run.load_model()

    for stage in stages:
        if manifest.done(stage, run_dir):
            logger.info('stage %s already done', stage)
            continue
        logger.info('stage %s', stage)
        try:
            outputs = _STAGE_FUNCS[stage](config, model, run_dir)
        except Exception as e:
            manifest.mark(stage, 'failed', error=f'{type(e).__name__}: {e}')
            raise
        manifest.mark(stage, 'done', outputs)

    return run_dir
