# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dreflex.config import PRESETS, PipelineConfig, load_config, load_preset
from dreflex.errors import (ConfigError, DamageError, ModelError, TrainingError, WallRejected,
                            WeightsError)
from dreflex.evaluation import (LEARNED_TAGS, POLICY_TAGS, PolicyVariant, avoidable_records,
                                both_ablation_cell, dataset_summary, delay_sweep,
                                evaluate_policy, friction_sweep, replicate_and_test)
from dreflex.learn import (Variants, load_weights, predict_map, save_weights, select_index,
                           split_dataset, train)
from dreflex.model import (load_builtin_model, load_robot_model, model_summary,
                           standing_configuration)
from dreflex.pipeline import STAGES, run_pipeline
from dreflex.render import render_contact_map, write_ppm
from dreflex.scenario import (DatasetHeader, GridSpec, LookupRunner, SimulationRunner,
                              generate_dataset, read_dataset, write_dataset)
from dreflex.sim import DamageSpec

__all__ = ['main']

logger = logging.getLogger('dreflex')

_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _load_config(args) -> PipelineConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = load_preset(args.preset)

    run = config.run
    train_cfg = config.train
    if args.seed is not None:
        run = dataclasses.replace(run, seed=args.seed)
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    if args.workers is not None:
        run = dataclasses.replace(run, workers=args.workers)
    return dataclasses.replace(config, run=run, train=train_cfg)


def _load_model(name: str):
    if name.endswith('.toml'):
        return load_robot_model(name)
    return load_builtin_model(name)


def _write_output(args, data: dict, default: str):
    path = Path(args.out or default)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + '\n')
    print(f'wrote {path}')


def _dataset(args):
    header, records = read_dataset(args.dataset)
    model = _load_model(header.model)
    if model.digest != header.model_digest:
        raise ModelError(f'Dataset was generated with another version of "{header.model}"')
    return header, records, model


def _runner(args, config, model, header):
    if getattr(args, 'resimulate', False) or config.eval.resimulate:
        return SimulationRunner(model, header.episode, config.world, config.controller,
                                workers=config.run.workers)
    return LookupRunner()


def cmd_validate_model(args, config):
    model = _load_model(args.model)
    s = model_summary(model)
    print(f'{s["name"]}: {s["links"]} links, {s["joints"]} joints ({s["actuated"]} actuated), '
          f'nq={s["nq"]} nv={s["nv"]}{" floating base" if s["floating"] else ""}')
    print(f'mass={s["mass"]:.2f} kg height={s["height"]:.3f} m com_height={s["com_height"]:.3f} m')
    return 0


def _resolution(grid: GridSpec, text: None | str) -> GridSpec:
    """The grid with the "nx,ny" resolution given on the command line"""
    if not text:
        return grid
    try:
        nx, ny = (int(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(f'Invalid grid resolution "{text}"') from None
    return dataclasses.replace(grid, nx=nx, ny=ny)


def cmd_generate(args, config):
    model = config.run.load_model()
    n = config.run.situations if args.situations is None else args.situations
    grid = _resolution(config.grid, args.grid)
    logger.info('master seed %d, %d situations, %dx%d grid', config.run.seed, n, grid.nx, grid.ny)
    records = generate_dataset(model, n, grid, config.run.seed, config.sampling,
                               config.episode, config.world, config.controller, config.run.workers)
    header = DatasetHeader(config.run.model, model.digest, grid, config.episode,
                           config.run.seed, config.sampling.to_dict())
    out = Path(args.out or 'dataset.jsonl.gz')
    write_dataset(out, header, records)

    _, kept = read_dataset(out)
    s = dataset_summary(kept, len(records) - len(kept))
    print(f'wrote {out}: {s["total"]} scenarios ({s["discarded"]} discarded), '
          f'{s["avoidable"]} avoidable, {100 * s["zero_success_fraction"]:.1f}% without '
          f'a successful cell')
    return 0


def _sampling_ranges(header):
    s = header.sampling
    return (tuple(s.get('distance', (0.4, 1.0))), tuple(s.get('orientation', (-1.0, 1.0))),
            s.get('side', 'right'))


def cmd_train(args, config):
    header, records, model = _dataset(args)
    variant = Variants.find_by_name(args.variant or config.run.variant)
    train_set, val_set, _ = split_dataset(records, config.train.seed, config.train.fractions)
    distance, orientation, side = _sampling_ranges(header)
    classifier, report = train(model, train_set, val_set, config.train, variant, header.grid,
                               _runner(args, config, model, header), distance, orientation,
                               side)
    out = Path(args.out or 'weights.drfx')
    save_weights(out, classifier)
    print(f'wrote {out}: epoch {report.selected_epoch} selected, validation success '
          f'{report.selected_rate:.3f} ({report.wall_clock:.1f} s)')
    return 0


def _read_q(model, path: str) -> np.ndarray:
    values = np.loadtxt(path, dtype=float).ravel()
    if len(values) == model.n_q:
        return values
    if len(values) == model.n_a:
        q = standing_configuration(model)
        q[model.actuated_q] = values
        return q
    raise ConfigError(f'{path}: expected {model.n_q} or {model.n_a} values, got {len(values)}')


def cmd_infer(args, config):
    classifier = load_weights(args.weights)
    model = config.run.load_model()
    q = _read_q(model, args.q_file)
    dq = None if args.dq_file is None else np.loadtxt(args.dq_file, dtype=float).ravel()
    damage = None if args.damage is None else DamageSpec.from_dict(json.loads(args.damage))

    grid = _resolution(classifier.grid, args.grid)

    conf = predict_map(classifier, model, q, args.d, args.alpha, grid, dq, damage)
    index = select_index(conf)
    x, y = grid.cell(index)
    print(f'{x:.4f} {y:.4f}')
    if args.image:
        write_ppm(args.image, render_contact_map(None, conf, divmod(index, grid.nx)))
    return 0


def _policy(args, tag, train_set):
    if tag in LEARNED_TAGS:
        if not args.weights:
            raise ConfigError(f'Policy "{tag}" needs --weights')
        return PolicyVariant(tag, load_weights(args.weights))
    if tag == 'both-ablation':
        return PolicyVariant(tag, cell=both_ablation_cell(train_set))
    return PolicyVariant(tag, seed=args.seed or 0)


def cmd_eval(args, config):
    header, records, model = _dataset(args)
    train_set, _, test_set = split_dataset(records, config.train.seed, config.train.fractions)
    test = avoidable_records(test_set)
    policy = _policy(args, args.variant, train_set)
    rate = evaluate_policy(policy, model, test, _runner(args, config, model, header))
    print(f'{args.variant}: {rate:.3f} on {len(test)}/{len(test_set)} avoidable test scenarios')
    _write_output(args, {'policy': args.variant, 'success_rate': rate, 'avoidable': len(test),
                         'test': len(test_set), 'ids': [r.id for r in test]}, 'eval.json')
    return 0


def _test_subset(config, records):
    _, _, test_set = split_dataset(records, config.train.seed, config.train.fractions)
    if config.eval.sweep_situations:
        test_set = test_set[:config.eval.sweep_situations]
    return test_set


def cmd_sweep_friction(args, config):
    header, records, model = _dataset(args)
    classifier = load_weights(args.weights)
    frictions = args.frictions or list(config.eval.frictions)
    points = friction_sweep(classifier, model, _test_subset(config, records), frictions,
                            header.episode, config.world, config.controller, config.run.workers)
    for p in points:
        print(f'mu={p.value:.2f} avoidable={p.avoidable_fraction:.3f} '
              f'success={p.success_rate:.3f}')
    _write_output(args, {'friction': [p.to_dict() for p in points]}, 'sweep-friction.json')
    return 0


def cmd_sweep_delay(args, config):
    header, records, model = _dataset(args)
    classifier = load_weights(args.weights)
    delays = args.delays or list(config.eval.delays)
    test = avoidable_records(_test_subset(config, records))
    points, rho = delay_sweep(classifier, model, test, delays, header.episode, config.world,
                              config.controller, config.run.workers)
    for p in points:
        print(f'delay={p.value:.2f} success={p.success_rate:.3f}')
    print(f'spearman rho={rho:.3f}')
    _write_output(args, {'delay': [p.to_dict() for p in points], 'spearman_rho': rho},
                  'sweep-delay.json')
    return 0


def cmd_stats(args, config):
    header, records, model = _dataset(args)
    distance, orientation, side = _sampling_ranges(header)
    policies = args.policies or list(config.eval.policies)
    report = replicate_and_test(model, records, header.grid, policies,
                                args.replications or config.eval.replications, config.train,
                                _runner(args, config, model, header), distance, orientation,
                                side)
    print(report.format_table())
    _write_output(args, report.to_dict(), 'stats.json')
    return 0


def cmd_plot_map(args, config):
    header, records, model = _dataset(args)
    try:
        record = next(r for r in records if r.id == args.scenario)
    except StopIteration:
        raise ConfigError(f'Scenario {args.scenario} is not in the dataset') from None

    conf = None
    selected = None
    if args.weights:
        classifier = load_weights(args.weights)
        sc = record.scenario
        conf = predict_map(classifier, model, sc.posture, sc.wall.distance, sc.wall.orientation,
                           record.map.grid, sc.velocity, sc.damage)
        selected = divmod(select_index(conf), record.map.grid.nx)
    out = Path(args.out or f'scenario-{args.scenario:05}.ppm')
    write_ppm(out, render_contact_map(record.map.cells, conf, selected, args.scale))
    print(f'wrote {out}')
    return 0


def cmd_pipeline(args, config):
    stages = tuple(args.stages) if args.stages else STAGES
    out = run_pipeline(config, args.out or 'run', stages)
    print(f'run directory {out}')
    return 0


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='master seed (overrides the configuration)')
    common.add_argument('--workers', type=int, help='worker processes')
    common.add_argument('--out', help='output file or directory')
    common.add_argument('-v', '--verbose', action='count', default=0)
    src = common.add_mutually_exclusive_group()
    src.add_argument('--config', help='run configuration file')
    src.add_argument('--preset', choices=PRESETS, default='desk')

    parser = argparse.ArgumentParser(prog='d-reflex')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate-model', parents=[common], help='print a robot model summary')
    p.add_argument('model', help='built-in model name or .robot.toml path')
    p.set_defaults(func=cmd_validate_model)

    p = sub.add_parser('generate', parents=[common], help='generate the contact-map dataset')
    p.add_argument('-n', '--n', '--situations', dest='situations', type=int,
                   help='number of situations')
    p.add_argument('--grid', help='contact grid resolution "nx,ny"')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('train', parents=[common], help='train a classifier')
    p.add_argument('--dataset', required=True)
    p.add_argument('--variant', choices=[v.name for v in Variants.get_variants()])
    p.add_argument('--resimulate', action='store_true', help='validate by re-simulation')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('infer', parents=[common], help='choose a contact for one situation')
    p.add_argument('--weights', required=True)
    p.add_argument('--q-file', required=True, help='text file of q, or of actuated angles')
    p.add_argument('--dq-file')
    p.add_argument('--d', type=float, required=True, help='wall distance (m)')
    p.add_argument('--alpha', type=float, required=True, help='wall orientation (rad)')
    p.add_argument('--damage', help='damage as JSON, {"side": ..., "joints": {...}}')
    p.add_argument('--grid', help='query resolution "nx,ny"')
    p.add_argument('--image', help='write the confidence map to this PPM file')
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser('eval', parents=[common], help='evaluate one policy on the test split')
    p.add_argument('--variant', choices=POLICY_TAGS, required=True)
    p.add_argument('--weights')
    p.add_argument('--dataset', required=True)
    p.add_argument('--resimulate', action='store_true')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('sweep-friction', parents=[common], help='success over wall frictions')
    p.add_argument('--weights', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--frictions', type=float, nargs='+')
    p.set_defaults(func=cmd_sweep_friction)

    p = sub.add_parser('sweep-delay', parents=[common], help='success over reflex delays')
    p.add_argument('--weights', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--delays', type=float, nargs='+')
    p.set_defaults(func=cmd_sweep_delay)

    p = sub.add_parser('stats', parents=[common], help='replicated training and t-tests')
    p.add_argument('--dataset', required=True)
    p.add_argument('--replications', type=int)
    p.add_argument('--policies', choices=POLICY_TAGS, nargs='+')
    p.add_argument('--resimulate', action='store_true')
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser('plot-map', parents=[common], help='render a contact map')
    p.add_argument('--dataset', required=True)
    p.add_argument('--scenario', type=int, required=True)
    p.add_argument('--weights', help='render the predicted map next to the true one')
    p.add_argument('--scale', type=int, default=16)
    p.set_defaults(func=cmd_plot_map)

    p = sub.add_parser('pipeline', parents=[common], help='run every stage in a run directory')
    p.add_argument('--stages', choices=STAGES, nargs='+')
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: None | list[str] = None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=_LEVELS[min(args.verbose, len(_LEVELS) - 1)],
                        format='%(asctime)s %(name)s %(levelname)s: %(message)s')

    try:
        config = _load_config(args)
        return args.func(args, config)
    except (ConfigError, ModelError, DamageError, WeightsError, TrainingError, WallRejected,
            FileNotFoundError) as e:
        print(f'd-reflex {args.command}: {e}', file=sys.stderr)
        return -1


if __name__ == '__main__':
    sys.exit(main())
