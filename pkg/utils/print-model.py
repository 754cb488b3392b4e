#!/usr/bin/python3

import argparse

from dreflex.model import load_builtin_model, load_robot_model, model_summary


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument('model', help='built-in model name or .robot.toml path')
    parser.add_argument('-j', '--joints', action='store_true', help='list the joints')
    args = parser.parse_args()

    if args.model.endswith('.toml'):
        model = load_robot_model(args.model)
    else:
        model = load_builtin_model(args.model)

    for k, v in model_summary(model).items():
        print(f'{k:12} {v}')

    if args.joints:
        actuated = set(model.actuated)
        for j in model.joints:
            flag = 'A' if j.name in actuated else ' '
            print(f'  {flag} {j.name:18} {j.parent:>12} -> {j.child:12} [{j.lower:6.2f}, {j.upper:6.2f}]')


if __name__ == '__main__':
    main()
