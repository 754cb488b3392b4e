#!/usr/bin/python3

import argparse

from dreflex.learn import FeatureEncoder, Variants
from dreflex.model import load_builtin_model
from dreflex.scenario import GridSpec


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument('model', nargs='?', default='humanoid')
    args = parser.parse_args()

    model = load_builtin_model(args.model)
    grid = GridSpec()

    for v in Variants.get_variants():
        groups = [name for name, on in (('posture', v.posture), ('velocity', v.velocity),
                                        ('wall', v.wall), ('damage', v.damage)) if on]
        n = FeatureEncoder(model, v, grid).n_features
        print(f'{v.name:18} tag:{v.tag} inputs:{n:3} {groups}')


if __name__ == '__main__':
    main()
