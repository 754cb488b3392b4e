#!/usr/bin/python3

# pylint: skip-file

import argparse
import sys

from PyQt6 import QtWidgets

from dreflex.learn import load_weights, predict_map, select_index
from dreflex.render import render_contact_map
from dreflex.render.qt import show_image
from dreflex.scenario import read_dataset
from dreflex.model import load_builtin_model


def main():
    parser = argparse.ArgumentParser(description='Show contact maps of a dataset')
    parser.add_argument('dataset')
    parser.add_argument('scenarios', type=int, nargs='*', help='scenario ids, default all')
    parser.add_argument('-w', '--weights', help='show the predicted map as well')
    parser.add_argument('-s', '--scale', type=int, default=16)
    args = parser.parse_args()

    header, records = read_dataset(args.dataset)
    if args.scenarios:
        records = [r for r in records if r.id in args.scenarios]
    if not records:
        print('No scenarios to show')
        return -1

    model = load_builtin_model(header.model)
    classifier = load_weights(args.weights) if args.weights else None

    qapp = QtWidgets.QApplication(sys.argv)

    labels = []
    for r in records:
        sc = r.scenario
        conf = None
        selected = None
        if classifier:
            conf = predict_map(classifier, model, sc.posture, sc.wall.distance,
                               sc.wall.orientation, r.map.grid, sc.velocity, sc.damage)
            selected = divmod(select_index(conf), r.map.grid.nx)
        img = render_contact_map(r.map.cells, conf, selected, args.scale)
        labels.append(show_image(img, f'scenario {sc.id}: {sc.damage}'))

    qapp.exec()
    return 0


if __name__ == '__main__':
    sys.exit(main())
