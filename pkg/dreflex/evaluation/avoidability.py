# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import numpy as np

from dreflex.scenario import DatasetRecord, avoidable_centers, is_avoidable

__all__ = ['is_avoidable', 'avoidable_centers', 'avoidable_records', 'both_ablation_cell',
           'oracle_cell', 'dataset_summary']


def avoidable_records(records: list[DatasetRecord]) -> list[DatasetRecord]:
    return [r for r in records if is_avoidable(r.map)]


def both_ablation_cell(records: list[DatasetRecord]) -> tuple[float, float]:
    """
    The single cell with the most successes over the given (training) maps,
    lowest row-major index on ties.
    """
    if not records:
        raise ValueError('No training records to choose a fixed cell from')
    grid = records[0].map.grid
    counts = np.zeros(grid.shape, dtype=int)
    for r in records:
        if r.map.grid != grid:
            raise ValueError('Records use different grids')
        counts += r.map.cells
    return grid.cell(int(np.argmax(counts.ravel())))


def oracle_cell(record: DatasetRecord) -> None | tuple[float, float]:
    """First full 3x3 block center of the true map, in row-major order"""
    centers = avoidable_centers(record.map).ravel()
    if not centers.any():
        return None
    return record.map.grid.cell(int(np.argmax(centers)))


def dataset_summary(records: list[DatasetRecord], discarded: int = 0) -> dict:
    total = len(records)
    avoidable = sum(is_avoidable(r.map) for r in records)
    zero = sum(r.map.successes == 0 for r in records)
    no_reflex = sum(bool(r.no_reflex.get('success')) for r in records)
    return {
        'total': total,
        'discarded': discarded,
        'avoidable': avoidable,
        'avoidable_fraction': avoidable / total if total else float('nan'),
        'zero_success_fraction': zero / total if total else float('nan'),
        'no_reflex_success_fraction': no_reflex / total if total else float('nan'),
    }
