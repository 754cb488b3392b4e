# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from dreflex.errors import ConfigError
from dreflex.model import RobotModel
from dreflex.sim import (EpisodeConfig, FixedContact, NoReflex, PosturePhase, Scenario,
                         WorldConfig, run_episode, run_posture_phase)
from dreflex.wbc import ControllerConfig

__all__ = ['GridSpec', 'ContactMap', 'DatasetRecord', 'avoidable_centers', 'is_avoidable',
           'build_contact_map', 'mirror_record']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """
    Wall-frame grid of candidate hand positions. Cells are indexed (i, j)
    with i over y (rows, bottom first) and j over x (columns); the
    row-major index of a cell is i * nx + j.
    """

    x_range: tuple[float, float] = (-0.75, 0.75)
    y_range: tuple[float, float] = (-0.5, 0.75)
    nx: int = 21
    ny: int = 21

    def __post_init__(self):
        if not (self.x_range[0] < self.x_range[1] and self.y_range[0] < self.y_range[1]):
            raise ConfigError('Grid ranges must be ordered')
        if self.nx < 3 or self.ny < 3:
            raise ConfigError('Grid needs at least 3 cells per axis')

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.y_range, self.ny)

    @property
    def symmetric(self) -> bool:
        return bool(np.isclose(self.x_range[0], -self.x_range[1]))

    def cells(self) -> np.ndarray:
        """(size, 2) wall-frame (x, y) of every cell in row-major order"""
        x, y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([x.ravel(), y.ravel()])

    def cell(self, index: int) -> tuple[float, float]:
        i, j = divmod(index, self.nx)
        return float(self.xs[j]), float(self.ys[i])

    def nearest(self, x: float, y: float) -> int:
        """Row-major index of the cell closest to (x, y)"""
        j = int(np.argmin(np.abs(self.xs - x)))
        i = int(np.argmin(np.abs(self.ys - y)))
        return i * self.nx + j

    def to_dict(self):
        return {'x_range': list(self.x_range), 'y_range': list(self.y_range),
                'nx': self.nx, 'ny': self.ny}

    @staticmethod
    def from_dict(d: dict) -> GridSpec:
        return GridSpec(tuple(d.get('x_range', (-0.75, 0.75))),
                        tuple(d.get('y_range', (-0.5, 0.75))),
                        int(d.get('nx', 21)), int(d.get('ny', 21)))


@dataclass(frozen=True, eq=False)
class ContactMap:
    grid: GridSpec
    cells: np.ndarray       # bool (ny, nx)

    def __post_init__(self):
        if self.cells.shape != self.grid.shape:
            raise ValueError(f'Contact map shape {self.cells.shape} does not match grid '
                             f'{self.grid.shape}')

    @property
    def successes(self) -> int:
        return int(self.cells.sum())

    def flipped(self) -> ContactMap:
        return ContactMap(self.grid, self.cells[:, ::-1].copy())


@dataclass(eq=False)
class DatasetRecord:
    scenario: Scenario
    map: ContactMap
    fall_times: np.ndarray                      # (ny, nx), nan where no fall
    diverged: np.ndarray                        # (ny, nx) bool
    no_reflex: dict = field(default_factory=dict)
    discarded: bool = False

    @property
    def id(self) -> int:
        return self.scenario.id

    def to_dict(self):
        return {
            'scenario': self.scenario.to_dict(),
            'grid': self.map.grid.to_dict(),
            'map': self.map.cells.astype(int).tolist(),
            'fall_times': [[None if np.isnan(t) else t for t in row]
                           for row in self.fall_times.tolist()],
            'diverged': self.diverged.astype(int).tolist(),
            'no_reflex': self.no_reflex,
        }

    @staticmethod
    def from_dict(d: dict) -> DatasetRecord:
        grid = GridSpec.from_dict(d['grid'])
        times = np.array([[np.nan if t is None else t for t in row] for row in d['fall_times']],
                         dtype=float)
        return DatasetRecord(Scenario.from_dict(d['scenario']),
                             ContactMap(grid, np.array(d['map'], dtype=bool)), times,
                             np.array(d['diverged'], dtype=bool), d.get('no_reflex', {}))


def avoidable_centers(cmap: ContactMap) -> np.ndarray:
    """(ny, nx) mask of the cells whose full 3x3 in-grid block is successful"""
    c = cmap.cells
    ny, nx = c.shape
    centers = np.zeros((ny, nx), dtype=bool)
    block = np.ones((ny - 2, nx - 2), dtype=bool)
    for di in range(3):
        for dj in range(3):
            block &= c[di:di + ny - 2, dj:dj + nx - 2]
    centers[1:-1, 1:-1] = block
    return centers


def is_avoidable(cmap: ContactMap) -> bool:
    """
    True when some cell and its 8 neighbours, all inside the grid, are
    successful. Edge cells cannot be block centers.
    """
    return bool(avoidable_centers(cmap).any())


def build_contact_map(model: RobotModel, scenario: Scenario, grid: GridSpec,
                      config: EpisodeConfig, world: WorldConfig, controller: ControllerConfig,
                      phase: None | PosturePhase = None) -> DatasetRecord:
    """One episode per grid cell, each from a fresh copy of the posture phase"""
    if phase is None:
        phase = run_posture_phase(model, scenario.offsets(), config, world, controller)

    cells = np.zeros(grid.shape, dtype=bool)
    fall_times = np.full(grid.shape, np.nan)
    diverged = np.zeros(grid.shape, dtype=bool)

    for index, (x, y) in enumerate(grid.cells()):
        i, j = divmod(index, grid.nx)
        result = run_episode(model, scenario, FixedContact(float(x), float(y)), config, world,
                             controller, phase)
        cells[i, j] = result.success
        if result.fall_time is not None:
            fall_times[i, j] = result.fall_time
        diverged[i, j] = result.diverged
        if result.diverged:
            logger.warning('scenario %d cell (%d, %d) diverged', scenario.id, i, j)

    baseline = run_episode(model, scenario, NoReflex(), config, world, controller, phase)

    return DatasetRecord(scenario, ContactMap(grid, cells), fall_times, diverged,
                         {'success': baseline.success, 'fall_time': baseline.fall_time})


def mirror_record(record: DatasetRecord, model: RobotModel) -> DatasetRecord:
    """
    The same situation reflected across the sagittal plane: the other leg
    is damaged, the wall is on the other side and the map is flipped
    horizontally (the wall x axis reverses with the side).
    """
    grid = record.map.grid
    if not grid.symmetric:
        raise ValueError('Mirroring needs a grid symmetric in x')
    return DatasetRecord(record.scenario.mirrored(model), record.map.flipped(),
                         record.fall_times[:, ::-1].copy(), record.diverged[:, ::-1].copy(),
                         dict(record.no_reflex), record.discarded)
