# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from dreflex.errors import ConfigError, ModelError
from dreflex.evaluation import POLICY_TAGS
from dreflex.learn import TrainConfig, Variants
from dreflex.model import RobotModel, load_builtin_model, load_robot_model
from dreflex.scenario import GridSpec, SamplingConfig
from dreflex.sim import EpisodeConfig, WorldConfig
from dreflex.wbc import ControllerConfig

__all__ = ['RunConfig', 'EvalConfig', 'PipelineConfig', 'from_table', 'load_config',
           'load_preset', 'PRESETS']

PRESETS = ('desk', 'full')


def _convert(value):
    if isinstance(value, list):
        return tuple(_convert(v) for v in value)
    if isinstance(value, dict):
        return {k: _convert(v) for k, v in value.items()}
    return value


def from_table(cls, table: dict, name: str):
    """Build a config dataclass from a TOML table, rejecting unknown keys"""
    if not isinstance(table, dict):
        raise ConfigError(f'[{name}] must be a table')
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f'Unknown keys in [{name}]: {", ".join(unknown)}')
    try:
        return cls(**{k: _convert(v) for k, v in table.items()})
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f'[{name}]: {e}') from None


@dataclass(frozen=True)
class RunConfig:
    # built-in model name or path to a .robot.toml document
    model: str = 'humanoid'
    situations: int = 200
    seed: int = 0
    workers: int = 1
    variant: str = 'd-reflex'

    def __post_init__(self):
        if self.situations < 1:
            raise ConfigError('A run needs at least one situation')
        if self.workers < 1:
            raise ConfigError('Worker count must be positive')
        try:
            Variants.find_by_name(self.variant)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def load_model(self) -> RobotModel:
        try:
            if self.model.endswith('.toml'):
                return load_robot_model(self.model)
            return load_builtin_model(self.model)
        except FileNotFoundError:
            raise ConfigError(f'Robot model "{self.model}" not found') from None
        except ModelError as e:
            raise ConfigError(f'Robot model "{self.model}": {e}') from None


@dataclass(frozen=True)
class EvalConfig:
    replications: int = 20
    policies: tuple[str, ...] = ('d-reflex', 'both-ablation', 'no-reflex', 'random-reflex')
    frictions: tuple[float, ...] = (1.0, 0.8, 0.6, 0.4, 0.2)
    delays: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.5)
    # test scenarios re-simulated by the sweeps, 0 for all
    sweep_situations: int = 0
    rendered_maps: int = 4
    # test scenarios whose mirror image is re-simulated, 0 to skip the check
    mirror_situations: int = 0
    # evaluate by re-simulation instead of reading the recorded maps
    resimulate: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError('At least one replication is needed')
        for tag in self.policies:
            if tag not in POLICY_TAGS:
                raise ConfigError(f'Unknown policy "{tag}"')
        if any(not mu >= 0 for mu in self.frictions):
            raise ConfigError('Sweep frictions must be non-negative')
        if any(not d >= 0 for d in self.delays):
            raise ConfigError('Sweep delays must be non-negative')
        if min(self.sweep_situations, self.rendered_maps, self.mirror_situations) < 0:
            raise ConfigError('Counts must be non-negative')


_TABLES = {
    'run': RunConfig,
    'world': WorldConfig,
    'controller': ControllerConfig,
    'episode': EpisodeConfig,
    'grid': GridSpec,
    'sampling': SamplingConfig,
    'train': TrainConfig,
    'eval': EvalConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    run: RunConfig = field(default_factory=RunConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.episode.dt != self.world.dt:
            raise ConfigError('[episode] and [world] time steps differ')
        for delay in self.eval.delays:
            if delay >= self.episode.duration - self.episode.posture_duration:
                raise ConfigError(f'Sweep delay {delay} s falls outside the episode')

    @staticmethod
    def from_dict(doc: dict) -> PipelineConfig:
        unknown = sorted(set(doc) - set(_TABLES))
        if unknown:
            raise ConfigError(f'Unknown tables: {", ".join(unknown)}')
        return PipelineConfig(**{name: from_table(cls, doc[name], name)
                                 for name, cls in _TABLES.items() if name in doc})


def load_config(path: str | Path) -> PipelineConfig:
    try:
        with open(path, 'rb') as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f'Configuration file "{path}" not found') from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f'{path}: {e}') from None
    return PipelineConfig.from_dict(doc)


def load_preset(name: str) -> PipelineConfig:
    if name not in PRESETS:
        raise ConfigError(f'Unknown preset "{name}"')
    text = resources.files('dreflex').joinpath('presets', f'{name}.toml').read_text()
    return PipelineConfig.from_dict(tomllib.loads(text))
