# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

__all__ = ['ModelError', 'ConfigError', 'DamageError', 'WeightsError', 'TrainingError',
           'WallRejected']


class ModelError(ValueError):
    """Robot document rejected"""


class ConfigError(ValueError):
    """Run configuration rejected before any computation"""


class DamageError(ValueError):
    pass


class WeightsError(ValueError):
    """Unreadable weights file, or weights used with an incompatible setup"""


class TrainingError(RuntimeError):
    pass


class WallRejected(RuntimeError):
    """No wall configuration clears the recorded posture-phase motion"""
