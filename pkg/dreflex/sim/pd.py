# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import numpy as np
import numpy.typing as npt
from scipy.linalg import cho_factor, cho_solve

from dreflex.model import GRAVITY, RobotModel, mass_matrix, nonlinear_effects

__all__ = ['stable_pd', 'explicit_pd']


def stable_pd(model: RobotModel, q: np.ndarray, dq: np.ndarray, q_target: npt.ArrayLike,
              kp: np.ndarray, kd: np.ndarray, dt: float, mass: None | np.ndarray = None,
              bias: None | np.ndarray = None, locked: None | np.ndarray = None) -> np.ndarray:
    """
    Stable-PD joint torques (one per model joint), clamped to the effort limits:

        tau = -kp (q + dq dt - q_target) - kd (dq + ddq dt)

    with ddq the acceleration the torque itself produces, solved through
    (M + kd dt) ddq = -bias + p. bias holds every other generalized force
    (gravity, Coriolis, contacts); it defaults to the contact-free
    nonlinear effects. At the target with dq = 0 the torque reduces to the
    response to bias only, so it is zero without gravity.
    """
    if mass is None:
        mass = mass_matrix(model, q)
    if bias is None:
        bias = nonlinear_effects(model, q, dq, GRAVITY)

    nb = model.base_dofs
    off = model.q_offset
    joints = q[off:]
    rates = dq[nb:]

    p = np.zeros(model.n_v)
    p[nb:] = -kp * (joints + rates * dt - np.asarray(q_target)) - kd * rates

    damping = np.zeros(model.n_v)
    damping[nb:] = kd * dt
    system = mass + np.diag(damping)

    ddq = np.zeros(model.n_v)
    free = np.ones(model.n_v, dtype=bool) if locked is None else ~locked
    ddq[free] = cho_solve(cho_factor(system[np.ix_(free, free)]), (p - bias)[free])

    tau = p[nb:] - kd * dt * ddq[nb:]
    return np.clip(tau, -model.effort_limit, model.effort_limit)


def explicit_pd(model: RobotModel, q: np.ndarray, dq: np.ndarray, q_target: npt.ArrayLike,
                kp: np.ndarray, kd: np.ndarray) -> np.ndarray:
    """Plain PD on the current state, for comparison with stable_pd"""
    off = model.q_offset
    tau = -kp * (q[off:] - np.asarray(q_target)) - kd * dq[model.base_dofs:]
    return np.clip(tau, -model.effort_limit, model.effort_limit)
