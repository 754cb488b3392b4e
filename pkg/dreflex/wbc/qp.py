# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from qpsolvers import Problem, solve_problem

from dreflex.model import GRAVITY, Kinematics, RobotModel, mass_matrix, nonlinear_effects, \
    point_jacobian

from .tasks import ContactConstraint, JacobianHistory, JointBounds, Task, TaskKind, \
    contact_rows, task_rows

__all__ = ['QPProblem', 'QPStatus', 'QPSolution', 'assemble_qp', 'solve_qp',
           'friction_pyramid']

logger = logging.getLogger(__name__)

# solvers accepting a starting point through qpsolvers
_WARM_START = {'osqp', 'proxqp', 'qpalm', 'highs', 'piqp'}


@dataclass
class QPProblem:
    """
    min 1/2 x^T H x + g^T x  s.t.  A_eq x = b_eq, G x <= h, with
    x = (ddq, tau, lambda).
    """

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    G: np.ndarray
    h: np.ndarray
    n_v: int
    n_a: int
    n_lambda: int
    forces: dict[str, slice] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.n_v + self.n_a + self.n_lambda


class QPStatus(Enum):
    OPTIMAL = 'optimal'
    INACCURATE = 'inaccurate'
    INFEASIBLE = 'infeasible'


@dataclass
class QPSolution:
    status: QPStatus
    x: None | np.ndarray
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    iterations: int = 0
    n_v: int = 0
    n_a: int = 0

    @property
    def ok(self) -> bool:
        return self.status == QPStatus.OPTIMAL

    @property
    def ddq(self) -> np.ndarray:
        return self.x[:self.n_v]

    @property
    def tau(self) -> np.ndarray:
        return self.x[self.n_v:self.n_v + self.n_a]

    @property
    def forces(self) -> np.ndarray:
        return self.x[self.n_v + self.n_a:]


def friction_pyramid(normal: np.ndarray, mu: float) -> np.ndarray:
    """Rows F with F f <= 0 for a force f inside the 4-facet pyramid"""
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(normal, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return np.array([
        -normal,
        t1 - mu * normal,
        -t1 - mu * normal,
        t2 - mu * normal,
        -t2 - mu * normal,
    ])


def assemble_qp(model: RobotModel, kin: Kinematics, q: np.ndarray, dq: np.ndarray,
                tasks: list[Task], contacts: list[ContactConstraint], bounds: JointBounds,
                dt: float, contact_gains: tuple[float, float] = (100.0, 20.0),
                regularization: float = 1e-6, gravity: np.ndarray = GRAVITY,
                history: None | JacobianHistory = None) -> QPProblem:
    """
    Whole-body QP of one control tick:

        min  sum_k w_k ||A_k ddq - b_k||^2
        s.t. M ddq + F = S^T tau + J_c^T lambda
             J_contact ddq = b_contact
             lambda in friction pyramids, tau and ddq within bounds
    """
    if sum(1 for t in tasks if t.kind == TaskKind.POSTURE) != 1:
        raise ValueError('Exactly one posture task is required')
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    if q.shape != (model.n_q,) or dq.shape != (model.n_v,):
        raise ValueError('State dimensions do not match the controller model')

    n_v, n_a = model.n_v, model.n_a
    n_lambda = 3 * sum(len(c.points) for c in contacts)
    n = n_v + n_a + n_lambda

    hess = np.zeros((n, n))
    grad = np.zeros(n)
    for task in tasks:
        jac, b = task_rows(task, model, kin, q, dq, history, dt)
        hess[:n_v, :n_v] += 2.0 * task.weight * jac.T @ jac
        grad[:n_v] -= 2.0 * task.weight * jac.T @ b
    hess += regularization * np.eye(n)

    # dynamics
    mass = mass_matrix(model, q, kin)
    bias = nonlinear_effects(model, q, dq, gravity, None, kin)
    dyn = np.zeros((n_v, n))
    dyn[:, :n_v] = mass
    dyn[model.actuated_v, n_v + np.arange(n_a)] = -1.0

    eq_rows = [dyn]
    eq_rhs = [-bias]
    ineq_rows = []
    ineq_rhs = []
    forces: dict[str, slice] = {}

    col = n_v + n_a
    for contact in contacts:
        jac, b = contact_rows(contact, model, kin, q, dq, *contact_gains, history, dt)
        row = np.zeros((jac.shape[0], n))
        row[:, :n_v] = jac
        eq_rows.append(row)
        eq_rhs.append(b)

        forces[contact.name] = slice(col, col + 3 * len(contact.points))
        pyramid = friction_pyramid(contact.normal, contact.friction)
        for point in contact.points:
            pj = point_jacobian(model, q, contact.link, point, kin)[:3]
            dyn[:, col:col + 3] = -pj.T
            cone = np.zeros((len(pyramid), n))
            cone[:, col:col + 3] = pyramid
            ineq_rows.append(cone)
            ineq_rhs.append(np.zeros(len(pyramid)))
            col += 3

    # torque limits
    effort = model.effort_limit[model.actuated_joints]
    eye = np.zeros((n_a, n))
    eye[:, n_v:n_v + n_a] = np.eye(n_a)
    ineq_rows += [eye, -eye]
    ineq_rhs += [effort, effort]

    # joint acceleration bounds from position, velocity and acceleration limits
    lo, hi = bounds.ddq_limits(model, q, dq, dt)
    nb = model.base_dofs
    sel = np.zeros((model.n_joints, n))
    sel[np.arange(model.n_joints), nb + np.arange(model.n_joints)] = 1.0
    ineq_rows += [sel, -sel]
    ineq_rhs += [hi, -lo]

    return QPProblem(hess, grad, np.vstack(eq_rows), np.concatenate(eq_rhs),
                     np.vstack(ineq_rows), np.concatenate(ineq_rhs), n_v, n_a, n_lambda, forces)


def solve_qp(problem: QPProblem, solver: str = 'quadprog', tolerance: float = 1e-6,
             max_iterations: int = 1000, initvals: None | np.ndarray = None) -> QPSolution:
    """
    Solve a QPProblem. Infeasibility is reported through the status, and
    a solution whose KKT residuals exceed the tolerance is flagged
    INACCURATE and returned as a best effort.

    max_iterations and initvals reach the iterative solvers only; quadprog
    is a dual active-set method that runs to completion and ignores both.
    """
    if max_iterations < 1:
        raise ValueError('max_iterations must be at least 1')
    qp = Problem(problem.H, problem.g, problem.G, problem.h, problem.A_eq, problem.b_eq)
    options = {}
    if solver in _WARM_START:
        options = {'initvals': initvals, 'max_iter': max_iterations,
                   'eps_abs': tolerance, 'eps_rel': tolerance}

    try:
        result = solve_problem(qp, solver=solver, **options)
    except ValueError as e:
        logger.debug('QP solver failed: %s', e)
        return QPSolution(QPStatus.INFEASIBLE, None, n_v=problem.n_v, n_a=problem.n_a)

    if not result.found or result.x is None:
        return QPSolution(QPStatus.INFEASIBLE, None, n_v=problem.n_v, n_a=problem.n_a)

    x = result.x
    primal = 0.0
    if len(problem.b_eq):
        primal = float(np.abs(problem.A_eq @ x - problem.b_eq).max())
    if len(problem.h):
        primal = max(primal, float(np.maximum(problem.G @ x - problem.h, 0.0).max()))

    stationarity = problem.H @ x + problem.g
    if result.y is not None and len(problem.b_eq):
        stationarity += problem.A_eq.T @ result.y
    if result.z is not None and len(problem.h):
        stationarity += problem.G.T @ result.z
    dual = float(np.abs(stationarity).max())

    iterations = np.ravel(result.extras.get('iterations', [0]))
    status = QPStatus.OPTIMAL if primal <= tolerance and dual <= tolerance \
        else QPStatus.INACCURATE

    return QPSolution(status, x, primal, dual, int(iterations[0]) if len(iterations) else 0,
                      problem.n_v, problem.n_a)
