# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.transform import Rotation

from .robot import RobotModel

__all__ = ['GRAVITY', 'Kinematics', 'skew', 'forward_kinematics', 'link_velocities',
           'point_jacobian', 'com', 'com_jacobian', 'spatial_inertias', 'mass_matrix',
           'inverse_dynamics', 'nonlinear_effects', 'forward_dynamics', 'actuation',
           'point_wrench', 'integrate', 'difference', 'kinetic_energy',
           'potential_energy', 'standing_configuration', 'model_summary']

GRAVITY = np.array([0.0, 0.0, -9.81])

# Spatial vectors are 6-vectors (angular; linear) expressed in the world
# frame with the linear part taken at the world origin.


@dataclass
class Kinematics:
    rotations: np.ndarray       # (n_links, 3, 3) link to world
    positions: np.ndarray       # (n_links, 3) link origins
    coms: np.ndarray            # (n_links, 3) link centers of mass
    motion: np.ndarray          # (6, n_v) motion subspace of every v column

    def world_point(self, link: int, local: npt.ArrayLike) -> np.ndarray:
        return self.positions[link] + self.rotations[link] @ np.asarray(local, dtype=float)


def skew(v: npt.ArrayLike) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _check(model: RobotModel, q, dq=None):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_q,):
        raise ValueError(f'Configuration has shape {q.shape}, model expects ({model.n_q},)')
    if dq is not None:
        dq = np.asarray(dq, dtype=float)
        if dq.shape != (model.n_v,):
            raise ValueError(f'Velocity has shape {dq.shape}, model expects ({model.n_v},)')
    return q, dq


def forward_kinematics(model: RobotModel, q: npt.ArrayLike) -> Kinematics:
    q, _ = _check(model, q)
    n = len(model.links)
    rot = np.empty((n, 3, 3))
    pos = np.empty((n, 3))
    motion = np.zeros((6, model.n_v))

    if model.floating:
        rot[0] = Rotation.from_quat(q[3:7]).as_matrix()
        pos[0] = q[0:3]
        motion[3:, 0:3] = np.eye(3)
        motion[:3, 3:6] = np.eye(3)
        motion[3:, 3:6] = skew(pos[0])
    else:
        rot[0] = np.eye(3)
        pos[0] = 0.0

    off = model.q_offset
    for li in range(1, n):
        ji = model.link_joint[li]
        joint = model.joints[ji]
        pi = model.parent[li]
        frame = rot[pi] @ joint.origin_rotation
        rot[li] = frame @ _axis_rotation(joint.axis, q[off + ji])
        pos[li] = pos[pi] + rot[pi] @ joint.origin
        axis = frame @ joint.axis
        col = model.base_dofs + ji
        motion[:3, col] = axis
        motion[3:, col] = np.cross(pos[li], axis)

    local_coms = np.array([link.com for link in model.links])
    coms = pos + np.einsum('nij,nj->ni', rot, local_coms)

    return Kinematics(rot, pos, coms, motion)


def link_velocities(model: RobotModel, kin: Kinematics, dq: np.ndarray) -> np.ndarray:
    """Spatial velocity (angular; linear at origin) of every link, shape (n_links, 6)"""
    return model.support.astype(float) @ (kin.motion * dq).T


def point_jacobian(model: RobotModel, q: npt.ArrayLike, link: int | str,
                   point: npt.ArrayLike = (0.0, 0.0, 0.0), kin: None | Kinematics = None,
                   world: bool = False) -> np.ndarray:
    """
    6 x n_v Jacobian (linear rows, then angular rows) of a point fixed on a
    link. The point is given in the link frame, or in world coordinates when
    world is set.
    """
    if kin is None:
        kin = forward_kinematics(model, q)
    li = model.link_index[link] if isinstance(link, str) else link
    pw = np.asarray(point, dtype=float) if world else kin.world_point(li, point)

    mask = model.support[li]
    w = kin.motion[:3, mask]
    v = kin.motion[3:, mask]
    jac = np.zeros((6, model.n_v))
    jac[:3, mask] = v + np.cross(w.T, pw).T
    jac[3:, mask] = w
    return jac


def com(model: RobotModel, q: npt.ArrayLike, kin: None | Kinematics = None) -> np.ndarray:
    if kin is None:
        kin = forward_kinematics(model, q)
    return model.masses @ kin.coms / model.total_mass


def com_jacobian(model: RobotModel, kin: Kinematics) -> np.ndarray:
    # every column moves the mass of the links it supports
    weights = model.support.T * model.masses
    sub_mass = weights.sum(axis=1)
    sub_moment = weights @ kin.coms
    w = kin.motion[:3].T
    v = kin.motion[3:].T
    return ((sub_mass[:, None] * v + np.cross(w, sub_moment)) / model.total_mass).T


def spatial_inertias(model: RobotModel, kin: Kinematics) -> np.ndarray:
    """World-frame spatial inertia of every link about the origin, (n_links, 6, 6)"""
    n = len(model.links)
    out = np.zeros((n, 6, 6))
    for li, link in enumerate(model.links):
        r = kin.rotations[li]
        c = skew(kin.coms[li])
        m = link.mass
        out[li, :3, :3] = r @ link.inertia @ r.T + m * c @ c.T
        out[li, :3, 3:] = m * c
        out[li, 3:, :3] = m * c.T
        out[li, 3:, 3:] = m * np.eye(3)
    return out


def mass_matrix(model: RobotModel, q: npt.ArrayLike, kin: None | Kinematics = None) -> np.ndarray:
    """Joint-space inertia by the composite-rigid-body recursion"""
    if kin is None:
        kin = forward_kinematics(model, q)
    inertias = spatial_inertias(model, kin)
    composite = np.einsum('ki,iab->kab', model.subtree.astype(float), inertias)

    s = kin.motion
    mm = np.zeros((model.n_v, model.n_v))
    for li, cols in enumerate(model.link_dofs):
        if not len(cols):
            continue
        force = composite[li] @ s[:, cols]
        sup = model.support[li]
        block = s[:, sup].T @ force
        mm[np.ix_(sup, cols)] = block
        mm[np.ix_(cols, sup)] = block.T

    return 0.5 * (mm + mm.T)


def _cross_motion(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    w, v0 = v[:3], v[3:]
    return np.concatenate([np.cross(w, m[:3]), np.cross(w, m[3:]) + np.cross(v0, m[:3])])


def _cross_force(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    w, v0 = v[:3], v[3:]
    return np.concatenate([np.cross(w, f[:3]) + np.cross(v0, f[3:]), np.cross(w, f[3:])])


def inverse_dynamics(model: RobotModel, q: npt.ArrayLike, dq: npt.ArrayLike,
                     ddq: npt.ArrayLike, gravity: npt.ArrayLike = GRAVITY,
                     f_ext: None | np.ndarray = None,
                     kin: None | Kinematics = None) -> np.ndarray:
    """
    Recursive Newton-Euler: generalized forces producing ddq.

    f_ext holds one world spatial force (moment about origin; force) per
    link acting on the robot, shape (n_links, 6).
    """
    q, dq = _check(model, q, dq)
    ddq = np.asarray(ddq, dtype=float)
    if kin is None:
        kin = forward_kinematics(model, q)

    n = len(model.links)
    s = kin.motion
    inertias = spatial_inertias(model, kin)
    vel = np.zeros((n, 6))
    acc = np.zeros((n, 6))
    force = np.zeros((n, 6))
    a0 = np.concatenate([np.zeros(3), -np.asarray(gravity, dtype=float)])

    for li in range(n):
        pi = model.parent[li]
        vp = vel[pi] if pi >= 0 else np.zeros(6)
        ap = acc[pi] if pi >= 0 else a0
        cols = model.link_dofs[li]
        if len(cols):
            sc = s[:, cols]
            vj = sc @ dq[cols]
            vel[li] = vp + vj
            acc[li] = ap + sc @ ddq[cols]
            if pi < 0:
                # the base motion subspace moves with the base position
                acc[li, 3:] += np.cross(dq[0:3], dq[3:6])
            else:
                acc[li] += _cross_motion(vel[li], vj)
        else:
            vel[li] = vp
            acc[li] = ap
        force[li] = inertias[li] @ acc[li] + _cross_force(vel[li], inertias[li] @ vel[li])

    if f_ext is not None:
        force -= f_ext

    tau = np.zeros(model.n_v)
    for li in range(n - 1, -1, -1):
        cols = model.link_dofs[li]
        if len(cols):
            tau[cols] = s[:, cols].T @ force[li]
        pi = model.parent[li]
        if pi >= 0:
            force[pi] += force[li]

    return tau


def nonlinear_effects(model: RobotModel, q: npt.ArrayLike, dq: npt.ArrayLike,
                      gravity: npt.ArrayLike = GRAVITY, f_ext: None | np.ndarray = None,
                      kin: None | Kinematics = None) -> np.ndarray:
    """Coriolis, centrifugal and gravity terms: inverse dynamics at ddq = 0"""
    return inverse_dynamics(model, q, dq, np.zeros(model.n_v), gravity, f_ext, kin)


def actuation(model: RobotModel, tau: npt.ArrayLike) -> np.ndarray:
    """Zero-pad actuator torques to generalized forces"""
    out = np.zeros(model.n_v)
    out[model.actuated_v] = tau
    return out


def point_wrench(point: npt.ArrayLike, force: npt.ArrayLike) -> np.ndarray:
    """Spatial force of a pure force applied at a world point"""
    point = np.asarray(point, dtype=float)
    force = np.asarray(force, dtype=float)
    return np.concatenate([np.cross(point, force), force])


def forward_dynamics(model: RobotModel, q: npt.ArrayLike, dq: npt.ArrayLike,
                     tau: npt.ArrayLike, f_ext: None | np.ndarray = None,
                     gravity: npt.ArrayLike = GRAVITY, kin: None | Kinematics = None,
                     locked: None | np.ndarray = None) -> np.ndarray:
    """
    Solve M(q) ddq + F(q, dq) = tau + J^T w for ddq. tau is a generalized
    force (see actuation()). Columns flagged in locked are held with zero
    acceleration.
    """
    q, dq = _check(model, q, dq)
    if kin is None:
        kin = forward_kinematics(model, q)
    bias = nonlinear_effects(model, q, dq, gravity, f_ext, kin)
    mm = mass_matrix(model, q, kin)
    rhs = np.asarray(tau, dtype=float) - bias

    if locked is None or not locked.any():
        return cho_solve(cho_factor(mm), rhs)

    free = ~locked
    ddq = np.zeros(model.n_v)
    ddq[free] = cho_solve(cho_factor(mm[np.ix_(free, free)]), rhs[free])
    return ddq


def integrate(model: RobotModel, q: npt.ArrayLike, v: npt.ArrayLike, dt: float) -> np.ndarray:
    """Configuration reached moving at constant generalized velocity v for dt"""
    q = np.array(q, dtype=float)
    v = np.asarray(v, dtype=float)
    off = model.q_offset
    if model.floating:
        q[0:3] += v[0:3] * dt
        turn = Rotation.from_rotvec(v[3:6] * dt) * Rotation.from_quat(q[3:7])
        q[3:7] = turn.as_quat()
    q[off:] += v[model.base_dofs:] * dt
    return q


def difference(model: RobotModel, q1: npt.ArrayLike, q0: npt.ArrayLike) -> np.ndarray:
    """Generalized displacement v with integrate(q0, v, 1) == q1"""
    q1 = np.asarray(q1, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    v = np.zeros(model.n_v)
    off = model.q_offset
    if model.floating:
        v[0:3] = q1[0:3] - q0[0:3]
        turn = Rotation.from_quat(q1[3:7]) * Rotation.from_quat(q0[3:7]).inv()
        v[3:6] = turn.as_rotvec()
    v[model.base_dofs:] = q1[off:] - q0[off:]
    return v


def kinetic_energy(model: RobotModel, q: npt.ArrayLike, dq: npt.ArrayLike) -> float:
    dq = np.asarray(dq, dtype=float)
    return 0.5 * float(dq @ mass_matrix(model, q) @ dq)


def potential_energy(model: RobotModel, q: npt.ArrayLike,
                     gravity: npt.ArrayLike = GRAVITY) -> float:
    kin = forward_kinematics(model, q)
    return -float(model.masses @ (kin.coms @ np.asarray(gravity, dtype=float)))


def standing_configuration(model: RobotModel, joints: None | npt.ArrayLike = None) -> np.ndarray:
    """
    Configuration with the given joint angles (default posture when None)
    whose lowest foot collision point rests exactly on the z = 0 floor.
    """
    q = model.neutral_configuration()
    off = model.q_offset
    q[off:] = model.default_posture if joints is None else joints
    if not model.floating:
        return q

    kin = forward_kinematics(model, q)
    feet = [model.link_index[n] for n in model.roles.feet.values()] or range(len(model.links))
    lowest = np.inf
    for li in feet:
        for prim in model.links[li].collisions:
            pts = kin.positions[li] + prim.points() @ kin.rotations[li].T
            lowest = min(lowest, float(pts[:, 2].min()) - prim.radius)
    if np.isfinite(lowest):
        q[2] -= lowest
    return q


def model_summary(model: RobotModel) -> dict:
    """Mass, standing height and degrees of freedom"""
    q = standing_configuration(model)
    kin = forward_kinematics(model, q)
    top = -np.inf
    for li, link in enumerate(model.links):
        for prim in link.collisions:
            pts = kin.positions[li] + prim.points() @ kin.rotations[li].T
            top = max(top, float(pts[:, 2].max()) + prim.radius)
    return {
        'name': model.name,
        'links': len(model.links),
        'joints': model.n_joints,
        'actuated': model.n_a,
        'nq': model.n_q,
        'nv': model.n_v,
        'floating': model.floating,
        'mass': float(model.total_mass),
        'height': top if np.isfinite(top) else 0.0,
        'com_height': float(com(model, q, kin)[2]),
    }
