# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

from dreflex.errors import ConfigError
from dreflex.model import Kinematics, RobotModel, forward_kinematics, link_velocities

__all__ = ['WallConfig', 'WorldConfig', 'Plane', 'Wall', 'Contact', 'detect_contacts',
           'detect_self_contacts', 'contact_forces', 'FLOOR', 'WALL']

FLOOR = 'floor'
WALL = 'wall'


@dataclass(frozen=True)
class WallConfig:
    """
    Wall pose relative to the robot at damage time: distance from the base
    origin projected on the floor, and yaw relative to the robot heading.
    """

    distance: float
    orientation: float
    friction: float = 1.0
    restitution: float = 0.0

    def __post_init__(self):
        if not self.distance >= 0:
            raise ConfigError('Wall distance must be non-negative')
        if not self.friction >= 0:
            raise ConfigError('Wall friction must be non-negative')
        if not 0 <= self.restitution <= 1:
            raise ConfigError('Wall restitution must be in [0, 1]')

    def to_dict(self):
        return {'distance': self.distance, 'orientation': self.orientation,
                'friction': self.friction, 'restitution': self.restitution}

    @staticmethod
    def from_dict(d: dict) -> WallConfig:
        return WallConfig(float(d['distance']), float(d['orientation']),
                          float(d.get('friction', 1.0)), float(d.get('restitution', 0.0)))


@dataclass(frozen=True)
class WorldConfig:
    dt: float = 1e-3
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    floor_friction: float = 1.0
    contact_stiffness: float = 1e5
    contact_damping: float = 1e3
    tangential_stiffness: float = 1e5
    tangential_damping: float = 1e3
    # Stable-PD gains per joint group: group -> (kp, kd)
    gains: dict[str, tuple[float, float]] = field(default_factory=lambda: {
        'default': (500.0, 50.0),
        'leg': (5000.0, 100.0),
        'torso': (5000.0, 100.0),
        'arm': (800.0, 20.0),
    })

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ConfigError(f'World time step {self.dt} outside (0, 0.01]')
        for name in ('floor_friction', 'contact_stiffness', 'contact_damping',
                     'tangential_stiffness', 'tangential_damping'):
            if not getattr(self, name) >= 0:
                raise ConfigError(f'World parameter "{name}" must be non-negative')
        if 'default' not in self.gains:
            raise ConfigError('World gains need a "default" group')

    def gain_vectors(self, model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
        """Per-joint (kp, kd); joints without an actuator get zero gains"""
        kp = np.zeros(model.n_joints)
        kd = np.zeros(model.n_joints)
        for ji in model.actuated_joints:
            gp, gd = self.gains.get(model.joints[ji].group, self.gains['default'])
            kp[ji] = gp
            kd[ji] = gd
        return kp, kd


class Plane(NamedTuple):
    point: np.ndarray
    normal: np.ndarray      # unit, pointing out of the obstacle


class Wall:
    """
    Wall placed next to the robot. The wall frame has its origin at the wall
    point closest to the reference shoulder, horizontal axis normal x up and
    vertical axis up; x points forward for a wall on the right side.
    """

    def __init__(self, config: WallConfig, side: str, base_position: np.ndarray,
                 base_yaw: float, shoulder: np.ndarray):
        sign = -1.0 if side == 'right' else 1.0
        away = Rotation.from_euler('z', base_yaw + config.orientation).apply([0.0, sign, 0.0])
        point = np.array([base_position[0], base_position[1], 0.0]) + config.distance * away
        normal = -away

        self.config = config
        self.side = side
        self.plane = Plane(point, normal)
        self.origin = shoulder - ((shoulder - point) @ normal) * normal
        self.axis_x = np.cross(normal, [0.0, 0.0, 1.0])
        self.axis_y = np.array([0.0, 0.0, 1.0])

    @staticmethod
    def at_trigger(config: WallConfig, model: RobotModel, q: np.ndarray, side: str,
                   kin: None | Kinematics = None) -> Wall:
        """Wall for a robot in configuration q at damage time"""
        if kin is None:
            kin = forward_kinematics(model, q)
        yaw = Rotation.from_matrix(kin.rotations[0]).as_euler('zyx')[0]
        shoulder = kin.positions[model.link_index[model.roles.shoulders[side]]]
        return Wall(config, side, kin.positions[0], yaw, shoulder)

    def to_world(self, x: float, y: float) -> np.ndarray:
        return self.origin + x * self.axis_x + y * self.axis_y

    def to_wall(self, point: np.ndarray) -> tuple[float, float]:
        d = np.asarray(point) - self.origin
        return float(d @ self.axis_x), float(d @ self.axis_y)


_FLOOR_PLANE = Plane(np.zeros(3), np.array([0.0, 0.0, 1.0]))


@dataclass
class Contact:
    link: int
    primitive: str
    point: np.ndarray       # deepest robot point, world
    normal: np.ndarray      # from the obstacle into the robot
    depth: float
    body: str               # FLOOR or WALL
    key: tuple              # stable identity for friction anchoring


def _penetrations(model: RobotModel, kin: Kinematics, plane: Plane, body: str,
                  out: list[Contact]):
    p0, n = plane
    for li, link in enumerate(model.links):
        for pi, prim in enumerate(link.collisions):
            pts = kin.positions[li] + prim.points() @ kin.rotations[li].T
            dist = (pts - p0) @ n - prim.radius
            for k in np.flatnonzero(dist < 0):
                point = pts[k] - prim.radius * n
                out.append(Contact(li, prim.name, point, n, float(-dist[k]), body,
                                   (body, li, pi, int(k))))


def detect_contacts(model: RobotModel, q: np.ndarray, wall: None | Wall = None,
                    kin: None | Kinematics = None) -> list[Contact]:
    """All primitive/floor and primitive/wall interpenetrations"""
    if kin is None:
        kin = forward_kinematics(model, q)
    contacts: list[Contact] = []
    _penetrations(model, kin, _FLOOR_PLANE, FLOOR, contacts)
    if wall is not None:
        _penetrations(model, kin, wall.plane, WALL, contacts)
    return contacts


def detect_self_contacts(model: RobotModel, kin: Kinematics) -> list[tuple[str, str, float]]:
    """Overlapping spheres of non-adjacent links, as (link, link, depth)"""
    centers = []
    radii = []
    owners = []
    for li, link in enumerate(model.links):
        for prim in link.collisions:
            if prim.radius > 0:
                centers.append(kin.positions[li] + kin.rotations[li] @ prim.position)
                radii.append(prim.radius)
                owners.append(li)
    if len(centers) < 2:
        return []

    centers = np.array(centers)
    radii = np.array(radii)
    owners = np.array(owners)
    dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    depth = radii[:, None] + radii[None, :] - dist

    a, b = owners[:, None], owners[None, :]
    adjacent = (a == b) | (model.parent[a] == b) | (model.parent[b] == a)
    hit = np.triu((depth > 0) & ~adjacent, 1)

    return [(model.links[owners[i]].name, model.links[owners[j]].name, float(depth[i, j]))
            for i, j in zip(*np.nonzero(hit))]


def contact_forces(model: RobotModel, contacts: list[Contact], kin: Kinematics, dq: np.ndarray,
                   world: WorldConfig, wall: None | WallConfig,
                   anchors: dict[tuple, np.ndarray]) -> tuple[np.ndarray, dict[tuple, np.ndarray]]:
    """
    Penalty contact forces acting on the robot, one world 3-vector per contact.

    Normal: max(0, kp depth - kd v_n), the damping of separating motion
    scaled by (1 - restitution). Tangential: spring toward an anchor point
    with damping, saturated at the Coulomb bound; the anchor follows the
    contact while it slips. Returns the forces and the anchors to carry to
    the next step (contacts that ended drop their anchor).
    """
    forces = np.zeros((len(contacts), 3))
    new_anchors: dict[tuple, np.ndarray] = {}
    if not contacts:
        return forces, new_anchors

    vel = link_velocities(model, kin, dq)

    for i, c in enumerate(contacts):
        w, v0 = vel[c.link, :3], vel[c.link, 3:]
        v = v0 + np.cross(w, c.point)
        vn = float(v @ c.normal)
        vt = v - vn * c.normal

        if c.body == WALL and wall is not None:
            mu, restitution = wall.friction, wall.restitution
        else:
            mu, restitution = world.floor_friction, 0.0

        damping = world.contact_damping * ((1.0 - restitution) if vn > 0 else 1.0)
        fn = max(0.0, world.contact_stiffness * c.depth - damping * vn)
        if fn == 0.0:
            continue

        anchor = anchors.get(c.key, c.point)
        slip = c.point - anchor
        slip -= (slip @ c.normal) * c.normal
        ft = -world.tangential_stiffness * slip - world.tangential_damping * vt

        limit = mu * fn
        norm = float(np.linalg.norm(ft))
        if norm > limit:
            ft *= limit / norm
            if world.tangential_stiffness > 0:
                # anchor moves so the spring alone carries the saturated force
                slip = -ft / world.tangential_stiffness
            anchor = c.point - slip

        new_anchors[c.key] = anchor
        forces[i] = fn * c.normal + ft

    return forces, new_anchors
