# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from dreflex.errors import ModelError

__all__ = ['ModelError', 'JointType', 'PrimitiveKind', 'Primitive', 'Link', 'Joint',
           'Roles', 'RobotModel', 'parse_robot_document', 'load_robot_model',
           'load_builtin_model', 'builtin_models']


class JointType(Enum):
    REVOLUTE = 'revolute'
    FLOATING = 'floating-base'


class PrimitiveKind(Enum):
    SPHERE = 'sphere'
    BOX = 'box'


_BOX_SIGNS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                      dtype=float)


@dataclass(frozen=True, eq=False)
class Primitive:
    """Collision primitive attached to a link, pose given in the link frame"""

    name: str
    kind: PrimitiveKind
    size: np.ndarray        # (radius,) or half extents (3,)
    position: np.ndarray
    rotation: np.ndarray

    @property
    def radius(self) -> float:
        return float(self.size[0]) if self.kind == PrimitiveKind.SPHERE else 0.0

    def points(self) -> np.ndarray:
        """Candidate contact points in the link frame: sphere center or box corners"""
        if self.kind == PrimitiveKind.SPHERE:
            return self.position[None, :]
        return self.position + (_BOX_SIGNS * self.size) @ self.rotation.T


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    mass: float
    inertia: np.ndarray     # about the COM, link axes
    com: np.ndarray
    collisions: tuple[Primitive, ...] = ()


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    type: JointType
    parent: None | str
    child: str
    axis: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    lower: float = -np.inf
    upper: float = np.inf
    velocity: float = np.inf
    effort: float = np.inf
    group: str = 'default'


@dataclass(frozen=True)
class Roles:
    """Named body parts the simulation and the controller refer to"""

    feet: dict[str, str] = field(default_factory=dict)        # side -> link
    hands: dict[str, str] = field(default_factory=dict)       # side -> primitive
    shoulders: dict[str, str] = field(default_factory=dict)   # side -> link
    legs: dict[str, tuple[str, ...]] = field(default_factory=dict)  # side -> joints, proximal first
    torso: None | str = None


class RobotModel:
    """
    Articulated tree of rigid links, immutable after construction.

    Generalized coordinates: for a floating base q = (base position, base
    quaternion (x, y, z, w), joint angles) and v = (base linear velocity,
    base angular velocity, joint velocities), both base velocities expressed
    in the world frame. Without a floating joint the root link is welded to
    the world and q = v = joint coordinates.
    """

    def __init__(self, name: str, links: list[Link], joints: list[Joint],
                 actuated: None | list[str] = None, roles: None | Roles = None,
                 posture: None | dict[str, float] = None, digest: str = '') -> None:
        self.name = name
        self.digest = digest
        self.roles = roles or Roles()

        by_name = {}
        for link in links:
            if link.name in by_name:
                raise ModelError(f'Duplicate link "{link.name}"')
            _check_link(link)
            by_name[link.name] = link

        floating = [j for j in joints if j.type == JointType.FLOATING]
        revolute = [j for j in joints if j.type == JointType.REVOLUTE]
        if len(floating) > 1:
            raise ModelError('More than one floating-base joint')

        child_joint: dict[str, Joint] = {}
        for j in revolute:
            _check_joint(j, by_name)
            if j.child in child_joint:
                raise ModelError(f'Link "{j.child}" has two parent joints')
            child_joint[j.child] = j

        roots = [n for n in by_name if n not in child_joint]
        if len(roots) != 1:
            raise ModelError(f'Joint graph is not a tree with a single root (roots: {roots})')
        root = roots[0]
        if floating and floating[0].child != root:
            raise ModelError(f'Floating-base joint must attach the root link "{root}"')

        children: dict[str, list[Joint]] = {n: [] for n in by_name}
        for j in revolute:
            children[j.parent].append(j)

        # depth-first preorder, siblings in document order; rebuilding a model
        # from its own links and joints reproduces the same indices
        order = []
        stack = [root]
        while stack:
            name_ = stack.pop()
            order.append(name_)
            stack.extend(j.child for j in reversed(children[name_]))
        if len(order) != len(by_name):
            raise ModelError('Joint graph contains a cycle or disconnected links')

        self.floating = bool(floating)
        self.base_joint = floating[0] if floating else None
        self.links: tuple[Link, ...] = tuple(by_name[n] for n in order)
        self.link_index = {link.name: i for i, link in enumerate(self.links)}
        self.joints: tuple[Joint, ...] = tuple(child_joint[n] for n in order[1:])
        self.joint_index = {j.name: i for i, j in enumerate(self.joints)}

        nb = 6 if self.floating else 0
        self.n_joints = len(self.joints)
        self.n_q = (7 if self.floating else 0) + self.n_joints
        self.n_v = nb + self.n_joints
        self.base_dofs = nb

        n_links = len(self.links)
        self.parent = np.full(n_links, -1, dtype=int)
        # joint index driving each link, -1 for the root
        self.link_joint = np.full(n_links, -1, dtype=int)
        for ji, j in enumerate(self.joints):
            li = self.link_index[j.child]
            self.parent[li] = self.link_index[j.parent]
            self.link_joint[li] = ji

        # v columns owned by each link
        self.link_dofs: list[np.ndarray] = []
        for li in range(n_links):
            if li == 0:
                self.link_dofs.append(np.arange(nb))
            else:
                self.link_dofs.append(np.array([nb + self.link_joint[li]]))

        self.support = np.zeros((n_links, self.n_v), dtype=bool)
        self.subtree = np.zeros((n_links, n_links), dtype=bool)
        for li in range(n_links):
            k = li
            while k >= 0:
                self.support[li, self.link_dofs[k]] = True
                self.subtree[k, li] = True
                k = self.parent[k]

        if actuated is None:
            actuated = [j.name for j in self.joints]
        for name_ in actuated:
            if name_ not in self.joint_index:
                raise ModelError(f'Actuated joint "{name_}" is not a revolute joint of the model')
        self.actuated: tuple[str, ...] = tuple(actuated)
        self.actuated_joints = np.array([self.joint_index[n] for n in self.actuated], dtype=int)
        self.actuated_v = nb + self.actuated_joints
        self.actuated_q = self.q_offset + self.actuated_joints
        self.n_a = len(self.actuated)

        self.lower = np.array([j.lower for j in self.joints])
        self.upper = np.array([j.upper for j in self.joints])
        self.velocity_limit = np.array([j.velocity for j in self.joints])
        self.effort_limit = np.array([j.effort for j in self.joints])

        self.masses = np.array([link.mass for link in self.links])
        self.total_mass = float(self.masses.sum())

        posture = posture or {}
        self.default_posture = np.zeros(self.n_joints)
        for name_, value in posture.items():
            if name_ not in self.joint_index:
                raise ModelError(f'Posture refers to unknown joint "{name_}"')
            self.default_posture[self.joint_index[name_]] = value

        self._check_roles()

        self.mirror_joints, self.mirror_signs = self._mirror_map()

    @property
    def q_offset(self) -> int:
        return 7 if self.floating else 0

    def __repr__(self):
        return f'RobotModel({self.name}, links={len(self.links)}, n_v={self.n_v})'

    def __deepcopy__(self, memo):
        return self

    def _check_roles(self):
        r = self.roles
        for link in list(r.feet.values()) + list(r.shoulders.values()):
            if link not in self.link_index:
                raise ModelError(f'Role refers to unknown link "{link}"')
        for prim in r.hands.values():
            if self.find_primitive(prim) is None:
                raise ModelError(f'Hand role refers to unknown primitive "{prim}"')
        for side, names in r.legs.items():
            for n in names:
                if n not in self.joint_index:
                    raise ModelError(f'Leg "{side}" refers to unknown joint "{n}"')
        if r.torso is not None and r.torso not in self.link_index:
            raise ModelError(f'Torso role refers to unknown link "{r.torso}"')

    def _mirror_map(self):
        # partner joints are found by swapping l_/r_ prefixes
        partner = np.arange(self.n_joints)
        sign = np.ones(self.n_joints)
        for i, j in enumerate(self.joints):
            other = j.name
            if j.name.startswith('l_'):
                other = 'r_' + j.name[2:]
            elif j.name.startswith('r_'):
                other = 'l_' + j.name[2:]
            k = self.joint_index.get(other, i)
            partner[i] = k
            reflected = np.array([-j.axis[0], j.axis[1], -j.axis[2]])
            sign[i] = 1.0 if np.dot(self.joints[k].axis, reflected) >= 0 else -1.0
        return partner, sign

    def find_primitive(self, name: str) -> None | tuple[int, int]:
        """(link index, primitive index) of a named collision primitive"""
        for li, link in enumerate(self.links):
            for pi, prim in enumerate(link.collisions):
                if prim.name == name:
                    return li, pi
        return None

    def leg_links(self, side: str) -> list[int]:
        """Links distal to the first joint of a leg, the leg's own links"""
        first = self.joints[self.joint_index[self.roles.legs[side][0]]]
        root = self.link_index[first.child]
        return [li for li in range(len(self.links)) if self.subtree[root, li]]

    def distal_links(self, joint_name: str) -> list[str]:
        li = self.link_index[self.joints[self.joint_index[joint_name]].child]
        return [self.links[k].name for k in range(len(self.links)) if self.subtree[li, k]]

    def neutral_configuration(self) -> np.ndarray:
        q = np.zeros(self.n_q)
        if self.floating:
            q[6] = 1.0
        return q

    def prune(self, link_names: list[str]) -> RobotModel:
        """Model without the given links, the joints driving them and their roles"""
        removed = set(link_names)
        links = [link for link in self.links if link.name not in removed]
        joints = [j for j in self.joints if j.child not in removed]
        if self.base_joint is not None:
            joints.insert(0, self.base_joint)
        names = {j.name for j in joints}
        roles = Roles(
            feet={s: n for s, n in self.roles.feet.items() if n not in removed},
            hands={s: n for s, n in self.roles.hands.items()
                   if self.links[self.find_primitive(n)[0]].name not in removed},
            shoulders={s: n for s, n in self.roles.shoulders.items() if n not in removed},
            legs={s: tuple(n for n in names_ if n in names) for s, names_ in self.roles.legs.items()},
            torso=self.roles.torso if self.roles.torso not in removed else None,
        )
        posture = {j.name: float(self.default_posture[self.joint_index[j.name]])
                   for j in self.joints if j.name in names}
        return RobotModel(self.name, links, joints,
                          actuated=[n for n in self.actuated if n in names],
                          roles=roles, posture=posture, digest=self.digest)

    def scaled_masses(self, scales: dict[str, float]) -> RobotModel:
        """Same topology with the mass and inertia of some links scaled"""
        links = [replace(link, mass=link.mass * scales[link.name],
                         inertia=link.inertia * scales[link.name])
                 if link.name in scales else link for link in self.links]
        joints = list(self.joints)
        if self.base_joint is not None:
            joints.insert(0, self.base_joint)
        posture = {j.name: float(v) for j, v in zip(self.joints, self.default_posture)}
        return RobotModel(self.name, links, joints, actuated=list(self.actuated),
                          roles=self.roles, posture=posture, digest=self.digest)


def _check_link(link: Link):
    if not link.mass > 0:
        raise ModelError(f'Link "{link.name}": mass must be positive')
    inertia = link.inertia
    if inertia.shape != (3, 3) or not np.all(np.isfinite(inertia)):
        raise ModelError(f'Link "{link.name}": inertia must be a finite 3x3 matrix')
    if not np.allclose(inertia, inertia.T, rtol=0, atol=1e-12 * max(1.0, np.abs(inertia).max())):
        raise ModelError(f'Link "{link.name}": inertia is not symmetric')
    if np.linalg.eigvalsh(inertia).min() <= 0:
        raise ModelError(f'Link "{link.name}": inertia is not positive definite')


def _check_joint(j: Joint, links: dict[str, Link]):
    if j.parent not in links or j.child not in links:
        raise ModelError(f'Joint "{j.name}" refers to an unknown link')
    if j.parent == j.child:
        raise ModelError(f'Joint "{j.name}" connects a link to itself')
    if abs(np.linalg.norm(j.axis) - 1.0) > 1e-6:
        raise ModelError(f'Joint "{j.name}": axis must be a unit vector')
    if not j.lower < j.upper:
        raise ModelError(f'Joint "{j.name}": lower limit must be below upper limit')
    if not (j.velocity > 0 and j.effort > 0):
        raise ModelError(f'Joint "{j.name}": velocity and effort limits must be positive')


def _vec(d: dict, key: str, n: int = 3, default=None) -> np.ndarray:
    value = d.get(key, default)
    if value is None:
        raise ModelError(f'Missing field "{key}"')
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ModelError(f'Field "{key}" must have {n} components')
    return arr


def _inertia(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (6,):
        ixx, iyy, izz, ixy, ixz, iyz = arr
        return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    if arr.shape == (3, 3):
        return arr
    raise ModelError('Inertia must be given as 3 diagonal, 6 unique or 3x3 values')


def _rotation(d: dict) -> np.ndarray:
    rpy = _vec(d, 'rpy', default=[0.0, 0.0, 0.0])
    return Rotation.from_euler('xyz', rpy).as_matrix()


def _parse_primitive(d: dict) -> Primitive:
    try:
        kind = PrimitiveKind(d['type'])
    except (KeyError, ValueError) as e:
        raise ModelError(f'Invalid collision primitive type: {e}') from e
    if kind == PrimitiveKind.SPHERE:
        size = np.array([float(d['radius'])])
    else:
        size = _vec(d, 'size')
    if np.any(size <= 0):
        raise ModelError('Collision primitive dimensions must be positive')
    return Primitive(name=d.get('name', ''), kind=kind, size=size,
                     position=_vec(d, 'position', default=[0.0, 0.0, 0.0]),
                     rotation=_rotation(d))


def _parse_link(d: dict) -> Link:
    try:
        return Link(name=d['name'], mass=float(d['mass']),
                    inertia=_inertia(d['inertia']),
                    com=_vec(d, 'com', default=[0.0, 0.0, 0.0]),
                    collisions=tuple(_parse_primitive(c) for c in d.get('collision', [])))
    except KeyError as e:
        raise ModelError(f'Link is missing field {e}') from e


def _parse_joint(d: dict) -> Joint:
    try:
        jtype = JointType(d['type'])
    except (KeyError, ValueError) as e:
        raise ModelError(f'Invalid joint type: {e}') from e
    if jtype == JointType.FLOATING:
        return Joint(name=d['name'], type=jtype, parent=None, child=d['child'])
    limits = d.get('limits', {})
    try:
        return Joint(name=d['name'], type=jtype, parent=d['parent'], child=d['child'],
                     axis=_vec(d, 'axis'), origin=_vec(d, 'origin', default=[0.0, 0.0, 0.0]),
                     origin_rotation=_rotation(d),
                     lower=float(limits.get('lower', -np.pi)),
                     upper=float(limits.get('upper', np.pi)),
                     velocity=float(limits.get('velocity', 10.0)),
                     effort=float(limits.get('effort', 100.0)),
                     group=d.get('group', 'default'))
    except KeyError as e:
        raise ModelError(f'Joint is missing field {e}') from e


def parse_robot_document(text: str) -> RobotModel:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ModelError(f'Robot document is not valid TOML: {e}') from e

    head = doc.get('robot')
    if not isinstance(head, dict) or 'name' not in head:
        raise ModelError('Robot document needs a [robot] table with a name')

    links = [_parse_link(d) for d in doc.get('link', [])]
    joints = [_parse_joint(d) for d in doc.get('joint', [])]
    if not links:
        raise ModelError('Robot document defines no links')

    r = head.get('roles', {})
    roles = Roles(feet=dict(r.get('feet', {})), hands=dict(r.get('hands', {})),
                  shoulders=dict(r.get('shoulders', {})),
                  legs={k: tuple(v) for k, v in r.get('legs', {}).items()},
                  torso=r.get('torso'))

    digest = hashlib.sha256(text.encode()).hexdigest()

    return RobotModel(head['name'], links, joints, actuated=head.get('actuated'),
                      roles=roles, posture=doc.get('posture'), digest=digest)


def load_robot_model(path: str | Path) -> RobotModel:
    with open(path, encoding='utf-8') as f:
        return parse_robot_document(f.read())


def builtin_models() -> dict[str, str]:
    """Declared model name of every document shipped in dreflex/model/data, by file stem"""
    out = {}
    for entry in sorted(resources.files('dreflex.model').joinpath('data').iterdir(),
                        key=lambda e: e.name):
        if entry.name.endswith('.robot.toml'):
            head = tomllib.loads(entry.read_text()).get('robot', {})
            out[entry.name.removesuffix('.robot.toml')] = head.get('name', '')
    return out


def load_builtin_model(name: str) -> RobotModel:
    """
    Load one of the documents shipped in dreflex/model/data, by file stem
    or by the name the document declares
    """
    models = builtin_models()
    if name not in models:
        stems = [stem for stem, declared in models.items() if declared == name]
        if not stems:
            raise FileNotFoundError(f'No built-in robot model "{name}"')
        name = stems[0]
    text = resources.files('dreflex.model').joinpath('data', f'{name}.robot.toml').read_text()
    return parse_robot_document(text)
