#!/usr/bin/python3

from __future__ import annotations

import unittest

import numpy as np
import numpy.testing as npt

from dreflex.model import (ModelError, builtin_models, load_builtin_model, model_summary,
                           parse_robot_document)
from dreflex.sim import mirror_configuration

PENDULUM = '''
[robot]
name = 'test-pendulum'

[[link]]
name = 'anchor'
mass = 1.0
inertia = [0.01, 0.01, 0.01]

[[link]]
name = 'bob'
mass = 2.0
com = [0.0, 0.0, -0.5]
inertia = [0.1, 0.1, 0.1]

[[joint]]
name = 'hinge'
type = 'revolute'
parent = 'anchor'
child = 'bob'
axis = [0.0, 1.0, 0.0]
limits = { lower = -3.0, upper = 3.0, velocity = 10.0, effort = 10.0 }
'''


class TestRobotDocument(unittest.TestCase):
    def test_parse(self):
        model = parse_robot_document(PENDULUM)
        self.assertEqual(model.name, 'test-pendulum')
        self.assertEqual(model.n_q, 1)
        self.assertEqual(model.n_v, 1)
        self.assertFalse(model.floating)
        self.assertEqual(model.total_mass, 3.0)
        self.assertEqual(model.actuated, ('hinge',))

    def test_builtin_names(self):
        models = builtin_models()
        self.assertEqual(models['humanoid'], 'reduced-humanoid')
        self.assertEqual(load_builtin_model('reduced-humanoid').digest,
                         load_builtin_model('humanoid').digest)
        with self.assertRaises(FileNotFoundError):
            load_builtin_model('octopus')

    def test_digest_follows_text(self):
        a = parse_robot_document(PENDULUM)
        b = parse_robot_document(PENDULUM)
        c = parse_robot_document(PENDULUM.replace('mass = 2.0', 'mass = 2.5'))
        self.assertEqual(a.digest, b.digest)
        self.assertNotEqual(a.digest, c.digest)

    def test_rejections(self):
        bad = [
            PENDULUM.replace('mass = 2.0', 'mass = -2.0'),
            PENDULUM.replace("child = 'bob'", "child = 'nowhere'"),
            PENDULUM.replace('axis = [0.0, 1.0, 0.0]', 'axis = [0.0, 2.0, 0.0]'),
            PENDULUM.replace('lower = -3.0', 'lower = 4.0'),
            PENDULUM.replace('inertia = [0.1, 0.1, 0.1]', 'inertia = [0.1, -0.1, 0.1]'),
            PENDULUM.replace("type = 'revolute'", "type = 'prismatic'"),
            PENDULUM.replace("name = 'test-pendulum'", ''),
            PENDULUM + '\n[[link]]\nname = "bob"\nmass = 1.0\ninertia = [1.0, 1.0, 1.0]\n',
            'this is [not toml',
        ]
        for text in bad:
            with self.assertRaises(ModelError):
                parse_robot_document(text)


class TestHumanoid(unittest.TestCase):
    def setUp(self):
        self.model = load_builtin_model('humanoid')

    def test_summary(self):
        s = model_summary(self.model)
        self.assertAlmostEqual(s['mass'], 100.0, places=6)
        self.assertTrue(s['floating'])
        self.assertEqual(s['actuated'], 15)
        self.assertEqual(s['nv'], 6 + s['joints'])
        self.assertGreater(s['height'], 1.6)
        self.assertLess(s['height'], 1.9)

    def test_roles(self):
        m = self.model
        self.assertEqual(set(m.roles.legs), {'left', 'right'})
        for side in ('left', 'right'):
            self.assertIsNotNone(m.find_primitive(m.roles.hands[side]))
            self.assertEqual(len(m.roles.legs[side]), 4)

    def test_mirror_is_involution(self):
        rng = np.random.default_rng(3)
        q = self.model.neutral_configuration()
        q[:3] = rng.normal(size=3)
        quat = rng.normal(size=4)
        q[3:7] = quat / np.linalg.norm(quat)
        q[7:] = rng.uniform(-0.5, 0.5, self.model.n_joints)
        twice = mirror_configuration(self.model, mirror_configuration(self.model, q))
        npt.assert_allclose(twice, q)

    def test_prune(self):
        m = self.model
        removed = m.distal_links('r_knee')
        pruned = m.prune(removed)
        self.assertEqual(len(pruned.links), len(m.links) - len(removed))
        self.assertNotIn('r_knee', pruned.joint_index)
        self.assertNotIn('right', pruned.roles.feet)
        self.assertEqual(pruned.roles.legs['right'], ('r_hip_pitch', 'r_hip_roll'))
        self.assertLess(pruned.total_mass, m.total_mass)

    def test_scaled_masses(self):
        m = self.model
        scaled = m.scaled_masses({'r_foot': 1e-3})
        self.assertEqual(scaled.n_v, m.n_v)
        li = m.link_index['r_foot']
        self.assertAlmostEqual(scaled.masses[li], m.masses[li] * 1e-3)

    def test_rebuild_keeps_indices(self):
        m = self.model
        scaled = m.scaled_masses({n: 1e-3 for n in m.distal_links('r_knee')})
        self.assertEqual([link.name for link in scaled.links], [link.name for link in m.links])
        self.assertEqual([j.name for j in scaled.joints], [j.name for j in m.joints])
        npt.assert_array_equal(scaled.actuated_q, m.actuated_q)

        pruned = m.prune(m.distal_links('r_knee'))
        kept = [link.name for link in m.links if link.name in pruned.link_index]
        self.assertEqual([link.name for link in pruned.links], kept)


if __name__ == '__main__':
    unittest.main()
