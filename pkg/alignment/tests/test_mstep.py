import numpy as np
from django.test import SimpleTestCase

from alignment.exceptions import ConfigError, DomainError, SnapshotMismatchError
from alignment.mstep import AdamOptimizer, MStepConfig, dav_kl_loss, dav_loss, mstep_update
from alignment.numkit import RngStream

from .fixtures import perturb, tiny_discrete_policy, two_mode_policy


def numeric_gradient(policy, loss_fn, h=1e-6):
    grads = []
    for p in policy.parameters():
        grad = np.zeros_like(p)
        for index in np.ndindex(p.shape):
            saved = p[index]
            p[index] = saved + h
            plus = loss_fn()
            p[index] = saved - h
            minus = loss_fn()
            p[index] = saved
            grad[index] = (plus - minus) / (2 * h)
        grads.append(grad)
    return grads


class AdamTests(SimpleTestCase):

    def test_first_step_matches_bias_corrected_formula(self):
        params = [np.array([1.0, -1.0])]
        optimizer = AdamOptimizer(learning_rate=0.1)
        optimizer.step(params, [np.array([2.0, -0.5])])
        # m̂ = g e v̂ = g² no primeiro passo
        np.testing.assert_allclose(params[0], [0.9, -0.9], atol=1e-7)

    def test_state_dict_round_trip_continues_identically(self):
        a, b = [np.array([0.5])], [np.array([0.5])]
        first = AdamOptimizer(learning_rate=0.05)
        first.step(a, [np.array([1.0])])
        second = AdamOptimizer(learning_rate=0.05)
        second.load_state_dict(first.state_dict())
        b[0][...] = a[0]
        first.step(a, [np.array([-0.3])])
        second.step(b, [np.array([-0.3])])
        np.testing.assert_array_equal(a[0], b[0])
        self.assertEqual(second.step_count, 2)

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            MStepConfig(distillation_steps=0)
        with self.assertRaises(ConfigError):
            MStepConfig(kl_coefficient=-1.0)
        with self.assertRaises(ConfigError):
            MStepConfig(kl_weighting='linear')


class LossTests(SimpleTestCase):

    def test_continuous_gradient_matches_finite_differences(self):
        policy = perturb(two_mode_policy(T=3, hidden=(4,)), scale=0.2)
        batch = policy.rollout(RngStream(0), 5)
        _, grads = dav_loss(policy, batch)
        numeric = numeric_gradient(policy, lambda: dav_loss(policy, batch)[0])
        for g, n in zip(grads, numeric):
            np.testing.assert_allclose(g, n, atol=1e-6)

    def test_discrete_kl_gradient_matches_finite_differences(self):
        anchor = tiny_discrete_policy()
        policy = perturb(anchor.snapshot(), scale=0.3)
        batch = policy.rollout(RngStream(1), 6)
        _, grads = dav_kl_loss(policy, anchor, batch, kl_coefficient=0.7, weighting='discounted', gamma=0.8)
        numeric = numeric_gradient(
            policy, lambda: dav_kl_loss(policy, anchor, batch, 0.7, 'discounted', 0.8)[0],
        )
        for g, n in zip(grads, numeric):
            np.testing.assert_allclose(g, n, atol=1e-6)

    def test_kl_vanishes_at_the_anchor(self):
        policy = perturb(two_mode_policy(T=3), scale=0.1)
        batch = policy.rollout(RngStream(2), 4)
        plain, plain_grads = dav_loss(policy, batch)
        anchored, anchored_grads = dav_kl_loss(policy, policy.snapshot(), batch, kl_coefficient=5.0)
        self.assertAlmostEqual(plain, anchored, places=12)
        for a, b in zip(plain_grads, anchored_grads):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_weights_select_trajectories(self):
        policy = tiny_discrete_policy()
        batch = policy.rollout(RngStream(3), 4)
        loss, _ = dav_loss(policy, batch, weights=[0.0, 2.0, 0.0, 0.0])
        single, _ = dav_loss(policy, batch[1:2])
        self.assertAlmostEqual(loss, single, places=12)

    def test_empty_batch_rejected(self):
        with self.assertRaises(DomainError):
            dav_loss(tiny_discrete_policy(), [])


class UpdateTests(SimpleTestCase):

    def setUp(self):
        self.policy = perturb(two_mode_policy(T=3), scale=0.1)
        self.batch = self.policy.rollout(RngStream(4), 8)

    def test_update_lowers_loss_and_bumps_version(self):
        cfg = MStepConfig(learning_rate=0.01, distillation_steps=5)
        report = mstep_update(self.policy, self.batch, cfg, AdamOptimizer.from_config(cfg))
        self.assertLess(report.loss_after, report.loss_before)
        self.assertEqual(len(report.losses), 5)
        self.assertEqual(self.policy.version, 1)
        self.assertEqual(report.version, 1)

    def test_stale_batch_rejected(self):
        self.policy.version = 3
        with self.assertRaises(SnapshotMismatchError):
            mstep_update(self.policy, self.batch, MStepConfig(), AdamOptimizer())

    def test_kl_without_anchor_rejected(self):
        with self.assertRaises(DomainError):
            mstep_update(self.policy, self.batch, MStepConfig(kl_coefficient=0.5), AdamOptimizer())

    def test_zero_learning_rate_leaves_parameters_bit_identical(self):
        before = [p.copy() for p in self.policy.parameters()]
        cfg = MStepConfig(learning_rate=0.0, distillation_steps=3)
        mstep_update(self.policy, self.batch, cfg, AdamOptimizer.from_config(cfg))
        for p, saved in zip(self.policy.parameters(), before):
            np.testing.assert_array_equal(p, saved)

    def test_huge_kl_coefficient_keeps_policy_at_anchor(self):
        anchor = self.policy.snapshot()
        free = self.policy.snapshot()
        plain = MStepConfig(learning_rate=0.01, distillation_steps=5)
        anchored = MStepConfig(learning_rate=0.01, distillation_steps=5, kl_coefficient=1e6)
        mstep_update(free, self.batch, plain, AdamOptimizer.from_config(plain))
        mstep_update(self.policy, self.batch, anchored, AdamOptimizer.from_config(anchored), anchor=anchor)

        def distance(policy):
            return np.sqrt(sum(np.sum((p - q) ** 2) for p, q in zip(policy.parameters(), anchor.parameters())))

        self.assertLess(distance(self.policy), 0.5 * distance(free))


class AnchorDominanceTests(SimpleTestCase):

    def test_huge_kl_coefficient_aligns_gradient_with_anchor_term(self):
        anchor = perturb(two_mode_policy(T=3), scale=0.1)
        policy = perturb(anchor.snapshot(), scale=0.01, seed=12)
        batch = policy.rollout(RngStream(5), 6)
        _, plain = dav_loss(policy, batch)
        _, unit = dav_kl_loss(policy, anchor, batch, kl_coefficient=1.0)
        _, total = dav_kl_loss(policy, anchor, batch, kl_coefficient=1e6)
        kl_direction = np.concatenate([(u - p).ravel() for u, p in zip(unit, plain)])
        total = np.concatenate([g.ravel() for g in total])
        cosine = kl_direction @ total / (np.linalg.norm(kl_direction) * np.linalg.norm(total))
        self.assertGreater(cosine, 0.9999)
