import numpy as np
from django.test import SimpleTestCase
from scipy.special import softmax as scipy_softmax

from alignment.discrete import (
    DiscretePolicy, MlpDenoiser, MotifMixture, TabularDenoiser, decode_states, encode_states,
    enumerate_states, forward_mask_sample, one_hot_states, policy_logprob_discrete, pretrain_discrete,
    pretraining_loss, subs_probs, text_to_tokens, tokens_to_text, transition_table,
)
from alignment.exceptions import DomainError, OracleUnavailableError, UnreachableTransitionError
from alignment.numkit import RngStream, mlp_forward
from alignment.rewards import build_reward
from alignment.sched import make_discrete_schedule

from .fixtures import tiny_discrete_policy


class EncodingTests(SimpleTestCase):

    def test_encode_decode_inverse(self):
        states = enumerate_states(3, 2)
        self.assertEqual(states.shape, (27, 3))
        np.testing.assert_array_equal(decode_states(encode_states(states, 2), 3, 2), states)

    def test_enumeration_filters_by_time(self):
        self.assertEqual(enumerate_states(2, 2, t=0).shape[0], 4)
        np.testing.assert_array_equal(enumerate_states(2, 2, t=3, T=3), [[2, 2]])

    def test_enumeration_cap(self):
        with self.assertRaises(OracleUnavailableError):
            enumerate_states(10, 4, cap=1000)

    def test_text_round_trip(self):
        tokens = text_to_tokens('AB_', 'AB')
        np.testing.assert_array_equal(tokens, [0, 1, 2])
        self.assertEqual(tokens_to_text(tokens, 'AB'), 'AB_')
        with self.assertRaises(DomainError):
            text_to_tokens('AC', 'AB')


class SubsProcessTests(SimpleTestCase):

    def setUp(self):
        self.policy = tiny_discrete_policy()

    def test_rows_are_normalized(self):
        states = enumerate_states(2, 2)
        for t in range(1, 4):
            probs = self.policy.step_probs(states, t)
            np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_unmasked_positions_carry_over(self):
        probs = self.policy.step_probs(np.array([[1, 2]]), 2)[0]
        np.testing.assert_array_equal(probs[0], [0.0, 1.0, 0.0])

    def test_last_step_unmasks_everything(self):
        probs = self.policy.step_probs(np.array([[2, 2]]), 1)[0]
        np.testing.assert_array_equal(probs[:, 2], [0.0, 0.0])

    def test_unreachable_transition_raises(self):
        with self.assertRaises(UnreachableTransitionError):
            self.policy.step_logprob(np.array([0, 2]), np.array([1, 2]), 2)
        with self.assertRaises(UnreachableTransitionError):
            policy_logprob_discrete(self.policy.denoiser, self.policy.schedule, [0, 2], [0, 2], 0, 1)

    def test_transition_table_matches_step_logprob(self):
        table = transition_table(self.policy, 2)
        start = encode_states(np.array([[2, 2]]), 2)[0]
        successors, log_probs = table.row(start)
        self.assertAlmostEqual(float(np.exp(log_probs).sum()), 1.0, places=12)
        for index, log_p in zip(successors, log_probs):
            successor = decode_states([index], 2, 2)[0]
            self.assertAlmostEqual(self.policy.step_logprob(np.array([2, 2]), successor, 2), log_p, places=12)

    def test_subs_requires_increasing_time(self):
        with self.assertRaises(DomainError):
            subs_probs(self.policy.denoiser, self.policy.schedule, np.array([[2, 2]]), 2, 2)


class RolloutTests(SimpleTestCase):

    def test_rollout_ends_unmasked_and_is_deterministic(self):
        policy = tiny_discrete_policy()
        first = policy.rollout(RngStream(3), 20)
        second = policy.rollout(RngStream(3), 20)
        for a, b in zip(first, second):
            self.assertFalse(np.any(a.x0 == policy.K))
            np.testing.assert_array_equal(a.x0, b.x0)
            np.testing.assert_array_equal(a.state_at(policy.T), [2, 2])

    def test_forward_mask_sample_rate(self):
        schedule = make_discrete_schedule(4)
        masked = forward_mask_sample(np.zeros((5000, 2), dtype=np.int64), 1, RngStream(0), schedule, 2)
        self.assertAlmostEqual(float(np.mean(masked == 2)), 0.25, delta=0.02)
        with self.assertRaises(DomainError):
            forward_mask_sample(np.array([2, 0]), 1, RngStream(0), schedule, 2)


class PretrainingTests(SimpleTestCase):

    def setUp(self):
        self.schedule = make_discrete_schedule(3)
        self.reference = MotifMixture(motifs=[[0, 0], [1, 1]], weights=[0.7, 0.3], noise=0.0, K=2)
        self.sequences, self.weights = self.reference.support()

    def test_tabular_pretraining_lowers_loss(self):
        untrained = TabularDenoiser(2, 2, 3)
        trained = pretrain_discrete(untrained, self.schedule, self.sequences, self.weights)
        self.assertLess(pretraining_loss(trained, self.schedule, self.sequences, self.weights),
                        pretraining_loss(untrained, self.schedule, self.sequences, self.weights))
        np.testing.assert_array_equal(untrained.table, 0.0)

    def test_tabular_fully_masked_prediction_matches_marginal(self):
        denoiser = pretrain_discrete(TabularDenoiser(2, 2, 3), self.schedule, self.sequences, self.weights)
        policy = DiscretePolicy(self.schedule, denoiser)
        probs = policy.x0hat_batch(np.array([[2, 2]]), 3)[0]
        np.testing.assert_allclose(probs[:, 0], [0.7, 0.7], atol=1e-3)

    def test_mlp_pretraining_lowers_loss(self):
        untrained = MlpDenoiser.initialize(2, 2, 3, (16,), RngStream(0))
        trained = pretrain_discrete(untrained, self.schedule, self.sequences, self.weights,
                                    epochs=60, rng=RngStream(1), learning_rate=0.05, batch_size=32)
        self.assertLess(pretraining_loss(trained, self.schedule, self.sequences, self.weights),
                        pretraining_loss(untrained, self.schedule, self.sequences, self.weights))

    def test_motif_mixture_probabilities_sum_to_one(self):
        noisy = MotifMixture(motifs=[[0, 1, 1]], weights=[1.0], noise=0.3, K=3)
        _, probs = noisy.support()
        self.assertAlmostEqual(float(probs.sum()), 1.0, places=12)


class GuidanceGradientTests(SimpleTestCase):

    def setUp(self):
        denoiser = MlpDenoiser.initialize(3, 2, 3, (5,), RngStream(4))
        self.policy = DiscretePolicy(make_discrete_schedule(3), denoiser)
        self.reward = build_reward('motif_count', {'motif': [0, 1]}, K=2)
        self.tokens = np.array([2, 0, 2])

    def relaxed_reward(self, encoding, t):
        net = self.policy.denoiser.net
        logits = mlp_forward(net, np.concatenate([encoding.ravel(), [t / self.policy.T]])).reshape(3, 2)
        x0hat = encoding[:, :2] + encoding[:, 2:] * scipy_softmax(logits, axis=-1)
        return float(self.reward.relaxed_value(x0hat))

    def test_exact_gradient_matches_finite_differences_on_one_hot_encoding(self):
        grad = self.policy.guidance_gradient(self.tokens, 2, self.reward, 'exact')
        self.assertEqual(grad.shape, (3, 3))
        encoding = one_hot_states(self.tokens, 2)[0]
        self.assertAlmostEqual(self.relaxed_reward(encoding, 2),
                               float(self.reward.relaxed_value(self.policy.x0hat_batch(self.tokens[None], 2)[0])),
                               places=12)
        h = 1e-6
        for index in np.ndindex(encoding.shape):
            plus, minus = encoding.copy(), encoding.copy()
            plus[index] += h
            minus[index] -= h
            numeric = (self.relaxed_reward(plus, 2) - self.relaxed_reward(minus, 2)) / (2 * h)
            self.assertAlmostEqual(grad[index], numeric, places=6)

    def test_stop_gradient_drops_the_denoiser_jacobian(self):
        exact = self.policy.guidance_gradient(self.tokens, 2, self.reward, 'exact')
        frozen = self.policy.guidance_gradient(self.tokens, 2, self.reward, 'stop_gradient')
        x0hat = self.policy.x0hat_batch(self.tokens[None], 2)[0]
        g = self.reward.grad(x0hat)[:, :2]
        np.testing.assert_allclose(frozen[:, :2], g)
        np.testing.assert_allclose(frozen[0, 2], np.sum(x0hat[0] * g[0]))
        self.assertFalse(np.allclose(exact, frozen))

    def test_tabular_denoiser_has_no_input_jacobian(self):
        policy = tiny_discrete_policy()
        reward = build_reward('motif_count', {'motif': [0, 1]}, K=2)
        tokens = np.array([2, 1])
        np.testing.assert_array_equal(policy.guidance_gradient(tokens, 2, reward, 'exact'),
                                      policy.guidance_gradient(tokens, 2, reward, 'stop_gradient'))
