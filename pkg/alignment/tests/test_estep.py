import numpy as np
from django.test import SimpleTestCase

from alignment.continuous import ContinuousPolicy, GaussianMixture
from alignment.estep import (
    EStepConfig, ParticleSet, empirical_next_states, guided_step_probs, importance_weights, propose_continuous,
    run_estep, sample_posterior_trajectory, search_step,
)
from alignment.exceptions import ConfigError, DegenerateWeightsError
from alignment.numkit import RngStream
from alignment.rewards import build_reward
from alignment.runner import total_variation
from alignment.sched import make_continuous_schedule
from alignment.softq import SoftQConfig, exact_soft_policy, exact_soft_tables

from .fixtures import motif_reward, tiny_discrete_policy, two_mode_policy


class EStepConfigTests(SimpleTestCase):

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            EStepConfig(alpha=1.0, num_particles=0)
        with self.assertRaises(ConfigError):
            EStepConfig(alpha=-1.0)
        with self.assertRaises(ConfigError):
            EStepConfig(alpha=1.0, x0hat_source='oracle')

    def test_guidance_with_black_box_reward_rejected(self):
        reward = build_reward('linear', {'coefficients': [1.0, 0.0]}, black_box=True)
        with self.assertRaises(ConfigError):
            propose_continuous(two_mode_policy(), np.zeros(2), 2, reward, EStepConfig(alpha=1.0), RngStream(0))


class WeightTests(SimpleTestCase):

    def _particles(self, q_values):
        n = len(q_values)
        return ParticleSet(states=np.zeros((n, 1)), proposal_logprobs=np.zeros(n), prior_logprobs=np.zeros(n),
                           q_values=np.asarray(q_values, dtype=np.float64))

    def test_weights_are_normalized_softmax_of_q(self):
        particles = importance_weights(self._particles([0.0, 1.0]), EStepConfig(alpha=0.5))
        np.testing.assert_allclose(particles.weights, [1 / (1 + np.e ** 2), np.e ** 2 / (1 + np.e ** 2)])
        self.assertAlmostEqual(float(particles.weights.sum()), 1.0, places=15)

    def test_ess_and_entropy_bounds(self):
        particles = importance_weights(self._particles([0.0, 0.0, 0.0, 0.0]), EStepConfig(alpha=1.0))
        self.assertAlmostEqual(particles.ess(), 4.0)
        self.assertAlmostEqual(particles.entropy(), np.log(4.0))

    def test_degenerate_weights_raise(self):
        with self.assertRaises(DegenerateWeightsError):
            importance_weights(self._particles([-np.inf, -np.inf]), EStepConfig(alpha=1.0))


class DiscreteSearchTests(SimpleTestCase):

    def setUp(self):
        self.prior = tiny_discrete_policy()
        self.reward = motif_reward()
        self.x1 = np.array([2, 2])

    def test_guided_probs_leave_unmasked_rows_untouched(self):
        prior_probs = np.array([[0.0, 1.0, 0.0], [0.3, 0.3, 0.4]])
        guided = guided_step_probs(prior_probs, np.array([False, True]), np.ones((2, 3)) * [[5, 0, 0]], 1.0)
        np.testing.assert_array_equal(guided[0], prior_probs[0])
        self.assertAlmostEqual(float(guided[1].sum()), 1.0, places=12)

    def test_single_particle_without_guidance_is_the_prior(self):
        cfg = EStepConfig(alpha=0.5, num_particles=1, guidance=False)
        particles, index = search_step(self.prior, self.x1, 2, self.reward, cfg, RngStream(0))
        self.assertEqual(index, 0)
        np.testing.assert_array_equal(particles.proposal_logprobs, particles.prior_logprobs)

    def test_many_particles_converge_to_soft_optimal_step(self):
        cfg = EStepConfig(alpha=0.5, gamma=1.0, num_particles=64)
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 1.0))
        successors, probs = exact_soft_policy(tables, self.x1, 1)
        chosen = empirical_next_states(self.prior, self.x1, 1, self.reward, cfg, RngStream(1), 3000)
        self.assertLess(total_variation(chosen, successors, probs, self.prior.K), 0.05)

    def test_one_unguided_particle_samples_the_prior(self):
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 1.0))
        successors, probs = exact_soft_policy(tables, self.x1, 1)
        cfg = EStepConfig(alpha=0.5, num_particles=1, guidance=False)
        chosen = empirical_next_states(self.prior, self.x1, 1, self.reward, cfg, RngStream(2), 3000)
        self.assertGreater(total_variation(chosen, successors, probs, self.prior.K), 0.1)

    def test_trajectory_bookkeeping(self):
        cfg = EStepConfig(alpha=0.5, num_particles=4)
        trajectory = sample_posterior_trajectory(self.prior, self.reward, cfg, RngStream(5))
        self.assertEqual(len(trajectory.states), self.prior.T + 1)
        self.assertFalse(np.any(trajectory.x0 == self.prior.K))
        self.assertEqual(trajectory.reward, float(self.reward.value(trajectory.x0)))
        self.assertEqual(len(trajectory.ess), self.prior.T)
        self.assertTrue(np.all(trajectory.log_weights <= 0.0))
        for t, xt, xprev in trajectory.transitions():
            self.assertAlmostEqual(self.prior.step_logprob(xt, xprev, t),
                                   trajectory.prior_logprobs[trajectory.step_index(t)], places=10)


class BatchTests(SimpleTestCase):

    def test_threads_do_not_change_results(self):
        prior = tiny_discrete_policy()
        cfg = EStepConfig(alpha=0.5, num_particles=4)
        serial = run_estep(prior, motif_reward(), cfg, RngStream(3), batch_size=6, threads=1)
        parallel = run_estep(prior, motif_reward(), cfg, RngStream(3), batch_size=6, threads=3)
        for a, b in zip(serial.trajectories, parallel.trajectories):
            for sa, sb in zip(a.states, b.states):
                np.testing.assert_array_equal(sa, sb)
        self.assertEqual(serial.mean_reward, parallel.mean_reward)

    def test_search_raises_reward_over_prior(self):
        prior = tiny_discrete_policy()
        reward = motif_reward()
        cfg = EStepConfig(alpha=0.2, num_particles=16)
        searched = run_estep(prior, reward, cfg, RngStream(4), batch_size=200)
        plain = np.mean([reward.value(traj.x0) for traj in prior.rollout(RngStream(4), 200)])
        self.assertGreater(searched.mean_reward, plain)
        self.assertEqual(searched.fallbacks, 0)

    def test_continuous_guidance_raises_reward(self):
        policy = two_mode_policy(T=10)
        reward = build_reward('linear', {'coefficients': [1.0, 0.0]})
        cfg = EStepConfig(alpha=0.5, gamma=0.9, num_particles=4)
        searched = run_estep(policy, reward, cfg, RngStream(6), batch_size=100)
        plain = np.mean([reward.value(traj.x0) for traj in policy.rollout(RngStream(6), 100)])
        self.assertGreater(searched.mean_reward, plain)
        self.assertTrue(all(traj.version == policy.version for traj in searched.trajectories))


class ProposalShiftTests(SimpleTestCase):

    def setUp(self):
        mixture = GaussianMixture(weights=[1.0], means=[[1.0, -1.0]], stds=[0.7])
        self.policy = ContinuousPolicy.pretrained(make_continuous_schedule(5), mixture, (4,), RngStream(0))
        self.c = np.array([1.0, 2.0])
        self.reward = build_reward('linear', {'coefficients': self.c.tolist()})
        self.xt, self.t = np.array([0.2, -0.4]), 3

    def shift(self, alpha):
        guided = propose_continuous(self.policy, self.xt, self.t, self.reward,
                                    EStepConfig(alpha=alpha, gamma=0.9, num_particles=3), RngStream(1))
        plain = propose_continuous(self.policy, self.xt, self.t, self.reward,
                                   EStepConfig(alpha=alpha, gamma=0.9, num_particles=3, guidance=False), RngStream(1))
        return guided.states - plain.states

    def test_linear_reward_shift_uses_affine_jacobian(self):
        alpha_bar = self.policy.schedule.alpha_bar(self.t)
        jacobian = np.sqrt(alpha_bar) * 0.49 / (alpha_bar * 0.49 + 1.0 - alpha_bar)
        expected = self.policy.sigma_sq(self.t) / 0.5 * 0.9 ** (self.t - 1) * jacobian * self.c
        np.testing.assert_allclose(self.shift(0.5), np.tile(expected, (3, 1)), atol=1e-12)

    def test_doubling_alpha_halves_the_shift(self):
        np.testing.assert_allclose(self.shift(1.0), 0.5 * self.shift(0.5), atol=1e-12)


class ScaleInvarianceTests(SimpleTestCase):

    def test_weights_depend_only_on_reward_over_alpha(self):
        base = ParticleSet(states=np.zeros((3, 1)), proposal_logprobs=np.array([-1.0, -0.5, -2.0]),
                           prior_logprobs=np.array([-1.2, -0.4, -1.0]), q_values=np.array([0.3, -0.1, 0.8]))
        scaled = ParticleSet(states=base.states, proposal_logprobs=base.proposal_logprobs,
                             prior_logprobs=base.prior_logprobs, q_values=4.0 * base.q_values)
        np.testing.assert_allclose(importance_weights(base, EStepConfig(alpha=0.5)).weights,
                                   importance_weights(scaled, EStepConfig(alpha=2.0)).weights, rtol=1e-12)

    def test_guided_search_step_is_invariant_to_joint_scaling(self):
        policy = two_mode_policy()
        xt = np.array([0.3, 0.1])
        small, _ = search_step(policy, xt, 2, build_reward('linear', {'coefficients': [1.0, 0.5]}),
                               EStepConfig(alpha=0.5, num_particles=8), RngStream(9))
        large, _ = search_step(policy, xt, 2, build_reward('linear', {'coefficients': [3.0, 1.5]}),
                               EStepConfig(alpha=1.5, num_particles=8), RngStream(9))
        np.testing.assert_allclose(small.states, large.states, atol=1e-12)
        np.testing.assert_allclose(small.weights, large.weights, rtol=1e-9)


class BlackBoxSearchTests(SimpleTestCase):

    def test_prior_proposal_with_many_particles_matches_soft_optimal_step(self):
        prior = tiny_discrete_policy()
        reward = motif_reward(black_box=True)
        x1 = np.array([2, 2])
        tables = exact_soft_tables(prior, reward, SoftQConfig(0.5, 1.0))
        successors, probs = exact_soft_policy(tables, x1, 1)
        cfg = EStepConfig(alpha=0.5, gamma=1.0, num_particles=64, guidance=False)
        chosen = empirical_next_states(prior, x1, 1, reward, cfg, RngStream(12), 4000)
        self.assertLess(total_variation(chosen, successors, probs, prior.K), 0.05)

    def test_black_box_weights_reduce_to_tilted_q(self):
        prior = tiny_discrete_policy()
        cfg = EStepConfig(alpha=0.5, num_particles=16, guidance=False)
        particles, _ = search_step(prior, np.array([2, 2]), 1, motif_reward(black_box=True), cfg, RngStream(13))
        np.testing.assert_array_equal(particles.proposal_logprobs, particles.prior_logprobs)
        expected = np.exp(particles.q_values / 0.5)
        np.testing.assert_allclose(particles.weights, expected / expected.sum(), rtol=1e-12)
