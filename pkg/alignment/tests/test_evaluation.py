import numpy as np
from django.test import SimpleTestCase

from alignment.continuous import ContinuousPolicy, GaussianMixture
from alignment.estep import EStepConfig, run_estep
from alignment.evaluation import (
    ESTIMATOR_EXACT, ESTIMATOR_SURROGATE, ElboRecord, diversity, elbo_by_path_enumeration, elbo_exact_tabular,
    elbo_surrogate, levenshtein, mode_coverage, ngram_correlation, reward_statistics,
)
from alignment.exceptions import DomainError
from alignment.numkit import RngStream
from alignment.sched import make_continuous_schedule
from alignment.softq import SoftOptimalPolicy, SoftQConfig, exact_soft_tables

from .fixtures import motif_reward, perturb, tiny_discrete_policy


class ElboRecordTests(SimpleTestCase):

    def test_row_round_trip(self):
        record = ElboRecord(epoch=2, elbo_per_trajectory=-1.25, estimator=ESTIMATOR_SURROGATE, elbo_samples=16,
                            mean_reward=0.1, reward_std=0.3, fallbacks=1, policy_version=2)
        row = record.as_row()
        self.assertEqual(len(row), len(ElboRecord.header()))
        self.assertEqual(row[1], '-1.25')
        restored = ElboRecord.from_row(row)
        self.assertEqual(restored.epoch, 2)
        self.assertEqual(restored.estimator, ESTIMATOR_SURROGATE)
        self.assertTrue(np.isnan(restored.diversity))

    def test_exact_estimate_carries_no_sample_count(self):
        with self.assertRaises(DomainError):
            ElboRecord(epoch=0, elbo_per_trajectory=0.0, estimator=ESTIMATOR_EXACT, elbo_samples=5,
                       mean_reward=0.0, reward_std=0.0)


class ExactElboTests(SimpleTestCase):

    def setUp(self):
        self.prior = tiny_discrete_policy()
        self.reward = motif_reward()

    def test_prior_elbo_is_log_partition_without_discount(self):
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 1.0))
        start = tables.initial_index()
        self.assertAlmostEqual(elbo_exact_tabular(self.prior, tables), tables.v[3][start] / 0.5, places=10)

    def test_dynamic_program_matches_path_enumeration(self):
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 1.0))
        policy = perturb(self.prior.snapshot(), scale=0.5)
        self.assertAlmostEqual(elbo_exact_tabular(policy, tables), elbo_by_path_enumeration(policy, tables),
                               places=10)

    def test_optimal_policy_elbo_is_discounted_reward(self):
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 0.9))
        optimal = SoftOptimalPolicy(tables)
        expected_reward_over_alpha = elbo_by_path_enumeration(optimal, tables)
        self.assertAlmostEqual(elbo_exact_tabular(optimal, tables), 0.9 ** 2 * expected_reward_over_alpha,
                               places=10)

    def test_elbo_is_a_lower_bound_on_the_log_partition(self):
        tables = exact_soft_tables(self.prior, self.reward, SoftQConfig(0.5, 1.0))
        policy = perturb(self.prior.snapshot(), scale=0.5)
        log_partition = tables.v[3][tables.initial_index()] / 0.5
        self.assertLessEqual(elbo_exact_tabular(policy, tables), log_partition + 1e-12)


class SurrogateElboTests(SimpleTestCase):

    def test_unguided_single_particle_reduces_to_scaled_reward(self):
        prior = tiny_discrete_policy()
        reward = motif_reward()
        cfg = EStepConfig(alpha=0.5, gamma=1.0, num_particles=1, guidance=False)
        trajectories = run_estep(prior, reward, cfg, RngStream(0), batch_size=20).trajectories
        estimate, count = elbo_surrogate(prior, trajectories, cfg)
        self.assertEqual(count, 20)
        self.assertAlmostEqual(estimate, np.mean([traj.reward for traj in trajectories]) / 0.5, places=10)

    def test_empty_batch_rejected(self):
        with self.assertRaises(DomainError):
            elbo_surrogate(tiny_discrete_policy(), [], EStepConfig(alpha=1.0))


class DiversityTests(SimpleTestCase):

    def test_levenshtein(self):
        self.assertEqual(levenshtein('kitten', 'sitting'), 3)
        self.assertEqual(levenshtein([0, 1], [0, 1]), 0)
        self.assertEqual(levenshtein([], [1, 2]), 2)

    def test_continuous_diversity_scales_and_ignores_order(self):
        samples = RngStream(1).normal((12, 2))
        base = diversity(samples)
        self.assertAlmostEqual(diversity(3.0 * samples), 3.0 * base, places=10)
        self.assertAlmostEqual(diversity(samples[::-1]), base, places=10)

    def test_discrete_diversity_uses_edit_distance(self):
        self.assertEqual(diversity(np.array([[0, 0], [0, 1], [1, 1]])), (1 + 2 + 1) / 3)

    def test_needs_two_samples(self):
        with self.assertRaises(DomainError):
            diversity(np.zeros((1, 2)))


class CoverageAndNaturalnessTests(SimpleTestCase):

    def test_mode_coverage(self):
        mixture = GaussianMixture(weights=[0.5, 0.5], means=[[-2.0, 0.0], [2.0, 0.0]], stds=[0.5, 0.5])
        self.assertEqual(mode_coverage(np.array([[2.1, 0.0], [1.8, 0.2]]), mixture), 0.5)
        self.assertEqual(mode_coverage(np.array([[2.1, 0.0], [-2.0, 0.5]]), mixture), 1.0)
        self.assertEqual(mode_coverage(np.array([[2.1, 0.0]]), mixture, radius=5.0), 1.0)

    def test_pretrained_four_mode_prior_covers_every_mode(self):
        mixture = GaussianMixture(weights=[0.25] * 4, means=[[-3.0, -3.0], [-3.0, 3.0], [3.0, -3.0], [3.0, 3.0]],
                                  stds=[0.5] * 4)
        prior = ContinuousPolicy.pretrained(make_continuous_schedule(10), mixture, (8,), RngStream(0))
        samples = np.array([traj.x0 for traj in prior.rollout(RngStream(1), 200)])
        self.assertEqual(mode_coverage(samples, mixture), 1.0)

    def test_ngram_correlation(self):
        sequences = np.array([[0, 0, 1], [1, 1, 0], [0, 1, 1]])
        self.assertAlmostEqual(ngram_correlation(sequences, sequences, K=2, n=2), 1.0, places=12)
        self.assertTrue(np.isnan(ngram_correlation(np.array([[0, 0, 1, 1, 0]]), sequences, K=2, n=2)))

    def test_reward_statistics(self):
        mean, std = reward_statistics(motif_reward(), np.array([[0, 1], [0, 0]]))
        self.assertEqual(mean, 0.5)
        self.assertEqual(std, 0.5)
