import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from alignment.exceptions import DomainError
from alignment.numkit import (
    RngStream, as_vec, gaussian_logpdf, inverse_cdf_rows, log_sum_exp, make_mlp, mlp_backward,
    mlp_forward, normalize_log_weights, sample_categorical, sample_categorical_n, softmax,
)


class ReductionTests(SimpleTestCase):

    def test_log_sum_exp_is_stable_for_large_values(self):
        self.assertAlmostEqual(log_sum_exp([1000.0, 1000.0]), 1000.0 + np.log(2.0), places=12)
        self.assertAlmostEqual(log_sum_exp([-1000.0, -1000.0]), -1000.0 + np.log(2.0), places=12)

    def test_log_sum_exp_rejects_empty_and_nan(self):
        with self.assertRaises(DomainError):
            log_sum_exp([])
        with self.assertRaises(DomainError):
            log_sum_exp([0.0, np.nan])

    def test_softmax_sums_to_one(self):
        probs = softmax([3.0, -1.0, 700.0])
        self.assertAlmostEqual(float(probs.sum()), 1.0, places=12)
        self.assertTrue(np.all(probs >= 0))

    def test_normalize_log_weights_accepts_minus_inf(self):
        weights, total = normalize_log_weights([0.0, -np.inf, np.log(3.0)])
        np.testing.assert_allclose(weights, [0.25, 0.0, 0.75], atol=1e-15)
        self.assertAlmostEqual(total, np.log(4.0), places=12)

    def test_normalize_log_weights_all_minus_inf_raises(self):
        with self.assertRaises(DomainError):
            normalize_log_weights([-np.inf, -np.inf])

    def test_as_vec_checks_length(self):
        with self.assertRaises(DomainError):
            as_vec([1.0, 2.0], length=3)

    def test_gaussian_logpdf_matches_scipy(self):
        x, mean = np.array([0.3, -1.2]), np.array([0.0, 0.5])
        expected = stats.multivariate_normal(mean, 0.7 * np.eye(2)).logpdf(x)
        self.assertAlmostEqual(float(gaussian_logpdf(x, mean, 0.7)), expected, places=12)


class RngStreamTests(SimpleTestCase):

    def test_same_id_same_numbers(self):
        a = RngStream(5).child(1, 2).random(4)
        b = RngStream(5, 1, 2).random(4)
        np.testing.assert_array_equal(a, b)

    def test_consumption_order_does_not_matter(self):
        root = RngStream(9)
        first = root.child(0).random(3)
        root.child(1).random(100)
        np.testing.assert_array_equal(first, RngStream(9).child(0).random(3))

    def test_distinct_ids_differ(self):
        self.assertFalse(np.array_equal(RngStream(1, 0).random(5), RngStream(1, 1).random(5)))

    def test_negative_seed_raises(self):
        with self.assertRaises(DomainError):
            RngStream(-1)


class CategoricalTests(SimpleTestCase):

    def test_frequencies_pass_chi_square(self):
        probs = np.array([0.1, 0.2, 0.3, 0.4])
        draws = sample_categorical_n(probs, RngStream(0), 20000)
        observed = np.bincount(draws, minlength=4)
        _, p_value = stats.chisquare(observed, probs * draws.size)
        self.assertGreater(p_value, 1e-3)

    def test_zero_probability_never_drawn(self):
        rng = RngStream(2)
        draws = [sample_categorical([0.5, 0.0, 0.5], rng.child(i)) for i in range(500)]
        self.assertNotIn(1, draws)

    def test_invalid_probabilities_raise(self):
        with self.assertRaises(DomainError):
            sample_categorical([0.5, 0.6], RngStream(0))
        with self.assertRaises(DomainError):
            sample_categorical([1.2, -0.2], RngStream(0))

    def test_inverse_cdf_rows_edges(self):
        probs = np.array([[0.25, 0.75], [1.0, 0.0]])
        np.testing.assert_array_equal(inverse_cdf_rows(probs, np.array([0.2, 0.999])), [0, 0])
        np.testing.assert_array_equal(inverse_cdf_rows(probs, np.array([0.3, 0.0])), [1, 0])


class MlpTests(SimpleTestCase):

    def setUp(self):
        self.net = make_mlp((3, 5, 2), RngStream(4), activation='tanh', final_scale=1.0)
        self.x = RngStream(8).normal((4, 3))
        self.upstream = RngStream(9).normal((4, 2))

    def _objective(self):
        return float(np.sum(mlp_forward(self.net, self.x) * self.upstream))

    def test_zero_final_scale_gives_zero_output(self):
        net = make_mlp((3, 4, 2), RngStream(0))
        np.testing.assert_array_equal(mlp_forward(net, self.x), np.zeros((4, 2)))

    def test_parameter_gradients_match_finite_differences(self):
        grads, _ = mlp_backward(self.net, self.x, self.upstream)
        h = 1e-6
        for param, grad in zip(self.net.parameters(), grads):
            index = tuple(np.zeros(param.ndim, dtype=int))
            saved = param[index]
            param[index] = saved + h
            up = self._objective()
            param[index] = saved - h
            down = self._objective()
            param[index] = saved
            self.assertAlmostEqual((up - down) / (2 * h), grad[index], places=6)

    def test_input_gradient_matches_finite_differences(self):
        _, input_grad = mlp_backward(self.net, self.x, self.upstream)
        h = 1e-6
        shifted = self.x.copy()
        shifted[1, 2] += h
        up = float(np.sum(mlp_forward(self.net, shifted) * self.upstream))
        shifted[1, 2] -= 2 * h
        down = float(np.sum(mlp_forward(self.net, shifted) * self.upstream))
        self.assertAlmostEqual((up - down) / (2 * h), input_grad[1, 2], places=6)

    def test_wrong_input_width_raises(self):
        with self.assertRaises(DomainError):
            mlp_forward(self.net, np.zeros((2, 4)))
