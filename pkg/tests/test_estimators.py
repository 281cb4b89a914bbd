import unittest
import numpy as np
import pytest
from gym_smooth_auctions.agents.estimators import (
    EstimatorConfig,
    EstimatorKind,
    GradientEstimate,
    es_gradient,
    estimate_es,
    estimate_reinforce,
    estimate_sm,
    gradient_variance,
    make_estimator,
    score_function_terms,
)
from gym_smooth_auctions.agents.policy import PolicyNet, pretrain
from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.evaluation.oracle import sm_gradient_quadrature
from gym_smooth_auctions.utils.mechanisms import MechanismSpec
from gym_smooth_auctions.utils.smoothing import grad_utility_soft_wrt_bid


def pretrained_net(seed, n_items=1, mixed=False):
    rng = np.random.default_rng(seed)
    net = PolicyNet.for_items(n_items, mixed=mixed, rng=rng)
    return pretrain(net, lambda size: rng.uniform(size=(size, n_items)))


def valuations(rng, size, spec):
    return rng.uniform(0.0, spec.v_max, size=(size, *spec.profile_shape))


class TestEstimatorConfig(unittest.TestCase):
    def test_string_kind(self):
        self.assertIs(EstimatorConfig("es").kind, EstimatorKind.ES)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            EstimatorConfig("adam")
        with self.assertRaises(ConfigurationError):
            EstimatorConfig(temperature=0.0)
        with self.assertRaises(ConfigurationError):
            EstimatorConfig("es", population_size=1)
        with self.assertRaises(ConfigurationError):
            EstimatorConfig("es", population_size=7, antithetic=True)
        with self.assertRaises(ConfigurationError):
            EstimatorConfig("es", sigma=0.0)

    def test_non_finite_gradient(self):
        with self.assertRaises(ConfigurationError):
            GradientEstimate(np.array([1.0, np.inf]), EstimatorKind.SM, 1)


class TestSmoothMarketEstimator(unittest.TestCase):
    def setUp(self):
        self.spec = MechanismSpec("fpsb")
        self.net = pretrained_net(0)
        self.rng = np.random.default_rng(1)

    def test_shape_and_finite(self):
        est = estimate_sm(self.net, valuations(self.rng, 1024, self.spec), self.spec, 0.01)
        self.assertEqual(est.grad.shape, (self.net.n_params,))
        self.assertTrue(np.all(np.isfinite(est.grad)))
        self.assertEqual(est.sample_size, 1024)
        self.assertIs(est.estimator, EstimatorKind.SM)

    def test_batch_decomposition(self):
        values = valuations(self.rng, 2048, self.spec)
        full = estimate_sm(self.net, values, self.spec, 0.01).grad
        halves = [estimate_sm(self.net, part, self.spec, 0.01).grad for part in (values[:1024], values[1024:])]
        np.testing.assert_allclose(full, 0.5 * (halves[0] + halves[1]), rtol=1e-10, atol=1e-13)

    def test_multi_item(self):
        spec = MechanismSpec("spsb", n_bidders=3, n_items=2)
        net = pretrained_net(2, n_items=2)
        est = estimate_sm(net, valuations(self.rng, 512, spec), spec, 0.01)
        self.assertEqual(est.grad.shape, (net.n_params,))

    def test_identical_valuations_match_single_sample(self):
        single = valuations(self.rng, 1, self.spec)
        repeated = np.repeat(single, 64, axis=0)
        np.testing.assert_allclose(
            estimate_sm(self.net, repeated, self.spec, 0.01).grad,
            estimate_sm(self.net, single, self.spec, 0.01).grad,
            rtol=1e-12,
            atol=1e-15,
        )

    def test_zero_bids_are_pushed_up(self):
        # All bids 1e-9: a tie that the exact auction gives no slope for.
        net = PolicyNet.linear(1, 0.0, intercept=1e-9)
        values = valuations(self.rng, 4096, self.spec)
        d_bids = grad_utility_soft_wrt_bid(values, np.full(values.shape, 1e-9), self.spec, 0.01)
        self.assertTrue(np.all(d_bids[values > 0.05] > 0))
        grad = estimate_sm(net, values, self.spec, 0.01).grad
        # Flat layout [slope, intercept]: both move bids upwards.
        self.assertTrue(np.all(grad > 0))

    @pytest.mark.slow
    def test_unbiased_against_quadrature(self):
        lam, chunks, chunk = 0.01, 32, 2**11
        for seed in range(20):
            net = pretrained_net(10 + seed)
            reference = sm_gradient_quadrature(net, lam)
            rng = np.random.default_rng(seed)
            grads = np.stack(
                [estimate_sm(net, valuations(rng, chunk, self.spec), self.spec, lam).grad for _ in range(chunks)]
            )
            mean = grads.mean(axis=0)
            se = np.maximum(grads.std(axis=0, ddof=1) / np.sqrt(chunks), 1e-6)
            z = np.abs(mean - reference) / se
            self.assertGreaterEqual(np.mean(z <= 3.0), 0.9, f"net {seed}")
            self.assertLess(np.max(z), 6.0, f"net {seed}")


class TestEvolutionStrategies(unittest.TestCase):
    def test_quadratic(self):
        # Gaussian smoothing keeps the gradient of -|theta|^2 at -2 theta.
        theta = np.array([0.5, -1.0, 0.25, 2.0])
        sigma_eff = 1.0 / np.sqrt(theta.size)
        grad, var = es_gradient(
            lambda th: -np.dot(th, th), theta, sigma_eff, 10**5, np.random.default_rng(0)
        )
        se = np.sqrt(var / 10**5)
        self.assertTrue(np.all(np.abs(grad + 2 * theta) <= 4 * se))

    def test_constant_objective(self):
        theta, sigma_eff, repeats = np.zeros(4), 0.5, 200
        rng = np.random.default_rng(8)
        spread = {}
        for pop in (16, 256):
            grads = np.stack(
                [es_gradient(lambda th: 3.0, theta, sigma_eff, pop, rng)[0] for _ in range(repeats)]
            )
            expected = 3.0 / (sigma_eff * np.sqrt(pop))
            self.assertTrue(np.all(np.abs(grads.mean(axis=0)) <= 4 * expected / np.sqrt(repeats)))
            spread[pop] = np.sqrt(np.mean(grads**2))
            self.assertAlmostEqual(spread[pop] / expected, 1.0, delta=0.15)
        self.assertAlmostEqual(spread[16] / spread[256], 4.0, delta=0.8)

    def test_antithetic_lowers_variance(self):
        theta = np.ones(4)
        objective = lambda th: -np.dot(th, th)
        _, plain = es_gradient(objective, theta, 0.5, 2000, np.random.default_rng(1))
        _, mirrored = es_gradient(
            objective, theta, 0.5, 2000, np.random.default_rng(1), antithetic=True
        )
        # Variance of the mean: pairs count once.
        self.assertTrue(np.all(mirrored / 1000 < plain / 2000))

    def test_order_independent_streams(self):
        theta = np.zeros(3)
        first, _ = es_gradient(np.sum, theta, 0.1, 16, np.random.default_rng(7))
        second, _ = es_gradient(np.sum, theta, 0.1, 16, np.random.default_rng(7))
        np.testing.assert_array_equal(first, second)

    def test_on_auction(self):
        spec = MechanismSpec("fpsb")
        net = pretrained_net(3)
        config = EstimatorConfig("es", population_size=8, baseline=True)
        est = estimate_es(net, valuations(np.random.default_rng(2), 256, spec), spec, config, np.random.default_rng(3))
        self.assertEqual(est.grad.shape, (net.n_params,))
        self.assertEqual(est.sample_size, 256 * 8)
        self.assertEqual(est.per_parameter_variance.shape, (net.n_params,))


class TestReinforce(unittest.TestCase):
    def test_linear_reward(self):
        rng = np.random.default_rng(0)
        c, mu, sigma, n = 1.5, 0.7, 0.2, 10**5
        actions = mu + sigma * rng.standard_normal(n)
        d_mean, d_std = score_function_terms(c * actions, actions, mu, sigma)
        se = d_mean.std(ddof=1) / np.sqrt(n)
        self.assertLessEqual(abs(d_mean.mean() - c), 3 * se)
        # E[c a (z^2 - 1)] / sigma = 0 for a = mu + sigma z
        self.assertLessEqual(abs(d_std.mean()), 4 * d_std.std(ddof=1) / np.sqrt(n))

    def test_variance_grows_as_std_shrinks(self):
        spec = MechanismSpec("fpsb")
        rng = np.random.default_rng(12)
        variances = []
        for std in (0.1, 0.01):
            net = pretrained_net(7, mixed=True)
            # Constant scale head: rho = softplus^-1(std).
            net.weights[-1][:, 1] = 0.0
            net.biases[-1][1] = np.log(np.expm1(std))
            estimator = lambda n, v: estimate_reinforce(n, v, spec, rng)
            variances.append(
                gradient_variance(net, lambda: valuations(rng, 1024, spec), estimator, 10)
            )
        self.assertGreater(variances[1], 10 * variances[0])

    def test_needs_mixed_head(self):
        spec = MechanismSpec("fpsb")
        with self.assertRaises(ConfigurationError):
            estimate_reinforce(PolicyNet.for_items(1), valuations(np.random.default_rng(0), 8, spec), spec, np.random.default_rng(1))

    def test_on_auction(self):
        spec = MechanismSpec("fpsb", n_items=2)
        net = pretrained_net(4, n_items=2, mixed=True)
        values = valuations(np.random.default_rng(5), 512, spec)
        est = estimate_reinforce(net, values, spec, np.random.default_rng(6))
        self.assertEqual(est.grad.shape, (net.n_params,))
        self.assertTrue(np.all(np.isfinite(est.grad)))

    def test_custom_reward(self):
        spec = MechanismSpec("fpsb")
        net = pretrained_net(5, mixed=True)
        values = valuations(np.random.default_rng(5), 64, spec)
        est = estimate_reinforce(
            net, values, spec, np.random.default_rng(6), reward_fn=lambda bids: np.zeros(bids.shape[:2])
        )
        np.testing.assert_array_equal(est.grad, 0.0)


class TestGradientVariance(unittest.TestCase):
    def setUp(self):
        self.spec = MechanismSpec("fpsb")
        self.net = pretrained_net(0)
        self.rng = np.random.default_rng(11)

    def _sampler(self, size):
        return lambda: valuations(self.rng, size, self.spec)

    def test_deterministic_stub(self):
        stub = lambda net, values: GradientEstimate(np.ones(net.n_params), EstimatorKind.SM, 1)
        self.assertEqual(gradient_variance(self.net, self._sampler(4), stub, 3), 0.0)

    def test_needs_two_repeats(self):
        stub = lambda net, values: GradientEstimate(np.ones(net.n_params), EstimatorKind.SM, 1)
        with self.assertRaises(ConfigurationError):
            gradient_variance(self.net, self._sampler(4), stub, 1)

    def test_smooth_market_below_es(self):
        batch, pop = 2**14, 64
        sm = make_estimator(EstimatorConfig("sm", temperature=0.01), self.spec, self.rng)
        es = make_estimator(EstimatorConfig("es", population_size=pop), self.spec, self.rng)
        sm_var = gradient_variance(self.net, self._sampler(batch), sm, 5)
        es_var = gradient_variance(self.net, self._sampler(batch // pop), es, 5)
        self.assertLess(sm_var, es_var)

    def test_grows_as_temperature_falls(self):
        variances = [
            gradient_variance(
                self.net,
                self._sampler(2**14),
                make_estimator(EstimatorConfig(temperature=lam), self.spec, self.rng),
                10,
            )
            for lam in (0.05, 0.01, 0.002)
        ]
        self.assertTrue(variances[0] < variances[1] < variances[2])


if __name__ == "__main__":
    unittest.main()
