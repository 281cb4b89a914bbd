import unittest
import numpy as np
from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.utils.mechanisms import (
    MechanismSpec,
    PaymentRule,
    allocate_exact,
    payments_exact,
    run_auction,
    utility_exact,
)


def profile(*bids):
    """Single-profile batch, one item: profile(0.3, 0.5) -> shape (1, 2, 1)."""
    return np.array(bids, dtype=np.float64).reshape(1, -1, 1)


class TestMechanismSpec(unittest.TestCase):
    def test_defaults(self):
        spec = MechanismSpec()
        self.assertIs(spec.payment_rule, PaymentRule.FIRST_PRICE)
        self.assertEqual(spec.profile_shape, (2, 1))

    def test_string_rule(self):
        self.assertIs(MechanismSpec("spsb").payment_rule, PaymentRule.SECOND_PRICE)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            MechanismSpec("vcg")
        with self.assertRaises(ConfigurationError):
            MechanismSpec(n_bidders=1)
        with self.assertRaises(ConfigurationError):
            MechanismSpec(n_items=9)
        with self.assertRaises(ConfigurationError):
            MechanismSpec(v_max=0.0)


class TestAllocation(unittest.TestCase):
    def setUp(self):
        self.fpsb = MechanismSpec("fpsb")

    def test_strict_argmax(self):
        alloc = allocate_exact(profile(0.3, 0.5), self.fpsb)
        np.testing.assert_array_equal(alloc[0, :, 0], [0, 1])

    def test_tie_goes_to_lowest_index(self):
        alloc = allocate_exact(profile(0.4, 0.4), self.fpsb)
        np.testing.assert_array_equal(alloc[0, :, 0], [1, 0])

    def test_three_bidders(self):
        spec = MechanismSpec("fpsb", n_bidders=3)
        alloc = allocate_exact(profile(0.2, 0.9, 0.5), spec)
        np.testing.assert_array_equal(alloc[0, :, 0], [0, 1, 0])

    def test_one_winner_per_item(self):
        spec = MechanismSpec("spsb", n_bidders=4, n_items=3)
        bids = np.random.default_rng(0).uniform(size=(500, 4, 3))
        alloc = allocate_exact(bids, spec)
        np.testing.assert_array_equal(alloc.sum(axis=1), np.ones((500, 3)))

    def test_shape_mismatch(self):
        with self.assertRaises(ConfigurationError):
            allocate_exact(np.zeros((4, 3, 1)), self.fpsb)
        with self.assertRaises(ConfigurationError):
            allocate_exact(np.zeros((4, 2)), self.fpsb)

    def test_non_finite(self):
        with self.assertRaises(ConfigurationError):
            allocate_exact(profile(0.1, np.nan), self.fpsb)


class TestPayments(unittest.TestCase):
    def test_first_price(self):
        spec = MechanismSpec("fpsb")
        bids = profile(0.3, 0.5)
        pay = payments_exact(bids, allocate_exact(bids, spec), spec)
        np.testing.assert_allclose(pay[0, :, 0], [0.0, 0.5])

    def test_second_price(self):
        spec = MechanismSpec("spsb")
        bids = profile(0.3, 0.5)
        pay = payments_exact(bids, allocate_exact(bids, spec), spec)
        np.testing.assert_allclose(pay[0, :, 0], [0.0, 0.3])

    def test_second_price_three_bidders(self):
        spec = MechanismSpec("spsb", n_bidders=3)
        _, pay = run_auction(profile(0.7, 0.2, 0.5), spec)
        np.testing.assert_allclose(pay[0, :, 0], [0.5, 0.0, 0.0])


class TestUtility(unittest.TestCase):
    def test_first_price_winner(self):
        u = utility_exact(profile(1.0, 0.8), profile(0.5, 0.4), MechanismSpec("fpsb"))
        np.testing.assert_allclose(u[0], [0.5, 0.0])

    def test_second_price_truthful(self):
        u = utility_exact(profile(1.0, 0.8), profile(1.0, 0.8), MechanismSpec("spsb"))
        np.testing.assert_allclose(u[0], [0.2, 0.0])

    def test_items_are_summed(self):
        spec = MechanismSpec("fpsb", n_items=2)
        values = np.array([[[1.0, 1.0], [0.0, 0.0]]])
        bids = np.array([[[0.4, 0.6], [0.0, 0.0]]])
        u = utility_exact(values, bids, spec)
        # Per item: 0.6 + 0.4
        np.testing.assert_allclose(u[0], [1.0, 0.0])

    def test_batch_mismatch(self):
        with self.assertRaises(ConfigurationError):
            utility_exact(np.zeros((3, 2, 1)), np.zeros((4, 2, 1)), MechanismSpec())


class TestRandomProfiles(unittest.TestCase):
    """Payment and utility rules on continuous random bids, where ties have probability zero."""

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def _bids(self, n, m, size=2000):
        return self.rng.uniform(size=(size, n, m))

    def test_second_price_winner_pays_highest_losing_bid(self):
        for n in (2, 3, 5):
            spec = MechanismSpec("spsb", n_bidders=n, n_items=2)
            bids = self._bids(n, 2)
            alloc, pay = run_auction(bids, spec)
            winner = alloc.astype(bool)
            losing = np.where(winner, -np.inf, bids).max(axis=1)
            np.testing.assert_array_equal(pay.sum(axis=1), losing)
            np.testing.assert_array_equal(pay[~winner], 0.0)

    def test_first_price_winner_pays_own_bid(self):
        for n in (2, 4):
            spec = MechanismSpec("fpsb", n_bidders=n, n_items=3)
            bids = self._bids(n, 3)
            alloc, pay = run_auction(bids, spec)
            winner = alloc.astype(bool)
            np.testing.assert_array_equal(pay[winner], bids[winner])
            np.testing.assert_array_equal(pay[~winner], 0.0)
            np.testing.assert_array_equal(pay.sum(axis=1), bids.max(axis=1))

    def test_utility_is_sum_over_item_slices(self):
        for rule in ("fpsb", "spsb"):
            spec = MechanismSpec(rule, n_bidders=3, n_items=4)
            single = MechanismSpec(rule, n_bidders=3, n_items=1)
            values, bids = self._bids(3, 4), self._bids(3, 4)
            sliced = sum(
                utility_exact(values[:, :, k : k + 1], bids[:, :, k : k + 1], single)
                for k in range(4)
            )
            np.testing.assert_allclose(utility_exact(values, bids, spec), sliced, rtol=0, atol=1e-14)

    def test_single_item_loser_gets_nothing(self):
        for rule in ("fpsb", "spsb"):
            spec = MechanismSpec(rule, n_bidders=4)
            values, bids = self._bids(4, 1), self._bids(4, 1)
            loser = ~allocate_exact(bids, spec)[:, :, 0].astype(bool)
            u = utility_exact(values, bids, spec)
            self.assertTrue(loser.any())
            np.testing.assert_array_equal(u[loser], 0.0)


if __name__ == "__main__":
    unittest.main()
