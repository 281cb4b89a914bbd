import gymnasium as gym
import numpy as np

from gym_smooth_auctions.utils.smoothing import check_temperature, smooth_outcome


class SmoothMarket(gym.Wrapper):
    """
    A wrapper that replaces the exact auction outcome by its smooth-market
    relaxation at temperature lambda.

    Items are split by a softmax over the bids and the summed exact payments
    are charged in proportion to the fractional allocations. The reward
    becomes bidder 0's mean smoothed utility. The exact values stay available
    in info under "exact_utilities" and "exact_reward".
    """

    def __init__(self, env, temperature=0.01):
        """
        Initialize the SmoothMarket wrapper.

        Args:
            env (gym.Env): The environment to wrap (usually SealedBidAuctionEnv).
            temperature (float): Softmax temperature lambda.
        """
        super().__init__(env)
        self.temperature = check_temperature(temperature)

    def step(self, action):
        obs, reward, terminated, truncated, info = self.env.step(action)
        if "error" in info:
            return obs, reward, terminated, truncated, info

        base = self.env.unwrapped
        allocations, payments = smooth_outcome(
            info["bids"], base.mechanism, self.temperature
        )
        utilities = np.sum(base.valuations * allocations - payments, axis=2)

        info = dict(
            info,
            allocations=allocations,
            payments=payments,
            utilities=utilities,
            exact_utilities=info["utilities"],
            exact_reward=reward,
        )
        return obs, float(utilities[:, 0].mean()), terminated, truncated, info
