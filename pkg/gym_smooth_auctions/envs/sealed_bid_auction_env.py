import gymnasium as gym
import numpy as np
from gymnasium import spaces

from gym_smooth_auctions.evaluation.metrics import bne_strategy
from gym_smooth_auctions.utils.mechanisms import MechanismSpec, run_auction


class SealedBidAuctionEnv(gym.Env):
    """
    A Gymnasium environment for one-shot sealed-bid auctions of separate items.

    Each episode is a single round: reset() draws a batch of i.i.d. uniform
    valuation profiles and step() collects the bids, runs the mechanism and
    ends the episode.

    Attributes:
        mechanism (MechanismSpec): Payment rule, bidder and item counts, v_max.
        batch_size (int): Number of valuation profiles per episode.
        self_play (bool): If True the action is the full bid profile of all
            bidders. Otherwise the action holds bidder 0's bids and the
            opponents play the analytic equilibrium strategy.
        valuations (np.ndarray): Current valuations, shape (batch, n, m).
    """

    metadata = {"render_modes": ["ansi"]}

    def __init__(
        self,
        render_mode=None,
        mechanism="fpsb",
        n_bidders=2,
        n_items=1,
        batch_size=2**14,
        v_max=1.0,
        self_play=True,
    ):
        """
        Initialize the sealed-bid auction environment.

        Args:
            render_mode (str, optional): "ansi" for a text summary.
            mechanism (str): "fpsb" (first price) or "spsb" (second price).
            n_bidders (int): Number of bidders.
            n_items (int): Number of separately sold items.
            batch_size (int): Valuation profiles drawn per reset.
            v_max (float): Upper end of the uniform prior.
            self_play (bool): If True, the agent bids for every bidder.
        """
        self.render_mode = render_mode
        self.mechanism = MechanismSpec(mechanism, n_bidders, n_items, float(v_max))
        self.batch_size = int(batch_size)
        self.self_play = self_play
        self._opponent = bne_strategy(self.mechanism)

        profile = (self.batch_size, n_bidders, n_items)
        self.observation_space = spaces.Box(
            low=0.0, high=self.mechanism.v_max, shape=profile, dtype=np.float64
        )
        self.action_space = self._make_action_space()

        self.valuations = None
        self.last_bids = None
        self.last_utilities = None

    def _make_action_space(self):
        if self.self_play:
            shape = (self.batch_size, *self.mechanism.profile_shape)
        else:
            shape = (self.batch_size, self.mechanism.n_items)
        return spaces.Box(low=0.0, high=np.inf, shape=shape, dtype=np.float64)

    def reset(self, seed=None, options=None):
        super().reset(seed=seed)

        if options and "self_play" in options:
            self.self_play = options["self_play"]
            self.action_space = self._make_action_space()

        self.valuations = self.np_random.uniform(
            0.0, self.mechanism.v_max, size=self.observation_space.shape
        )
        self.last_bids = None
        self.last_utilities = None
        return self.valuations, {}

    def step(self, action):
        bids = np.asarray(action, dtype=np.float64)

        if bids.shape != self.action_space.shape:
            return self.valuations, 0.0, True, False, {"error": "invalid_action_shape"}
        if not np.all(np.isfinite(bids)) or np.any(bids < 0):
            return self.valuations, 0.0, True, False, {"error": "invalid_bids"}

        if not self.self_play:
            opponents = self._opponent(self.valuations[:, 1:, :])
            bids = np.concatenate([bids[:, None, :], opponents], axis=1)

        allocations, payments = run_auction(bids, self.mechanism)
        utilities = np.sum(self.valuations * allocations - payments, axis=2)

        self.last_bids = bids
        self.last_utilities = utilities
        info = {
            "bids": bids,
            "allocations": allocations,
            "payments": payments,
            "utilities": utilities,
        }
        # Reward is bidder 0's mean ex post utility over the batch.
        return self.valuations, float(utilities[:, 0].mean()), True, False, info

    def render(self):
        if self.render_mode != "ansi":
            return None
        m = self.mechanism
        lines = [
            f"{m.payment_rule.value.upper()} auction, {m.n_bidders} bidders, "
            f"{m.n_items} item(s), batch {self.batch_size}"
        ]
        if self.last_utilities is not None:
            means = ", ".join(f"{u:.4f}" for u in self.last_utilities.mean(axis=0))
            lines.append(f"mean utilities: {means}")
        return "\n".join(lines)
