"""
Gym Smooth Auctions package.
Registers the sealed-bid auction environment used for self-play equilibrium
learning in smoothed and original auction games.
"""

from gymnasium.envs.registration import register

__version__ = "0.1.0"

register(
    id="SealedBidAuction-v0",
    entry_point="gym_smooth_auctions.envs:SealedBidAuctionEnv",
)
