"""
Environment classes for gym-smooth-auctions.
"""

from gym_smooth_auctions.envs.sealed_bid_auction_env import SealedBidAuctionEnv
