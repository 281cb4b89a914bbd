"""
Wrappers for gym-smooth-auctions environments.
"""

from gym_smooth_auctions.wrappers.smooth_market import SmoothMarket
