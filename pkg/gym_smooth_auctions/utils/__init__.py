"""
Auction mechanics for gym-smooth-auctions.
Includes the exact mechanisms and their smooth-market relaxation.
"""

from gym_smooth_auctions.utils.mechanisms import (
    AuctionOutcome,
    MechanismSpec,
    PaymentRule,
    allocate_exact,
    payments_exact,
    run_auction,
    utility_exact,
)
from gym_smooth_auctions.utils.smoothing import (
    SmoothingConfig,
    allocate_soft,
    grad_utility_soft_wrt_bid,
    price_soft,
    smooth_outcome,
    utility_soft,
)
