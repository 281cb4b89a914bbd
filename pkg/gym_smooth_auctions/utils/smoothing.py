"""
The smooth-market surrogate of a sealed-bid auction.

Allocations are relaxed by a softmax at temperature lambda, the item price is
the sum of all exact payments, and bidders pay that price in proportion to
their fractional allocation. Every item is smoothed independently.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.utils.mechanisms import (
    AuctionOutcome,
    BidderBatch,
    MechanismSpec,
    PaymentRule,
    check_profile,
    run_auction,
    runner_up,
    winners,
)

MIN_TEMPERATURE = 1e-6
DEFAULT_TEMPERATURE = 0.01


def check_temperature(temperature: float) -> float:
    temperature = float(temperature)
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    if temperature < MIN_TEMPERATURE:
        raise ConfigurationError(
            f"temperature {temperature} is below the stability floor {MIN_TEMPERATURE}"
        )
    return temperature


@dataclass(frozen=True)
class SmoothingConfig:
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        check_temperature(self.temperature)


def allocate_soft(bids: BidderBatch, temperature: float) -> np.ndarray:
    """
    Softmax allocations per item.

    Args:
        bids (np.ndarray): Bid profiles, shape (batch, n, m).
        temperature (float): Smoothing strength lambda.

    Returns:
        np.ndarray: Fractional allocations in (0, 1) summing to one per item.
    """
    temperature = check_temperature(temperature)
    # scipy's softmax subtracts the maximum before exponentiating.
    return softmax(np.asarray(bids, dtype=np.float64) / temperature, axis=1)


def price_soft(bids: BidderBatch, spec: MechanismSpec) -> np.ndarray:
    """
    Smoothed item price: the sum over bidders of the exact payments.

    Returns:
        np.ndarray: Shape (batch, m). Highest bid under first price,
            second-highest bid under second price.
    """
    _, payments = run_auction(bids, spec)
    return payments.sum(axis=1)


def smooth_outcome(
    bids: BidderBatch, spec: MechanismSpec, temperature: float
) -> AuctionOutcome:
    allocations = allocate_soft(check_profile(bids, spec), temperature)
    return AuctionOutcome(allocations, price_soft(bids, spec)[:, None, :] * allocations)


def utility_soft(
    values: BidderBatch, bids: BidderBatch, spec: MechanismSpec, temperature: float
) -> np.ndarray:
    """Smoothed ex post utility, sum over items of (v - p_SM) * x_SM, shape (batch, n)."""
    values = check_profile(values, spec, name="values")
    allocations = allocate_soft(check_profile(bids, spec), temperature)
    price = price_soft(bids, spec)[:, None, :]
    return np.sum((values - price) * allocations, axis=2)


def price_soft_jacobian(bids: BidderBatch, spec: MechanismSpec) -> np.ndarray:
    """
    Derivative of the smoothed price with respect to each bidder's own bid.

    At kinks (tied bids) the subgradient of the lowest-index bidder is used.
    """
    bids = check_profile(bids, spec)
    if spec.payment_rule is PaymentRule.FIRST_PRICE:
        holder = winners(bids)
    else:
        holder = runner_up(bids)
    return (np.arange(spec.n_bidders)[None, :, None] == holder[:, None, :]).astype(
        np.float64
    )


def grad_utility_soft_wrt_bid(
    values: BidderBatch, bids: BidderBatch, spec: MechanismSpec, temperature: float
) -> np.ndarray:
    """
    Gradient of every bidder's smoothed utility with respect to its own bids.

    Entry [b, i, k] is d u_i / d bid[b, i, k] with all other bids held fixed:
    (v_ik - p_k) * x_ik * (1 - x_ik) / lambda - x_ik * d p_k / d bid_ik.

    Returns:
        np.ndarray: Shape (batch, n, m).
    """
    values = check_profile(values, spec, name="values")
    temperature = check_temperature(temperature)
    allocations = allocate_soft(check_profile(bids, spec), temperature)
    price = price_soft(bids, spec)[:, None, :]
    d_alloc = allocations * (1.0 - allocations) / temperature
    return (values - price) * d_alloc - allocations * price_soft_jacobian(bids, spec)
