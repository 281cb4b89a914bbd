"""
Exact sealed-bid auction mechanics.

All arrays follow the (batch, n_bidders, n_items) layout. Items are sold
separately, so every operation works item by item along the last axis.
"""

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from gym_smooth_auctions.errors import ConfigurationError

MAX_ITEMS = 8

# A batch of valuation or bid profiles, shape (batch, n_bidders, n_items).
BidderBatch = np.ndarray


class PaymentRule(str, Enum):
    FIRST_PRICE = "fpsb"
    SECOND_PRICE = "spsb"


@dataclass(frozen=True)
class MechanismSpec:
    """
    Definition of a sealed-bid auction of separately sold items.

    Attributes:
        payment_rule (PaymentRule): First- or second-price payments.
        n_bidders (int): Number of bidders, at least 2.
        n_items (int): Number of items, between 1 and 8.
        v_max (float): Upper end of the uniform valuation prior.
    """

    payment_rule: PaymentRule = PaymentRule.FIRST_PRICE
    n_bidders: int = 2
    n_items: int = 1
    v_max: float = 1.0

    def __post_init__(self):
        try:
            rule = PaymentRule(self.payment_rule)
        except ValueError:
            raise ConfigurationError(
                f"unknown payment rule {self.payment_rule!r}"
            ) from None
        object.__setattr__(self, "payment_rule", rule)
        if self.n_bidders < 2:
            raise ConfigurationError(f"n_bidders must be >= 2, got {self.n_bidders}")
        if not 1 <= self.n_items <= MAX_ITEMS:
            raise ConfigurationError(
                f"n_items must lie in [1, {MAX_ITEMS}], got {self.n_items}"
            )
        if not self.v_max > 0:
            raise ConfigurationError(f"v_max must be positive, got {self.v_max}")

    @property
    def profile_shape(self) -> tuple[int, int]:
        return self.n_bidders, self.n_items


class AuctionOutcome(NamedTuple):
    """Allocations and payments, both shaped (batch, n_bidders, n_items)."""

    allocations: np.ndarray
    payments: Optional[np.ndarray] = None


def check_profile(profile: np.ndarray, spec: MechanismSpec, name: str = "bids"):
    """
    Validates that a profile has the (batch, n, m) layout required by spec.

    Raises:
        ConfigurationError: On a shape mismatch or non-finite entries.
    """
    profile = np.asarray(profile, dtype=np.float64)
    if profile.ndim != 3 or profile.shape[1:] != spec.profile_shape:
        raise ConfigurationError(
            f"{name} must have shape (batch, {spec.n_bidders}, {spec.n_items}), "
            f"got {profile.shape}"
        )
    if not np.all(np.isfinite(profile)):
        raise ConfigurationError(f"{name} contain non-finite entries")
    return profile


def winners(bids: np.ndarray) -> np.ndarray:
    """Index of the winning bidder per (batch, item); ties go to the lowest index."""
    # np.argmax returns the first maximal entry.
    return np.argmax(bids, axis=1)


def runner_up(bids: np.ndarray) -> np.ndarray:
    """Index of the highest losing bidder per (batch, item), lowest index at ties."""
    masked = bids.copy()
    np.put_along_axis(masked, winners(bids)[:, None, :], -np.inf, axis=1)
    return np.argmax(masked, axis=1)


def _one_hot(index: np.ndarray, n_bidders: int) -> np.ndarray:
    return (np.arange(n_bidders)[None, :, None] == index[:, None, :]).astype(
        np.float64
    )


def allocate_exact(bids: BidderBatch, spec: MechanismSpec) -> np.ndarray:
    """
    Allocates every item to its highest bidder.

    Args:
        bids (np.ndarray): Bid profiles, shape (batch, n, m).
        spec (MechanismSpec): The auction.

    Returns:
        np.ndarray: Binary allocations, exactly one winner per (batch, item).
    """
    bids = check_profile(bids, spec)
    return _one_hot(winners(bids), spec.n_bidders)


def payments_exact(
    bids: BidderBatch, allocations: np.ndarray, spec: MechanismSpec
) -> np.ndarray:
    """
    Computes payments for exact allocations.

    First price: the winner pays its own bid. Second price: the winner pays
    the highest losing bid. Losers pay nothing.
    """
    bids = check_profile(bids, spec)
    allocations = check_profile(allocations, spec, name="allocations")
    if spec.payment_rule is PaymentRule.FIRST_PRICE:
        return allocations * bids
    second = np.take_along_axis(bids, runner_up(bids)[:, None, :], axis=1)
    return allocations * second


def run_auction(bids: BidderBatch, spec: MechanismSpec) -> AuctionOutcome:
    allocations = allocate_exact(bids, spec)
    return AuctionOutcome(allocations, payments_exact(bids, allocations, spec))


def utility_exact(
    values: BidderBatch, bids: BidderBatch, spec: MechanismSpec
) -> np.ndarray:
    """
    Risk-neutral ex post utilities summed over items.

    Returns:
        np.ndarray: Shape (batch, n), sum over items of v * x - p.
    """
    values = check_profile(values, spec, name="values")
    bids = check_profile(bids, spec)
    if values.shape != bids.shape:
        raise ConfigurationError(
            f"values {values.shape} and bids {bids.shape} differ in batch size"
        )
    allocations, payments = run_auction(bids, spec)
    return np.sum(values * allocations - payments, axis=2)
