"""
Equilibrium-quality metrics: analytic BNE references, the L2 distance to the
BNE and the grid-based estimate of the worst interim utility loss.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from gym_smooth_auctions.agents.policy import PolicyNet
from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.utils.mechanisms import MechanismSpec, PaymentRule

logger = logging.getLogger(__name__)

OPPONENT_CHUNK = 2**12
JOINT_GRID_MAX_ITEMS = 2


@dataclass(frozen=True)
class BneReference:
    """Item-wise linear equilibrium strategy v -> slope * v."""

    mechanism: MechanismSpec
    slope: float

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return self.slope * np.asarray(values, dtype=np.float64)

    def as_net(self) -> PolicyNet:
        return PolicyNet.linear(self.mechanism.n_items, self.slope)


@dataclass(frozen=True)
class EvaluationConfig:
    """
    Sample sizes of the evaluation scheme.

    Attributes:
        eval_batch (int): Prior samples for the L2 distance.
        n_own (int): Own valuations at which utility loss is measured.
        n_grid (int): Alternative bids per item dimension, spanning [0, v_max].
        n_opp (int): Opponent valuation samples per interim utility.
        utility_loss (bool): Whether training records include utility loss.
    """

    eval_batch: int = 2**16
    n_own: int = 2**8
    n_grid: int = 2**6
    n_opp: int = 2**14
    utility_loss: bool = True

    def __post_init__(self):
        for name in ("eval_batch", "n_own", "n_grid", "n_opp"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.n_grid < 2:
            raise ConfigurationError("n_grid must be >= 2 to span [0, v_max]")


@dataclass(frozen=True)
class MetricRecord:
    iteration: int
    l2: Optional[float]
    utility_loss: Optional[float]
    grad_variance: Optional[float]
    seconds_per_iter: float

    def as_row(self, timing: bool = True) -> list:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return [
            str(self.iteration),
            fmt(self.l2),
            fmt(self.utility_loss),
            fmt(self.grad_variance),
            fmt(self.seconds_per_iter) if timing else "",
        ]


METRIC_COLUMNS = ["iteration", "l2", "utility_loss", "grad_variance", "seconds_per_iter"]


def bne_strategy(spec: MechanismSpec) -> Optional[BneReference]:
    """
    Closed-form symmetric BNE for i.i.d. uniform priors, applied item-wise.

    Second price: truthful bidding. First price: (n - 1) / n times the value.
    Returns None when no analytic BNE is known.
    """
    if spec.payment_rule is PaymentRule.SECOND_PRICE:
        return BneReference(spec, 1.0)
    if spec.payment_rule is PaymentRule.FIRST_PRICE:
        return BneReference(spec, (spec.n_bidders - 1) / spec.n_bidders)
    return None


def l2_distance(
    net: PolicyNet,
    bne: BneReference,
    n_eval: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Root mean squared distance between net and BNE bids over prior samples and items."""
    if n_eval < 1:
        raise ConfigurationError(f"n_eval must be >= 1, got {n_eval}")
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = bne.mechanism
    values = rng.uniform(0.0, spec.v_max, size=(n_eval, spec.n_items))
    return float(np.sqrt(np.mean((net.bid(values) - bne(values)) ** 2)))


def _interim_tables(
    net: PolicyNet,
    spec: MechanismSpec,
    candidates: np.ndarray,
    n_opp: int,
    rng: np.random.Generator,
    chunk_size: int,
):
    """
    Win probabilities and expected payments of bidder 0 per item.

    Args:
        candidates (np.ndarray): Bids to evaluate, shape (k, m).

    Returns:
        tuple[np.ndarray, np.ndarray]: Both of shape (k, m).
    """
    m = spec.n_items
    wins = np.zeros(candidates.shape)
    paid = np.zeros(candidates.shape)
    remaining = n_opp
    while remaining > 0:
        size = min(chunk_size, remaining)
        remaining -= size
        opp_values = rng.uniform(0.0, spec.v_max, size=(size * (spec.n_bidders - 1), m))
        opp_bids = net.bid(opp_values).reshape(size, spec.n_bidders - 1, m)
        highest = np.sort(opp_bids.max(axis=1), axis=0)
        for k in range(m):
            # Bidder 0 has the lowest index and wins ties.
            count = np.searchsorted(highest[:, k], candidates[:, k], side="right")
            wins[:, k] += count
            if spec.payment_rule is PaymentRule.SECOND_PRICE:
                cumulative = np.concatenate([[0.0], np.cumsum(highest[:, k])])
                paid[:, k] += cumulative[count]
    wins /= n_opp
    if spec.payment_rule is PaymentRule.FIRST_PRICE:
        paid = candidates * wins
    else:
        paid /= n_opp
    return wins, paid


def utility_loss_max(
    net: PolicyNet,
    spec: MechanismSpec,
    n_own: int = 2**8,
    n_grid: int = 2**6,
    n_opp: int = 2**14,
    rng: Optional[np.random.Generator] = None,
    chunk_size: int = OPPONENT_CHUNK,
) -> float:
    """
    Estimates the worst interim utility loss of the shared strategy.

    For n_own sampled own valuations the best response is searched over an
    equidistant grid of n_grid bids per item on [0, v_max]. Interim utilities
    are averaged over n_opp opponent samples, processed in chunks. Up to two
    items the grid is searched jointly, beyond that item by item.

    Returns:
        float: Max over own valuations of best-response minus played utility,
            clamped at zero.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    m = spec.n_items
    own = rng.uniform(0.0, spec.v_max, size=(n_own, m))
    played = net.bid(own)
    grid = np.linspace(0.0, spec.v_max, n_grid)

    candidates = np.concatenate([np.repeat(grid[:, None], m, axis=1), played], axis=0)
    wins, paid = _interim_tables(net, spec, candidates, n_opp, rng, chunk_size)
    grid_wins, grid_paid = wins[:n_grid], paid[:n_grid]
    play_wins, play_paid = wins[n_grid:], paid[n_grid:]

    # (n_own, n_grid, m): utility of each grid bid on each item.
    per_item = own[:, None, :] * grid_wins[None] - grid_paid[None]
    if m <= JOINT_GRID_MAX_ITEMS:
        joint = per_item[:, :, 0]
        for k in range(1, m):
            joint = joint[:, :, None] + per_item[:, None, :, k]
            joint = joint.reshape(n_own, -1)
        best = joint.max(axis=1)
    else:
        best = per_item.max(axis=1).sum(axis=1)
    played_utility = np.sum(own * play_wins - play_paid, axis=1)

    loss = float(np.max(best - played_utility))
    if loss < 0:
        logger.warning("negative utility loss estimate %.3g clamped to zero", loss)
        loss = 0.0
    return loss


def utility_loss_noise_floor(
    spec: MechanismSpec,
    n_own: int = 2**8,
    n_grid: int = 2**6,
    n_opp: int = 2**14,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Utility loss of the analytic BNE under the same sample sizes."""
    bne = bne_strategy(spec)
    if bne is None:
        raise ConfigurationError("no analytic BNE known for this mechanism")
    return utility_loss_max(bne.as_net(), spec, n_own, n_grid, n_opp, rng)
