"""
Verification oracles for the two-bidder first-price auction with uniform
priors, where the opponent bids linearly, beta_2(v_2) = s * v_2.

Closed forms for the original and smoothed interim utilities, Gauss-Legendre
quadrature of the smoothed interim utility, the linear ex ante error bound and
a deterministic quadrature of the smoothed ex ante gradient of a policy.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import expit, roots_legendre, spence

from gym_smooth_auctions.agents.policy import PolicyNet
from gym_smooth_auctions.errors import ConfigurationError, DomainError
from gym_smooth_auctions.utils.smoothing import check_temperature

logger = logging.getLogger(__name__)

MIN_NODES = 16
ORACLE_COLUMNS = ["v1", "b1", "lambda", "exact_error", "quadrature_error", "bound"]


def dilog(x):
    """
    Dilogarithm Li_2(x) = sum_k x^k / k^2 for real x <= 1.

    Raises:
        DomainError: If any x > 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x > 1):
        raise DomainError("dilog is only defined here for x <= 1")
    # scipy's spence(z) is Li_2(1 - z).
    result = spence(1.0 - x)
    return float(result) if result.ndim == 0 else result


def _check_linear_domain(b1, s):
    if not 0 < s <= 1:
        raise DomainError(f"opponent slope s must lie in (0, 1], got {s}")
    b1 = np.asarray(b1, dtype=np.float64)
    if np.any(b1 < 0) or np.any(b1 > s):
        raise DomainError(f"own bid must lie in [0, s={s}]")


def _as_output(x):
    return float(x) if np.ndim(x) == 0 else x


def interim_utility_original(v1, b1, s):
    """Interim utility of bidder 1 bidding b1 against s * v2: (v1 - b1) * b1 / s."""
    _check_linear_domain(b1, s)
    return _as_output((np.asarray(v1) - np.asarray(b1)) * np.asarray(b1) / s)


def interim_utility_smooth(v1, b1, s, temperature):
    """
    Closed form of the smoothed interim utility.

    The integral over v2 is split at the price kink s * v2 = b1. Below it the
    price is b1 and the softmax integrates to a softplus; above it the price
    is s * v2 and the remaining integral of w / (1 + e^w) yields a dilogarithm.
    """
    _check_linear_domain(b1, s)
    lam = check_temperature(temperature)
    v1 = np.asarray(v1, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)

    below = (v1 - b1) / s * lam * (np.logaddexp(0.0, b1 / lam) - np.log(2.0))

    width = (s - b1) / lam
    tail = np.logaddexp(0.0, -width)
    first_moment = -width * tail + dilog(-np.exp(-width)) + np.pi**2 / 12.0
    above = lam / s * ((v1 - b1) * (np.log(2.0) - tail) - lam * first_moment)
    return _as_output(below + above)


def interim_error_exact(v1, b1, s, temperature):
    """Absolute difference between original and smoothed interim utility."""
    original = interim_utility_original(v1, b1, s)
    smooth = np.asarray(interim_utility_smooth(v1, b1, s, temperature))
    return _as_output(np.abs(original - smooth))


def ex_ante_bound(s, temperature):
    """Linear worst-case ex ante error bound (ln 2 + 1) * lambda / s."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if temperature < 0:
        raise DomainError(f"temperature must be >= 0, got {temperature}")
    return (np.log(2.0) + 1.0) * temperature / s


@lru_cache(maxsize=None)
def _legendre(nodes: int):
    return roots_legendre(nodes)


def _gauss_legendre(f, breakpoints: np.ndarray, nodes: int) -> float:
    """Composite Gauss-Legendre quadrature of a vectorized f over the given panels."""
    x, w = _legendre(nodes)
    lo, hi = breakpoints[:-1], breakpoints[1:]
    half = 0.5 * (hi - lo)
    points = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    return float(np.sum(half[:, None] * w[None, :] * f(points)))


def _graded_breakpoints(kink: float, lo: float, hi: float, width: float) -> np.ndarray:
    """Panel edges refined geometrically towards a kink at resolution width."""
    offsets = width * 2.0 ** np.arange(64)
    edges = np.concatenate([[lo, kink, hi], kink + offsets, kink - offsets])
    edges = edges[(edges >= lo) & (edges <= hi)]
    return np.unique(edges)


def interim_utility_smooth_quadrature(v1, b1, s, temperature, nodes=32):
    """
    Gauss-Legendre quadrature of the smoothed interim utility over v2 in [0, 1].

    Panels are split at the price kink v2 = b1 / s and refined towards it on
    the temperature scale.
    """
    if nodes < MIN_NODES:
        raise ConfigurationError(f"nodes must be >= {MIN_NODES}, got {nodes}")
    _check_linear_domain(b1, s)
    lam = check_temperature(temperature)

    def integrand(v2):
        opponent = s * v2
        return (v1 - np.maximum(b1, opponent)) * expit((b1 - opponent) / lam)

    edges = _graded_breakpoints(b1 / s, 0.0, 1.0, lam / s)
    return _gauss_legendre(integrand, edges, nodes)


def ex_ante_error(s, temperature, panels=64, nodes=MIN_NODES):
    """
    Ex ante utility error when both bidders bid s * v: the mean over v1 of the
    exact interim error, by composite Gauss-Legendre quadrature.
    """
    edges = np.linspace(0.0, 1.0, panels + 1)
    return _gauss_legendre(
        lambda v1: interim_error_exact(v1, s * v1, s, temperature), edges, nodes
    )


def ex_ante_error_monte_carlo(s, temperature, n_samples=2**18, seed=0):
    """
    Monte Carlo estimate of |u_SM - u| ex ante for bidder 0 when both bidders
    bid s * v, using the auction environment and the SmoothMarket wrapper.
    """
    from gym_smooth_auctions.envs import SealedBidAuctionEnv
    from gym_smooth_auctions.wrappers import SmoothMarket

    env = SmoothMarket(
        SealedBidAuctionEnv(mechanism="fpsb", n_bidders=2, n_items=1, batch_size=n_samples),
        temperature=temperature,
    )
    valuations, _ = env.reset(seed=seed)
    _, reward, _, _, info = env.step(s * valuations)
    return abs(reward - info["exact_reward"])


def _check_monotone(net: PolicyNet, resolution: int = 4097) -> None:
    bids = net.bid(np.linspace(0.0, 1.0, resolution)[:, None])[:, 0]
    if np.any(np.diff(bids) < 0):
        raise DomainError("opponent strategy must be nondecreasing on [0, 1]")


def _invert(net: PolicyNet, bids: np.ndarray, iterations: int = 60) -> np.ndarray:
    """Valuations at which the nondecreasing net bids the given amounts, by bisection."""
    lo = np.zeros_like(bids)
    hi = np.ones_like(bids)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        above = net.bid(mid[:, None])[:, 0] >= bids
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return hi


def sm_gradient_quadrature(
    net: PolicyNet,
    temperature: float,
    panels: int = 64,
    nodes: int = 8,
    inner_nodes: int = MIN_NODES,
    fd_step: float = 1e-5,
) -> np.ndarray:
    """
    Deterministic gradient of the smoothed ex ante utility in a two-bidder
    first-price auction with uniform priors, where the opponent keeps playing
    the current net.

    For every outer node v1 the interim utility I(b, v1) is integrated over v2
    with panels split at the price kink, I is differentiated in the own bid b
    by central differences and the result is chained through backward().

    Returns:
        np.ndarray: Flat gradient aligned with net.get_flat().
    """
    if net.layer_sizes[0] != 1 or net.mixed:
        raise ConfigurationError("the gradient oracle needs a single-item pure policy")
    lam = check_temperature(temperature)
    _check_monotone(net)

    x, w = _legendre(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    v1 = ((0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()

    out, cache = net.forward(v1[:, None])
    own = out[:, 0]
    low, high = net.bid(np.array([[0.0], [1.0]]))[:, 0]

    def interim(bid, value, kink):
        def integrand(v2):
            opponent = net.bid(v2.reshape(-1, 1)).reshape(v2.shape)
            return (value - np.maximum(bid, opponent)) * expit((bid - opponent) / lam)

        return _gauss_legendre(
            integrand, _graded_breakpoints(kink, 0.0, 1.0, lam / 2), inner_nodes
        )

    shifted = np.concatenate([own + fd_step, own - fd_step])
    kinks = np.where(shifted >= high, 1.0, 0.0)
    inside = (shifted > low) & (shifted < high)
    if np.any(inside):
        kinks[inside] = _invert(net, shifted[inside])

    n = v1.size
    d_interim = np.array(
        [
            interim(shifted[i], v1[i], kinks[i]) - interim(shifted[n + i], v1[i], kinks[n + i])
            for i in range(n)
        ]
    ) / (2.0 * fd_step)
    return net.backward(cache, (weights * d_interim)[:, None])


@dataclass(frozen=True)
class OracleRow:
    v1: float
    b1: float
    temperature: float
    exact_error: float
    quadrature_error: float
    bound: float

    def as_row(self) -> list:
        values = (
            self.v1,
            self.b1,
            self.temperature,
            self.exact_error,
            self.quadrature_error,
            self.bound,
        )
        return [repr(float(x)) for x in values]


def oracle_table(
    v1_values: Sequence[float],
    temperatures: Sequence[float],
    s: float = 0.5,
    nodes: int = 32,
) -> list:
    """
    Exact versus quadrature interim error and the ex ante bound on a grid,
    with bidder 1 playing the same linear strategy b1 = s * v1.
    """
    rows = []
    for temperature in temperatures:
        for v1 in v1_values:
            b1 = s * v1
            original = interim_utility_original(v1, b1, s)
            quadrature = interim_utility_smooth_quadrature(v1, b1, s, temperature, nodes)
            rows.append(
                OracleRow(
                    v1,
                    b1,
                    temperature,
                    interim_error_exact(v1, b1, s, temperature),
                    abs(original - quadrature),
                    ex_ante_bound(s, temperature),
                )
            )
    return rows
