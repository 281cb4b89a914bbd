"""
Gradient estimators of the ex ante utility of the shared bid strategy.

SM differentiates the smoothed game in closed form (first order). ES perturbs
the network parameters and REINFORCE perturbs the bids; both only evaluate
utilities of the original game (zeroth order).

Self-play convention: every bidder role is evaluated with the shared policy
while the other bidders' bids are treated as constants, and the per-role
gradients are averaged.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from gym_smooth_auctions.agents.policy import PolicyNet
from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.utils.mechanisms import (
    BidderBatch,
    MechanismSpec,
    check_profile,
    utility_exact,
)
from gym_smooth_auctions.utils.smoothing import (
    DEFAULT_TEMPERATURE,
    check_temperature,
    grad_utility_soft_wrt_bid,
)

MIN_STD = 1e-5


class EstimatorKind(str, Enum):
    SM = "sm"
    ES = "es"
    REINFORCE = "reinforce"


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Attributes:
        kind (EstimatorKind): Which estimator to use.
        temperature (float): Softmax temperature lambda (SM).
        population_size (int): Perturbations per estimate (ES).
        sigma (float): Perturbation scale before division by sqrt(d) (ES).
        antithetic (bool): Evaluate mirrored pairs +eps / -eps (ES).
        baseline (bool): Subtract the unperturbed utility (ES).
    """

    kind: EstimatorKind = EstimatorKind.SM
    temperature: float = DEFAULT_TEMPERATURE
    population_size: int = 64
    sigma: float = 1.0
    antithetic: bool = False
    baseline: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", EstimatorKind(self.kind))
        except ValueError:
            raise ConfigurationError(f"unknown estimator {self.kind!r}") from None
        check_temperature(self.temperature)
        if self.population_size < 2:
            raise ConfigurationError(
                f"population_size must be >= 2, got {self.population_size}"
            )
        if self.antithetic and self.population_size % 2:
            raise ConfigurationError("antithetic sampling needs an even population")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")


@dataclass
class GradientEstimate:
    """
    Attributes:
        grad (np.ndarray): Estimated gradient, aligned with the flat parameters.
        estimator (EstimatorKind): Provenance.
        sample_size (int): Valuation profiles (times population members for ES).
        per_parameter_variance (np.ndarray, optional): Sample variance of the
            terms averaged into grad.
    """

    grad: np.ndarray
    estimator: EstimatorKind
    sample_size: int
    per_parameter_variance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grad = np.asarray(self.grad, dtype=np.float64)
        if not np.all(np.isfinite(self.grad)):
            raise ConfigurationError(f"{self.estimator.value} gradient is not finite")


def _shared_bids(net: PolicyNet, values: BidderBatch):
    batch, n, m = values.shape
    out, cache = net.forward(values.reshape(batch * n, m))
    return out, cache


def estimate_sm(
    net: PolicyNet, values: BidderBatch, spec: MechanismSpec, temperature: float
) -> GradientEstimate:
    """
    First-order estimate through the smoothed game.

    Averages over the batch and the bidder roles the chain-rule gradient of
    each bidder's smoothed utility with respect to its own parameters.
    """
    values = check_profile(values, spec, name="values")
    batch, n, m = values.shape
    bids, cache = _shared_bids(net, values)
    d_bids = grad_utility_soft_wrt_bid(
        values, bids.reshape(batch, n, m), spec, temperature
    )
    upstream = d_bids.reshape(batch * n, m) / (batch * n)
    return GradientEstimate(net.backward(cache, upstream), EstimatorKind.SM, batch)


def es_gradient(
    objective: Callable[[np.ndarray], float],
    theta: np.ndarray,
    sigma_eff: float,
    population_size: int,
    rng: np.random.Generator,
    antithetic: bool = False,
    baseline: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Evolution-strategies estimate of the gradient of a Gaussian-smoothed objective.

    Each population member draws eps ~ N(0, I) from its own counter-indexed
    stream, so results do not depend on evaluation order.

    Returns:
        tuple[np.ndarray, np.ndarray]: Mean of the per-member terms and their
            per-parameter sample variance. With antithetic pairs one term is
            eps * (f(theta + s eps) - f(theta - s eps)) / (2 s) per pair.
    """
    key = int(rng.integers(2**63))
    n_draws = population_size // 2 if antithetic else population_size
    terms = np.empty((n_draws, theta.size))
    for k in range(n_draws):
        member = np.random.default_rng(np.random.SeedSequence(key, spawn_key=(k,)))
        eps = member.standard_normal(theta.size)
        if antithetic:
            diff = objective(theta + sigma_eff * eps) - objective(theta - sigma_eff * eps)
            terms[k] = eps * diff / (2.0 * sigma_eff)
        else:
            fitness = objective(theta + sigma_eff * eps)
            if baseline is not None:
                fitness -= baseline
            terms[k] = eps * fitness / sigma_eff
    return terms.mean(axis=0), terms.var(axis=0, ddof=1)


def role_utilities(
    values: BidderBatch,
    own_bids: np.ndarray,
    others_bids: np.ndarray,
    spec: MechanismSpec,
) -> float:
    """
    Mean over roles of the exact utility when bidder i plays own_bids and
    everybody else plays others_bids.
    """
    n = spec.n_bidders
    total = 0.0
    for i in range(n):
        profile = others_bids.copy()
        profile[:, i, :] = own_bids[:, i, :]
        total += utility_exact(values, profile, spec)[:, i].mean()
    return total / n


def estimate_es(
    net: PolicyNet,
    values: BidderBatch,
    spec: MechanismSpec,
    config: EstimatorConfig,
    rng: np.random.Generator,
) -> GradientEstimate:
    """
    Zeroth-order estimate by Gaussian perturbation of the parameters.

    Utilities come from the original auction. The perturbation scale is
    sigma / sqrt(d) for d parameters.
    """
    values = check_profile(values, spec, name="values")
    batch, n, m = values.shape
    theta = net.get_flat()
    sigma_eff = config.sigma / np.sqrt(theta.size)
    flat_values = values.reshape(batch * n, m)
    others = net.bid(flat_values).reshape(batch, n, m)

    def objective(params):
        own = net.with_params(params).bid(flat_values).reshape(batch, n, m)
        return role_utilities(values, own, others, spec)

    baseline = role_utilities(values, others, others, spec) if config.baseline else None
    grad, variance = es_gradient(
        objective,
        theta,
        sigma_eff,
        config.population_size,
        rng,
        antithetic=config.antithetic,
        baseline=baseline,
    )
    return GradientEstimate(
        grad, EstimatorKind.ES, batch * config.population_size, variance
    )


def score_function_terms(
    rewards: np.ndarray, actions: np.ndarray, mean: np.ndarray, std: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-sample REINFORCE terms r * d log N(a; mean, std) for mean and std.

    Returns:
        tuple[np.ndarray, np.ndarray]: Terms for the mean and the std, shaped
            like actions.
    """
    z = (actions - mean) / std
    d_mean = rewards * z / std
    d_std = rewards * (z**2 - 1.0) / std
    return d_mean, d_std


def estimate_reinforce(
    net: PolicyNet,
    values: BidderBatch,
    spec: MechanismSpec,
    rng: np.random.Generator,
    reward_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> GradientEstimate:
    """
    Score-function estimate with Gaussian mixed strategies.

    The net outputs a ReLU mean and a scale parameter rho per item; actions
    are drawn from N(mean, softplus(rho)^2) and bids are the actions clipped
    at zero. Rewards are exact ex post utilities of the full sampled profile.

    Args:
        reward_fn (Callable, optional): Maps bids (batch, n, m) to utilities
            (batch, n). Defaults to utility_exact of values under spec.
    """
    if not net.mixed:
        raise ConfigurationError(
            "REINFORCE needs a policy with a gaussian output head of width 2m"
        )
    values = check_profile(values, spec, name="values")
    batch, n, m = values.shape
    out, cache = _shared_bids(net, values)
    mean, rho = out[:, :m], out[:, m:]
    std = np.logaddexp(0.0, rho) + MIN_STD
    actions = mean + std * rng.standard_normal(mean.shape)
    bids = np.maximum(actions, 0.0).reshape(batch, n, m)

    if reward_fn is None:
        rewards = utility_exact(values, bids, spec)
    else:
        rewards = reward_fn(bids)
    rewards = np.repeat(rewards.reshape(batch * n, 1), m, axis=1)

    d_mean, d_std = score_function_terms(rewards, actions, mean, std)
    upstream = np.concatenate([d_mean, d_std * expit(rho)], axis=1) / (batch * n)
    return GradientEstimate(
        net.backward(cache, upstream), EstimatorKind.REINFORCE, batch
    )


def make_estimator(
    config: EstimatorConfig, spec: MechanismSpec, rng: np.random.Generator
) -> Callable[[PolicyNet, BidderBatch], GradientEstimate]:
    """Binds an estimator to its settings, returning f(net, values)."""
    if config.kind is EstimatorKind.SM:
        return lambda net, values: estimate_sm(net, values, spec, config.temperature)
    if config.kind is EstimatorKind.ES:
        return lambda net, values: estimate_es(net, values, spec, config, rng)
    return lambda net, values: estimate_reinforce(net, values, spec, rng)


def gradient_variance(
    net: PolicyNet,
    sample_values: Callable[[], BidderBatch],
    estimator: Callable[[PolicyNet, BidderBatch], GradientEstimate],
    repeats: int,
) -> float:
    """
    Mean over parameters of the sample variance across independent estimates.

    Args:
        net (PolicyNet): Parameters at which all estimates are taken.
        sample_values (Callable): Draws a fresh valuation batch per repeat.
        estimator (Callable): Maps (net, values) to a GradientEstimate.
        repeats (int): Number of independent estimates K, at least 2.
    """
    if repeats < 2:
        raise ConfigurationError(f"repeats must be >= 2, got {repeats}")
    grads = np.stack([estimator(net, sample_values()).grad for _ in range(repeats)])
    return float(np.mean(grads.var(axis=0, ddof=1)))
