"""
Self-play training of a shared bid strategy by simultaneous gradient ascent.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from gym_smooth_auctions.agents.estimators import (
    EstimatorConfig,
    EstimatorKind,
    gradient_variance,
    make_estimator,
)
from gym_smooth_auctions.agents.policy import (
    DEFAULT_HIDDEN,
    PRETRAIN_ITERATIONS,
    Adam,
    AdamConfig,
    PolicyNet,
    pretrain,
)
from gym_smooth_auctions.envs.sealed_bid_auction_env import SealedBidAuctionEnv
from gym_smooth_auctions.errors import ConfigurationError
from gym_smooth_auctions.evaluation.metrics import (
    EvaluationConfig,
    MetricRecord,
    bne_strategy,
    l2_distance,
    utility_loss_max,
)
from gym_smooth_auctions.utils.mechanisms import MechanismSpec

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 2**14


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything that determines a training run. Identical configs produce
    identical metric streams (apart from wall-clock timing).

    Attributes:
        mechanism (MechanismSpec): The auction.
        estimator (EstimatorConfig): Gradient estimator and its settings.
        iterations (int): Gradient ascent steps after pretraining.
        batch_size (int): Valuation profiles per iteration.
        pretrain_iterations (int): Supervised steps towards truthful bidding.
        seed (int): Root seed of all random streams.
        eval_every (int): Record metrics every this many iterations.
        optimizer (AdamConfig): Ascent step size, moment decays and annealing.
            The step size is annealed over `iterations`.
        evaluation (EvaluationConfig): Sample sizes of the metrics.
        hidden (tuple[int, ...]): Hidden layer widths.
        variance_repeats (int): Estimates per recorded gradient variance,
            0 disables the column.
    """

    mechanism: MechanismSpec = field(default_factory=MechanismSpec)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    iterations: int = 2000
    batch_size: int = DEFAULT_BATCH
    pretrain_iterations: int = PRETRAIN_ITERATIONS
    seed: int = 1
    eval_every: int = 50
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    hidden: tuple = DEFAULT_HIDDEN
    variance_repeats: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1:
            raise ConfigurationError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.pretrain_iterations < 0:
            raise ConfigurationError("pretrain_iterations must be >= 0")
        if self.variance_repeats == 1 or self.variance_repeats < 0:
            raise ConfigurationError("variance_repeats must be 0 or >= 2")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


@dataclass
class TrainingResult:
    net: PolicyNet
    records: list
    final_l2: Optional[float]
    final_utility_loss: Optional[float]


class Learner:
    """
    Runs pretraining, then repeated rounds of sampling valuations, estimating
    the gradient and taking an ascent step.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        spec = config.mechanism
        seeds = np.random.SeedSequence(config.seed).spawn(4)
        init_rng, self.estimator_rng, self.eval_rng, env_rng = (
            np.random.default_rng(s) for s in seeds
        )

        mixed = config.estimator.kind is EstimatorKind.REINFORCE
        self.net = PolicyNet.for_items(
            spec.n_items, hidden=config.hidden, mixed=mixed, rng=init_rng
        )
        self.env = SealedBidAuctionEnv(
            mechanism=spec.payment_rule.value,
            n_bidders=spec.n_bidders,
            n_items=spec.n_items,
            batch_size=config.batch_size,
            v_max=spec.v_max,
        )
        self.env.reset(seed=int(env_rng.integers(2**32)))
        self._prior_rng = init_rng
        self.estimate = make_estimator(config.estimator, spec, self.estimator_rng)
        self.optimizer = Adam(
            self.net.n_params, config.optimizer, horizon=config.iterations
        )
        self.bne = bne_strategy(spec)
        if self.bne is None:
            logger.warning("no analytic BNE for %s, L2 reporting disabled", spec)

    def sample_prior(self, size: int) -> np.ndarray:
        return self._prior_rng.uniform(
            0.0, self.config.mechanism.v_max, size=(size, self.config.mechanism.n_items)
        )

    def sample_valuations(self) -> np.ndarray:
        valuations, _ = self.env.reset()
        return valuations

    def evaluate(self, iteration: int, seconds_per_iter: float) -> MetricRecord:
        cfg = self.config
        l2 = None
        if self.bne is not None:
            l2 = l2_distance(self.net, self.bne, cfg.evaluation.eval_batch, self.eval_rng)
        loss = None
        if cfg.evaluation.utility_loss:
            ev = cfg.evaluation
            loss = utility_loss_max(
                self.net, cfg.mechanism, ev.n_own, ev.n_grid, ev.n_opp, self.eval_rng
            )
        variance = None
        if cfg.variance_repeats:
            variance = gradient_variance(
                self.net, self.sample_valuations, self.estimate, cfg.variance_repeats
            )
        return MetricRecord(iteration, l2, loss, variance, seconds_per_iter)

    def step(self) -> None:
        estimate = self.estimate(self.net, self.sample_valuations())
        self.net.set_flat(self.optimizer.step(self.net.get_flat(), estimate.grad))

    def run(self) -> TrainingResult:
        cfg = self.config
        if cfg.pretrain_iterations:
            pretrain(self.net, self.sample_prior, cfg.pretrain_iterations)

        records = []
        elapsed = 0.0
        for it in range(1, cfg.iterations + 1):
            start = time.perf_counter()
            self.step()
            elapsed += time.perf_counter() - start
            if it % cfg.eval_every == 0:
                record = self.evaluate(it, elapsed / cfg.eval_every)
                records.append(record)
                elapsed = 0.0
                logger.info(
                    "iter %d: l2=%s utility_loss=%s (%.4fs/iter)",
                    it,
                    record.l2,
                    record.utility_loss,
                    record.seconds_per_iter,
                )

        final_l2 = None
        if self.bne is not None:
            final_l2 = l2_distance(
                self.net, self.bne, cfg.evaluation.eval_batch, self.eval_rng
            )
        final_loss = None
        if cfg.evaluation.utility_loss:
            ev = cfg.evaluation
            final_loss = utility_loss_max(
                self.net, cfg.mechanism, ev.n_own, ev.n_grid, ev.n_opp, self.eval_rng
            )
        return TrainingResult(self.net, records, final_l2, final_loss)


def run_training(config: ExperimentConfig) -> TrainingResult:
    return Learner(config).run()


@dataclass(frozen=True)
class SweepRow:
    temperature: float
    seed: int
    final_l2: Optional[float]


def lambda_sweep(
    config: ExperimentConfig,
    temperatures: Sequence[float],
    seeds: Optional[Sequence[int]] = None,
) -> list:
    """
    Trains once per (temperature, seed) with the SM estimator.

    Returns:
        list[SweepRow]: Final L2 per run, temperatures in the given order.
    """
    if config.estimator.kind is not EstimatorKind.SM:
        raise ConfigurationError("the temperature sweep needs the SM estimator")
    seeds = [config.seed] if seeds is None else list(seeds)
    rows = []
    for temperature in temperatures:
        for seed in seeds:
            run_config = replace(
                config,
                seed=seed,
                estimator=replace(config.estimator, temperature=temperature),
            )
            result = run_training(run_config)
            logger.info("lambda=%g seed=%d final l2=%s", temperature, seed, result.final_l2)
            rows.append(SweepRow(temperature, seed, result.final_l2))
    return rows
