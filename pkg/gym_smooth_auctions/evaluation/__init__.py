"""
Equilibrium metrics and verification oracles.
"""

from gym_smooth_auctions.evaluation.metrics import (
    BneReference,
    EvaluationConfig,
    MetricRecord,
    bne_strategy,
    l2_distance,
    utility_loss_max,
    utility_loss_noise_floor,
)
from gym_smooth_auctions.evaluation.oracle import (
    dilog,
    ex_ante_bound,
    interim_error_exact,
    interim_utility_original,
    interim_utility_smooth_quadrature,
)
