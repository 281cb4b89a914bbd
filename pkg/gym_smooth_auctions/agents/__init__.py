"""
Bid strategies and gradient estimators.
The training loop lives in gym_smooth_auctions.agents.learner.
"""

from gym_smooth_auctions.agents.policy import Adam, AdamConfig, PolicyNet, pretrain
from gym_smooth_auctions.agents.estimators import (
    EstimatorConfig,
    EstimatorKind,
    GradientEstimate,
    estimate_es,
    estimate_reinforce,
    estimate_sm,
    gradient_variance,
)
