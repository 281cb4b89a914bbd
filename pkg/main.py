import sys

import gymnasium as gym
import numpy as np

# Ensure gym_smooth_auctions is importable
# If you have installed the package via 'pip install -e .', this import works anywhere.
try:
    import gym_smooth_auctions
    from gym_smooth_auctions.agents.estimators import EstimatorConfig
    from gym_smooth_auctions.agents.learner import ExperimentConfig, run_training
    from gym_smooth_auctions.evaluation.metrics import EvaluationConfig
    from gym_smooth_auctions.wrappers import SmoothMarket
except ImportError:
    print("Error: gym_smooth_auctions not found.")
    print("Please ensure you have installed the package using 'pip install -e .'")
    sys.exit(1)


def main():
    print("Initializing SealedBidAuction-v0...")

    # 1. A first-price auction with two bidders, one item per round.
    env = gym.make("SealedBidAuction-v0", render_mode="ansi", batch_size=2**12)

    # 2. Compare the exact payoff with the smooth market at lambda = 0.01
    env = SmoothMarket(env, temperature=0.01)
    valuations, info = env.reset(seed=0)

    # Both bidders play the equilibrium strategy v / 2.
    obs, reward, terminated, truncated, info = env.step(0.5 * valuations)
    print(env.render())
    print(f"Smoothed utility of bidder 0: {reward:.5f}")
    print(f"Exact utility of bidder 0:    {info['exact_reward']:.5f}")
    env.close()

    # 3. Learn the equilibrium by self-play with the smooth-market gradient.
    print("\nTraining a shared bid strategy (SM estimator, 500 iterations)...")
    config = ExperimentConfig(
        estimator=EstimatorConfig("sm", temperature=0.01),
        iterations=500,
        eval_every=100,
        evaluation=EvaluationConfig(utility_loss=False),
    )
    result = run_training(config)

    for record in result.records:
        print(
            f"Iter {record.iteration:4d} | L2 to BNE: {record.l2:.4f} | "
            f"{record.seconds_per_iter * 1e3:.2f} ms/iter"
        )

    grid = np.linspace(0.0, 1.0, 5)[:, None]
    bids = result.net.bid(grid)[:, 0]
    print("\nLearned bids (BNE is v / 2):")
    for v, b in zip(grid[:, 0], bids):
        print(f"  v = {v:.2f} -> bid {b:.4f}")
    print(f"Final L2: {result.final_l2:.4f}")


if __name__ == "__main__":
    main()
