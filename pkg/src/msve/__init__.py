"""Task-agnostic exploration pretraining across an environment class.

Pretrains a Gaussian policy to maximize risk-averse (CVaR) per-trajectory
state-visitation entropy, with optional curiosity rewards, a decreasing
percentile schedule and KL-bounded off-policy updates, then fine-tunes it
on goal-reaching tasks.
"""

__version__ = "0.1.0"
