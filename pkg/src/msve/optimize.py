"""KL-bounded off-policy improvement shared by pretraining and fine-tuning.

The surrogate is the importance-sampled score-function objective
    (1/N) * sum_i w_i * exp(logpi_theta(a_i|s_i) - logpi_behavioral(a_i|s_i))
over the selected steps, with stop-gradient weights w_i.  Ascent steps run
until the mean KL from the data-collecting snapshot to the updated policy
crosses the threshold; the crossing update is rolled back, so the accepted
policy always satisfies the bound.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import InputError, NumericError
from .policy import GaussianPolicy, kl_estimate

DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_MAX_INNER_STEPS = 30


@dataclass
class StepData:
    """Flattened (state, action) steps with behavioral log densities and weights."""

    states: np.ndarray
    actions: np.ndarray
    logp_behavioral: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if not (len(self.actions) == len(self.logp_behavioral) == len(self.weights) == n):
            raise InputError("step arrays must have equal length")
        if n == 0:
            raise InputError("no steps selected for optimization")


def flatten_steps(trajectories, per_traj_weights=None, per_step_weights=None) -> StepData:
    """Stack selected trajectories into step arrays.

    Exactly one of ``per_traj_weights`` (one scalar per trajectory,
    broadcast over its steps) and ``per_step_weights`` (one array per
    trajectory) must be given.
    """
    if (per_traj_weights is None) == (per_step_weights is None):
        raise InputError("pass exactly one of per_traj_weights / per_step_weights")
    states = np.concatenate([t.states[:-1] for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    logps = np.concatenate([t.logp_behavioral for t in trajectories])
    if per_traj_weights is not None:
        weights = np.concatenate(
            [np.full(t.horizon, w) for t, w in zip(trajectories, per_traj_weights)]
        )
    else:
        weights = np.concatenate([np.asarray(w, dtype=np.float64) for w in per_step_weights])
    return StepData(states=states, actions=actions, logp_behavioral=logps, weights=weights)


def surrogate_and_grad(pol: GaussianPolicy, data: StepData) -> tuple[float, np.ndarray]:
    """Surrogate value and its flat parameter gradient at the current policy."""
    logp = pol.log_prob_batch(data.states, data.actions)
    ratios = np.exp(logp - data.logp_behavioral)
    n = len(ratios)
    value = float((data.weights * ratios).sum() / n)
    coeffs = data.weights * ratios / n
    grad = pol.weighted_logp_grad(data.states, data.actions, coeffs)
    return value, grad


@dataclass
class AscentResult:
    """What the inner loop did: accepted steps and the accepted policy's KL."""

    inner_steps: int
    kl_at_stop: float


def kl_bounded_ascent(
    pol: GaussianPolicy,
    data: StepData,
    kl_states: np.ndarray,
    kl_threshold: float,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    max_inner_steps: int = DEFAULT_MAX_INNER_STEPS,
) -> AscentResult:
    """Ascend the surrogate in place until the KL bound or step cap is hit.

    The behavioral snapshot is taken on entry.  An update that pushes
    KL(behavioral || target) beyond the threshold is undone before
    returning, so the policy left in ``pol`` always satisfies the bound.
    Raises NumericError on a non-finite surrogate or gradient, leaving the
    policy at the entry snapshot.
    """
    behavioral = pol.clone()
    adam = nn.AdamState.zeros(pol.n_params)
    accepted = 0
    kl_at_stop = 0.0
    entry_params = pol.params_flat()
    for _ in range(max_inner_steps):
        try:
            value, grad = surrogate_and_grad(pol, data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite surrogate value {value}")
            previous = pol.params_flat()
            # Adam minimizes, so feed the negated gradient to ascend.
            pol.set_params_flat(nn.adam_step(previous, -grad, adam, learning_rate))
        except NumericError:
            pol.set_params_flat(entry_params)
            raise
        kl = kl_estimate(behavioral, pol, kl_states)
        if kl > kl_threshold:
            pol.set_params_flat(previous)
            break
        accepted += 1
        kl_at_stop = kl
    return AscentResult(inner_steps=accepted, kl_at_stop=kl_at_stop)
