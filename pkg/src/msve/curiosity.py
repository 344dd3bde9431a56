"""Forward-dynamics curiosity: prediction error as intrinsic signal.

A small MLP maps (state, action) to a predicted next state; half the
squared prediction error is the per-step curiosity reward.  The reward is
treated as a constant per-step signal (never differentiated through the
policy).  There is no inverse model or learned state encoder; the raw 2D
observation is low-dimensional enough to predict directly.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import InputError, NumericError

DEFAULT_HIDDEN = (64, 64)
DEFAULT_EPOCHS_INNER = 8
DEFAULT_MINIBATCH = 256
DEFAULT_LEARNING_RATE = 1e-3


@dataclass
class CuriosityScore:
    """Per-step prediction errors for one trajectory and their mean."""

    step_errors: np.ndarray
    trajectory_score: float


class ForwardModel:
    """Next-state predictor with its own optimizer state.

    The network regresses the state change, and predictions add it back to
    the current state; residual targets keep the error scale at the size
    of one step rather than the size of the map.
    """

    def __init__(self, state_dim: int, action_dim: int, rng: np.random.Generator,
                 hidden: tuple[int, ...] = DEFAULT_HIDDEN):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = nn.Mlp([state_dim + action_dim, *hidden, state_dim]).init_uniform_fan_in(rng)
        self.adam = nn.AdamState.zeros(self.net.n_params)

    def predict(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        return state + self.net.forward(np.concatenate([state, action]))

    def predict_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        return states + self.net.forward_batch(np.concatenate([states, actions], axis=1))

    def save(self, path) -> None:
        nn.save_checkpoint(path, self.net.widths, self.net.params_flat())


def curiosity_reward(model: ForwardModel, state, action, next_state) -> float:
    """Half the squared error of the model's next-state prediction; >= 0."""
    err = model.predict(np.asarray(state, dtype=np.float64), np.asarray(action, dtype=np.float64))
    err = err - np.asarray(next_state, dtype=np.float64)
    return 0.5 * float(err @ err)


def score_trajectories(model: ForwardModel, batch) -> list[CuriosityScore]:
    """One curiosity score per trajectory, order preserved."""
    scores = []
    for traj in batch:
        pred = model.predict_batch(traj.states[:-1], traj.actions)
        err = pred - traj.states[1:]
        step_errors = 0.5 * (err * err).sum(axis=1)
        scores.append(CuriosityScore(step_errors=step_errors, trajectory_score=float(step_errors.mean())))
    return scores


def _transitions(batch) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (state, action) inputs and state-change targets."""
    inputs = np.concatenate([np.concatenate([t.states[:-1], t.actions], axis=1) for t in batch])
    deltas = np.concatenate([t.states[1:] - t.states[:-1] for t in batch])
    return inputs, deltas


def train_forward_model(
    model: ForwardModel,
    batch,
    epochs_inner: int = DEFAULT_EPOCHS_INNER,
    minibatch: int = DEFAULT_MINIBATCH,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Fit the model to the batch's transitions by minibatched Adam.

    Returns the loss curve: full-batch mean of half-squared errors before
    training and after each inner pass.  On a non-finite loss the pass is
    aborted and the previous parameters are restored.
    """
    if not batch or sum(t.horizon for t in batch) == 0:
        raise InputError("forward-model training needs at least one transition")
    rng = rng or np.random.default_rng(0)
    inputs, targets = _transitions(batch)
    n = len(inputs)

    def full_loss() -> float:
        err = model.net.forward_batch(inputs) - targets
        return 0.5 * float((err * err).sum(axis=1).mean())

    curve = [full_loss()]
    for _ in range(epochs_inner):
        saved_params = model.net.params_flat()
        saved_adam = model.adam.copy()
        order = rng.permutation(n)
        for start in range(0, n, minibatch):
            idx = order[start : start + minibatch]
            pred, tape = model.net.forward_tape(inputs[idx])
            err = pred - targets[idx]
            grad = model.net.backward(tape, err / len(idx))
            try:
                model.net.set_params_flat(nn.adam_step(model.net.params_flat(), grad, model.adam, learning_rate))
            except NumericError:
                model.net.set_params_flat(saved_params)
                model.adam = saved_adam
                return np.array(curve)
        loss = full_loss()
        if not np.isfinite(loss):
            model.net.set_params_flat(saved_params)
            model.adam = saved_adam
            return np.array(curve)
        curve.append(loss)
    return np.array(curve)
