"""Diagonal-Gaussian policy over 2D actions.

The mean is a tanh-bounded MLP readout, scaled to the action range; the
log standard deviation is a state-independent learnable vector.  Bounding
the mean matters: with environment-side clipping, an unbounded mean can
saturate far beyond the clip range, at which point sampled actions stop
depending on the parameters and learning freezes.  Actions themselves are
sampled unsquashed and clipped by the environment, which keeps log
densities exact.  The module also provides the closed-form KL divergence
between two policy snapshots averaged over a sample of visited states,
used as the trust-region-style stopping rule for off-policy updates.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import InputError

LOG_2PI = float(np.log(2.0 * np.pi))
DEFAULT_HIDDEN = (64, 64)
DEFAULT_INITIAL_LOG_STD = -0.5
DEFAULT_MEAN_SCALE = 0.5


@dataclass
class Trajectory:
    """One episode in one sampled environment.

    ``states`` has one more row than ``actions``; ``logp_behavioral`` holds
    the sampling policy's log density at each step's action.  ``rewards``
    is only populated for goal-conditioned episodes.
    """

    states: np.ndarray
    actions: np.ndarray
    logp_behavioral: np.ndarray
    env_id: int
    rewards: np.ndarray | None = None

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise InputError(
                f"need len(states) == len(actions) + 1, got {len(self.states)} and {len(self.actions)}"
            )
        if len(self.logp_behavioral) != len(self.actions):
            raise InputError("logp_behavioral and actions must have equal length")

    @property
    def horizon(self) -> int:
        return len(self.actions)


class GaussianPolicy:
    """Bounded mean network plus per-dimension log standard deviations.

    The action mean is ``mean_scale * tanh(mean_net(state))``.
    """

    def __init__(self, mean_net: nn.Mlp, log_std: np.ndarray, mean_scale: float = DEFAULT_MEAN_SCALE):
        log_std = np.asarray(log_std, dtype=np.float64)
        if log_std.shape != (mean_net.out_dim,):
            raise InputError(f"log_std shape {log_std.shape} != action dim ({mean_net.out_dim},)")
        if not np.all(np.isfinite(log_std)):
            raise InputError("log_std must be finite")
        if mean_scale <= 0:
            raise InputError(f"mean_scale must be > 0, got {mean_scale}")
        self.mean_net = mean_net
        self.log_std = log_std.copy()
        self.mean_scale = float(mean_scale)

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        initial_log_std: float = DEFAULT_INITIAL_LOG_STD,
        mean_scale: float = DEFAULT_MEAN_SCALE,
    ) -> "GaussianPolicy":
        net = nn.Mlp([state_dim, *hidden, action_dim]).init_uniform_fan_in(rng)
        return cls(net, np.full(action_dim, initial_log_std), mean_scale=mean_scale)

    def mean(self, state: np.ndarray) -> np.ndarray:
        return self.mean_scale * np.tanh(self.mean_net.forward(state))

    def mean_batch(self, states: np.ndarray) -> np.ndarray:
        return self.mean_scale * np.tanh(self.mean_net.forward_batch(states))

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim

    @property
    def n_params(self) -> int:
        return self.mean_net.n_params + self.action_dim

    def params_flat(self) -> np.ndarray:
        return np.concatenate([self.mean_net.params_flat(), self.log_std])

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got {flat.shape}")
        self.mean_net.set_params_flat(flat[: self.mean_net.n_params])
        self.log_std = flat[self.mean_net.n_params :].copy()

    def clone(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.clone(), self.log_std, self.mean_scale)

    def sample_action(self, state: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Draw action ~ N(mean(state), diag(exp(log_std))^2); return its exact log density."""
        std = np.exp(self.log_std)
        noise = rng.standard_normal(self.action_dim)
        action = self.mean(state) + std * noise
        logp = -0.5 * float(noise @ noise) - float(self.log_std.sum()) - 0.5 * self.action_dim * LOG_2PI
        return action, logp

    def log_prob(self, state: np.ndarray, action: np.ndarray) -> float:
        z = (np.asarray(action, dtype=np.float64) - self.mean(state)) * np.exp(-self.log_std)
        return -0.5 * float(z @ z) - float(self.log_std.sum()) - 0.5 * self.action_dim * LOG_2PI

    def log_prob_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Log densities for (n, state_dim) states and matching actions."""
        z = (np.asarray(actions, dtype=np.float64) - self.mean_batch(states)) * np.exp(-self.log_std)
        return -0.5 * (z * z).sum(axis=1) - self.log_std.sum() - 0.5 * self.action_dim * LOG_2PI

    def weighted_logp_grad(self, states: np.ndarray, actions: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Flat gradient of sum_i coeffs[i] * log pi(actions[i] | states[i]).

        The building block for every policy-gradient surrogate in the repo:
        the caller bakes importance ratios, trajectory weights and
        normalizers into ``coeffs``.
        """
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        coeffs = np.asarray(coeffs, dtype=np.float64)
        raw, tape = self.mean_net.forward_tape(states)
        squashed = np.tanh(raw)
        means = self.mean_scale * squashed
        diff = actions - means
        inv_var = np.exp(-2.0 * self.log_std)
        # d logpi / d mean_d = (a_d - mu_d) / sigma_d^2, chained through the
        # tanh bound: d mean / d net_out = mean_scale * (1 - tanh^2).
        grad_out = coeffs[:, None] * diff * inv_var * self.mean_scale * (1.0 - squashed * squashed)
        grad_mean = self.mean_net.backward(tape, grad_out)
        # d logpi / d log_std_d = (a_d - mu_d)^2 / sigma_d^2 - 1
        grad_log_std = (coeffs[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
        return np.concatenate([grad_mean, grad_log_std])

    def save(self, path) -> None:
        # Payload: mean-net params, then log_std, then the mean scale.
        nn.save_checkpoint(path, self.mean_net.widths,
                           np.concatenate([self.params_flat(), [self.mean_scale]]))

    @classmethod
    def load(cls, path) -> "GaussianPolicy":
        widths, params = nn.load_checkpoint(path)
        net = nn.Mlp(widths)
        if len(params) != net.n_params + net.out_dim + 1:
            raise InputError(
                f"{path}: expected {net.n_params + net.out_dim + 1} floats for a policy checkpoint, got {len(params)}"
            )
        pol = cls(net, params[net.n_params : net.n_params + net.out_dim], mean_scale=float(params[-1]))
        pol.mean_net.set_params_flat(params[: net.n_params])
        return pol


def kl_estimate(behavioral: GaussianPolicy, target: GaussianPolicy, states: np.ndarray) -> float:
    """Mean over states of KL(behavioral(.|s) || target(.|s)), in nats.

    Exact diagonal-Gaussian form, averaged per state.  Non-negative.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or len(states) == 0:
        raise InputError("kl_estimate needs a non-empty (n, state_dim) state sample")
    mu_b = behavioral.mean_batch(states)
    mu_t = target.mean_batch(states)
    # Variance ratio via the log-std difference so identical snapshots give 0 exactly.
    log_ratio = behavioral.log_std - target.log_std
    per_dim_const = -log_ratio - 0.5 + 0.5 * np.exp(2.0 * log_ratio)
    inv_var_t = np.exp(-2.0 * target.log_std)
    quad = 0.5 * ((mu_b - mu_t) ** 2 * inv_var_t).sum(axis=1)
    return float(per_dim_const.sum() + quad.mean())
