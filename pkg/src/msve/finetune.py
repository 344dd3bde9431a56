"""Goal-conditioned fine-tuning of a pretrained policy.

A sequence of randomly placed goals, shared across experiments through
the seed, each trained for an equal slice of the epoch budget with the
same KL-bounded surrogate machinery as pretraining; trajectory weights
are per-step discounted returns-to-go.  Reaching the goal radius grants
a single unit reward and ends the episode.
"""

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import seeding
from .env import EnvClass
from .errors import ConfigError, NumericError
from .optimize import flatten_steps, kl_bounded_ascent
from .policy import GaussianPolicy
from .rollout import rollout_batch

logger = logging.getLogger(__name__)

FINETUNE_LOG_COLUMNS = ("epoch", "goal_index", "average_return", "kl_at_stop")


@dataclass(frozen=True)
class GoalTask:
    """Reach a point: unit reward inside the radius, episode ends there."""

    goal: np.ndarray
    radius: float = 0.5
    discount: float = 0.99

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"goal radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class FinetuneConfig:
    goals: int = 5
    epochs_total: int = 400
    episodes_per_epoch: int = 20
    eval_episodes: int = 10
    kl_threshold: float = 15.0
    learning_rate: float = 1e-3
    max_inner_steps: int = 30
    goal_radius: float = 0.5
    discount: float = 0.99
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.goals < 1:
            raise ConfigError(f"goals must be >= 1, got {self.goals}")
        if self.epochs_total % self.goals != 0:
            raise ConfigError(
                f"epochs_total={self.epochs_total} must be divisible by goals={self.goals}"
            )
        if self.kl_threshold <= 0:
            raise ConfigError(f"kl_threshold must be > 0, got {self.kl_threshold}")


def generate_goals(env_class: EnvClass, count: int, rng: np.random.Generator,
                   radius: float = 0.5, discount: float = 0.99) -> list[GoalTask]:
    """Rejection-sample goal points uniformly over the free region."""
    geometry = env_class.geometry
    tasks = []
    while len(tasks) < count:
        point = rng.uniform(0.0, geometry.side, size=2)
        if geometry.contains(point):
            tasks.append(GoalTask(goal=point, radius=radius, discount=discount))
    return tasks


def returns_to_go(rewards: np.ndarray, discount: float) -> np.ndarray:
    """Discounted suffix sums of a reward sequence."""
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + discount * acc
        out[i] = acc
    return out


def average_return(pol: GaussianPolicy, task: GoalTask, env_class: EnvClass,
                   episodes: int, rng: np.random.Generator) -> float:
    """Mean undiscounted episode return over fresh rollouts; in [0, 1] here."""
    total = 0.0
    for _ in range(episodes):
        traj = rollout_batch(env_class, pol, [rng], goal=task.goal, goal_radius=task.radius)[0]
        total += float(traj.rewards.sum())
    return total / episodes


def finetune_run(
    pol: GaussianPolicy,
    env_class: EnvClass,
    cfg: FinetuneConfig,
    out_dir: str | None = None,
) -> list[dict]:
    """Train on each goal in sequence; returns one log row per epoch."""
    tasks = generate_goals(
        env_class, cfg.goals,
        seeding.substream(cfg.seed, seeding.GOALS),
        radius=cfg.goal_radius, discount=cfg.discount,
    )
    epochs_per_goal = cfg.epochs_total // cfg.goals
    rows = []
    for goal_index, task in enumerate(tasks):
        for local_epoch in range(epochs_per_goal):
            epoch = goal_index * epochs_per_goal + local_epoch
            streams = [
                seeding.substream(cfg.seed, seeding.FINETUNE_ROLLOUT, epoch, i)
                for i in range(cfg.episodes_per_epoch)
            ]
            batch = rollout_batch(
                env_class, pol, streams,
                goal=task.goal, goal_radius=task.radius, workers=cfg.workers,
            )
            weights = [returns_to_go(t.rewards, cfg.discount) for t in batch]
            data = flatten_steps(batch, per_step_weights=weights)
            kl_states = np.concatenate([t.states for t in batch])
            kl_at_stop = 0.0
            # Same sample-summed KL units as pretraining.
            kl_scale = len(kl_states)
            try:
                result = kl_bounded_ascent(
                    pol, data, kl_states,
                    kl_threshold=cfg.kl_threshold / kl_scale,
                    learning_rate=cfg.learning_rate,
                    max_inner_steps=cfg.max_inner_steps,
                )
                kl_at_stop = result.kl_at_stop * kl_scale
            except NumericError as exc:
                logger.warning("finetune epoch %d aborted, policy restored: %s", epoch, exc)
            avg = average_return(
                pol, task, env_class, cfg.eval_episodes,
                seeding.substream(cfg.seed, seeding.FINETUNE_EVAL, epoch),
            )
            rows.append({
                "epoch": epoch,
                "goal_index": goal_index,
                "average_return": avg,
                "kl_at_stop": float(kl_at_stop),
            })
    if out_dir:
        write_finetune_log(os.path.join(out_dir, "finetune_log.csv"), rows)
        pol.save(os.path.join(out_dir, "policy_finetuned.ckpt"))
    return rows


def write_finetune_log(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(FINETUNE_LOG_COLUMNS)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in FINETUNE_LOG_COLUMNS)])
