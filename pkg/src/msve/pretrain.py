"""Unsupervised exploration pretraining.

Each epoch: collect a batch of trajectories across the environment class,
estimate per-trajectory state-visitation entropies (and curiosity scores
when enabled), select trajectories by the configured strategy, then run
KL-bounded off-policy ascent on the selected objective and advance the
percentile schedule.

Selection strategies:
  * ``cvar``: the ``percentile`` lowest-entropy trajectories, i.e. the
    sample whose mean is the CVaR objective.
  * ``pdf``: sample with replacement from softmax(-entropy), biased toward
    low-entropy trajectories but occasionally keeping good ones.
  * ``curiosity-percentile``: the ``percentile`` most curious trajectories.

``kl_threshold`` bounds, per epoch, the policy's KL divergence from the
data-collecting snapshot summed over the collected state sample (the
per-state mean KL times the number of recorded states).
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding
from .curiosity import ForwardModel, score_trajectories, train_forward_model
from .entropy import batch_entropies
from .env import EnvClass
from .errors import ConfigError, InputError, NumericError
from .metrics import VisitGrid, write_heatmap_csv, write_heatmap_pgm
from .optimize import flatten_steps, kl_bounded_ascent
from .policy import GaussianPolicy
from .rollout import rollout_batch

logger = logging.getLogger(__name__)

STRATEGY_CVAR = "cvar"
STRATEGY_PDF = "pdf"
STRATEGY_CURIOSITY = "curiosity-percentile"
STRATEGIES = (STRATEGY_CVAR, STRATEGY_PDF, STRATEGY_CURIOSITY)

PRETRAIN_LOG_COLUMNS = (
    "epoch", "mean_entropy", "cvar_entropy", "alpha", "percentile",
    "kl_at_stop", "inner_steps", "mean_curiosity",
)


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 150
    batch_size: int = 20
    strategy: str = STRATEGY_CVAR
    alpha_percentile: int = 4
    dynamic_alpha: bool = False
    kl_threshold: float = 15.0
    curiosity_enabled: bool = False
    curiosity_weight: float = 0.1
    learning_rate: float = 3e-4
    max_inner_steps: int = 30
    weight_cap: float = 2.0
    pdf_temperature: float = 1.0
    seed: int = 0
    k_neighbors: int = 4
    policy_hidden: tuple[int, ...] = (64, 64)
    initial_log_std: float = -0.5
    policy_mean_scale: float = 0.5
    model_hidden: tuple[int, ...] = (64, 64)
    model_epochs: int = 8
    model_minibatch: int = 256
    model_learning_rate: float = 1e-3
    workers: int = 1
    checkpoint_interval: int = 50

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.alpha_percentile <= self.batch_size:
            raise ConfigError(
                f"alpha_percentile must be in 1..batch_size={self.batch_size}, got {self.alpha_percentile}"
            )
        if self.kl_threshold <= 0:
            raise ConfigError(f"kl_threshold must be > 0, got {self.kl_threshold}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.curiosity_weight < 0:
            raise ConfigError(f"curiosity_weight must be >= 0, got {self.curiosity_weight}")

    @property
    def uses_curiosity_model(self) -> bool:
        return self.curiosity_enabled or self.strategy == STRATEGY_CURIOSITY


# --- selection operations ---------------------------------------------------


def softmax_probs(entropies: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Probabilities proportional to exp(-entropy): lower entropy, higher mass."""
    e = np.asarray(entropies, dtype=np.float64)
    if e.size == 0:
        raise InputError("softmax_probs needs a non-empty vector")
    if not np.all(np.isfinite(e)):
        raise InputError("softmax_probs needs finite entropies")
    logits = -e / temperature
    p = np.exp(logits - logits.max())
    return p / p.sum()


def select_pdf(entropies: np.ndarray, m: int, rng: np.random.Generator,
               temperature: float = 1.0) -> np.ndarray:
    """Draw m trajectory indices with replacement from softmax(-entropy)."""
    probs = softmax_probs(entropies, temperature)
    return rng.choice(len(probs), size=m, replace=True, p=probs)


def var_threshold(entropies: np.ndarray, alpha: float) -> float:
    """The ceil(alpha*n)-th smallest entropy: the alpha-percentile of the sample."""
    e = np.asarray(entropies, dtype=np.float64)
    if e.size == 0:
        raise InputError("var_threshold needs a non-empty vector")
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must be in (0, 1], got {alpha}")
    rank = min(max(math.ceil(alpha * e.size), 1), e.size)
    return float(np.sort(e, kind="stable")[rank - 1])


def cvar(entropies: np.ndarray, alpha: float) -> float:
    """Mean of all entropies at or below the alpha-percentile threshold."""
    threshold = var_threshold(entropies, alpha)
    # Sequential accumulation in index order; sample sizes here are tiny.
    selected = [float(v) for v in np.asarray(entropies, dtype=np.float64) if v <= threshold]
    return sum(selected) / len(selected)


def select_cvar(entropies: np.ndarray, percentile: int) -> np.ndarray:
    """Indices of the `percentile` smallest entropies, ties broken by lower index."""
    e = np.asarray(entropies, dtype=np.float64)
    order = np.argsort(e, kind="stable")
    return np.sort(order[: max(0, min(percentile, e.size))])


def select_curious(scores: np.ndarray, percentile: int) -> np.ndarray:
    """Indices of the `percentile` largest curiosity scores, ties broken by lower index."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    return np.sort(order[: max(0, min(percentile, s.size))])


# --- percentile schedule ----------------------------------------------------


@dataclass(frozen=True)
class ScheduleState:
    """Current selection size for the percentile strategies.

    ``decrement_interval`` is None when the schedule is static (dynamic
    alpha disabled, or the decrement formula is undefined for the config).
    """

    percentile: int
    epoch: int = 0
    decrement_interval: int | None = None
    initial_percentile: int = field(default=0)

    def alpha(self, batch_size: int) -> float:
        return self.percentile / batch_size


def init_schedule(cfg: PretrainConfig) -> ScheduleState:
    """Set up the percentile schedule for epoch 0."""
    interval = None
    if cfg.dynamic_alpha:
        span = cfg.batch_size - cfg.alpha_percentile
        interval = cfg.epochs // span if span > 0 else 0
        if interval < 1:
            logger.warning(
                "dynamic alpha disabled: decrement interval %s not positive "
                "(epochs=%d, batch_size=%d, alpha_percentile=%d)",
                interval, cfg.epochs, cfg.batch_size, cfg.alpha_percentile,
            )
            interval = None
    return ScheduleState(
        percentile=cfg.alpha_percentile,
        epoch=0,
        decrement_interval=interval,
        initial_percentile=cfg.alpha_percentile,
    )


def alpha_schedule(state: ScheduleState, cfg: PretrainConfig) -> ScheduleState:
    """Advance one epoch: drop the percentile by 1 every interval, floored at 1."""
    epoch = state.epoch + 1
    percentile = state.percentile
    if state.decrement_interval is not None:
        percentile = max(1, state.initial_percentile - epoch // state.decrement_interval)
    return replace(state, epoch=epoch, percentile=percentile)


# --- the epoch loop ----------------------------------------------------------


@dataclass
class BatchStats:
    """Everything one epoch measured and decided."""

    entropies: np.ndarray
    curiosity_scores: np.ndarray | None
    selected_indices: np.ndarray
    pdf_probs: np.ndarray | None
    kl_at_stop: float
    inner_steps: int
    aborted: bool = False

    @property
    def selection_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.entropies), dtype=bool)
        mask[self.selected_indices] = True
        return mask


def run_epoch(
    pol: GaussianPolicy,
    env_class: EnvClass,
    cfg: PretrainConfig,
    schedule: ScheduleState,
    model: ForwardModel | None = None,
    epoch_index: int = 0,
) -> tuple[BatchStats, list]:
    """One pretraining epoch; updates ``pol`` (and ``model``) in place.

    Returns the epoch's stats and the collected batch (the caller owns
    heatmap accumulation and logging).
    """
    streams = [
        seeding.substream(cfg.seed, seeding.ROLLOUT, epoch_index, i)
        for i in range(cfg.batch_size)
    ]
    batch = rollout_batch(env_class, pol, streams, workers=cfg.workers)
    entropies = batch_entropies(batch, cfg.k_neighbors)

    curiosity_scores = None
    if model is not None:
        # Score with the model as of the previous epoch (prediction error is
        # the novelty signal), then fit it to the fresh batch.
        curiosity_scores = np.array([s.trajectory_score for s in score_trajectories(model, batch)])
        train_forward_model(
            model, batch,
            epochs_inner=cfg.model_epochs,
            minibatch=cfg.model_minibatch,
            learning_rate=cfg.model_learning_rate,
            rng=seeding.substream(cfg.seed, seeding.MODEL_TRAIN, epoch_index),
        )

    pdf_probs = None
    if cfg.strategy == STRATEGY_CVAR:
        selected = select_cvar(entropies, schedule.percentile)
    elif cfg.strategy == STRATEGY_PDF:
        pdf_probs = softmax_probs(entropies, cfg.pdf_temperature)
        selected = select_pdf(
            entropies, cfg.alpha_percentile,
            seeding.substream(cfg.seed, seeding.SELECTION, epoch_index),
            cfg.pdf_temperature,
        )
    else:
        selected = select_curious(curiosity_scores, schedule.percentile)

    # Stop-gradient trajectory weights.  The CVaR term uses the tail form
    # of the risk-measure policy gradient: each selected trajectory is
    # weighted by how far its entropy falls below the selection's highest
    # entropy (its distance below the percentile threshold), so the update
    # only pushes probability away from the worst behavior instead of
    # cloning other tail trajectories.  The raw curiosity score adds the
    # intrinsic term when enabled.  Duplicate-heavy trajectories produce
    # entropy outliers tens of nats below the rest, so weights are capped
    # to keep single trajectories from dominating an update.
    chosen_entropies = entropies[selected]
    weights = chosen_entropies - chosen_entropies.max()
    if cfg.curiosity_enabled and cfg.curiosity_weight > 0 and curiosity_scores is not None:
        weights = weights + cfg.curiosity_weight * curiosity_scores[selected]
    if cfg.weight_cap > 0:
        weights = np.clip(weights, -cfg.weight_cap, cfg.weight_cap)

    data = flatten_steps([batch[i] for i in selected], per_traj_weights=weights)
    kl_states = np.concatenate([t.states for t in batch])

    stats = BatchStats(
        entropies=entropies,
        curiosity_scores=curiosity_scores,
        selected_indices=np.asarray(selected, dtype=int),
        pdf_probs=pdf_probs,
        kl_at_stop=0.0,
        inner_steps=0,
    )
    snapshot = pol.params_flat()
    # The threshold bounds the KL divergence summed over the epoch's state
    # sample (kl_estimate reports the per-state mean, so scale by the
    # sample size).  Summing makes the budget count total policy movement
    # across everything the behavioral snapshot visited.
    kl_scale = len(kl_states)
    try:
        result = kl_bounded_ascent(
            pol, data, kl_states,
            kl_threshold=cfg.kl_threshold / kl_scale,
            learning_rate=cfg.learning_rate,
            max_inner_steps=cfg.max_inner_steps,
        )
    except NumericError as exc:
        pol.set_params_flat(snapshot)
        stats.aborted = True
        logger.warning("epoch %d aborted, policy restored: %s", epoch_index, exc)
        return stats, batch
    stats.kl_at_stop = result.kl_at_stop * kl_scale
    stats.inner_steps = result.inner_steps
    return stats, batch


@dataclass
class PretrainResult:
    policy: GaussianPolicy
    model: ForwardModel | None
    rows: list[dict]
    grid: VisitGrid


def run_pretrain(
    env_class: EnvClass,
    cfg: PretrainConfig,
    out_dir: str | None = None,
    grid_cells: int = 50,
) -> PretrainResult:
    """Full pretraining run: epochs, schedule, logging, heatmap, checkpoints."""
    pol = GaussianPolicy.create(
        state_dim=2, action_dim=2,
        rng=seeding.substream(cfg.seed, seeding.POLICY_INIT),
        hidden=cfg.policy_hidden,
        initial_log_std=cfg.initial_log_std,
        mean_scale=cfg.policy_mean_scale,
    )
    model = None
    if cfg.uses_curiosity_model:
        model = ForwardModel(
            state_dim=2, action_dim=2,
            rng=seeding.substream(cfg.seed, seeding.MODEL_INIT),
            hidden=cfg.model_hidden,
        )
    schedule = init_schedule(cfg)
    grid = VisitGrid.create(side=env_class.geometry.side, cells=grid_cells)
    rows = []
    for e in range(cfg.epochs):
        stats, batch = run_epoch(pol, env_class, cfg, schedule, model, epoch_index=e)
        for traj in batch:
            grid.accumulate(traj.states)
        # Accepted updates always satisfy the bound; fail loudly if not.
        assert stats.kl_at_stop <= cfg.kl_threshold, (
            f"epoch {e}: accepted KL {stats.kl_at_stop} exceeds threshold {cfg.kl_threshold}"
        )
        alpha = schedule.alpha(cfg.batch_size)
        rows.append({
            "epoch": e,
            "mean_entropy": float(stats.entropies.mean()),
            "cvar_entropy": cvar(stats.entropies, alpha),
            "alpha": alpha,
            "percentile": schedule.percentile,
            "kl_at_stop": float(stats.kl_at_stop),
            "inner_steps": int(stats.inner_steps),
            "mean_curiosity": float(stats.curiosity_scores.mean()) if stats.curiosity_scores is not None else 0.0,
        })
        if out_dir and cfg.checkpoint_interval > 0 and (e + 1) % cfg.checkpoint_interval == 0:
            pol.save(os.path.join(out_dir, f"policy_epoch{e + 1:04d}.ckpt"))
        schedule = alpha_schedule(schedule, cfg)

    if out_dir:
        write_pretrain_log(os.path.join(out_dir, "pretrain_log.csv"), rows)
        write_heatmap_csv(os.path.join(out_dir, "heatmap.csv"), grid)
        write_heatmap_pgm(os.path.join(out_dir, "heatmap.pgm"), grid)
        pol.save(os.path.join(out_dir, "policy.ckpt"))
        if model is not None:
            model.save(os.path.join(out_dir, "forward_model.ckpt"))
    return PretrainResult(policy=pol, model=model, rows=rows, grid=grid)


def write_pretrain_log(path, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PRETRAIN_LOG_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in PRETRAIN_LOG_COLUMNS])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
