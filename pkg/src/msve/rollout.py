"""Episode collection.

Each trajectory owns an RNG stream derived from the run seed, the epoch
and its batch index, so batches are bit-reproducible for any worker count
and scheduling order.  The first draw on a trajectory's stream picks the
environment; subsequent draws are the action noise.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .env import EnvClass, reset, sample_env_index, step
from .policy import GaussianPolicy, Trajectory


def rollout_trajectory(
    env_class: EnvClass,
    pol: GaussianPolicy,
    rng: np.random.Generator,
    goal: np.ndarray | None = None,
    goal_radius: float = 0.0,
) -> Trajectory:
    """Roll one episode in a freshly sampled class member.

    Without a goal the episode runs to the horizon.  With one, a unit
    reward is granted on entering the goal radius and the episode ends.
    """
    env_id = sample_env_index(env_class, rng)
    spec = env_class.members[env_id]
    state = reset(spec, rng)
    states = [state.position]
    actions = []
    logps = []
    rewards = [] if goal is not None else None
    for _ in range(spec.horizon):
        action, logp = pol.sample_action(state.position, rng)
        state, done = step(spec, state, action)
        states.append(state.position)
        actions.append(action)
        logps.append(logp)
        if goal is not None:
            reached = float(np.hypot(*(state.position - goal))) <= goal_radius
            rewards.append(1.0 if reached else 0.0)
            if reached:
                break
        if done:
            break
    return Trajectory(
        states=np.array(states),
        actions=np.array(actions),
        logp_behavioral=np.array(logps),
        env_id=env_id,
        rewards=None if rewards is None else np.array(rewards),
    )


def rollout_batch(
    env_class: EnvClass,
    pol: GaussianPolicy,
    streams: list[np.random.Generator],
    goal: np.ndarray | None = None,
    goal_radius: float = 0.0,
    workers: int = 1,
) -> list[Trajectory]:
    """Roll one episode per stream; results are ordered by stream index."""
    def one(rng: np.random.Generator) -> Trajectory:
        return rollout_trajectory(env_class, pol, rng, goal=goal, goal_radius=goal_radius)

    if workers <= 1:
        return [one(rng) for rng in streams]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, streams))
