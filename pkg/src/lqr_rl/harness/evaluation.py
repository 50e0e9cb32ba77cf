"""Greedy rollouts near the goal and the action-chatter statistic."""
from dataclasses import dataclass

import numpy as np

from .metrics import sign_changes

DEFAULT_OFFSETS = (-0.1, -0.05, 0.05, 0.1)


@dataclass
class ChatterReport:
    sign_changes_per_s: float
    lqr_fraction: float
    seconds: float
    final_cost: float


def greedy_rollout(agent, start, steps):
    """Run the greedy policy on the noiseless plant; no learning, no termination.

    Returns ``(actions, lqr_flags, final_state)``.
    """
    env = agent.env
    s = np.asarray(start, dtype=float)
    actions, flags = [], []
    for _ in range(steps):
        before = agent.lqr_choices
        a = env.clamp(agent.act(s, explore=False))
        actions.append(a)
        flags.append(agent.lqr_choices > before)
        s = env.integrate(s, a)
    return np.array(actions), np.array(flags), s


def evaluate_chatter(agent, offsets=DEFAULT_OFFSETS, dim=0, seconds=5.0, deadband=0.01):
    """Sign changes per second of the greedy action around the goal.

    One rollout starts at the goal displaced by each entry of ``offsets``
    along state dimension ``dim``.  An action counts as zero when its
    magnitude is below ``deadband`` times the actuator bound; changes
    between negative, zero and positive all count.
    """
    env = agent.env
    spec = env.spec
    steps = int(round(seconds / spec.tau))
    bound = np.max(np.abs(np.concatenate([spec.action_min, spec.action_max])))
    changes = 0
    picks = []
    costs = []
    for off in offsets:
        start = np.array(spec.goal, dtype=float)
        start[dim] += off
        actions, flags, final = greedy_rollout(agent, start, steps)
        changes += sum(sign_changes(actions[:, j], deadband * bound) for j in range(spec.action_dim))
        picks.append(flags)
        costs.append(env.cost(final))
    total = len(offsets) * steps * spec.tau
    return ChatterReport(changes / total, float(np.mean(np.concatenate(picks))), total,
                         float(np.mean(costs)))
