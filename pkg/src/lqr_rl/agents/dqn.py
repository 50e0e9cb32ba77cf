"""Deep Q-learning over a discrete action grid with optional extra candidates.

The Q network maps ``observation (+) normalized action (+ abstract flag)`` to a
scalar, so any action vector, including a state-dependent LQR suggestion,
can be scored by the same network.
"""
import numpy as np

from .. import nn


class ActionCodec:
    """Scales observations and actions into network inputs."""

    def __init__(self, action_min, action_max, obs_scale=None):
        lo = np.asarray(action_min, dtype=float)
        hi = np.asarray(action_max, dtype=float)
        self.center = 0.5 * (lo + hi)
        self.half = 0.5 * (hi - lo)
        self.obs_scale = None if obs_scale is None or len(obs_scale) == 0 else np.asarray(obs_scale, float)

    def obs(self, o):
        o = np.asarray(o, dtype=float)
        return o * self.obs_scale if self.obs_scale is not None else o

    def action(self, a):
        return (np.asarray(a, dtype=float) - self.center) / self.half

    def unit_to_action(self, u):
        return self.center + self.half * u


class DqnAgent:
    def __init__(self, obs_dim, actions, action_min, action_max, rng, hidden=(64, 64),
                 lr=1e-3, epsilon=0.05, gamma=0.99, batch_size=64, target_period=100,
                 abstract=False, obs_scale=None, init_rng=None):
        self.actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if len(self.actions) == 0:
            raise ValueError("DQN needs at least one discrete action")
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.obs_dim = obs_dim
        self.action_dim = self.actions.shape[1]
        self.codec = ActionCodec(action_min, action_max, obs_scale)
        self.abstract = abstract
        self.rng = rng
        self.epsilon = epsilon
        self.gamma = gamma
        self.batch_size = batch_size
        self.target_period = target_period
        width = obs_dim + self.action_dim
        spec = nn.NetworkSpec(width, tuple(hidden), 1, "relu", "linear")
        self.q = nn.Network.init(spec, init_rng if init_rng is not None else rng)
        if abstract:
            # the abstract flag starts with zero weight, so the network is
            # initially the plain one and the flag is learned from use
            w0 = self.q.weights[0]
            self.q = nn.Network(nn.NetworkSpec(width + 1, tuple(hidden), 1, "relu", "linear"),
                                [np.hstack([w0, np.zeros((w0.shape[0], 1))])] + self.q.weights[1:],
                                self.q.biases)
        self.q_target = self.q.copy()
        self.optim = nn.AdamState.for_network(self.q, lr=lr)
        self.train_steps = 0
        self._unit_actions = self.codec.action(self.actions)

    # inputs -------------------------------------------------------------
    def _inputs(self, obs, unit_actions, flags=None):
        """Rows ``[obs, action, flag]``; ``obs`` is (N, do), actions (N, da)."""
        cols = [self.codec.obs(obs), unit_actions]
        if self.abstract:
            f = np.zeros((len(unit_actions), 1)) if flags is None else np.asarray(flags, float)[:, None]
            cols.append(f)
        return np.hstack(cols)

    def candidate_inputs(self, obs, extra=None):
        """Inputs for the discrete set followed by ``extra`` candidates.

        ``extra`` is a list of ``(action_vector, abstract_flag)``.
        """
        n = len(self.actions) + (len(extra) if extra else 0)
        units = self._unit_actions
        flags = np.zeros(n)
        if extra:
            ex = np.array([self.codec.action(a) for a, _ in extra])
            units = np.vstack([units, ex])
            flags[len(self.actions):] = [f for _, f in extra]
        return self._inputs(np.broadcast_to(obs, (n, len(obs))), units, flags)

    def q_values(self, obs, extra=None, target=False):
        net = self.q_target if target else self.q
        return nn.forward(net, self.candidate_inputs(obs, extra))[:, 0]

    # acting -------------------------------------------------------------
    def select(self, obs, extra=None, explore=True):
        """Epsilon-greedy choice; returns the candidate index.

        Indices below ``len(actions)`` address the discrete grid, the rest
        address ``extra`` in order.  Random with probability epsilon.
        """
        n = len(self.actions) + (len(extra) if extra else 0)
        if explore and self.rng.random() < self.epsilon:
            return int(self.rng.integers(n))
        return int(np.argmax(self.q_values(obs, extra)))

    # learning -----------------------------------------------------------
    def targets(self, batch, lqr=None, mode=None, abstract_available=False):
        """Bootstrapped regression targets for a minibatch.

        ``mode='integrated'`` adds ``lqr.control(s')`` as a per-sample
        candidate, recomputed from the current controller on every call.
        ``abstract_available`` adds the abstract LQR action to the max.
        """
        nb = len(batch)
        k = len(self.actions)
        extra_units = None
        extra_flags = None
        if mode == "integrated" and lqr is not None:
            extra_units = self.codec.action(lqr.control(batch.next_state))
            extra_flags = np.zeros(nb)
        elif self.abstract and abstract_available:
            extra_units = np.zeros((nb, self.action_dim))
            extra_flags = np.ones(nb)
        width = k + (0 if extra_units is None else 1)
        obs = np.repeat(batch.next_observation, width, axis=0)
        units = np.tile(self._unit_actions, (nb, 1))
        flags = np.zeros(nb * k)
        if extra_units is not None:
            units = np.concatenate([units.reshape(nb, k, -1), extra_units[:, None, :]], axis=1)
            units = units.reshape(nb * width, -1)
            flags = np.concatenate([flags.reshape(nb, k), extra_flags[:, None]], axis=1).ravel()
        q_next = nn.forward(self.q_target, self._inputs(obs, units, flags))[:, 0].reshape(nb, width)
        best = q_next.max(axis=1)
        bootstrap = np.where(batch.terminal, 0.0, self.gamma ** batch.dt * best)
        return batch.reward + bootstrap

    def train_step(self, memory, lqr=None, mode=None, abstract_available=False):
        batch = memory.sample_batch(self.batch_size)
        y = self.targets(batch, lqr, mode, abstract_available)
        x = self._inputs(batch.observation, self.codec.action(batch.action),
                         batch.abstract_index if self.abstract else None)
        q = nn.forward(self.q, x)[:, 0]
        err = q - y
        grads, _ = nn.gradient(self.q, x, (2.0 / len(err)) * err[:, None])
        nn.adam_step(self.q, grads, self.optim)
        self.train_steps += 1
        if self.train_steps % self.target_period == 0:
            nn.target_update(self.q_target, self.q, "copy")
        return float(np.mean(err * err))

    def networks(self):
        return {"q": self.q, "q_target": self.q_target}
