"""Deterministic policy gradient with a tanh actor and Polyak-averaged targets."""
import numpy as np

from .. import nn
from .dqn import ActionCodec


class OUNoise:
    """Discrete Ornstein-Uhlenbeck process: x <- (1 - friction) x + sigma N(0, 1)."""

    def __init__(self, dim, sigma, friction=0.15, rng=None):
        self.dim = dim
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (dim,)).copy()
        self.friction = friction
        self.rng = rng if rng is not None else np.random.default_rng()
        self.x = np.zeros(dim)

    def reset(self):
        self.x = np.zeros(self.dim)

    def sample(self):
        self.x = (1.0 - self.friction) * self.x + self.sigma * self.rng.standard_normal(self.dim)
        return self.x.copy()


class DdpgAgent:
    def __init__(self, obs_dim, action_min, action_max, rng, hidden=(64, 64),
                 critic_lr=1e-3, actor_lr=1e-4, gamma=0.99, batch_size=64, polyak=0.001,
                 sigma=1.0, friction=0.15, obs_scale=None, init_rng=None):
        self.codec = ActionCodec(action_min, action_max, obs_scale)
        self.action_min = np.asarray(action_min, dtype=float)
        self.action_max = np.asarray(action_max, dtype=float)
        self.action_dim = len(self.action_min)
        self.obs_dim = obs_dim
        self.rng = rng
        self.gamma = gamma
        self.batch_size = batch_size
        self.polyak = polyak
        init = init_rng if init_rng is not None else rng
        self.actor = nn.Network.init(
            nn.NetworkSpec(obs_dim, tuple(hidden), self.action_dim, "relu", "tanh"), init)
        self.critic = nn.Network.init(
            nn.NetworkSpec(obs_dim + self.action_dim, tuple(hidden), 1, "relu", "linear"), init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_optim = nn.AdamState.for_network(self.actor, lr=actor_lr)
        self.critic_optim = nn.AdamState.for_network(self.critic, lr=critic_lr)
        self.noise = OUNoise(self.action_dim, sigma, friction, rng)
        self.last_choice = "actor"

    def policy(self, obs, target=False):
        """Actor output mapped onto the action bounds."""
        net = self.actor_target if target else self.actor
        return self.codec.unit_to_action(nn.forward(net, self.codec.obs(obs)))

    def q_value(self, obs, actions, target=False):
        net = self.critic_target if target else self.critic
        obs = np.atleast_2d(obs)
        units = np.atleast_2d(self.codec.action(actions))
        return nn.forward(net, np.hstack([self.codec.obs(obs), units]))[:, 0]

    def select(self, obs, state=None, lqr=None, eps_choice=0.05, explore=True):
        """Actor action, or the better of actor and LQR, plus OU noise."""
        action = self.policy(obs)
        self.last_choice = "actor"
        if lqr is not None:
            lqr_action = lqr.control(state)
            q = self.q_value(np.vstack([obs, obs]), np.vstack([action, lqr_action]))
            lqr_better = q[1] > q[0]
            if explore and self.rng.random() < eps_choice:
                lqr_better = not lqr_better
            if lqr_better:
                action = lqr_action
                self.last_choice = "lqr"
        if explore:
            action = action + self.noise.sample()
        return np.clip(action, self.action_min, self.action_max)

    def critic_targets(self, batch, lqr=None):
        nxt = batch.next_observation
        cand = self.policy(nxt, target=True)
        q_next = self.q_value(nxt, cand, target=True)
        if lqr is not None:
            q_lqr = self.q_value(nxt, lqr.control(batch.next_state), target=True)
            q_next = np.maximum(q_next, q_lqr)
        bootstrap = np.where(batch.terminal, 0.0, self.gamma ** batch.dt * q_next)
        return batch.reward + bootstrap

    def actor_gradient(self, obs):
        """Gradient of ``-mean Q(s, mu(s))`` w.r.t. the actor parameters."""
        x_obs = self.codec.obs(obs)
        units = nn.forward(self.actor, x_obs)
        x = np.hstack([x_obs, units])
        q = nn.forward(self.critic, x)[:, 0]
        _, dx = nn.gradient(self.critic, x, np.ones((len(x), 1)))
        dq_du = dx[:, self.obs_dim:]
        grads, _ = nn.gradient(self.actor, x_obs, -dq_du / len(x))
        return grads, float(np.mean(q))

    def train_step(self, memory, lqr=None):
        """One critic and one actor update; returns (critic loss, mean Q of actor)."""
        batch = memory.sample_batch(self.batch_size)
        y = self.critic_targets(batch, lqr)
        x = np.hstack([self.codec.obs(batch.observation), self.codec.action(batch.action)])
        q = nn.forward(self.critic, x)[:, 0]
        err = q - y
        grads, _ = nn.gradient(self.critic, x, (2.0 / len(err)) * err[:, None])
        nn.adam_step(self.critic, grads, self.critic_optim)

        actor_grads, objective = self.actor_gradient(batch.observation)
        nn.adam_step(self.actor, actor_grads, self.actor_optim)

        nn.target_update(self.critic_target, self.critic, "moving_average", self.polyak)
        nn.target_update(self.actor_target, self.actor, "moving_average", self.polyak)
        return float(np.mean(err * err)), objective

    def networks(self):
        return {"actor": self.actor, "actor_target": self.actor_target,
                "critic": self.critic, "critic_target": self.critic_target}
