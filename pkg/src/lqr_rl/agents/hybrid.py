"""LQR capture, abstract LQR action and integrated LQR action wrappers.

``HybridAgent`` is the single object the harness drives: it owns the base
learner, the replay memory, the dynamics source and the per-episode
bookkeeping for semi-MDP transitions.
"""
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .. import nn
from ..errors import ConfigError, ModelUnavailable, RiccatiDivergence, LinearizationError
from ..lqr import controller_for_env, fit_llr_model, linearize_true
from ..replay import ReplayMemory, Transition, accumulate_smdp
from .ddpg import DdpgAgent
from .dqn import DqnAgent

log = logging.getLogger(__name__)

MODES = ("none", "capture", "abstract", "integrated")
CHECKPOINT_MAGIC = b"LQRAG1"


@dataclass
class AgentConfig:
    hidden: tuple = (64, 64)
    q_lr: float = 1e-3
    actor_lr: float = 1e-4
    epsilon: float = 0.05
    eps_choice: float = None         # DDPG actor-vs-LQR exploration; defaults to epsilon
    batch_size: int = 64
    target_period: int = 100
    polyak: float = 0.001
    warmup: int = 1000
    train_every: int = 1
    ou_friction: float = 0.15
    sigma: float = None              # env default when None
    gamma: float = None              # env default when None
    reward_scale: float = None       # env default when None
    capture_threshold: float = None  # calibrated when None
    llr_k: int = 64
    llr_memory: int = 10000
    llr_ridge: float = None
    feedforward: str = "cancel"
    replay_capacity: int = None

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown agent options: {sorted(unknown)}")
        cfg = cls(**values)
        cfg.hidden = tuple(int(h) for h in (cfg.hidden if isinstance(cfg.hidden, (list, tuple))
                                            else [cfg.hidden]))
        return cfg


@dataclass
class HybridConfig:
    base: str            # "dqn" or "ddpg"
    mode: str = "none"
    dynamics: str = "known"

    @property
    def name(self):
        suffix = {"none": "", "capture": "-lqr", "abstract": "-lqr-a", "integrated": "-lqr-ia"}[self.mode]
        ld = "-ld" if self.mode != "none" and self.dynamics == "learned" else ""
        return self.base + suffix + ld


def parse_agent_name(name):
    """Map an agent name such as ``dqn-lqr-ia-ld`` to a HybridConfig."""
    parts = name.strip().lower().replace("_", "-").split("-")
    base = parts[0]
    if base not in ("dqn", "ddpg"):
        raise ConfigError(f"unknown base learner in agent name {name!r}")
    rest = parts[1:]
    dynamics = "known"
    if rest and rest[-1] == "ld":
        dynamics = "learned"
        rest = rest[:-1]
    table = {(): "none", ("lqr",): "capture", ("lqr", "a"): "abstract", ("lqr", "ia"): "integrated"}
    try:
        mode = table[tuple(rest)]
    except KeyError:
        raise ConfigError(f"unrecognised agent name {name!r}")
    if mode == "none" and dynamics == "learned":
        raise ConfigError(f"{name!r}: learned dynamics needs an LQR mode")
    if mode == "abstract" and base != "dqn":
        raise ConfigError(f"{name!r}: the abstract LQR action needs a discrete action set")
    return HybridConfig(base, mode, dynamics)


# -- dynamics sources ------------------------------------------------------

class KnownDynamics:
    """Controller from the true linearization, built once."""

    def __init__(self, env, feedforward="cancel"):
        self.env = env
        self.controller = None
        try:
            model = linearize_true(env, env.spec.goal)
            self.controller = controller_for_env(env, model, feedforward)
        except (RiccatiDivergence, LinearizationError) as exc:
            log.warning("LQR disabled for %s: %s", env.spec.name, exc)
        self.refits = 0

    def record(self, state, action, next_state):
        pass

    def refresh(self):
        return self.controller


class LearnedDynamics:
    """Controller refitted by local linear regression on recent transitions."""

    def __init__(self, env, k=64, capacity=10000, ridge=None, feedforward="cancel", rng=None):
        self.env = env
        self.k = k
        self.ridge = ridge
        self.feedforward = feedforward
        self.memory = ReplayMemory(capacity, rng=rng)
        self.controller = None
        self.refits = 0

    def record(self, state, action, next_state):
        self.memory.push(Transition(state, state, action, 0.0, next_state, next_state))

    def refresh(self):
        spec = self.env.spec
        try:
            model = fit_llr_model(self.memory, spec.goal, self.k, self.ridge,
                                  angle_dims=spec.angle_dims)
            self.controller = controller_for_env(self.env, model, self.feedforward)
            self.refits += 1
        except (ModelUnavailable, RiccatiDivergence):
            self.controller = None
        return self.controller


# -- capture region calibration --------------------------------------------

_CAPTURE_CACHE = {}


def _env_key(env):
    return (type(env).__name__, env.spec, tuple(sorted((k, repr(v)) for k, v in env.params.items())))


def calibrate_capture_threshold(env, controller=None, samples=100, seed=0,
                                levels=tuple(2.0 ** -k for k in range(-6, 15))):
    """Largest cost level from which the LQR stabilizes every sampled boundary state.

    States are drawn on the ellipsoid ``sbar' C sbar = rho`` (dimensions with
    zero cost are left at the goal) and simulated under the clamped
    controller on the true plant for one episode.  Results are cached per
    environment configuration.
    """
    key = _env_key(env)
    if key in _CAPTURE_CACHE:
        return _CAPTURE_CACHE[key]
    if controller is None:
        controller = controller_for_env(env, linearize_true(env, env.spec.goal))
    spec = env.spec
    weights = np.asarray(spec.cost_state, dtype=float)
    active = weights > 0
    goal = np.asarray(spec.goal, dtype=float)
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, int(active.sum())))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    chosen = 0.0
    for rho in sorted(levels, reverse=True):
        ok = True
        for d in directions:
            s = goal.copy()
            s[active] += d * np.sqrt(rho / weights[active])
            if not _stabilizes(env, controller, s, rho):
                ok = False
                break
        if ok:
            chosen = rho
            break
    _CAPTURE_CACHE[key] = chosen
    return chosen


def _stabilizes(env, controller, state, rho):
    for _ in range(env.spec.max_steps):
        if env.failed(state):
            return False
        c = env.cost(state)
        if c <= 1e-3 * rho:
            return True
        if c > 100.0 * rho or not np.all(np.isfinite(state)):
            return False
        state = env.integrate(state, env.clamp(controller.control(state)))
    return env.cost(state) <= 1e-3 * rho


# -- the wrapper -----------------------------------------------------------

@dataclass
class _Pending:
    state: np.ndarray
    observation: np.ndarray
    action: np.ndarray
    abstract_index: int
    rewards: list = field(default_factory=list)


class HybridAgent:
    """Base learner plus an optional embedded LQR controller."""

    def __init__(self, hybrid, env, config=None, seed=0):
        self.hybrid = hybrid
        self.env = env
        self.config = config if config is not None else AgentConfig()
        cfg = self.config
        spec = env.spec
        self.seed = seed
        seeds = np.random.SeedSequence(seed).spawn(4)
        init_rng, act_rng, replay_rng, llr_rng = (np.random.default_rng(s) for s in seeds)
        self.gamma = spec.gamma if cfg.gamma is None else cfg.gamma
        self.reward_scale = spec.reward_scale if cfg.reward_scale is None else cfg.reward_scale
        self.replay = ReplayMemory(cfg.replay_capacity, rng=replay_rng)
        obs_dim = spec.obs_dim
        if hybrid.base == "dqn":
            self.learner = DqnAgent(
                obs_dim, env.discrete_actions(), spec.action_min, spec.action_max, act_rng,
                hidden=cfg.hidden, lr=cfg.q_lr, epsilon=cfg.epsilon, gamma=self.gamma,
                batch_size=cfg.batch_size, target_period=cfg.target_period,
                abstract=hybrid.mode == "abstract", obs_scale=spec.obs_scale, init_rng=init_rng)
        else:
            sigma = spec.exploration_sigma if cfg.sigma is None else cfg.sigma
            self.learner = DdpgAgent(
                obs_dim, spec.action_min, spec.action_max, act_rng, hidden=cfg.hidden,
                critic_lr=cfg.q_lr, actor_lr=cfg.actor_lr, gamma=self.gamma,
                batch_size=cfg.batch_size, polyak=cfg.polyak, sigma=sigma,
                friction=cfg.ou_friction, obs_scale=spec.obs_scale, init_rng=init_rng)
        self.eps_choice = cfg.epsilon if cfg.eps_choice is None else cfg.eps_choice

        self.dynamics = None
        if hybrid.mode != "none":
            if hybrid.dynamics == "known":
                self.dynamics = KnownDynamics(env, cfg.feedforward)
            else:
                self.dynamics = LearnedDynamics(env, cfg.llr_k, cfg.llr_memory, cfg.llr_ridge,
                                                cfg.feedforward, llr_rng)
        self.capture_threshold = None
        if hybrid.mode == "capture":
            if cfg.capture_threshold is not None:
                self.capture_threshold = float(cfg.capture_threshold)
            else:
                known = self.dynamics.controller if hybrid.dynamics == "known" else None
                self.capture_threshold = calibrate_capture_threshold(env, known)
        self.controller = None
        self.env_steps = 0
        self.losses = []
        self.lqr_choices = 0
        self.decisions = 0
        self.on_refit = None
        self._pending = None
        self._last = None    # (used_lqr, stored_action, abstract_index)

    # -- episode hooks ----------------------------------------------------
    def begin_episode(self):
        if self.dynamics is not None:
            self.controller = self.dynamics.refresh()
            if self.controller is not None and self.on_refit is not None:
                self.on_refit(self.controller)
        if self.hybrid.base == "ddpg":
            self.learner.noise.reset()
        self._pending = None

    def in_region(self, state):
        return (self.capture_threshold is not None and self.controller is not None
                and self.env.cost(state) <= self.capture_threshold)

    # -- acting -----------------------------------------------------------
    def act(self, state, explore=True):
        """Pick the action to apply in ``state``."""
        state = np.asarray(state, dtype=float)
        obs = self.env.observe(state)
        mode = self.hybrid.mode
        ctrl = self.controller
        self.decisions += 1
        if mode == "capture" and self.in_region(state):
            a = ctrl.control(state)
            self._last = (True, a, 0)
            self.lqr_choices += 1
            return a
        if self.hybrid.base == "dqn":
            extra = None
            lqr_action = None
            if ctrl is not None and mode == "integrated":
                lqr_action = ctrl.control(state)
                extra = [(lqr_action, 0.0)]
            elif ctrl is not None and mode == "abstract":
                lqr_action = ctrl.control(state)
                extra = [(np.zeros(self.env.spec.action_dim), 1.0)]
            idx = self.learner.select(obs, extra, explore)
            k = len(self.learner.actions)
            if idx < k:
                a = self.learner.actions[idx].copy()
                self._last = (False, a, 0)
            else:
                self.lqr_choices += 1
                a = lqr_action
                if mode == "abstract":
                    self._last = (False, np.zeros_like(a), 1)
                else:
                    self._last = (False, a, 0)
            return a
        lqr = ctrl if mode == "integrated" else None
        a = self.learner.select(obs, state, lqr, self.eps_choice, explore)
        if self.learner.last_choice == "lqr":
            self.lqr_choices += 1
        self._last = (False, a, 0)
        return a

    # -- learning ---------------------------------------------------------
    def observe(self, state, action, reward, next_state, terminal, done):
        """Record one environment step.

        ``reward`` is the unscaled environment reward; ``terminal`` marks a
        failure (no bootstrap), ``done`` any episode end.
        """
        if self.dynamics is not None:
            self.dynamics.record(np.asarray(state, float), np.asarray(action, float),
                                 np.asarray(next_state, float))
        r = reward * self.reward_scale
        used_lqr, stored_action, abstract_index = self._last
        if used_lqr:
            if self._pending is not None:
                self._pending.rewards.append(r)
        else:
            self._pending = _Pending(np.asarray(state, float), self.env.observe(state),
                                     np.asarray(stored_action, float), abstract_index, [r])
        if self._pending is not None:
            inside = self.hybrid.mode == "capture" and not terminal and self.in_region(next_state)
            if not (inside and not done):
                self._emit(next_state, terminal, absorbing=done and inside)
        self.env_steps += 1
        if len(self.replay) >= max(self.config.warmup, 1) and self.env_steps % self.config.train_every == 0:
            self.train()

    def _emit(self, next_state, terminal, absorbing):
        p = self._pending
        total, dt, absorbing = accumulate_smdp(p.rewards, self.gamma, len(p.rewards), absorbing)
        self.replay.push(Transition(
            p.state, p.observation, p.action, total, np.asarray(next_state, float),
            self.env.observe(next_state), dt, bool(terminal or absorbing), absorbing,
            p.abstract_index))
        self._pending = None

    def end_episode(self):
        self._pending = None

    def train(self):
        mode = self.hybrid.mode
        if self.hybrid.base == "dqn":
            loss = self.learner.train_step(
                self.replay, self.controller, mode,
                abstract_available=mode == "abstract" and self.controller is not None)
        else:
            lqr = self.controller if mode == "integrated" else None
            loss, _ = self.learner.train_step(self.replay, lqr)
        return loss

    # -- checkpoints --------------------------------------------------------
    def save(self, path):
        header = json.dumps({"agent": self.hybrid.name, "env": self.env.spec.name,
                             "config": asdict(self.config)}).encode()
        nets = self.learner.networks()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + struct.pack("<II", len(header), len(nets)))
            fh.write(header)
            for name, net in nets.items():
                label = name.encode()
                fh.write(struct.pack("<I", len(label)) + label + nn.dumps(net))

    def load_networks(self, path):
        header, nets = read_checkpoint(path)
        if header["agent"] != self.hybrid.name:
            raise ConfigError(f"checkpoint is for {header['agent']}, not {self.hybrid.name}")
        for name, net in self.learner.networks().items():
            for dst, src in zip(net.params, nets[name].params):
                dst[...] = src
        return header


def read_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not an agent checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    hlen, count = struct.unpack_from("<II", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode())
    pos += hlen
    nets = {}
    for _ in range(count):
        (llen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + llen].decode()
        pos += llen
        nets[name], pos = nn.loads(data, pos)
    return header, nets


def make_agent(name, env, config=None, seed=0):
    """Build the agent for a name such as ``ddpg-lqr-ia-ld``."""
    hybrid = parse_agent_name(name)
    if isinstance(config, dict):
        config = AgentConfig.from_dict(config)
    return HybridAgent(hybrid, env, config, seed)
