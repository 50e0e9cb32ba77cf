"""Simulated plants: motor-driven pendulum, cart-pole and the 2d flyer.

All plants integrate their ODE with fixed-step RK4 (5 substeps per control
step), wrap angles into (-pi, pi] and pay the quadratic reward
``-(sbar' C sbar + a' D a)`` evaluated at the state the action is taken in.
"""
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, SimulationDiverged

RUNNING, TIMEOUT, FAILED = "running", "timeout", "failed"
SUBSTEPS = 5


def wrap_angle(theta):
    """Map an angle into (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_min: tuple
    action_max: tuple
    goal: tuple
    cost_state: tuple        # diagonal of C
    cost_action: tuple       # diagonal of D
    tau: float
    timeout: float
    discretization: tuple
    angle_dims: tuple = ()
    gamma: float = 0.99
    exploration_sigma: float = 1.0
    reward_scale: float = 1.0
    obs_scale: tuple = ()    # multiplies the sine-cosine observation for network input

    def __post_init__(self):
        if self.tau <= 0 or self.timeout <= 0:
            raise ConfigError("tau and timeout must be positive")
        if min(self.cost_state) < 0 or min(self.cost_action) < 0:
            raise ConfigError("cost diagonals must be nonnegative")
        if len(self.discretization) != self.action_dim or min(self.discretization) < 2:
            raise ConfigError("need >= 2 discretization levels per action dimension")

    @property
    def max_steps(self):
        return int(math.ceil(self.timeout / self.tau - 1e-9))

    @property
    def obs_dim(self):
        return self.state_dim + len(self.angle_dims)

    @property
    def C(self):
        return np.diag(np.asarray(self.cost_state, dtype=float))

    @property
    def D(self):
        return np.diag(np.asarray(self.cost_action, dtype=float))


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    status: str = RUNNING

    @property
    def done(self):
        return self.status != RUNNING


class Env:
    """Base plant. Subclasses provide ``spec``, ``params`` and ``derivatives``."""

    spec: EnvSpec
    fail_mode = "none"

    def __init__(self, spec=None, **params):
        if spec is not None:
            self.spec = spec
        unknown = set(params) - set(self.params)
        if unknown:
            raise ConfigError(f"unknown {self.spec.name} parameters: {sorted(unknown)}")
        self.params = {**self.params, **params}
        self._lo = np.asarray(self.spec.action_min, dtype=float)
        self._hi = np.asarray(self.spec.action_max, dtype=float)
        self._goal = np.asarray(self.spec.goal, dtype=float)
        self._c = np.asarray(self.spec.cost_state, dtype=float)
        self._d = np.asarray(self.spec.cost_action, dtype=float)
        self._angles = tuple(self.spec.angle_dims)
        self.steps = 0

    # -- dynamics -------------------------------------------------------
    def derivatives(self, s, a):
        raise NotImplementedError

    def start_state(self):
        raise NotImplementedError

    def integrate(self, state, action):
        """RK4 over one control step without clamping or termination."""
        s = [float(v) for v in state]
        a = [float(v) for v in action]
        h = self.spec.tau / SUBSTEPS
        f = self.derivatives
        n = len(s)
        for _ in range(SUBSTEPS):
            k1 = f(s, a)
            k2 = f([s[i] + 0.5 * h * k1[i] for i in range(n)], a)
            k3 = f([s[i] + 0.5 * h * k2[i] for i in range(n)], a)
            k4 = f([s[i] + h * k3[i] for i in range(n)], a)
            s = [s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]
        for i in self._angles:
            s[i] = wrap_angle(s[i])
        out = np.array(s)
        if not np.all(np.isfinite(out)):
            raise SimulationDiverged(f"{self.spec.name}: non-finite state {out}")
        return out

    # -- episode interface ----------------------------------------------
    def reset(self):
        self.steps = 0
        return np.array(self.start_state(), dtype=float)

    def clamp(self, action):
        return np.clip(np.asarray(action, dtype=float).reshape(self.spec.action_dim),
                       self._lo, self._hi)

    def deviation(self, state):
        sbar = np.asarray(state, dtype=float) - self._goal
        for i in self._angles:
            sbar[i] = wrap_angle(sbar[i])
        return sbar

    def cost(self, state):
        sbar = self.deviation(state)
        return float(np.dot(self._c * sbar, sbar))

    def reward(self, state, action):
        a = np.asarray(action, dtype=float)
        return -(self.cost(state) + float(np.dot(self._d * a, a)))

    def failed(self, state):
        return False

    def step(self, state, action):
        state = np.asarray(state, dtype=float)
        if not np.all(np.isfinite(state)):
            raise SimulationDiverged(f"{self.spec.name}: non-finite state {state}")
        a = self.clamp(action)
        r = self.reward(state, a)
        nxt = self.integrate(state, a)
        self.steps += 1
        failed = self.failed(nxt)
        if failed and self.fail_mode == "hold":
            # remaining time is charged as if the plant stayed where it failed
            r -= self.cost(nxt) * (self.spec.max_steps - self.steps)
        if not math.isfinite(r):
            raise SimulationDiverged(f"{self.spec.name}: non-finite reward at state {state}")
        if failed:
            return StepResult(nxt, r, FAILED)
        status = TIMEOUT if self.steps >= self.spec.max_steps else RUNNING
        return StepResult(nxt, r, status)

    def observe(self, state):
        out = []
        for i, v in enumerate(state):
            if i in self._angles:
                out.extend((math.sin(v), math.cos(v)))
            else:
                out.append(float(v))
        return np.array(out)

    def discrete_actions(self):
        grids = [np.linspace(lo, hi, n) for lo, hi, n in
                 zip(self._lo, self._hi, self.spec.discretization)]
        return np.array(list(itertools.product(*grids)), dtype=float)


class Pendulum(Env):
    """Underactuated DC-motor pendulum; angle 0 is upright."""

    spec = EnvSpec(
        name="pendulum", state_dim=2, action_dim=1,
        action_min=(-3.0,), action_max=(3.0,), goal=(0.0, 0.0),
        cost_state=(5.0, 0.01), cost_action=(1.0,),
        tau=0.03, timeout=3.0, discretization=(3,), angle_dims=(0,),
        gamma=0.99, exploration_sigma=1.0, reward_scale=0.1,
        obs_scale=(1.0, 1.0, 0.1))
    params = {"J": 1.91e-4, "m": 0.055, "g": 9.81, "l": 0.042,
              "b": 3e-6, "K": 0.0536, "R": 9.5}

    def __init__(self, spec=None, **params):
        super().__init__(spec, **params)
        p = self.params
        self._grav = p["m"] * p["g"] * p["l"] / p["J"]
        self._damp = (p["b"] + p["K"] ** 2 / p["R"]) / p["J"]
        self._gain = p["K"] / (p["R"] * p["J"])

    def derivatives(self, s, a):
        th, thd = s
        return [thd, self._grav * math.sin(th) - self._damp * thd + self._gain * a[0]]

    def start_state(self):
        return [math.pi, 0.0]

    def energy(self, state):
        p = self.params
        th, thd = state
        return 0.5 * p["J"] * thd ** 2 + p["m"] * p["g"] * p["l"] * math.cos(th)


class CartPole(Env):
    """Frictionless cart-pole; state [x, theta, xdot, thetadot], theta 0 upright."""

    spec = EnvSpec(
        name="cartpole", state_dim=4, action_dim=1,
        action_min=(-15.0,), action_max=(15.0,), goal=(0.0, 0.0, 0.0, 0.0),
        cost_state=(2.0, 1.0, 0.1, 0.1), cost_action=(1.0 / 15.0,),
        tau=0.05, timeout=10.0, discretization=(3,), angle_dims=(1,),
        gamma=0.97, exploration_sigma=5.0, reward_scale=0.1,
        obs_scale=(1.0, 1.0, 1.0, 0.5, 0.2))
    params = {"cart_mass": 1.0, "pole_mass": 0.1, "half_length": 0.25, "g": 9.81}

    def derivatives(self, s, a):
        p = self.params
        _, th, xd, thd = s
        mc, mp, l, g = p["cart_mass"], p["pole_mass"], p["half_length"], p["g"]
        total = mc + mp
        sin, cos = math.sin(th), math.cos(th)
        tmp = (a[0] + mp * l * thd * thd * sin) / total
        thdd = (g * sin - cos * tmp) / (l * (4.0 / 3.0 - mp * cos * cos / total))
        xdd = tmp - mp * l * thdd * cos / total
        return [xd, thd, xdd, thdd]

    def start_state(self):
        return [0.0, math.pi, 0.0, 0.0]


class Flyer(Env):
    """Rod with two tip thrusters; action is thrust minus 0.5 N per tip."""

    spec = EnvSpec(
        name="flyer", state_dim=6, action_dim=2,
        action_min=(-0.1, -0.1), action_max=(0.1, 0.1), goal=(0.0,) * 6,
        cost_state=(1.0, 1.0, 1.0, 0.0, 0.0, 0.0), cost_action=(1.0, 1.0),
        tau=0.05, timeout=20.0, discretization=(3, 3), angle_dims=(2,),
        gamma=0.99, exploration_sigma=0.01, reward_scale=1.0,
        obs_scale=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.2))
    params = {"m": 0.1, "l": 0.1, "g": 9.81, "thrust_offset": 0.5,
              "area": (-1.0, -1.0, 1.0, 1.0), "obstacle": (-0.4, -0.3, 0.1, -0.2),
              "start": (-0.4, -0.4)}
    fail_mode = "hold"

    def __init__(self, spec=None, fail_mode=None, **params):
        super().__init__(spec, **params)
        if fail_mode is not None:
            if fail_mode not in ("none", "hold"):
                raise ConfigError(f"unknown fail_mode {fail_mode!r}")
            self.fail_mode = fail_mode
        p = self.params
        self.inertia = p["m"] * p["l"] ** 2 / 3.0

    def derivatives(self, s, a):
        p = self.params
        _, _, th, xd, yd, thd = s
        fl = a[0] + p["thrust_offset"]
        fr = a[1] + p["thrust_offset"]
        total = fl + fr
        return [xd, yd, thd,
                -total * math.sin(th) / p["m"],
                total * math.cos(th) / p["m"] - p["g"],
                (fr - fl) * p["l"] / self.inertia]

    def start_state(self):
        x, y = self.params["start"]
        return [x, y, 0.0, 0.0, 0.0, 0.0]

    def failed(self, state):
        x, y = state[0], state[1]
        ax0, ay0, ax1, ay1 = self.params["area"]
        if not (ax0 < x < ax1 and ay0 < y < ay1):
            return True
        ox0, oy0, ox1, oy1 = self.params["obstacle"]
        return ox0 < x < ox1 and oy0 < y < oy1

    def hover_action(self):
        p = self.params
        per_tip = p["m"] * p["g"] / 2.0 - p["thrust_offset"]
        return np.array([per_tip, per_tip])


ENVIRONMENTS = {"pendulum": Pendulum, "cartpole": CartPole, "flyer": Flyer}

_SPEC_FIELDS = {f for f in EnvSpec.__dataclass_fields__} - {"name"}


def make_env(name, **overrides):
    """Build an environment by name, splitting overrides between spec and physics."""
    try:
        cls = ENVIRONMENTS[name.replace("-", "").replace("_", "").replace("2d", "")]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    spec_over = {k: v for k, v in overrides.items() if k in _SPEC_FIELDS}
    phys = {k: v for k, v in overrides.items() if k not in _SPEC_FIELDS}
    for k, v in spec_over.items():
        if isinstance(v, list):
            spec_over[k] = tuple(v)
    spec = replace(cls.spec, **spec_over) if spec_over else None
    return cls(spec, **phys)
