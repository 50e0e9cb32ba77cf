import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqr_rl import nn
from lqr_rl.agents import (AgentConfig, DdpgAgent, DqnAgent, OUNoise, make_agent,
                           parse_agent_name, read_checkpoint)
from lqr_rl.agents.hybrid import calibrate_capture_threshold
from lqr_rl.envs import make_env
from lqr_rl.errors import ConfigError
from lqr_rl.harness.runner import run_episode
from lqr_rl.lqr import LqrController
from lqr_rl.replay import ReplayMemory, Transition
from oracles import Integrator, oracle_transitions

ACTIONS = np.array([[-3.0], [0.0], [3.0]])


def dqn(epsilon=0.0, seed=0, obs_dim=3, **kw):
    return DqnAgent(obs_dim, ACTIONS, [-3.0], [3.0], np.random.default_rng(seed),
                    hidden=(8,), epsilon=epsilon, **kw)


def constant_target(agent, value):
    """Make the target network output ``value`` everywhere."""
    for w in agent.q_target.weights:
        w[...] = 0.0
    for b in agent.q_target.biases:
        b[...] = 0.0
    agent.q_target.biases[-1][...] = value


def one_batch(**kw):
    fields = dict(state=np.zeros(2), observation=np.zeros(3), action=np.zeros(1), reward=0.0,
                  next_state=np.zeros(2), next_observation=np.zeros(3))
    fields.update(kw)
    m = ReplayMemory()
    m.push(Transition(**fields))
    return m.batch([0])


def scalar_ctrl(F, a_ff=0.0, n=2):
    return LqrController(np.eye(n), np.atleast_2d(F), np.array([a_ff]), np.zeros(n),
                         np.array([-3.0]), np.array([3.0]))


# -- DQN -----------------------------------------------------------------------

def test_dqn_greedy_argmax_and_ties():
    ag = dqn()
    ag.q_values = lambda obs, extra=None: np.array([1.0, 3.0, 2.0])
    assert ag.select(np.zeros(3)) == 1
    ag.q_values = lambda obs, extra=None: np.array([2.0, 2.0, 1.0])
    assert ag.select(np.zeros(3)) == 0


def test_dqn_uniform_exploration():
    ag = dqn(epsilon=1.0, seed=3)
    extra = [(np.array([0.5]), 0.0)]
    n = 100_000
    counts = np.bincount([ag.select(np.zeros(3), extra) for _ in range(n)], minlength=4)
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) < 3 * sigma)


def test_epsilon_validation():
    with pytest.raises(ValueError):
        dqn(epsilon=1.5)
    with pytest.raises(ValueError):
        DqnAgent(3, np.zeros((0, 1)), [-3.0], [3.0], np.random.default_rng(0))


def test_extended_candidate_count():
    ag = dqn()
    assert ag.candidate_inputs(np.zeros(3)).shape[0] == 3
    assert ag.candidate_inputs(np.zeros(3), [(np.array([1.0]), 0.0)]).shape[0] == 4
    assert len(ag.q_values(np.zeros(3), [(np.array([1.0]), 0.0)])) == 4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_extended_set_dominance(seed):
    rng = np.random.default_rng(seed)
    ag = dqn(seed=seed)
    obs = rng.standard_normal(3)
    extra = [(rng.uniform(-3, 3, 1), 0.0)]
    ext, base = ag.q_values(obs, extra), ag.q_values(obs)
    # batch size changes BLAS summation order, hence the ulp-level tolerance
    assert ext[:3] == pytest.approx(base, abs=1e-12)
    assert ext.max() >= base.max() - 1e-12


def test_dqn_targets_arithmetic():
    ag = dqn(gamma=0.9)
    constant_target(ag, 2.0)
    assert ag.targets(one_batch(reward=1.0))[0] == pytest.approx(2.8)
    constant_target(ag, 1.0)
    assert ag.targets(one_batch(reward=1.9, dt=2))[0] == pytest.approx(2.71)
    assert ag.targets(one_batch(reward=-5.0, terminal=True))[0] == -5.0
    assert ag.targets(one_batch(reward=-5.0, dt=3, terminal=True, absorbing=True))[0] == -5.0


def test_dqn_targets_include_extended_candidates():
    ag = dqn(gamma=1.0)
    # target Q grows with the (normalized) action input
    for w in ag.q_target.weights:
        w[...] = 0.0
    for b in ag.q_target.biases:
        b[...] = 0.0
    ag.q_target.weights[0][0, 3] = 1.0    # hidden unit 0 reads the action
    ag.q_target.weights[1][0, 0] = 1.0
    ag.q_target.biases[0][0] = 2.0        # keep the ReLU active for unit actions >= -2
    batch = one_batch(next_state=np.array([-1.0, 0.0]))
    plain = ag.targets(batch)[0]
    assert plain == pytest.approx(3.0)                 # best grid action is +3 -> unit 1
    ctrl = scalar_ctrl([[0.0, 0.0]], a_ff=3.0)
    assert ag.targets(batch, ctrl, "integrated")[0] == pytest.approx(3.0)
    ag.q_target.weights[0][0, 3] = -1.0                # now lower actions score higher
    assert ag.targets(batch)[0] == pytest.approx(3.0)  # -3 -> unit -1 -> relu(1 + 2)
    low = scalar_ctrl([[0.0, 0.0]], a_ff=-3.0)
    assert ag.targets(batch, low, "integrated")[0] == pytest.approx(3.0)


def test_integrated_targets_track_current_controller():
    """Changing F between samplings changes the targets; stored data are untouched."""
    rng = np.random.default_rng(0)
    ag = dqn(gamma=0.9)
    mem = ReplayMemory(seed=1)
    for _ in range(20):
        s = rng.uniform(-1, 1, 2)
        mem.push(Transition(s, np.r_[s, 0.0], rng.uniform(-3, 3, 1), -1.0, s * 0.5,
                            np.r_[s * 0.5, 0.0]))
    before = [t.action.copy() for t in mem]
    batch = mem.batch(np.arange(20))
    ag.q_target.weights[0][:, 3] = 5.0 * rng.standard_normal(ag.q_target.weights[0].shape[0])
    y1 = ag.targets(batch, scalar_ctrl([[1.0, 0.5]]), "integrated")
    y2 = ag.targets(batch, scalar_ctrl([[-4.0, 2.0]]), "integrated")
    assert not np.allclose(y1, y2)
    assert all(np.array_equal(a, t.action) for a, t in zip(before, mem))


def test_dqn_train_step_reduces_loss_on_fixed_target():
    rng = np.random.default_rng(0)
    ag = dqn(gamma=0.0, batch_size=32, target_period=10**9)
    mem = ReplayMemory(seed=2)
    for _ in range(64):
        s = rng.uniform(-1, 1, 2)
        a = ACTIONS[rng.integers(3)]
        mem.push(Transition(s, np.r_[s, 1.0], a, float(-a[0] ** 2), s, np.r_[s, 1.0]))
    first = ag.train_step(mem)
    for _ in range(300):
        last = ag.train_step(mem)
    assert last < first


def test_dqn_target_copy_period():
    ag = dqn(target_period=2)
    mem = ReplayMemory(seed=0)
    mem.push(Transition(np.ones(2), np.ones(3), np.ones(1), -1.0, np.ones(2), np.ones(3)))
    ag.train_step(mem)
    assert not all(np.array_equal(a, b) for a, b in zip(ag.q.params, ag.q_target.params))
    ag.train_step(mem)
    assert all(np.array_equal(a, b) for a, b in zip(ag.q.params, ag.q_target.params))


# -- DDPG ----------------------------------------------------------------------

def ddpg(seed=0, **kw):
    return DdpgAgent(3, [-3.0], [3.0], np.random.default_rng(seed), hidden=(6, 5), **kw)


def test_ou_noise_recursion():
    noise = OUNoise(2, 0.5, 0.15, np.random.default_rng(4))
    ref = np.random.default_rng(4)
    x = np.zeros(2)
    for _ in range(5):
        x = 0.85 * x + 0.5 * ref.standard_normal(2)
        assert noise.sample() == pytest.approx(x)
    noise.reset()
    assert np.array_equal(noise.x, np.zeros(2))


def test_ddpg_select():
    ag = ddpg(sigma=1.0)
    obs = np.array([0.1, 0.9, 0.2])
    assert np.array_equal(ag.select(obs, explore=False), ag.policy(obs))
    assert np.all(np.abs(ag.policy(obs)) <= 3.0)
    # make the critic prefer larger actions, and offer an LQR action at the bound
    for w in ag.critic.weights:
        w[...] = 0.0
    ag.critic.weights[0][0, 3] = 1.0
    ag.critic.weights[1][0, 0] = 1.0
    ag.critic.weights[2][0, 0] = 1.0
    ag.critic.biases[0][0] = 2.0
    ctrl = scalar_ctrl([[0.0, 0.0]], a_ff=3.0)
    a = ag.select(obs, np.zeros(2), ctrl, eps_choice=0.0, explore=False)
    assert a == pytest.approx([3.0]) and ag.last_choice == "lqr"
    noisy = ag.select(obs, np.zeros(2), ctrl, eps_choice=0.0, explore=True)
    assert ag.last_choice == "lqr"
    assert np.any(ag.noise.x != 0.0)
    assert noisy == pytest.approx(np.clip(3.0 + ag.noise.x, -3.0, 3.0))


def test_ddpg_critic_target_absorbing():
    ag = ddpg(gamma=0.9)
    batch = one_batch(reward=-2.5, dt=4, terminal=True, absorbing=True)
    assert ag.critic_targets(batch)[0] == -2.5
    ctrl = scalar_ctrl([[1.0, 0.0]])
    assert ag.critic_targets(batch, ctrl)[0] == -2.5


def test_ddpg_actor_gradient_finite_differences():
    rng = np.random.default_rng(8)
    ag = ddpg(seed=8)
    obs = rng.standard_normal((5, 3))
    grads, _ = ag.actor_gradient(obs)

    def objective():
        units = nn.forward(ag.actor, ag.codec.obs(obs))
        return -float(np.mean(nn.forward(ag.critic, np.hstack([ag.codec.obs(obs), units]))))

    h = 1e-6
    for g, p in zip(grads, ag.actor.params):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = objective()
            p[idx] = old - h
            down = objective()
            p[idx] = old
            fd[idx] = (up - down) / (2 * h)
        scale = max(np.max(np.abs(fd)), 1e-8)
        assert np.max(np.abs(g - fd)) / scale < 1e-3


def test_ddpg_polyak_one_tracks():
    rng = np.random.default_rng(0)
    ag = ddpg(polyak=1.0, batch_size=8)
    mem = ReplayMemory(seed=0)
    for _ in range(10):
        s = rng.uniform(-1, 1, 2)
        mem.push(Transition(s, np.r_[s, 0.0], rng.uniform(-3, 3, 1), -1.0, s, np.r_[s, 0.0]))
    ag.train_step(mem)
    for main, target in ((ag.actor, ag.actor_target), (ag.critic, ag.critic_target)):
        assert all(np.array_equal(a, b) for a, b in zip(main.params, target.params))


# -- agent names and wiring ----------------------------------------------------

VALID = ["dqn", "dqn-lqr", "dqn-lqr-a", "dqn-lqr-ia", "dqn-lqr-ld", "dqn-lqr-a-ld",
         "dqn-lqr-ia-ld", "ddpg", "ddpg-lqr", "ddpg-lqr-ia", "ddpg-lqr-ld", "ddpg-lqr-ia-ld"]


@pytest.mark.parametrize("name", VALID)
def test_names_roundtrip(name):
    assert parse_agent_name(name).name == name


@pytest.mark.parametrize("name", ["ddpg-lqr-a", "ddpg-lqr-a-ld", "dqn-ld", "sac", "dqn-foo"])
def test_invalid_names(name):
    with pytest.raises(ConfigError):
        parse_agent_name(name)


def test_make_agent_wiring():
    env = make_env("pendulum")
    plain = make_agent("dqn", env)
    assert plain.dynamics is None and plain.hybrid.mode == "none"
    ia = make_agent("dqn-lqr-ia-ld", env)
    assert ia.hybrid.mode == "integrated" and ia.hybrid.dynamics == "learned"
    assert isinstance(ia.learner, DqnAgent)
    assert ia.learner.q.spec.input_size == 4
    ab = make_agent("dqn-lqr-a", env)
    assert ab.learner.q.spec.input_size == 5
    dd = make_agent("ddpg-lqr-ia", env)
    assert isinstance(dd.learner, DdpgAgent)
    with pytest.raises(ConfigError):
        make_agent("ddpg-lqr-a", env)
    with pytest.raises(ConfigError):
        make_agent("dqn", env, {"learning_rate": 1.0})


def _play(name, episodes=3, **cfg):
    env = make_env("pendulum")
    agent = make_agent(name, env, AgentConfig(warmup=50, batch_size=16, hidden=(8,), **cfg), seed=5)
    returns = [run_episode(env, agent)[0] for _ in range(episodes)]
    return returns, [p.copy() for net in agent.learner.networks().values() for p in net.params]


@pytest.mark.parametrize("hybrid,base,cfg", [
    ("dqn-lqr-ia-ld", "dqn", {"llr_k": 10**9}),
    ("dqn-lqr-a-ld", "dqn", {"llr_k": 10**9}),
    ("dqn-lqr", "dqn", {"capture_threshold": -1.0}),
    ("ddpg-lqr-ia-ld", "ddpg", {"llr_k": 10**9}),
])
def test_hybrid_without_lqr_is_bit_exact(hybrid, base, cfg):
    r_base, p_base = _play(base)
    r_hyb, p_hyb = _play(hybrid, **cfg)
    assert r_base == r_hyb
    for a, b in zip(p_base, p_hyb):
        if b.shape != a.shape:      # abstract flag column, never used without LQR
            assert not np.any(b[:, -1])
            b = b[:, :-1]
        assert np.array_equal(a, b)


def test_checkpoint_roundtrip(tmp_path):
    env = make_env("pendulum")
    a = make_agent("ddpg-lqr-ia", env, AgentConfig(hidden=(8,)), seed=1)
    path = tmp_path / "agent.bin"
    a.save(path)
    header, nets = read_checkpoint(path)
    assert header["agent"] == "ddpg-lqr-ia" and header["env"] == "pendulum"
    assert set(nets) == {"actor", "actor_target", "critic", "critic_target"}
    b = make_agent("ddpg-lqr-ia", env, AgentConfig(hidden=(8,)), seed=2)
    b.load_networks(path)
    obs = env.observe(env.reset())
    assert np.array_equal(a.learner.policy(obs), b.learner.policy(obs))
    with pytest.raises(ConfigError):
        make_agent("ddpg", env, AgentConfig(hidden=(8,))).load_networks(path)


def test_capture_calibration_pendulum():
    env = make_env("pendulum")
    rho = calibrate_capture_threshold(env)
    assert rho > 0
    assert calibrate_capture_threshold(env) == rho


# -- capture-region semantics against a brute-force oracle ---------------------

@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=12, max_size=12),
       st.lists(st.sampled_from([0.0, 0.0, 0.0, 0.7, -0.9, 2.0]), min_size=12, max_size=12),
       st.floats(-2.5, 2.5))
def test_capture_matches_oracle(script, disturbance, start):
    rho = 0.25
    cfg = AgentConfig(capture_threshold=rho, warmup=10**9, hidden=(4,))
    env = Integrator(start, [0.0] + disturbance[1:])
    agent = make_agent("dqn-lqr", env, cfg, seed=0)
    def scripted(obs, extra=None, explore=True):
        return script[env.steps]
    agent.learner.select = scripted
    run_episode(env, agent)
    got = [(t.state[0], t.action[0], t.reward, t.next_state[0], t.dt, t.absorbing)
           for t in agent.replay]
    oracle_env = Integrator(start, [0.0] + disturbance[1:])
    want = oracle_transitions(oracle_env, agent.controller, rho, script, env.spec.gamma)
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g[0] == w[0] and g[1] == w[1] and g[3] == w[3]
        assert g[2] == w[2]          # same summation order, so exact
        assert g[4] == w[4] and g[5] == w[5]
    for t in agent.replay:
        assert t.terminal == t.absorbing


def test_capture_hand_example():
    """Enter at step 1, kicked out after 3 LQR steps, recaptured until timeout."""
    env = Integrator(2.0, [0.0, 0.0, 0.0, 0.0, 1.0])
    agent = make_agent("dqn-lqr", env, AgentConfig(capture_threshold=0.25, warmup=10**9,
                                                   hidden=(4,)), seed=0)
    agent.learner.select = lambda obs, extra=None, explore=True: 0      # action -1
    run_episode(env, agent)
    trs = list(agent.replay)
    g = 0.9
    assert [t.dt for t in trs] == [1, 4, 7]
    assert [t.absorbing for t in trs] == [False, False, True]
    # s: 2 -> 1 -> 0 (inside) -> 0 -> 0 -> 1 (kicked out at step 4) -> 0 ...
    assert trs[1].state[0] == 1.0 and trs[1].next_state[0] == 1.0
    r = [-(1.0 + 0.5), 0.0, 0.0, 0.0]
    assert trs[1].reward == pytest.approx(sum(g ** k * rk for k, rk in enumerate(r)))
