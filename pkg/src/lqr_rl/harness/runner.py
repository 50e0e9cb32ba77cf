"""Multi-run training loop."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..agents import make_agent, AgentConfig
from ..envs import FAILED, make_env
from ..errors import SimulationDiverged, RiccatiDivergence
from ..lqr import write_controller_block
from .metrics import LearningCurve, summarize

log = logging.getLogger(__name__)


def build(cfg, run_index):
    env = make_env(cfg.env, **cfg.env_overrides)
    agent = make_agent(cfg.agent, env, AgentConfig.from_dict(dict(cfg.agent_overrides)),
                       seed=cfg.seed + run_index)
    return env, agent


def run_episode(env, agent, learn=True):
    """Play one episode; returns ``(unscaled return, steps)``."""
    state = env.reset()
    if learn:
        agent.begin_episode()
    total = 0.0
    while True:
        action = agent.act(state, explore=learn)
        res = env.step(state, action)
        total += res.reward
        if learn:
            agent.observe(state, action, res.reward, res.next_state,
                          res.status == FAILED, res.done)
        state = res.next_state
        if res.done:
            break
    if learn:
        agent.end_episode()
    return total, env.steps


def run_single(cfg, run_index, keep_agent=False):
    """Train one agent; returns its learning curve (and the agent if asked)."""
    env, agent = build(cfg, run_index)
    curve = LearningCurve(run_index)
    dump = None
    if cfg.dump_lqr:
        os.makedirs(cfg.out, exist_ok=True)
        dump = open(os.path.join(cfg.out, f"lqr_run{run_index}.csv"), "w")
        episode = [0]
        agent.on_refit = lambda ctrl: write_controller_block(dump, f"episode {episode[0]}", ctrl)
    try:
        for ep in range(cfg.episodes):
            if dump is not None:
                episode[0] = ep
            ret, steps = run_episode(env, agent)
            if not np.isfinite(ret):
                raise SimulationDiverged(f"non-finite return in episode {ep}")
            curve.add(steps * env.spec.tau, ret, steps)
    except (SimulationDiverged, RiccatiDivergence, FloatingPointError) as exc:
        log.warning("run %d failed: %s", run_index, exc)
        curve.failed = True
        curve.error = str(exc)
    finally:
        if dump is not None:
            dump.close()
    return (curve, agent) if keep_agent else curve


def _run_single_star(args):
    return run_single(*args)


def run_experiment(cfg, keep_agents=False):
    """Train ``cfg.runs`` agents with seeds ``seed + run``; returns (curves, stats[, agents])."""
    if cfg.workers > 1 and cfg.runs > 1 and not keep_agents:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            curves = list(pool.map(_run_single_star, [(cfg, i) for i in range(cfg.runs)]))
        agents = None
    else:
        results = [run_single(cfg, i, keep_agent=True) for i in range(cfg.runs)]
        curves = [c for c, _ in results]
        agents = [a for _, a in results]
    for c in curves:
        if c.failed:
            log.warning("excluding failed run %d from statistics (%s)", c.run, c.error)
    stats = summarize(curves, cfg.rise_threshold)
    if keep_agents:
        return curves, stats, agents
    return curves, stats
