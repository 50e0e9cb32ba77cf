from .ddpg import DdpgAgent, OUNoise
from .dqn import ActionCodec, DqnAgent
from .hybrid import (AgentConfig, HybridAgent, HybridConfig, KnownDynamics, LearnedDynamics,
                     calibrate_capture_threshold, make_agent, parse_agent_name, read_checkpoint)

__all__ = ["ActionCodec", "AgentConfig", "DdpgAgent", "DqnAgent", "HybridAgent", "HybridConfig",
           "KnownDynamics", "LearnedDynamics", "OUNoise", "calibrate_capture_threshold",
           "make_agent", "parse_agent_name", "read_checkpoint"]
