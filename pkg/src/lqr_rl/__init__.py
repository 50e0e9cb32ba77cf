"""DQN and DDPG with embedded LQR controllers."""
__version__ = "0.1.0"
