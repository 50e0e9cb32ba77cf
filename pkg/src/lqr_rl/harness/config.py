"""Experiment configuration and the ``key = value`` config file format.

Example::

    # desk-scale pendulum comparison
    env = pendulum
    agent = dqn-lqr-ia
    episodes = 500
    runs = 5
    agent.hidden = [64, 64]
    env.tau = 0.03
"""
import ast
from dataclasses import dataclass, field, fields

from ..errors import ConfigError

# rise thresholds are desk-scale choices, not published values
DEFAULT_THRESHOLDS = {"pendulum": -900.0, "cartpole": -300.0, "flyer": -10.0}


@dataclass
class ExperimentConfig:
    env: str = "pendulum"
    agent: str = "dqn"
    episodes: int = 500
    runs: int = 5
    seed: int = 0
    threshold: float = None
    out: str = "results"
    workers: int = 1
    dump_lqr: bool = False
    env_overrides: dict = field(default_factory=dict)
    agent_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.runs) < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if int(self.episodes) < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if int(self.workers) < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def rise_threshold(self):
        if self.threshold is not None:
            return float(self.threshold)
        try:
            return DEFAULT_THRESHOLDS[self.env]
        except KeyError:
            raise ConfigError(f"no default rise threshold for {self.env!r}; set threshold")

    @classmethod
    def from_mapping(cls, values):
        """Build from flat dotted keys (``env.tau``, ``agent.epsilon``)."""
        top = {f.name for f in fields(cls)} - {"env_overrides", "agent_overrides"}
        kwargs = {"env_overrides": {}, "agent_overrides": {}}
        for key, value in values.items():
            head, _, rest = key.partition(".")
            if rest and head in ("env", "agent"):
                kwargs[f"{head}_overrides"][rest] = value
            elif key in top:
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kwargs)


def parse_value(text):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = parse_value(value)
    return values


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(parse_config_text(text, str(path)))
