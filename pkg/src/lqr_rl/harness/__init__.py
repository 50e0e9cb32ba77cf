from .config import DEFAULT_THRESHOLDS, ExperimentConfig, load_config, parse_config_text
from .evaluation import ChatterReport, evaluate_chatter, greedy_rollout
from .metrics import (LearningCurve, SummaryStats, confidence_interval, end_performance,
                      moving_average, rise_time, sign_changes, summarize)
from .outputs import emit_outputs, read_curves
from .runner import run_episode, run_experiment, run_single

__all__ = ["ChatterReport", "DEFAULT_THRESHOLDS", "ExperimentConfig", "LearningCurve", "SummaryStats",
           "confidence_interval", "emit_outputs", "end_performance", "evaluate_chatter", "greedy_rollout", "load_config",
           "moving_average", "parse_config_text", "read_curves", "rise_time", "run_episode",
           "run_experiment", "run_single", "sign_changes", "summarize"]
