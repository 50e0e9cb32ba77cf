"""Learning-curve statistics: rise time, end performance, confidence intervals."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..errors import StatisticsError

STREAK = 3
END_FRACTION = 0.10
SMOOTHING_WINDOW = 10


@dataclass
class LearningCurve:
    run: int
    sim_time: list = field(default_factory=list)   # cumulative seconds at episode end
    returns: list = field(default_factory=list)    # unscaled episode returns
    steps: list = field(default_factory=list)
    failed: bool = False
    error: str = ""

    def add(self, episode_seconds, ret, steps):
        prev = self.sim_time[-1] if self.sim_time else 0.0
        self.sim_time.append(prev + episode_seconds)
        self.returns.append(float(ret))
        self.steps.append(int(steps))

    def __len__(self):
        return len(self.returns)


@dataclass
class SummaryStats:
    rise_mean: float
    rise_hw: float
    end_mean: float
    end_hw: float
    rise_values: list
    end_values: list
    censored: list
    failed_runs: list = field(default_factory=list)

    @property
    def censored_count(self):
        return int(sum(self.censored))


def rise_time(sim_time, returns, threshold):
    """Cumulative time at the end of the first episode of the first streak
    of three returns strictly above ``threshold``.

    Returns ``(seconds, censored)``; a censored result reports the total
    simulated time.
    """
    if len(returns) == 0:
        raise StatisticsError("empty learning curve")
    streak = 0
    for i, r in enumerate(returns):
        streak = streak + 1 if r > threshold else 0
        if streak == STREAK:
            return float(sim_time[i - STREAK + 1]), False
    return float(sim_time[-1]), True


def end_performance(returns):
    """Mean return over the final ceil(10%) of episodes."""
    if len(returns) == 0:
        raise StatisticsError("empty learning curve")
    n = math.ceil(END_FRACTION * len(returns) - 1e-12)
    return float(np.mean(np.asarray(returns[-n:], dtype=float)))


def confidence_interval(samples, level=0.95):
    """Student-t interval: returns ``(mean, half_width)``."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise StatisticsError("a confidence interval needs at least two samples")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    t = stats.t.ppf(0.5 + level / 2.0, x.size - 1)
    return mean, float(t * sd / math.sqrt(x.size))


def _interval_or_nan(samples):
    if len(samples) >= 2:
        return confidence_interval(samples)
    if len(samples) == 1:
        return float(samples[0]), float("nan")
    return float("nan"), float("nan")


def summarize(curves, threshold):
    ok = [c for c in curves if not c.failed and len(c)]
    rises, censored, ends = [], [], []
    for c in ok:
        t, cens = rise_time(c.sim_time, c.returns, threshold)
        rises.append(t)
        censored.append(cens)
        ends.append(end_performance(c.returns))
    rise_mean, rise_hw = _interval_or_nan(rises)
    end_mean, end_hw = _interval_or_nan(ends)
    return SummaryStats(rise_mean, rise_hw, end_mean, end_hw, rises, ends, censored,
                        [c.run for c in curves if c.failed])


def moving_average(values, window=SMOOTHING_WINDOW):
    """Trailing mean; the first entries average whatever history exists."""
    x = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def sign_changes(actions, deadband=0.0):
    """Number of changes of sign(a) along a 1-d action sequence.

    Entries with ``|a| <= deadband`` count as zero, which is a sign of its
    own: ``3, 0, 3`` changes twice.
    """
    a = np.asarray(actions, dtype=float)
    s = np.sign(np.where(np.abs(a) > deadband, a, 0.0))
    return int(np.count_nonzero(s[1:] != s[:-1]))
