"""CSV (and optional PNG) outputs for learning curves and summaries."""
import csv
import os

import numpy as np

from ..errors import LqrRlError
from .metrics import LearningCurve, confidence_interval, moving_average

CURVE_HEADER = ["run", "episode", "sim_time_s", "return", "steps"]
SUMMARY_HEADER = ["agent", "env", "rise_mean", "rise_hw", "end_mean", "end_hw", "censored_count"]


class OutputError(LqrRlError):
    pass


def _num(v):
    return repr(float(v))


def _writer(path):
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return fh, csv.writer(fh, lineterminator="\n")


def write_curves(curves, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(CURVE_HEADER)
        for c in curves:
            if c.failed:
                continue
            for i, (t, r, n) in enumerate(zip(c.sim_time, c.returns, c.steps)):
                w.writerow([c.run, i + 1, _num(t), _num(r), n])


def read_curves(path):
    curves = {}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    with fh:
        for row in csv.DictReader(fh):
            run = int(row["run"])
            c = curves.setdefault(run, LearningCurve(run))
            c.sim_time.append(float(row["sim_time_s"]))
            c.returns.append(float(row["return"]))
            c.steps.append(int(row["steps"]))
    return [curves[k] for k in sorted(curves)]


def summary_row(agent, env, stats):
    return [agent, env, _num(stats.rise_mean), _num(stats.rise_hw),
            _num(stats.end_mean), _num(stats.end_hw), stats.censored_count]


def write_summary(agent, env, stats, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(SUMMARY_HEADER)
        w.writerow(summary_row(agent, env, stats))


def write_smoothed(curves, path):
    """Trailing moving average per run, plus cross-run mean and 95% band."""
    ok = [c for c in curves if not c.failed and len(c)]
    fh, w = _writer(path)
    with fh:
        w.writerow(["episode"] + [f"run{c.run}" for c in ok] + ["mean", "ci_low", "ci_high"])
        if not ok:
            return
        length = min(len(c) for c in ok)
        smooth = np.array([moving_average(c.returns)[:length] for c in ok])
        for i in range(length):
            col = smooth[:, i]
            if len(col) >= 2:
                mean, hw = confidence_interval(col)
            else:
                mean, hw = float(col[0]), float("nan")
            w.writerow([i + 1] + [_num(v) for v in col] + [_num(mean), _num(mean - hw), _num(mean + hw)])


def write_plot(curves, path, threshold=None, title=""):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = [c for c in curves if not c.failed and len(c)]
    if not ok:
        return
    length = min(len(c) for c in ok)
    smooth = np.array([moving_average(c.returns)[:length] for c in ok])
    t = np.mean([c.sim_time[:length] for c in ok], axis=0)
    mean = smooth.mean(axis=0)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, mean)
    if len(ok) >= 2:
        band = np.array([confidence_interval(smooth[:, i])[1] for i in range(length)])
        ax.fill_between(t, mean - band, mean + band, alpha=0.3)
    if threshold is not None:
        ax.axhline(threshold, color="k", lw=0.8)
    ax.set_xlabel("simulated time (s)")
    ax.set_ylabel("episode return")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def emit_outputs(curves, stats, directory, agent="", env="", plot=False, threshold=None):
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {directory}: {exc}") from exc
    paths = {name: os.path.join(directory, name)
             for name in ("curves.csv", "summary.csv", "curve_smoothed.csv")}
    write_curves(curves, paths["curves.csv"])
    write_summary(agent, env, stats, paths["summary.csv"])
    write_smoothed(curves, paths["curve_smoothed.csv"])
    if plot:
        paths["curves.png"] = os.path.join(directory, "curves.png")
        write_plot(curves, paths["curves.png"], threshold, f"{agent} on {env}")
    return paths
