"""Figure rendering for the report paths (training curves, metric charts).

Figures are written next to the delimited outputs with the Agg backend, so
nothing here needs a display.
"""

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import report_records  # noqa: E402


def _atomic_savefig(fig, path):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=os.path.basename(path) + ".", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=120)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def save_loss_curves(records, path):
    """Loss-term curves over training steps from TrainLog records."""
    steps = [r["step"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for term in ("total", "recon", "retarget", "kl"):
        values = [r[term] for r in records]
        ax.plot(steps, values, label=term, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("latent space training")
    fig.tight_layout()
    _atomic_savefig(fig, path)


_GROUPS = (
    ("reconstruction", ("recon_joint_rmse", "recon_tip_rmse")),
    (
        "cross-embodiment transfer",
        ("pinch_dir_err", "pinch_dist_err", "rand_dir_err", "rand_dist_err"),
    ),
    ("latent continuity", ("continuity_joint", "continuity_tip")),
    ("interpolation", ("interp_accel_mean", "interp_jerk_mean")),
)


def save_metrics_chart(report, path):
    """Bar chart of the ten evaluation statistics, grouped by family."""
    values = dict(report_records(report))
    fig, axes = plt.subplots(1, len(_GROUPS), figsize=(12, 3.6))
    for ax, (title, keys) in zip(axes, _GROUPS):
        labels = [k.replace("_", "\n") for k in keys]
        ax.bar(labels, [values[k] for k in keys], color="#4878a8")
        ax.set_title(title, fontsize=9)
        ax.tick_params(axis="x", labelsize=7)
        ax.tick_params(axis="y", labelsize=7)
    fig.suptitle(f"latent space evaluation (seed {report.seed})", fontsize=10)
    fig.tight_layout()
    _atomic_savefig(fig, path)
