"""Figures written next to the delimited outputs when ``--figures`` is given."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}
MODE_COLORS = {"scattered": "#2b8cbe", "pushed": "#d95f0e"}


def _save(fig, path, metadata=None):
    fig.tight_layout()
    fig.savefig(path, metadata={k: str(v) for k, v in (metadata or {}).items()})
    plt.close(fig)
    return path


def force_strain(dataset, path, metadata=None):
    """Mean force-strain curve per compression setting with a one-std band."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        colors = plt.cm.viridis(np.linspace(0.1, 0.85, len(dataset.distances)))
        for k, d in enumerate(dataset.distances):
            m, s = dataset.mean[k], dataset.std[k]
            ax.plot(dataset.strain, m, color=colors[k], label=f"{d * 100:g} cm")
            if np.all(np.isfinite(s)):
                ax.fill_between(dataset.strain, m - s, m + s, color=colors[k], alpha=0.2, lw=0)
        ax.set_xlabel("strain")
        ax.set_ylabel("force (N)")
        ax.legend(title="compression", frameon=False)
        return _save(fig, path, metadata)


def force_summary(table, path, metadata=None):
    """Force against compression distance at each tabulated strain."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        x = np.asarray(table.distances) * 100
        for i, s in enumerate(table.strains):
            ax.errorbar(x, table.mean[i], yerr=table.std[i], marker="o", ms=3, capsize=2, label=f"strain {s:g}")
        ax.set_xlabel("compression distance (cm)")
        ax.set_ylabel("force (N)")
        ax.legend(frameon=False)
        return _save(fig, path, metadata)


def pellets_over_time(stats, path, metadata=None):
    """Cumulative delivered pellets against time, one line per trial."""
    color = MODE_COLORS.get(stats.mode, "k")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        for log in stats.logs:
            t = np.asarray(log.pellet_times()) / 60.0
            ax.step(np.r_[0.0, t], np.arange(t.size + 1), where="post", color=color, alpha=0.8)
            f = np.asarray(log.failure_times()) / 60.0
            if f.size:
                ax.plot(f, np.searchsorted(t, f), "x", color="k", ms=3)
        ax.set_xlabel("time (min)")
        ax.set_ylabel("pellets delivered")
        ax.set_title(stats.mode)
        return _save(fig, path, metadata)


def condition_comparison(a, b, report, path, metadata=None):
    """Success rate, cycle time and transported mass for two conditions side by side."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.8))
        names = [a.mode, b.mode]
        cols = [MODE_COLORS.get(n, "0.5") for n in names]
        ax = axes[0]
        for i, st in enumerate((a, b)):
            ax.bar(i, np.mean(st.per_trial_success), color=cols[i], alpha=0.6)
            ax.plot(np.full(len(st.per_trial_success), i), st.per_trial_success, "o", color=cols[i], ms=3)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("success rate")
        ax.set_title(f"p = {report.p_value:.2g}")
        ax = axes[1]
        data = [st.cycle_times_min for st in (a, b)]
        if all(len(d) for d in data):
            ax.boxplot(data, positions=[0, 1], widths=0.5)
        ax.set_ylabel("cycle time (min)")
        ax = axes[2]
        for i, st in enumerate((a, b)):
            ax.bar(i, np.mean(st.per_trial_mass), color=cols[i], alpha=0.6)
            ax.plot(np.full(len(st.per_trial_mass), i), st.per_trial_mass, "o", color=cols[i], ms=3)
        ax.set_ylabel("mass transported (kg)")
        ax.set_title(f"ratio {report.mass_ratio:.2f}")
        for ax in axes:
            ax.set_xticks([0, 1])
            ax.set_xticklabels(names)
        return _save(fig, path, metadata)


def camera_frame(img, detection, path, metadata=None):
    """Camera frame with the chosen pile span outlined."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.imshow(img, cmap="gray", vmin=0, vmax=255)
        for lo, hi in detection.column_groups:
            ax.axvspan(lo - 0.5, hi + 0.5, color="y", alpha=0.15, lw=0)
        if detection.chosen is not None:
            lo, hi = detection.chosen
            ax.axvspan(lo - 0.5, hi + 0.5, fill=False, ec="r", lw=1)
        ax.set_axis_off()
        return _save(fig, path, metadata)
