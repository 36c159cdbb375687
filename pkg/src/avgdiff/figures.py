"""Figure rendering for study outputs.

Every writer takes data already computed elsewhere, saves one PNG and
closes the figure; nothing here recomputes values or touches RNG state.
The Agg backend is forced so the writers work in headless runs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_convergence_figure(rows, path):
    """Log-log plot of |V(eps) - V(finest)| against eps.

    Rows with zero difference or a non-ok status are left out of the
    log plot; the raw values go on a companion linear panel.
    """
    ok = [r for r in rows if r.get("status") == "ok"]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
    if ok:
        eps = np.array([r["eps"] for r in ok], dtype=float)
        val = np.array([r["value"] for r in ok], dtype=float)
        ax0.plot(eps, val, "o-")
    ax0.set_xlabel("eps")
    ax0.set_ylabel("value")
    ax0.invert_xaxis()
    pos = [r for r in ok if r.get("diff_to_finest") not in ("", None)
           and float(r["diff_to_finest"]) > 0.0]
    if pos:
        eps = np.array([r["eps"] for r in pos], dtype=float)
        dif = np.array([r["diff_to_finest"] for r in pos], dtype=float)
        ax1.loglog(eps, dif, "s-")
    ax1.set_xlabel("eps")
    ax1.set_ylabel("|V(eps) - V(finest)|")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_law_figure(rows, path):
    """KS statistics per coordinate against eps, log-log axes."""
    ok = [r for r in rows if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    if ok:
        eps = np.array([r["eps"] for r in ok], dtype=float)
        keys = [k for k in ok[0] if k.startswith("ks_") and ok[0][k] != ""]
        for k in keys:
            ax.loglog(eps, [float(r[k]) for r in ok], "o-", label=k)
        ax.legend(fontsize=8)
    ax.set_xlabel("eps")
    ax.set_ylabel("KS distance")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_coefficient_figure(xs, b_bar, c, A, path):
    """Averaged drift, correction and diffusion coefficient curves, d=1."""
    xs = np.asarray(xs, dtype=float)
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, data, name in zip(axes, (b_bar, c, A), ("b_bar", "c", "A")):
        ax.plot(xs, np.asarray(data, dtype=float))
        ax.set_xlabel("x")
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_path_figure(times, states, path, title=None):
    """Overlay of sample paths; first coordinate only."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for row in states:
        ax.plot(times, row[:, 0] if row.ndim == 2 else row, lw=0.8, alpha=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_region_figure(envelopes, path):
    """Stop and cancel region envelopes over time for a 1-d grid run.

    ``envelopes`` rows carry time plus lo/hi state bounds per region;
    missing bounds (empty region at that step) arrive as None.
    """
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for prefix, color, label in (("stop", "tab:blue", "stop (F)"),
                                 ("cancel", "tab:red", "cancel (G)")):
        ts, los, his = [], [], []
        for r in envelopes:
            lo, hi = r.get(prefix + "_lo"), r.get(prefix + "_hi")
            if lo is None or hi is None or lo == "" or hi == "":
                continue
            ts.append(float(r["time"]))
            los.append(float(lo))
            his.append(float(hi))
        if ts:
            ax.fill_between(ts, los, his, color=color, alpha=0.35, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
