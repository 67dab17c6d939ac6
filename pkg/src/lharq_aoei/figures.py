"""Figure rendering for sweep results.

Every sweep CSV gets a companion PNG next to it: the age trend with its
confidence band and the analytic overlays for the engine lanes, efficiency /
delivery-ratio / age panels for the policy lane.  The CSV stays the data
contract; the figures are a reading aid.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import SweepResult

_AXIS_LABELS = {
    "mean_snr_db": "mean SNR (dB)",
    "gamma_th": "decode threshold (linear)",
    "max_rounds": "round limit per circle",
    "num_gbs": "interfering ground stations",
    "pathloss_exp": "interferer path-loss exponent",
    "imbalance": "interferer power imbalance ratio",
}


def _engine_figure(result: SweepResult, out_path) -> None:
    axis = result.axis_names[0]
    rows = sorted((r for r in result.rows if not r.error), key=lambda r: r.axis[axis])
    x = [r.axis[axis] for r in rows]
    emp = [r.aoei_empirical for r in rows]
    ci = [0.0 if math.isnan(r.aoei_ci95) else r.aoei_ci95 for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.errorbar(x, emp, yerr=ci, marker="o", capsize=3, label="simulated")
    if any(r.aoei_corrected is not None for r in rows):
        ax.plot(
            x,
            [r.aoei_corrected for r in rows],
            linestyle="--",
            marker="s",
            label="closed form (corrected)",
        )
        ax.plot(
            x,
            [r.aoei_paper_literal for r in rows],
            linestyle=":",
            marker="^",
            alpha=0.7,
            label="closed form (as published)",
        )
    ax.set_xlabel(_AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("average age (slots)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def _policy_figure(result: SweepResult, out_path) -> None:
    adaptive = [r for r in result.rows if r.strategy == "adaptive" and not r.error]
    baseline = [r for r in result.rows if r.strategy == "baseline" and not r.error]
    betas = sorted({r.axis["beta"] for r in adaptive})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for beta in betas:
        cut = sorted(
            (r for r in adaptive if r.axis["beta"] == beta),
            key=lambda r: r.axis["phi_th"],
        )
        x = [r.axis["phi_th"] for r in cut]
        ax1.plot(x, [r.efficiency for r in cut], marker="o", label=f"decay={beta:g}")
        ax2.plot(x, [r.aoei_empirical for r in cut], marker="o", label=f"decay={beta:g}")
    if baseline:
        for ax, attr in ((ax1, "efficiency"), (ax2, "aoei_empirical")):
            ax.axhline(
                getattr(baseline[0], attr),
                color="gray",
                linestyle="--",
                label="baseline (retransmit newest)",
            )
    ax1.set_xlabel("decision threshold")
    ax1.set_ylabel("transmission efficiency")
    ax2.set_xlabel("decision threshold")
    ax2.set_ylabel("mean age (slots)")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_sweep_figure(result: SweepResult, out_path) -> str:
    """Render the figure matching the sweep kind; returns the path written."""
    if result.spec.sweep == "policy":
        _policy_figure(result, out_path)
    else:
        _engine_figure(result, out_path)
    return str(out_path)
