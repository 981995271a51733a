"""PNG figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mfabc.diagnostics import TOY_GRID, toy_exact_abc_posterior  # noqa: E402

DPI = 110


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path.name


def posterior_figure(path: Path, theta, weights, names, reference=None):
    """Weighted marginal histograms; ``reference`` is an optional (grid, density) overlay."""
    theta = np.asarray(theta).reshape(len(weights), -1)
    d = theta.shape[1]
    fig, axes = plt.subplots(1, d, figsize=(3.2 * d + 0.8, 3.0), squeeze=False)
    for j, ax in enumerate(axes[0]):
        ax.hist(theta[:, j], bins=60, weights=weights, density=True, color="tab:blue", alpha=0.6,
                label="particles")
        if reference is not None and d == 1:
            ax.plot(reference[0], reference[1], color="k", lw=1.2, label="exact ABC")
            ax.legend(frameon=False, fontsize=8)
        ax.set_xlabel(names[j])
    axes[0][0].set_ylabel("density")
    return _save(fig, path)


def trace_figure(path: Path, trace):
    it = [r["iteration"] for r in trace]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.0))
    ax1.semilogy(it, [r["epsilon"] for r in trace], "o-", label="HF tolerance")
    if "eps_aux" in trace[0]:
        ax1.semilogy(it, [r["eps_aux"] for r in trace], "s--", label="LF tolerance")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("tolerance")
    ax1.legend(frameon=False, fontsize=8)
    ax2.plot(it, [r["hf_calls"] for r in trace], "o-")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("cumulative HF simulations")
    return _save(fig, path)


def replicate_figures(directory: Path, config, rep, names) -> list[str]:
    ref = None
    if config["output"]["reference"] == "analytic":
        ref = (TOY_GRID, toy_exact_abc_posterior(config["model"]["y_obs"], config["sampler"]["eps_target"]))
    files = [posterior_figure(directory / "posterior.png", rep.ensemble.theta, rep.ensemble.weights, names, ref)]
    if config["sampler"]["method"] in ("asmc", "maps"):
        files.append(trace_figure(directory / "trace.png", rep.trace))
    return files


def comparison_figure(path: Path, changes):
    """Bar chart of the relative change of run B against run A, one bar per metric."""
    metrics = [c[0] for c in changes]
    pct = [c[3] for c in changes]
    fig, ax = plt.subplots(figsize=(1.2 * len(metrics) + 2, 3.0))
    ax.bar(metrics, pct, color=["tab:green" if p < 0 else "tab:red" for p in pct])
    ax.axhline(0, color="k", lw=0.8)
    ax.set_ylabel("change of B vs A (%)")
    return _save(fig, path)
