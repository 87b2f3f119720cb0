"""Deterministic SVG rendering of experiment CSVs.

Plots are drawn on a standalone matplotlib ``Figure`` (no pyplot state).  Text is
converted to paths (no font dependency), the element-id salt is fixed and
the date metadata is removed, so identical CSVs give byte-identical SVGs.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["PLOT_KINDS", "emit_plot"]

#: plot kind -> columns that must be present in the CSV
PLOT_KINDS = {
    "phase-curve": ("alpha", "theta", "mean_log_z_over_n"),
    "decay-rate": ("alpha", "N", "log_survival_over_n", "theta"),
    "critical-exponent": ("N", "survival"),
    "critical-window": ("beta", "N", "survival"),
    "limit-law": ("w",),
}


_RC = {"svg.fonttype": "path", "svg.hashsalt": "accperc", "path.simplify": False}


def _theta(a):
    a = np.asarray(a, dtype=float)
    return a * (1.0 - np.log(a))


def _phase(tab, ax):
    alpha = tab.column("alpha")
    grid = np.linspace(min(0.05, alpha.min()), max(3.2, alpha.max() * 1.1), 400)
    ax.plot(grid, _theta(grid), color="k", lw=1.2, label=r"$\theta(\alpha)=\alpha(1-\log\alpha)$", gid="theta-overlay")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.axvline(math.e, color="0.6", lw=0.8, ls=":")
    if "log_mean_over_n" in tab.header:
        ax.plot(alpha, tab.column("log_mean_over_n"), "s", mfc="none", color="C1", label=r"$\log E_0[Z]/N$")
    se = tab.column("se") if "se" in tab.header else None
    ax.errorbar(alpha, tab.column("mean_log_z_over_n"), yerr=se, fmt="o", color="C0", label=r"mean $\log Z/N$", gid="empirical")
    ax.set_xlabel(r"$\alpha$  ($k=\lfloor\alpha N\rfloor$)")
    ax.set_ylabel(r"$\frac{1}{N}\log Z_{N,k}$")


def _decay(tab, ax):
    alpha, N = tab.column("alpha"), tab.column("N")
    for i, a in enumerate(np.unique(alpha)):
        sel = alpha == a
        ax.plot(N[sel], tab.column("log_survival_over_n")[sel], "o-", color=f"C{i}", label=rf"$\alpha={a:g}$")
        ax.axhline(_theta(a), color=f"C{i}", ls="--", lw=1, label=rf"$\theta({a:g})$", gid=f"theta-{a:g}")
    ax.set_xlabel("$N$")
    ax.set_ylabel(r"$\frac{1}{N}\log P_0(Z_{N,k}\geq 1)$")


def _critical_exponent(tab, ax):
    N, p = tab.column("N"), tab.column("survival")
    ax.loglog(N, p, "o", color="C0", label=r"$P_0(Z_{N,\lfloor eN\rfloor}\geq1)$")
    slope, icpt = np.polyfit(np.log(N), np.log(p), 1)
    g = np.geomspace(N.min(), N.max(), 50)
    ax.loglog(g, np.exp(icpt) * g ** slope, "-", color="C0", label=f"fit: slope {slope:.3f}", gid="fit-line")
    ax.loglog(g, p[0] * (g / N[0]) ** -1.5, "--", color="k", lw=1, label=r"reference $N^{-3/2}$", gid="reference-line")
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.08), xycoords="axes fraction", gid="slope-annotation")
    ax.set_xlabel("$N$")
    ax.set_ylabel("survival probability")


def _critical_window(tab, ax):
    beta, N, p = tab.column("beta"), tab.column("N"), tab.column("survival")
    for i, b in enumerate(np.unique(beta)):
        sel = beta == b
        ax.semilogx(N[sel], p[sel], "o-", color=f"C{i}", label=rf"$\beta={b:g}$")
    ax.axhline(0.5, color="0.5", ls=":", lw=1, label="proxy thresholds 0.5 / 0.2")
    ax.axhline(0.2, color="0.5", ls=":", lw=1)
    ax.set_xlabel(r"$N$  ($k=\mathrm{round}(eN-\beta\log N)$)")
    ax.set_ylabel("survival probability")


def _limit_law(tab, ax, lam):
    w = np.sort(tab.column("w"))
    ecdf = np.arange(1, w.size + 1) / w.size
    ax.step(w, ecdf, where="post", color="C0", label=r"empirical $Z_{N,N}/m_N$")
    g = np.linspace(0.0, max(w.max(), 1e-12), 400)
    ax.plot(g, -np.expm1(-g * math.exp(lam)), "k--", lw=1.2, label=rf"exponential, mean $e^{{-\lambda}}$, $\lambda={lam:g}$", gid="exponential-cdf")
    ax.set_xlabel(r"$w$")
    ax.set_ylabel("CDF")


def emit_plot(csv_path, plot_kind: str, svg_path=None, *, lam: float = 0.0) -> Path:
    """Render the CSV written by an experiment runner as a standalone SVG.

    Parameters
    ----------
    csv_path : path
        CSV produced by one of the runners.
    plot_kind : str
        One of :data:`PLOT_KINDS`.
    svg_path : path, optional
        Output file; defaults to ``csv_path`` with suffix ``.svg``.
    lam : float
        Root-fitness parameter for the ``limit-law`` exponential overlay.

    Raises
    ------
    accperc.experiments.ExperimentError
        For an empty or malformed CSV, or one lacking the needed columns;
        nothing is written in that case.
    """
    from .experiments import ExperimentError, read_csv

    if plot_kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {plot_kind!r}; choose from {sorted(PLOT_KINDS)}")
    tab = read_csv(csv_path)
    missing = [c for c in PLOT_KINDS[plot_kind] if c not in tab.header]
    if missing:
        raise ExperimentError(f"{csv_path}: missing columns {missing} for a {plot_kind} plot")
    svg_path = Path(svg_path) if svg_path is not None else Path(csv_path).with_suffix(".svg")

    import matplotlib
    from matplotlib.figure import Figure

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.4, 4.4))
        ax = fig.add_subplot()
        if plot_kind == "phase-curve":
            _phase(tab, ax)
        elif plot_kind == "decay-rate":
            _decay(tab, ax)
        elif plot_kind == "critical-exponent":
            _critical_exponent(tab, ax)
        elif plot_kind == "critical-window":
            _critical_window(tab, ax)
        else:
            _limit_law(tab, ax, lam)
        ax.legend(fontsize=8)
        ax.grid(True, lw=0.3, alpha=0.5)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    return svg_path
