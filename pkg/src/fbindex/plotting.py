"""Deterministic SVG figures for analysis and suite outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_analysis", "plot_suite", "STYLE"]

STYLE = {
    "svg.hashsalt": "fbindex",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
}
_META = {"Date": None, "Creator": "fbindex"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_analysis(an, path: str) -> None:
    """Jacobi spectrum (with exact values when known), Hodge spectrum and comparison margins."""
    rep = an.report
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
        ax = axes[0]
        lam = np.asarray(an.jacobi.eigenvalues)
        n = np.arange(1, len(lam) + 1)
        ax.plot(n, lam, "o", label="FEM")
        if an.oracle_eigenvalues is not None:
            ax.plot(n, an.oracle_eigenvalues, "x", color="k", label="exact")
        ax.axhspan(-an.zero_tol, an.zero_tol, color="0.85", label="zero band")
        ax.set_xlabel("n")
        ax.set_title(f"Jacobi eigenvalues (index {rep.index_fem})")
        ax.legend(loc="lower right")

        ax = axes[1]
        mu = np.asarray(an.hodge.eigenvalues)
        ax.semilogy(np.arange(1, len(mu) + 1), np.maximum(mu, 1e-16), "s", ms=4)
        ax.set_xlabel("m")
        ax.set_title("1-form Laplacian eigenvalues")

        ax = axes[2]
        for variant, marker in (("minimal", "v"), ("scan", "o")):
            pts = [(r["alpha"], r["margin"]) for r in rep.rows if r["variant"] == variant and r["margin"] is not None]
            if pts:
                a, mg = zip(*pts)
                ax.plot(a, mg, marker, label=variant)
        ax.axhline(-rep.tolerances.get("comparison_tol", 0.0), color="r", lw=0.8, ls="--")
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("alpha")
        ax.set_title("comparison margin")
        ax.legend()
        fig.suptitle(f"{rep.surface}: g={rep.g} k={rep.k} H={rep.H:.4g} verdict {rep.verdict}")
        fig.tight_layout()
        _save(fig, path)


def plot_suite(rows: list[dict], path: str) -> None:
    """Eigenvalue error against mesh size per case, log-log."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
        cases = sorted({r["case"] for r in rows})
        for c in cases:
            rs = [r for r in rows if r["case"] == c and r["h"] != ""]
            pts = [(r["h"], r["lambda1_J_error"]) for r in rs if r["lambda1_J_error"] not in ("", 0.0)]
            if pts:
                h, e = zip(*pts)
                axes[0].loglog(h, e, "o-", label=c)
            hs = [(r["h"], r["hodge_first_nonzero"]) for r in rs
                  if r["hodge_first_nonzero"] != "" and not math.isnan(float(r["hodge_first_nonzero"]))]
            if len(hs) >= 2:
                h, v = zip(*hs)
                d = np.abs(np.asarray(v[:-1]) - v[-1])
                ok = d > 0
                if ok.any():
                    axes[1].loglog(np.asarray(h[:-1])[ok], d[ok], "s-", label=c)
        axes[0].set_title("|lambda_1 - exact| (Jacobi)")
        axes[1].set_title("first nonzero 1-form eigenvalue vs finest")
        for ax in axes:
            ax.set_xlabel("mean edge length")
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
