"""PNG figures for CLI runs (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_sweep(family, path, critical_t=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(family.t, family.F_values, ".-", lw=1)
    if critical_t is not None:
        ax.axvline(critical_t, color="r", ls="--", lw=1, label=f"critical t = {critical_t:.3f}")
        ax.legend()
    ax.set_xlabel("sweep parameter t")
    ax.set_ylabel("F_a of slice")
    ax.set_title("plane sweepout")
    _save(fig, path)


def plot_history(history, path):
    k, F = zip(*history)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(k, F, "o-")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("max slice energy")
    _save(fig, path)


def plot_flow(trace, path):
    F = np.asarray(trace.F_values)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.plot(F - F[-1] + 1e-16)
    a1.set_yscale("log")
    a1.set_xlabel("step")
    a1.set_ylabel("F_a - final")
    a2.semilogy(trace.grad_norms)
    a2.set_xlabel("step")
    a2.set_ylabel("max tangential gradient")
    fig.suptitle(f"flow: {trace.reason}")
    _save(fig, path)


def plot_spectrum(eigenvalues, path, tol=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(len(eigenvalues)), eigenvalues, "o")
    ax.axhline(0.0, color="k", lw=0.8)
    if tol is not None:
        ax.axhspan(-tol, tol, color="g", alpha=0.15)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    _save(fig, path)


def plot_density(reports, path, target=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, rep in enumerate(reports):
        ax.plot(rep.radii, rep.ratios, "o-", label=f"point {k}")
        ax.plot(rep.radii, rep.adjusted_ratios, "x:", color=ax.lines[-1].get_color())
    if target is not None:
        ax.axhline(target, color="k", ls="--", lw=1)
    ax.set_xlabel("radius")
    ax.set_ylabel("density ratio (o) / adjusted (x)")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_blowup(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(report.scales, report.density_at_scale, "o-")
    ax.set_xlabel("scale")
    ax.set_ylabel("mass ratio in ball")
    ax.set_title(f"dihedral {np.degrees(report.dihedral):.2f} deg")
    _save(fig, path)


def plot_fb(problem, g_field, contact_set, path):
    X, Y = problem.mesh()
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.pcolormesh(X, Y, g_field - problem.h_field, shading="auto")
    ax.contour(X, Y, np.asarray(contact_set, dtype=float), levels=[0.5], colors="w")
    fig.colorbar(im, ax=ax, label="g - h")
    ax.set_aspect("equal")
    ax.set_title("free-boundary graph, contact set outlined")
    _save(fig, path)
