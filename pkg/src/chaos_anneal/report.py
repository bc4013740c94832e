"""Figure rendering for finished run directories.

Reads the delimited artifacts a run produced and writes PNG figures
next to them (or into a separate directory).  This is the only module
that touches matplotlib; the data path never depends on it.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runio import read_csv, read_sidecar  # noqa: E402


def _save(fig, out_dir, name, written):
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(name)


def render_trajectory(path, out_dir, written, tag=""):
    _, cols = read_csv(path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(cols["t"], cols["intensity"], lw=0.6)
    ax1.set_xlabel("t (1/omega_m)")
    ax1.set_ylabel("|a|^2")
    late = cols["t"] >= 0.5 * cols["t"][-1]
    ax2.plot(cols["re_a"][late], cols["im_a"][late], lw=0.4)
    ax2.set_xlabel("Re a")
    ax2.set_ylabel("Im a")
    ax2.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    _save(fig, out_dir, f"trajectory{tag}.png", written)


def render_ensemble(path, out_dir, written):
    _, cols = read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.plot(cols["t"], cols["photon_number"], lw=0.8, label="<ad a>")
    mean_sq = cols["re_mean_a"] ** 2 + cols["im_mean_a"] ** 2
    ax.plot(cols["t"], mean_sq, lw=0.8, label="|<a>|^2")
    ax.set_xlabel("t (1/omega_m)")
    ax.set_ylabel("intensity")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, out_dir, "ensemble.png", written)


def render_histogram(grid_path, meta_path, out_dir, written, tag):
    meta = read_sidecar(meta_path)
    density = np.loadtxt(grid_path, delimiter=",", comments="#")
    x_lo, x_hi = float(meta["x_lo"]), float(meta["x_hi"])
    p_lo, p_hi = float(meta["p_lo"]), float(meta["p_hi"])
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.imshow(density.T, origin="lower", aspect="auto",
                   extent=(x_lo, x_hi, p_lo, p_hi), cmap="magma")
    fig.colorbar(im, ax=ax, label="density")
    ax.set_xlabel("Re a")
    ax.set_ylabel("Im a")
    ax.set_title(f"t = {meta.get('time', '?')}")
    fig.tight_layout()
    _save(fig, out_dir, f"histogram{tag}.png", written)


def render_spectrum(path, out_dir, written, tag=""):
    _, cols = read_csv(path)
    pos = cols["omega"] > 0
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.semilogy(cols["omega"][pos], np.maximum(cols["s_normalized"][pos], 1e-12),
                lw=0.7)
    ax.set_xlabel("omega (omega_m)")
    ax.set_ylabel("S'")
    fig.tight_layout()
    _save(fig, out_dir, f"spectrum{tag}.png", written)


def render_expectations(path, out_dir, written):
    _, cols = read_csv(path)
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.plot(cols["t"], cols["mean_n_a"], lw=0.8)
    ax.fill_between(cols["t"], cols["mean_n_a"] - cols["se_n_a"],
                    cols["mean_n_a"] + cols["se_n_a"], alpha=0.3)
    ax.set_xlabel("t (1/omega_m)")
    ax.set_ylabel("<ad a>")
    fig.tight_layout()
    _save(fig, out_dir, "expectations.png", written)


def render_wigner(path, out_dir, written):
    _, cols = read_csv(path)
    x = np.unique(cols["x"])
    p = np.unique(cols["p"])
    w = cols["w"].reshape(len(x), len(p))
    lim = np.abs(w).max() or 1.0
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.pcolormesh(x, p, w.T, cmap="RdBu_r", vmin=-lim, vmax=lim,
                       shading="auto")
    fig.colorbar(im, ax=ax, label="W(x, p)")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    fig.tight_layout()
    _save(fig, out_dir, "wigner.png", written)


def render_run(run_dir, out_dir=None):
    """Render every recognized artifact in ``run_dir`` to PNG files."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in sorted(os.listdir(run_dir)):
        path = os.path.join(run_dir, name)
        if name == "trajectory.csv":
            render_trajectory(path, out_dir, written)
        elif name.startswith("trajectory_") and name.endswith(".csv"):
            _, cols = read_csv(path)
            fig, ax = plt.subplots(figsize=(6.4, 2.6))
            ax.plot(cols["t"], cols["n_a"], lw=0.7)
            ax.set_xlabel("t (1/omega_m)")
            ax.set_ylabel("<ad a>")
            fig.tight_layout()
            _save(fig, out_dir, name.replace(".csv", ".png"), written)
        elif name == "ensemble.csv":
            render_ensemble(path, out_dir, written)
        elif name == "expectations.csv":
            render_expectations(path, out_dir, written)
        elif name.startswith("histogram_") and name.endswith(".csv"):
            meta_path = path.replace(".csv", ".meta")
            if os.path.exists(meta_path):
                tag = name[len("histogram"):-len(".csv")]
                render_histogram(path, meta_path, out_dir, written, tag)
        elif name.startswith("spectrum") and name.endswith(".csv"):
            tag = name[len("spectrum"):-len(".csv")]
            render_spectrum(path, out_dir, written, tag)
        elif name == "wigner.csv":
            render_wigner(path, out_dir, written)
    return written
