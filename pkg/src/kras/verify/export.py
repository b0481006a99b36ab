"""CSV and SVG output of trajectories and iteration logs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .simulate import Trajectory

__all__ = ["write_trajectory_csv", "plot_trajectory", "plot_gamma"]


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Columns ``t, x_1..x_n, u_1..u_p, z_1..z_m, w_1..w_q`` for ``t >= 0``."""
    path = Path(path)
    traj.to_csv(path)
    return path


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "kras"  # stable element ids across runs
    return plt


def _lines(ax, t, Y, label):
    for j in range(Y.shape[1]):
        ax.plot(t, Y[:, j], linewidth=1.0, label=f"${label}_{{{j + 1}}}$")
    ax.grid(True, linewidth=0.3)
    ax.legend(loc="upper right", fontsize=8)


def plot_trajectory(traj: Trajectory, out_dir, prefix: str = "") -> list:
    """Write one SVG line chart each for the state, the control and the output.

    The state chart includes the history segment.  Returns the written
    paths.
    """
    plt = _figure()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s = traj.future
    panels = [("states", traj.t, traj.x, "x", "state trajectories"),
              ("control", traj.t[s], traj.u[s], "u", "control input"),
              ("output", traj.t[s], traj.z[s], "z", "regulated output")]
    paths = []
    for name, t, Y, sym, title in panels:
        if Y.shape[1] == 0:
            continue
        fig, ax = plt.subplots(figsize=(7, 3.2))
        _lines(ax, t, Y, sym)
        ax.set_xlabel("t [s]")
        ax.set_title(title)
        fig.tight_layout()
        p = out_dir / f"{prefix}{name}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths


def plot_gamma(gammas, path) -> Path:
    """SVG chart of the performance level against the iteration index."""
    plt = _figure()
    g = np.asarray(gammas, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(1, g.size + 1), g, marker="o", markersize=3, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\gamma$")
    ax.grid(True, linewidth=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
