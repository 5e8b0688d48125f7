"""CSV, YAML and SVG output for the command line front-end."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import yaml  # noqa: E402

# fixed salt and no date stamp keep repeated SVG output byte-identical
plt.rcParams["svg.hashsalt"] = "phnet"
plt.rcParams["svg.fonttype"] = "none"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_yaml(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(_clean(data), sort_keys=False, default_flow_style=None))
    return path


def write_trajectory_csv(path, traj, seed=0, stride=1):
    """Columns ``t``, one per dof, the observations ``y_i`` and the energy."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = traj.grid
    dof_names = [f"w{k}_{j}" for k in range(grid.nchannels) for j in range(grid.channels[k].ncells)]
    nobs = 0 if traj.observations is None else traj.observations.shape[1]
    with path.open("w", newline="") as fh:
        fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + dof_names + [f"y{i}" for i in range(nobs)] + ["energy"])
        for i in range(0, traj.times.size, stride):
            row = [traj.times[i]] + list(traj.values[i])
            if nobs:
                row += list(traj.observations[i])
            row.append(traj.energy[i])
            writer.writerow([f"{v:.12g}" for v in row])
    return path


def write_control_csv(path, traj, seed=0, stride=1):
    """Columns ``t``, the control components ``u_i`` and the observations ``y_i``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u = traj.controls
    y = traj.observations
    nu = 0 if u is None else u.shape[1]
    ny = 0 if y is None else y.shape[1]
    with path.open("w", newline="") as fh:
        fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"u{i}" for i in range(nu)] + [f"y{i}" for i in range(ny)] + ["energy"])
        for i in range(0, traj.times.size, stride):
            row = [traj.times[i]]
            if nu:
                row += list(u[i])
            if ny:
                row += list(y[i])
            row.append(traj.energy[i])
            writer.writerow([f"{v:.12g}" for v in row])
    return path


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_energy(path, traj, title="energy"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(traj.times, traj.energy, lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|x(t)\|^2_{\mathcal{H}}$")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_control(path, traj, title="control and observation"):
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    if traj.controls is not None:
        for i in range(traj.controls.shape[1]):
            axes[0].plot(traj.times, traj.controls[:, i], lw=1.2, label=f"u{i}")
        axes[0].legend(loc="best", fontsize=8)
    axes[0].set_ylabel("u(t)")
    if traj.observations is not None:
        for i in range(traj.observations.shape[1]):
            axes[1].plot(traj.times, traj.observations[:, i], lw=1.2, label=f"y{i}")
        axes[1].legend(loc="best", fontsize=8)
    axes[1].set_ylabel("y(t)")
    axes[1].set_xlabel("t")
    axes[0].set_title(title)
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_profile(path, traj, title="final state"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    grid = traj.grid
    for k, ch in enumerate(grid.channels):
        ax.plot(ch.centers, traj.values[-1][grid.slice(k)], lw=1.2, label=f"channel {k}")
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\mathcal{H}x(T)$")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
