from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from gfkit.models.perron import PerronTriple  # noqa: E402
from gfkit.models.trace import TimeSeries  # noqa: E402
from gfkit.numerics.diagnostics import RateFit  # noqa: E402

# Fixed ids and no date stamp keep reruns byte-identical.
plt.rcParams["svg.hashsalt"] = "gfkit"
SVG_METADATA = {"Date": None}


def _save(fig: plt.Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)

    return path


def plot_distance(d: TimeSeries, path: Path, fit: RateFit | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    positive = d.values > 0
    ax.semilogy(d.t[positive], d.values[positive], label=d.name)
    if fit is not None:
        t = np.linspace(*fit.window, 50)
        ax.semilogy(t, fit.M * np.exp(-fit.sigma * t), "--", label=f"M e^(-σt), σ={fit.sigma:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("distance to the Perron projection")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)

    return _save(fig, path)


def plot_perron(triple: PerronTriple, path: Path) -> Path:
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    x = triple.grid.centers
    left.loglog(x, np.where(triple.G.values > 0, triple.G.values, np.nan))
    left.set_xlabel("x")
    left.set_title(f"G, λ={triple.lam:.6g}")
    right.loglog(x, triple.phi.values)
    right.loglog(x, 1.0 + x, ":", label="1+x")
    right.set_xlabel("x")
    right.set_title("φ")
    right.legend()

    return _save(fig, path)
