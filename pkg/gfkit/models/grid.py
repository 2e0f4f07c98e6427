import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import logfire
import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from gfkit.errors import GridMismatch

MIN_CELLS = 16


class Spacing(str, Enum):
    UNIFORM = "uniform"
    GEOMETRIC = "geometric"


@dataclass(frozen=True, eq=False)
class Grid:
    """Truncated size mesh x_0 < … < x_N; each cell is represented by its midpoint (pivot)."""

    edges: NDArray[np.float64]
    spacing: Spacing = Spacing.GEOMETRIC

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)

        if edges.ndim != 1 or edges.size - 1 < MIN_CELLS:
            raise ValueError(f"A grid needs at least {MIN_CELLS} cells, got {edges.size - 1}.")
        if edges[0] <= 0:
            raise ValueError("x_min must be strictly positive.")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("Grid edges must be strictly increasing.")
        if self.spacing == Spacing.GEOMETRIC:
            ratios = edges[1:] / edges[:-1]
            if np.max(np.abs(ratios / ratios[0] - 1.0)) > 1e-12:
                raise ValueError("Geometric grid ratio is not constant.")

    @property
    def n(self) -> int:
        return self.edges.size - 1

    @property
    def x_min(self) -> float:
        return float(self.edges[0])

    @property
    def x_max(self) -> float:
        return float(self.edges[-1])

    @cached_property
    def centers(self) -> NDArray[np.float64]:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @cached_property
    def widths(self) -> NDArray[np.float64]:
        return np.diff(self.edges)

    @property
    def log_ratio(self) -> float:
        if self.spacing != Spacing.GEOMETRIC:
            raise ValueError("Only geometric grids have a ratio.")

        return math.log(self.edges[1] / self.edges[0])

    def same_as(self, other: "Grid") -> bool:
        return self is other or (self.edges.shape == other.edges.shape and np.array_equal(self.edges, other.edges))

    def require_same(self, other: "Grid") -> None:
        if not self.same_as(other):
            raise GridMismatch(f"Grids differ: {self.n} cells on [{self.x_min:g}, {self.x_max:g}] "
                               f"vs {other.n} cells on [{other.x_min:g}, {other.x_max:g}].")

    def cell_of(self, x: ArrayLike) -> NDArray[np.intp]:
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.n - 1)

    def zeros(self) -> "DiscreteField":
        return DiscreteField(np.zeros(self.n), self)


def build_grid(
    x_min: float,
    x_max: float,
    n: int,
    spacing: Spacing = Spacing.GEOMETRIC,
    snap_to: float | None = None,
) -> Grid:
    """
    Build a size mesh with n cells on [x_min, x_max].

    Args:
        snap_to: an atom position z. On a geometric grid the ratio is adjusted so that log z is a
            whole number of log-cells; x_max then moves to x_min·r^n.
    """

    if not 0 < x_min < x_max:
        raise ValueError(f"Need 0 < x_min < x_max, got [{x_min}, {x_max}].")

    spacing = Spacing(spacing)
    if spacing == Spacing.UNIFORM:
        return Grid(np.linspace(x_min, x_max, n + 1), spacing)

    log_ratio = math.log(x_max / x_min) / n
    if snap_to is not None:
        shift = abs(math.log(snap_to))
        cells = max(1, round(shift / log_ratio))
        log_ratio = shift / cells
        snapped_max = x_min * math.exp(log_ratio * n)
        logfire.info(f"Grid ratio snapped to atom z={snap_to:g}: {cells} cells per fragment, x_max {x_max:g} → {snapped_max:g}")

    return Grid(x_min * np.exp(log_ratio * np.arange(n + 1)), spacing)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Cell averages of a density on a grid."""

    values: NDArray[np.float64]
    grid: Grid

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)

        if values.shape != (self.grid.n,):
            raise GridMismatch(f"Field of shape {values.shape} does not fit a grid of {self.grid.n} cells.")
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite.")

    @classmethod
    def sample(cls, grid: Grid, fn) -> Self:
        return cls(np.asarray(fn(grid.centers), dtype=float), grid)

    def __add__(self, other: "DiscreteField") -> "DiscreteField":
        self.grid.require_same(other.grid)
        return DiscreteField(self.values + other.values, self.grid)

    def __sub__(self, other: "DiscreteField") -> "DiscreteField":
        self.grid.require_same(other.grid)
        return DiscreteField(self.values - other.values, self.grid)

    def __mul__(self, scalar: float) -> "DiscreteField":
        return DiscreteField(self.values * float(scalar), self.grid)

    __rmul__ = __mul__

    def weighted_norm(self, alpha: float) -> float:
        return weighted_norm(self, alpha)

    def number(self) -> float:
        return float(np.sum(self.values * self.grid.widths))

    def mass(self) -> float:
        return float(np.sum(self.grid.centers * self.values * self.grid.widths))

    def interpolate(self, x: ArrayLike) -> NDArray[np.float64]:
        """
        Linear interpolation between centers; φ₀·x/c₀ below the first center.

        Above the last center the last segment is extended only when it rises, otherwise the last
        value is held, so a dip in the closed last cell cannot extrapolate below zero.
        """

        x = np.asarray(x, dtype=float)
        c, v = self.grid.centers, self.values
        inside = np.interp(x, c, v)
        below = v[0] * x / c[0]
        slope = max(0.0, (v[-1] - v[-2]) / (c[-1] - c[-2]))
        above = v[-1] + slope * (x - c[-1])

        return np.where(x < c[0], below, np.where(x > c[-1], above, inside))

    def support(self, threshold: float = 0.0) -> tuple[float, float]:
        """Edges of the smallest interval holding every cell with |value| > threshold."""

        active = np.flatnonzero(np.abs(self.values) > threshold)
        if active.size == 0:
            return (math.nan, math.nan)

        return float(self.grid.edges[active[0]]), float(self.grid.edges[active[-1] + 1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x_center": self.grid.centers, "width": self.grid.widths, "value": self.values})


def weighted_norm(f: DiscreteField, alpha: float) -> float:
    """Σ_i |f_i| (1+x_i)^α Δx_i."""

    grid = f.grid
    return float(np.sum(np.abs(f.values) * (1.0 + grid.centers) ** alpha * grid.widths))


def bracket(f: DiscreteField, phi: DiscreteField) -> float:
    """⟨f, φ⟩ = Σ_i f_i φ_i Δx_i."""

    f.grid.require_same(phi.grid)
    return float(np.sum(f.values * phi.values * f.grid.widths))
