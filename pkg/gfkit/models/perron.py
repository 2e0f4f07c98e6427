import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from gfkit.models.coefficients import Mode
from gfkit.models.grid import DiscreteField, bracket


@dataclass(frozen=True, eq=False)
class PerronTriple:
    """(λ, G, φ) normalized by ∫G = 1 and ⟨G, φ⟩ = 1."""

    lam: float
    G: DiscreteField
    phi: DiscreteField
    direct_residual: float = 0.0
    dual_residual: float = 0.0
    sandwich_constant: float = math.nan
    iterations: int = 0
    mode: Mode = Mode.STANDARD

    def __post_init__(self) -> None:
        self.G.grid.require_same(self.phi.grid)

    @property
    def grid(self):
        return self.G.grid

    @property
    def tail_mass(self) -> float:
        """Fraction of ∫G held by the last cell, a proxy for the mass cut off at x_max."""

        return float(self.G.values[-1] * self.grid.widths[-1])

    def projection(self, f: DiscreteField) -> DiscreteField:
        """⟨f, φ⟩ G."""

        return self.G * bracket(f, self.phi)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid.centers, "G": self.G.values, "phi": self.phi.values})

    def summary(self) -> dict[str, float | int | str]:
        return {
            "lambda": self.lam,
            "direct_residual": self.direct_residual,
            "dual_residual": self.dual_residual,
            "sandwich_C": self.sandwich_constant,
            "iterations": self.iterations,
            "mode": self.mode.value,
        }


def normalize_pair(G: np.ndarray, phi: np.ndarray, widths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale so that Σ G Δx = 1 and Σ G φ Δx = 1."""

    G = G / np.sum(G * widths)
    phi = phi / np.sum(G * phi * widths)

    return G, phi
