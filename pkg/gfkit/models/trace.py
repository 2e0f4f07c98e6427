from dataclasses import dataclass, field, replace
from enum import Enum
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, Field, model_validator

from gfkit.models.grid import DiscreteField
from gfkit.models.perron import PerronTriple
from gfkit.settings import settings


class Method(str, Enum):
    SPLITTING = "splitting"
    DUHAMEL_PICARD = "duhamel_picard"
    DYSON_PHILLIPS = "dyson_phillips"


class SnapshotSpacing(str, Enum):
    LOG = "log"
    LINEAR = "linear"


class TailPolicy(str, Enum):
    WARN = "warn"
    ERROR = "error"


class EvolutionConfig(BaseModel):
    dt: float = Field(default=1e-3, gt=0.0, description="Time step.")
    t_end: float = Field(default=20.0, gt=0.0, description="Horizon.")
    method: Method = Method.SPLITTING
    dyson_order: int = Field(default=6, ge=0, description="Generations kept by the dyson_phillips method.")
    rescale_by_lambda: bool = True
    consistent_dual: bool = Field(default=True, description="Use the Perron triple of the one-step map.")
    snap_dt: bool = Field(default=True, description="Snap dt to whole log-cells when τ is linear on a geometric grid.")
    alphas: list[float] = Field(default_factory=lambda: [1.0, 2.0])
    max_snapshots: int = Field(default_factory=lambda: settings.MAX_SNAPSHOTS, ge=2)
    snapshot_spacing: SnapshotSpacing = SnapshotSpacing.LOG
    tail_tolerance: float = Field(default_factory=lambda: settings.TAIL_TOLERANCE, gt=0.0)
    tail_policy: TailPolicy = TailPolicy.WARN
    blowup_threshold: float = Field(default_factory=lambda: settings.BLOWUP_THRESHOLD, gt=0.0)

    @model_validator(mode="after")
    def _check_horizon(self) -> Self:
        if self.t_end < self.dt:
            raise ValueError(f"t_end={self.t_end} is shorter than one step dt={self.dt}.")
        if not self.alphas:
            raise ValueError("At least one diagnostic α is needed.")

        return self


@dataclass(frozen=True, eq=False)
class TimeSeries:
    t: NDArray[np.float64]
    values: NDArray[np.float64]
    name: str = "d"

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

        if t.shape != values.shape:
            raise ValueError("Times and values must be aligned.")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("Times must be strictly increasing.")

    def __len__(self) -> int:
        return self.t.size

    def window(self, t_lo: float, t_hi: float) -> "TimeSeries":
        keep = (self.t >= t_lo) & (self.t <= t_hi)
        return TimeSeries(self.t[keep], self.values[keep], self.name)

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.values))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.t, self.name: self.values})


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Scalars at every step plus decimated snapshots of one run."""

    times: NDArray[np.float64]
    bracket_phi: NDArray[np.float64]
    norms: dict[float, NDArray[np.float64]]
    number: NDArray[np.float64]
    mass: NDArray[np.float64]
    tail_loss: NDArray[np.float64]
    snapshot_times: NDArray[np.float64]
    snapshots: list[DiscreteField] = field(repr=False)
    triple: PerronTriple = field(repr=False)
    rescaled: bool = True
    method: Method = Method.SPLITTING
    distance: TimeSeries | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Trace times must be strictly increasing.")
        for row in (self.bracket_phi, self.number, self.mass, self.tail_loss, *self.norms.values()):
            if row.shape != self.times.shape:
                raise ValueError("Trace scalars must be aligned with times.")

    @property
    def lam(self) -> float:
        return self.triple.lam

    @property
    def final(self) -> DiscreteField:
        return self.snapshots[-1]

    def with_distance(self, distance: TimeSeries) -> "SimulationTrace":
        return replace(self, distance=distance)

    def conservation_drift(self) -> float:
        """Largest relative change of ⟨f,φ⟩ after adding back the recorded tail loss."""

        reference = self.bracket_phi[0]
        if reference == 0:
            return 0.0

        return float(np.max(np.abs(self.bracket_phi + self.tail_loss - reference)) / abs(reference))

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times, "bracket_phi": self.bracket_phi}
        for alpha, values in self.norms.items():
            columns[f"norm_alpha_{alpha:g}"] = values
        columns |= {"number": self.number, "mass": self.mass, "tail_loss": self.tail_loss}

        return pd.DataFrame(columns)
