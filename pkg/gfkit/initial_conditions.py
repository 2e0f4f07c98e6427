from abc import ABC, abstractmethod

import logfire
import numpy as np
from pydantic import BaseModel, Field
from scipy import special

from gfkit.errors import ScenarioError
from gfkit.models.grid import DiscreteField, Grid, bracket


class InitialConditionSpec(BaseModel):
    kind: str = "indicator"
    a: float = 1.0
    b: float = 2.0
    centers: list[float] = Field(default_factory=lambda: [5.0])
    width: float = 0.5
    eta: float = 0.1
    power: float = 3.0
    nodes: list[float] | None = None
    values: list[float] | None = None
    scale: float = 1.0


class BaseInitialCondition(ABC):
    kind: str

    def __init__(self, spec: InitialConditionSpec) -> None:
        self.spec = spec

    @abstractmethod
    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField: ...


class Indicator(BaseInitialCondition):
    """1_{[a,b]} as exact cell averages."""

    kind = "indicator"

    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        a, b = self.spec.a, self.spec.b
        overlap = np.clip(np.minimum(grid.edges[1:], b) - np.maximum(grid.edges[:-1], a), 0.0, None)
        return DiscreteField(self.spec.scale * overlap / grid.widths, grid)


class GaussianBumps(BaseInitialCondition):
    """Sum of Gaussian bumps, one per center, averaged exactly over each cell."""

    kind = "gaussian_bump"

    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        width = self.spec.width
        values = np.zeros(grid.n)
        for center in self.spec.centers:
            cdf = special.erf((grid.edges - center) / (np.sqrt(2.0) * width))
            values += 0.5 * np.diff(cdf) / grid.widths

        return DiscreteField(self.spec.scale * values, grid)


class PowerTail(BaseInitialCondition):
    """(1+x)^{−p} truncated to the grid."""

    kind = "power_tail"

    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        return DiscreteField(self.spec.scale * (1.0 + grid.centers) ** (-self.spec.power), grid)


class Tabulated(BaseInitialCondition):
    kind = "tabulated"

    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        if self.spec.nodes is None or self.spec.values is None:
            raise ScenarioError("A tabulated initial condition needs nodes and values.")
        values = np.interp(grid.centers, self.spec.nodes, self.spec.values, left=0.0, right=0.0)
        if np.any(values < 0):
            raise ScenarioError("Initial conditions must be nonnegative.")

        return DiscreteField(self.spec.scale * values, grid)


class EtaConcentrated(BaseInitialCondition):
    """1_{(0,η)}/(ηφ), normalized so that ⟨f, φ⟩ = 1."""

    kind = "f_eta"

    def build(self, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        if phi is None:
            raise ScenarioError("The f_eta initial condition needs the dual eigenvector φ.")

        eta = self.spec.eta
        values = np.where(grid.edges[1:] <= eta, 1.0 / (eta * phi.values), 0.0)
        f = DiscreteField(values, grid)

        return f * (1.0 / bracket(f, phi))


class InitialConditionDispatcher:
    builders = [Indicator, GaussianBumps, PowerTail, Tabulated, EtaConcentrated]

    def __init__(self) -> None:
        self._builders = {}
        for builder in self.builders:
            self.register(builder.kind, builder)
        self._builders["two_bump"] = GaussianBumps

    def register(self, kind: str, builder: type[BaseInitialCondition]) -> None:
        self._builders[kind.lower()] = builder

    def get_builder(self, spec: InitialConditionSpec) -> BaseInitialCondition:
        builder = self._builders.get(spec.kind.lower())
        if builder is None:
            logfire.warning(f"No initial condition registered as {spec.kind!r}.", known=sorted(self._builders))
            raise ScenarioError(f"Unknown initial condition kind {spec.kind!r}.")

        return builder(spec)

    def build(self, spec: InitialConditionSpec, grid: Grid, phi: DiscreteField | None = None) -> DiscreteField:
        return self.get_builder(spec).build(grid, phi)
