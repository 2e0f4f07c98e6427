import configparser
from functools import cached_property
from pathlib import Path
from typing import Any, get_args, get_origin

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import logfire
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from gfkit.errors import ScenarioError
from gfkit.initial_conditions import InitialConditionSpec
from gfkit.models.coefficients import CoefficientSet, FragmentationKernel, FragmentationRate, GrowthRate
from gfkit.models.grid import Grid, Spacing, build_grid
from gfkit.models.trace import EvolutionConfig
from gfkit.settings import settings


class KernelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str = Field(default="mitosis", description="mitosis, asymmetric, uniform, power_law, tabulated or atoms.")
    theta: float = 0.3
    nu: float = 0.0
    atoms: list[tuple[float, float]] = Field(default_factory=list)
    scale: float = 1.0
    nodes: list[float] | None = None
    values: list[float] | None = None

    def build(self) -> FragmentationKernel:
        match self.family:
            case "mitosis":
                return FragmentationKernel.mitosis()
            case "asymmetric":
                return FragmentationKernel.asymmetric(self.theta)
            case "uniform":
                return FragmentationKernel(density="uniform", density_scale=self.scale)
            case "power_law":
                return FragmentationKernel(density="power_law", nu=self.nu, density_scale=self.scale)
            case "tabulated":
                return FragmentationKernel(density="tabulated", nodes=self.nodes, values=self.values, density_scale=self.scale)
            case "atoms":
                return FragmentationKernel(atoms=self.atoms)

        raise ScenarioError(f"Unknown kernel family {self.family!r}.")


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x_min: float = Field(default=1e-3, gt=0.0)
    x_max: float = Field(default=50.0, gt=0.0)
    n: int = Field(default=2048, ge=16)
    spacing: Spacing = Spacing.GEOMETRIC
    snap_to_kernel: bool = Field(default=False, description="Snap the geometric ratio to the smallest kernel atom.")

    def build(self, kernel: FragmentationKernel) -> Grid:
        snap_to = None
        if self.snap_to_kernel and kernel.atoms:
            snap_to = float(kernel.positions.min())

        return build_grid(self.x_min, self.x_max, self.n, self.spacing, snap_to)


class PerronSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol: float | None = Field(default=None, gt=0.0)
    max_iter: int | None = Field(default=None, ge=1)


class DiagnosticsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=2.0, description="Weight of the distance d(t) to the Perron projection.")
    fit_window: tuple[float, float] | None = None
    oscillation: bool = True


class OracleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    n0: int = Field(default=10_000, ge=1)
    replicas: int = Field(default=32, ge=1)
    t_end: float = Field(default=2.0, gt=0.0)
    times: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])


class OsgoodSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    etas: list[float] = Field(default_factory=list)
    t: float = Field(default=1.0, gt=0.0)


class Scenario(BaseModel):
    """A full experiment: coefficients, mesh, solver settings, diagnostics and the oracle toggle."""

    name: str = "scenario"
    seed: int = 0
    growth: GrowthRate = Field(default_factory=GrowthRate.constant)
    fragmentation: FragmentationRate = Field(default_factory=FragmentationRate.power)
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    perron: PerronSpec = Field(default_factory=PerronSpec)
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    diagnostics: DiagnosticsSpec = Field(default_factory=DiagnosticsSpec)
    initial: InitialConditionSpec = Field(default_factory=InitialConditionSpec)
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    osgood: OsgoodSpec = Field(default_factory=OsgoodSpec)

    @model_validator(mode="after")
    def _check_alphas(self) -> Self:
        alpha_lower = self.coefficients.kernel.alpha_lower
        for alpha in [*self.evolution.alphas, self.diagnostics.alpha]:
            if alpha <= alpha_lower:
                raise ValueError(f"Diagnostic α={alpha:g} must exceed α̲={alpha_lower:g}.")
        if self.diagnostics.alpha not in self.evolution.alphas:
            self.evolution.alphas.append(self.diagnostics.alpha)

        return self

    @cached_property
    def coefficients(self) -> CoefficientSet:
        return CoefficientSet(tau=self.growth, b=self.fragmentation, kernel=self.kernel.build())

    def build_grid(self) -> Grid:
        return self.grid.build(self.coefficients.kernel)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, str] | None = None) -> Self:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as handle:
                parser.read_file(handle)
        except (OSError, configparser.Error) as e:
            logfire.exception(f"Could not read scenario {path}")
            raise ScenarioError(f"Could not read scenario {path}: {e}") from e

        for key, value in (overrides or {}).items():
            section, _, option = key.partition(".")
            if not option:
                raise ScenarioError(f"Override {key!r} must look like section.key.")
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, option, value)

        return cls.from_parser(parser, default_name=Path(path).stem)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, default_name: str = "scenario") -> Self:
        data: dict[str, Any] = {"name": default_name}
        for section in parser.sections():
            options = dict(parser.items(section))
            if section == "scenario":
                data |= options
                continue
            target = _SECTIONS.get(section)
            if target is None:
                raise ScenarioError(f"Unknown scenario section [{section}].")
            data[section] = _coerce(target, section, options)

        if settings.SEED is not None:
            logfire.info(f"Scenario seed overridden by GFKIT_SEED={settings.SEED}")
            data["seed"] = settings.SEED

        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ScenarioError(f"Invalid scenario {data['name']!r}: {e}") from e


_SECTIONS: dict[str, type[BaseModel]] = {
    "growth": GrowthRate,
    "fragmentation": FragmentationRate,
    "kernel": KernelSpec,
    "grid": GridSpec,
    "perron": PerronSpec,
    "evolution": EvolutionConfig,
    "diagnostics": DiagnosticsSpec,
    "initial": InitialConditionSpec,
    "oracle": OracleSpec,
    "osgood": OsgoodSpec,
}


def _is_sequence(annotation: Any) -> bool:
    if get_origin(annotation) in (list, tuple):
        return True

    return any(get_origin(arg) in (list, tuple) for arg in get_args(annotation))


def _parse_item(item: str) -> str | tuple[str, ...]:
    return tuple(part.strip() for part in item.split(":")) if ":" in item else item


def _coerce(model: type[BaseModel], section: str, options: dict[str, str]) -> dict[str, Any]:
    """Split comma-separated values for sequence fields; "z:w" items become pairs."""

    fields = model.model_fields
    unknown = sorted(set(options) - set(fields))
    if unknown:
        raise ScenarioError(f"Unknown keys in [{section}]: {', '.join(unknown)}.")

    coerced: dict[str, Any] = {}
    for key, raw in options.items():
        if _is_sequence(fields[key].annotation):
            items = [item.strip() for item in raw.split(",") if item.strip()]
            coerced[key] = [_parse_item(item) for item in items]
        else:
            coerced[key] = raw

    return coerced

