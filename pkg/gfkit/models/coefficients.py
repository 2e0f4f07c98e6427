import math
from enum import Enum
from functools import cached_property
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import logfire
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from gfkit.errors import InvalidCoefficient
from gfkit.models.tabulated import PiecewisePowerLaw
from gfkit.settings import settings

# Sizes used to derive hypothesis constants for tabulated families.
PROBE_SIZES = np.logspace(-6, 6, 241)

MASS_TOLERANCE = 1e-10


class GrowthFamily(str, Enum):
    CONSTANT = "constant"
    POWER = "power"
    AFFINE_CAPPED = "affine_capped"
    TABULATED = "tabulated"


class RateFamily(str, Enum):
    POWER = "power"
    CAPPED_POWER = "capped_power"
    TABULATED = "tabulated"


class DensityFamily(str, Enum):
    NONE = "none"
    POWER_LAW = "power_law"
    UNIFORM = "uniform"
    TABULATED = "tabulated"


class Mode(str, Enum):
    STANDARD = "standard"
    OSGOOD = "osgood"


def _assign_derived(model: BaseModel, **derived: float) -> None:
    for name, value in derived.items():
        if getattr(model, name) is None:
            object.__setattr__(model, name, float(value))


class GrowthRate(BaseModel):
    """Growth rate τ with the constants (ν₀, τ₀, τ₁) of its lower and upper bounds."""

    model_config = ConfigDict(frozen=True)

    family: GrowthFamily = GrowthFamily.CONSTANT
    c: float = Field(default=1.0, description="Scale of τ, in size per unit time.")
    p: float = Field(default=0.0, description="Exponent of the power family.")
    nodes: list[float] | None = None
    values: list[float] | None = None

    nu0: float | None = None
    tau0: float | None = None
    tau1: float | None = None

    @classmethod
    def constant(cls, c: float = 1.0) -> Self:
        return cls(family=GrowthFamily.CONSTANT, c=c)

    @classmethod
    def power(cls, c: float = 1.0, p: float = 1.0) -> Self:
        return cls(family=GrowthFamily.POWER, c=c, p=p)

    @classmethod
    def affine_capped(cls, c: float = 1.0) -> Self:
        return cls(family=GrowthFamily.AFFINE_CAPPED, c=c)

    @classmethod
    def tabulated(cls, nodes: list[float], values: list[float]) -> Self:
        return cls(family=GrowthFamily.TABULATED, nodes=nodes, values=values)

    @model_validator(mode="after")
    def _derive_bounds(self) -> Self:
        if self.family == GrowthFamily.TABULATED and (self.nodes is None or self.values is None):
            raise ValueError("A tabulated growth rate needs both nodes and values.")

        match self.family:
            case GrowthFamily.CONSTANT:
                _assign_derived(self, nu0=0.0, tau0=self.c, tau1=self.c)
            case GrowthFamily.POWER:
                _assign_derived(self, nu0=self.p, tau0=self.c, tau1=self.c)
            case GrowthFamily.AFFINE_CAPPED:
                _assign_derived(self, nu0=1.0, tau0=self.c, tau1=self.c)
            case GrowthFamily.TABULATED:
                law = self.law
                nu0 = min(1.0, law.exponent_at_infinity)
                large = PROBE_SIZES[PROBE_SIZES >= 1.0]
                _assign_derived(
                    self,
                    nu0=nu0,
                    tau0=np.min(law(large) / large**nu0),
                    tau1=np.max(law(PROBE_SIZES) / np.maximum(1.0, PROBE_SIZES)),
                )

        return self

    @cached_property
    def law(self) -> PiecewisePowerLaw:
        match self.family:
            case GrowthFamily.CONSTANT:
                return PiecewisePowerLaw.power(self.c, 0.0)
            case GrowthFamily.POWER:
                return PiecewisePowerLaw.power(self.c, self.p)
            case GrowthFamily.AFFINE_CAPPED:
                return PiecewisePowerLaw([1.0], [self.c, self.c], [0.0, 1.0])
            case GrowthFamily.TABULATED:
                return PiecewisePowerLaw.from_table(self.nodes, self.values)

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return self.law(x)

    @property
    def integrable_at_zero(self) -> bool:
        """Whether ∫₀¹ dx/τ(x) is finite; decided from the exponent of τ near zero."""

        return self.law.exponent_at_zero < 1.0


class FragmentationRate(BaseModel):
    """Total fragmentation rate B with the constants (γ₀, γ₁, B₀, B₁, x₀) of its bounds."""

    model_config = ConfigDict(frozen=True)

    family: RateFamily = RateFamily.POWER
    b: float = Field(default=1.0, ge=0.0, description="Rate scale, in 1/time.")
    gamma: float = Field(default=1.0, description="Exponent of the power families.")
    x_cap: float | None = Field(default=None, gt=0.0)
    nodes: list[float] | None = None
    values: list[float] | None = None

    gamma0: float | None = None
    gamma1: float | None = None
    B0: float | None = None
    B1: float | None = None
    x0: float | None = None

    @classmethod
    def power(cls, b: float = 1.0, gamma: float = 1.0) -> Self:
        return cls(family=RateFamily.POWER, b=b, gamma=gamma)

    @classmethod
    def capped_power(cls, b: float, gamma: float, x_cap: float) -> Self:
        return cls(family=RateFamily.CAPPED_POWER, b=b, gamma=gamma, x_cap=x_cap)

    @classmethod
    def tabulated(cls, nodes: list[float], values: list[float]) -> Self:
        return cls(family=RateFamily.TABULATED, nodes=nodes, values=values)

    @model_validator(mode="after")
    def _derive_bounds(self) -> Self:
        if self.family == RateFamily.CAPPED_POWER and self.x_cap is None:
            raise ValueError("A capped power rate needs x_cap.")
        if self.family == RateFamily.TABULATED and (self.nodes is None or self.values is None):
            raise ValueError("A tabulated fragmentation rate needs both nodes and values.")

        match self.family:
            case RateFamily.POWER:
                _assign_derived(self, gamma0=self.gamma, gamma1=self.gamma, B0=self.b, B1=self.b, x0=1.0)
            case RateFamily.CAPPED_POWER:
                _assign_derived(
                    self,
                    gamma0=0.0,
                    gamma1=self.gamma,
                    B0=self.b * min(1.0, self.x_cap) ** self.gamma,
                    B1=self.b,
                    x0=1.0,
                )
            case RateFamily.TABULATED:
                law = self.law
                gamma0 = max(0.0, law.exponent_at_infinity)
                large = PROBE_SIZES[PROBE_SIZES >= 1.0]
                _assign_derived(
                    self,
                    gamma0=gamma0,
                    gamma1=gamma0,
                    B0=np.min(law(large) / large**gamma0),
                    B1=np.max(law(PROBE_SIZES) / np.maximum(1.0, PROBE_SIZES**gamma0)),
                    x0=1.0,
                )

        return self

    @cached_property
    def law(self) -> PiecewisePowerLaw:
        match self.family:
            case RateFamily.POWER:
                return PiecewisePowerLaw.power(self.b, self.gamma)
            case RateFamily.CAPPED_POWER:
                return PiecewisePowerLaw([self.x_cap], [self.b, self.b * self.x_cap**self.gamma], [self.gamma, 0.0])
            case RateFamily.TABULATED:
                return PiecewisePowerLaw.from_table(self.nodes, self.values)

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        return self.law(x)

    @property
    def vanishes(self) -> bool:
        return self.law.is_zero


class FragmentationKernel(BaseModel):
    """Fragment distribution ℘ on (0,1): a list of atoms plus an optional density."""

    model_config = ConfigDict(frozen=True)

    atoms: list[tuple[float, float]] = Field(default_factory=list, description="(position z, weight w) pairs.")
    density: DensityFamily = DensityFamily.NONE
    nu: float = 0.0
    density_scale: float = Field(default=1.0, ge=0.0)
    nodes: list[float] | None = None
    values: list[float] | None = None

    @classmethod
    def mitosis(cls) -> Self:
        return cls(atoms=[(0.5, 2.0)])

    @classmethod
    def asymmetric(cls, theta: float) -> Self:
        return cls(atoms=[(theta, 1.0), (1.0 - theta, 1.0)])

    @classmethod
    def uniform(cls) -> Self:
        return cls(density=DensityFamily.UNIFORM)

    @classmethod
    def power_law(cls, nu: float) -> Self:
        return cls(density=DensityFamily.POWER_LAW, nu=nu)

    @classmethod
    def tabulated(cls, nodes: list[float], values: list[float]) -> Self:
        return cls(density=DensityFamily.TABULATED, nodes=nodes, values=values)

    @model_validator(mode="after")
    def _check_table(self) -> Self:
        if self.density == DensityFamily.TABULATED and (self.nodes is None or self.values is None):
            raise ValueError("A tabulated kernel density needs both nodes and values.")

        return self

    @property
    def positions(self) -> np.ndarray:
        return np.array([z for z, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def has_density(self) -> bool:
        return self.density != DensityFamily.NONE

    @cached_property
    def density_law(self) -> PiecewisePowerLaw | None:
        match self.density:
            case DensityFamily.NONE:
                return None
            case DensityFamily.POWER_LAW:
                return PiecewisePowerLaw.power(self.density_scale * (self.nu + 2.0), self.nu)
            case DensityFamily.UNIFORM:
                return PiecewisePowerLaw.power(2.0 * self.density_scale, 0.0)
            case DensityFamily.TABULATED:
                return PiecewisePowerLaw.from_table(self.nodes, self.values) * self.density_scale

    @cached_property
    def alpha_lower(self) -> float:
        return critical_alpha(self)

    def cumulative_density_moment(self, z: np.ndarray, m: int) -> np.ndarray:
        """∫₀^z ζ^m density(ζ) dζ, used by the fixed-pivot assembly."""

        if self.density_law is None:
            return np.zeros_like(np.asarray(z, dtype=float))

        return self.density_law.times_power(m).integral(0.0, z)


class CoefficientSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: GrowthRate
    b: FragmentationRate
    kernel: FragmentationKernel

    @property
    def mode(self) -> Mode:
        return Mode.STANDARD if self.tau.integrable_at_zero else Mode.OSGOOD

    def ensure_admissible(self) -> None:
        """Raise InvalidCoefficient when a structural invariant fails."""

        if not self.tau.law.is_positive:
            raise InvalidCoefficient("(Hτ) growth rate must be strictly positive.")
        if self.tau.family == GrowthFamily.TABULATED and any(v <= 0 for v in self.tau.values):
            raise InvalidCoefficient("(Hτ) tabulated growth rate must be strictly positive.")

        kernel = self.kernel
        if any(not 0.0 < z < 1.0 for z, _ in kernel.atoms):
            raise InvalidCoefficient("(H℘) atom positions must lie strictly inside (0,1).")
        if any(w <= 0.0 for _, w in kernel.atoms):
            raise InvalidCoefficient("(H℘) atom weights must be positive.")
        if kernel.density == DensityFamily.POWER_LAW and kernel.nu <= -1.0:
            raise InvalidCoefficient(f"(H℘) power-law density with ν={kernel.nu} has infinite total measure.")
        if kernel.density == DensityFamily.TABULATED and not all(0.0 < z <= 1.0 for z in kernel.nodes):
            raise InvalidCoefficient("(H℘) tabulated density nodes must lie in (0,1].")

        total = kernel_moment(kernel, 0.0)
        if not math.isfinite(total):
            raise InvalidCoefficient("(H℘) the kernel must be a finite measure (℘₀ = ∞).")
        mass = kernel_moment(kernel, 1.0)
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise InvalidCoefficient(f"(H℘) mass conservation violated: ℘₁={mass:.12g} ≠ 1.")


def _tabulated_moment(kernel: FragmentationKernel, alpha: float) -> tuple[float, float]:
    """Moment of a tabulated density by adaptive quadrature per table segment, with an exact head."""

    law = kernel.density_law
    nodes = np.asarray(kernel.nodes, dtype=float)
    value = float(law.times_power(alpha).integral(0.0, nodes[0]))
    error = 0.0

    edges = list(nodes)
    if edges[-1] < 1.0:
        edges.append(1.0)
    for lower, upper in zip(edges[:-1], edges[1:], strict=False):
        piece, piece_error = integrate.quad(
            lambda z: z**alpha * float(law(z)),
            lower,
            upper,
            epsabs=0.0,
            epsrel=settings.KERNEL_QUAD_RTOL,
            limit=200,
        )
        value += piece
        error += piece_error

    return value, error


def kernel_moment(kernel: FragmentationKernel, alpha: float) -> float:
    """℘_α = Σ w_i z_i^α + ∫₀¹ z^α density(z) dz, +∞ when alpha ≤ α̲."""

    moment = float(np.sum(kernel.weights * kernel.positions**alpha)) if kernel.atoms else 0.0
    if not kernel.has_density:
        return moment
    if alpha <= kernel.alpha_lower:
        return math.inf

    if kernel.density == DensityFamily.TABULATED:
        value, error = _tabulated_moment(kernel, alpha)
        logfire.debug(f"Tabulated kernel moment α={alpha}: {value} ± {error:.2e}")
        return moment + value

    return moment + float(kernel.density_law.times_power(alpha).integral(0.0, 1.0))


def _probe_diverges(kernel: FragmentationKernel, alpha: float) -> bool:
    """Divergence at z=0: the quadrature increments over shrinking decades stop shrinking."""

    law = kernel.density_law
    start = float(kernel.nodes[0])
    scales = start * 10.0 ** (-2.0 * np.arange(settings.ALPHA_PROBE_REFINEMENTS + 1))

    increments = []
    for upper, lower in zip(scales[:-1], scales[1:], strict=False):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            piece, _ = integrate.quad(
                lambda z: z**alpha * float(law(z)), lower, upper, epsabs=0.0, epsrel=settings.KERNEL_QUAD_RTOL
            )
        if not math.isfinite(piece):
            return True
        increments.append(piece)

    return any(later >= earlier for earlier, later in zip(increments[:-1], increments[1:], strict=False))


def critical_alpha(kernel: FragmentationKernel) -> float:
    """α̲ = inf{α : ℘_α < ∞}."""

    match kernel.density:
        case DensityFamily.NONE:
            return -math.inf
        case DensityFamily.POWER_LAW:
            return -(kernel.nu + 1.0)
        case DensityFamily.UNIFORM:
            return -1.0

    upper = 1.0
    while _probe_diverges(kernel, upper):
        upper += 2.0 * abs(upper) + 1.0
        if upper > 1e3:
            return math.inf
    lower = upper - 1.0
    while not _probe_diverges(kernel, lower):
        lower -= 2.0 * abs(lower) + 1.0
        if lower < -1e3:
            return -math.inf

    while upper - lower > 1e-10:
        middle = 0.5 * (lower + upper)
        if _probe_diverges(kernel, middle):
            lower = middle
        else:
            upper = middle

    return upper


def threshold_alpha(coeffs: CoefficientSet) -> float:
    """max(1, α̲ + 2γ₁ − 2γ₀); an α̲ of −∞ collapses to 1."""

    alpha_lower = coeffs.kernel.alpha_lower
    if alpha_lower == -math.inf:
        return 1.0

    return max(1.0, alpha_lower + 2.0 * coeffs.b.gamma1 - 2.0 * coeffs.b.gamma0)
