import concurrent.futures as cf
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import logfire
import numpy as np
import pandas as pd
from numpy.typing import NDArray

from gfkit.errors import UnsupportedKernel
from gfkit.models.coefficients import CoefficientSet, FragmentationKernel, RateFamily
from gfkit.models.grid import DiscreteField
from gfkit.numerics.characteristics import Flow, damping_law, make_flow
from gfkit.settings import settings

MULTIPLICITY_TOLERANCE = 1e-9


@dataclass
class ParticleEnsemble:
    sizes: NDArray[np.float64]
    weights: NDArray[np.float64]
    rng_seed: int
    time: float = 0.0

    def __post_init__(self) -> None:
        if np.any(self.sizes <= 0) or np.any(self.weights <= 0):
            raise ValueError("Particle sizes and weights must be positive.")

    def __len__(self) -> int:
        return self.sizes.size


class PointSampler:
    """n copies of one size, each with unit weight."""

    def __init__(self, x: float) -> None:
        if x <= 0:
            raise ValueError("Particles need a positive size.")
        self.x = x

    def draw(self, rng: np.random.Generator, n: int) -> tuple[NDArray[np.float64], float]:
        return np.full(n, self.x), 1.0


class FieldSampler:
    """Sizes distributed like a nonnegative field: cell ∝ number, uniform inside the cell."""

    def __init__(self, f: DiscreteField) -> None:
        if np.any(f.values < 0):
            raise ValueError("Cannot sample from a field with negative values.")
        number = f.values * f.grid.widths
        self.total = float(number.sum())
        if self.total <= 0:
            raise ValueError("Cannot sample from an empty field.")
        self.probabilities = number / self.total
        self.edges = f.grid.edges

    def draw(self, rng: np.random.Generator, n: int) -> tuple[NDArray[np.float64], float]:
        cells = rng.choice(self.probabilities.size, size=n, p=self.probabilities)
        sizes = rng.uniform(self.edges[cells], self.edges[cells + 1])
        return sizes, self.total / n


def integer_fragments(kernel: FragmentationKernel) -> NDArray[np.float64]:
    """Relative fragment sizes of one split, each atom repeated by its integer multiplicity."""

    if kernel.has_density:
        raise UnsupportedKernel("The particle oracle only handles purely atomic kernels.")

    grouped: dict[float, float] = {}
    for z, w in kernel.atoms:
        key = round(z, 12)
        grouped[key] = grouped.get(key, 0.0) + w

    fragments = []
    for z, w in sorted(grouped.items()):
        count = round(w)
        if count < 1 or abs(w - count) > MULTIPLICITY_TOLERANCE:
            raise UnsupportedKernel(f"Atom at z={z:g} has non-integer multiplicity {w:g}.")
        fragments += [z] * count

    return np.array(fragments)


@dataclass
class MomentSeries:
    t: NDArray[np.float64]
    number_mean: NDArray[np.float64]
    number_se: NDArray[np.float64]
    mass_mean: NDArray[np.float64]
    mass_se: NDArray[np.float64]
    bracket_mean: NDArray[np.float64]
    bracket_se: NDArray[np.float64]
    ensembles: list[ParticleEnsemble] = field(default_factory=list, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.t,
                "number_mean": self.number_mean,
                "number_se": self.number_se,
                "mass_mean": self.mass_mean,
                "mass_se": self.mass_se,
                "bracket_mean": self.bracket_mean,
                "bracket_se": self.bracket_se,
            }
        )


class _Splitter:
    """Next split time and size of particles born at (birth, x)."""

    def __init__(self, coeffs: CoefficientSet, flow: Flow, t_end: float) -> None:
        self.coeffs = coeffs
        self.flow = flow
        self.t_end = t_end
        self.law = damping_law(coeffs.tau, coeffs.b)
        self.thinning = coeffs.b.family == RateFamily.TABULATED

    def __call__(self, rng: np.random.Generator, birth: NDArray, x: NDArray) -> tuple[NDArray, NDArray]:
        if self.coeffs.b.vanishes:
            return np.full(x.size, math.inf), np.full(x.size, math.nan)
        if self.thinning:
            return self._thinned(rng, birth, x)

        # Split when ∫_x^y B/τ reaches an Exp(1) draw, i.e. y = Φ⁻¹(Φ(x) + E).
        target = self.law.indefinite(x) + rng.exponential(size=x.size)
        size = self.law.inverse_indefinite(target)
        with np.errstate(invalid="ignore"):
            death = birth + (self.flow.F(size) - self.flow.F(x))
        death = np.where(np.isfinite(size) & (death <= self.t_end), death, math.inf)

        return death, size

    def _thinned(self, rng: np.random.Generator, birth: NDArray, x: NDArray) -> tuple[NDArray, NDArray]:
        rate = self.coeffs.b
        reach = self.flow.map(self.t_end - birth, x)
        reach = np.where(np.isfinite(reach), reach, np.finfo(float).max)
        majorant = np.array([rate.law.max_on(lo, hi) for lo, hi in zip(x, reach, strict=True)])

        death = np.full(x.size, math.inf)
        size = np.full(x.size, math.nan)
        clock = birth.copy()
        pending = np.flatnonzero(majorant > 0)
        while pending.size:
            clock[pending] += rng.exponential(size=pending.size) / majorant[pending]
            pending = pending[clock[pending] <= self.t_end]
            y = self.flow.map(clock[pending] - birth[pending], x[pending])
            accepted = rng.uniform(size=pending.size) * majorant[pending] <= rate(y)
            death[pending[accepted]] = clock[pending[accepted]]
            size[pending[accepted]] = y[accepted]
            pending = pending[~accepted]

        return death, size


def _run_replica(
    coeffs: CoefficientSet,
    fragments: NDArray[np.float64],
    sampler: PointSampler | FieldSampler,
    n0: int,
    times: NDArray[np.float64],
    phi: DiscreteField | None,
    seed: int,
) -> tuple[ParticleEnsemble, NDArray, NDArray, NDArray]:
    rng = np.random.default_rng(seed)
    flow = make_flow(coeffs.tau)
    t_end = float(times[-1])
    splitter = _Splitter(coeffs, flow, t_end)

    sizes, weight = sampler.draw(rng, n0)
    birth = np.zeros(n0)
    number, mass, bracket = np.zeros(times.size), np.zeros(times.size), np.zeros(times.size)
    final_sizes = []

    while sizes.size:
        death, split_size = splitter(rng, birth, sizes)
        for j, t in enumerate(times):
            alive = (birth <= t) & (t < death)
            if not np.any(alive):
                continue
            current = flow.map(t - birth[alive], sizes[alive])
            number[j] += weight * current.size
            mass[j] += weight * current.sum()
            if phi is not None:
                bracket[j] += weight * phi.interpolate(current).sum()

        survivors = ~np.isfinite(death)
        final_sizes.append(flow.map(t_end - birth[survivors], sizes[survivors]))

        splitting = ~survivors
        sizes = np.concatenate([z * split_size[splitting] for z in fragments])
        birth = np.tile(death[splitting], fragments.size)

    final = np.concatenate(final_sizes) if final_sizes else np.zeros(0)
    ensemble = ParticleEnsemble(final, np.full(final.size, weight), seed, t_end)

    return ensemble, number, mass, bracket


def _mean_and_se(rows: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    mean = rows.mean(axis=0)
    if rows.shape[0] < 2:
        return mean, np.full(mean.shape, math.nan)

    return mean, rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])


def simulate(
    coeffs: CoefficientSet,
    n0: int,
    sampler: PointSampler | FieldSampler,
    t_end: float,
    seed: int,
    times: Sequence[float] | None = None,
    replicas: int = 1,
    phi: DiscreteField | None = None,
    workers: int | None = None,
) -> MomentSeries:
    """
    Branching particles: deterministic growth along X, splits at rate B into the kernel's atoms.

    Each replica r draws from its own generator seeded with seed + r; the moments at the
    observation times are averaged over replicas with standard errors.
    """

    fragments = integer_fragments(coeffs.kernel)
    coeffs.ensure_admissible()
    if n0 < 1 or t_end < 0:
        raise ValueError("simulate needs n0 ≥ 1 and t_end ≥ 0.")

    times = np.asarray(times if times is not None else np.linspace(0.0, t_end, 21), dtype=float)
    if times[-1] != t_end:
        times = np.append(times[times < t_end], t_end)

    with logfire.span(f"Particle oracle: {replicas} replicas of {n0} particles up to t={t_end:g}"):
        with cf.ThreadPoolExecutor(max_workers=workers or settings.PARTICLE_WORKERS) as pool:
            results = list(
                pool.map(
                    lambda r: _run_replica(coeffs, fragments, sampler, n0, times, phi, seed + r),
                    range(replicas),
                )
            )

    ensembles = [result[0] for result in results]
    number_mean, number_se = _mean_and_se(np.array([result[1] for result in results]))
    mass_mean, mass_se = _mean_and_se(np.array([result[2] for result in results]))
    bracket_mean, bracket_se = _mean_and_se(np.array([result[3] for result in results]))
    logfire.info(f"Oracle finished with {sum(len(e) for e in ensembles)} particles alive at t={t_end:g}")

    return MomentSeries(times, number_mean, number_se, mass_mean, mass_se, bracket_mean, bracket_se, ensembles)


def empirical_bracket(ensemble: ParticleEnsemble, phi: DiscreteField) -> tuple[float, float]:
    """Σ weight·φ(size) with φ interpolated linearly, and the standard error of that sum."""

    terms = ensemble.weights * phi.interpolate(ensemble.sizes)
    if terms.size == 0:
        return 0.0, 0.0

    return float(terms.sum()), float(math.sqrt(terms.size) * terms.std())
