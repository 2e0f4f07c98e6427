import math
from collections.abc import Sequence

import logfire
import numpy as np
from pydantic import BaseModel, Field
from scipy import linalg

from gfkit.errors import DomainError, NonPositiveData
from gfkit.models.coefficients import CoefficientSet, Mode
from gfkit.models.grid import DiscreteField, Grid, bracket, weighted_norm
from gfkit.models.perron import PerronTriple
from gfkit.models.trace import SimulationTrace, TimeSeries
from gfkit.numerics.characteristics import make_flow
from gfkit.numerics.evolution import Propagator, check_gain_step, default_dt, snapped_dt, transport_step
from gfkit.numerics.operators import assemble_generator
from gfkit.settings import settings

MIN_ETA_CELLS = 8
MAX_DENSE_SPECTRUM = 2048
# Cap on the samples handed to the autocorrelation scan.
OSCILLATION_SAMPLES = 4096


class RateFit(BaseModel):
    M: float = Field(description="Amplitude.")
    sigma: float = Field(description="Decay rate, 1/time.")
    window: tuple[float, float]
    goodness: float = Field(ge=0.0, le=1.0, description="R² of the log-linear fit.")
    samples: int


class OscillationReport(BaseModel):
    periodic: bool
    period: float | None = None
    amplitude: float = 0.0
    peak_correlation: float | None = None
    reason: str = ""


class OsgoodRecord(BaseModel):
    eta: float
    cells: int
    bracket: float
    distance: float


def aeg_distance(trace: SimulationTrace, triple: PerronTriple, f_in: DiscreteField, alpha: float) -> TimeSeries:
    """d(t) = ‖f(t) − ⟨f_in, φ⟩G‖_{L¹_α} at every stored snapshot."""

    if not trace.rescaled:
        raise ValueError("The distance to the Perron projection needs a trace rescaled by λ.")
    f_in.grid.require_same(triple.grid)

    target = triple.projection(f_in)
    values = []
    for snapshot in trace.snapshots:
        snapshot.grid.require_same(target.grid)
        values.append(weighted_norm(snapshot - target, alpha))

    return TimeSeries(trace.snapshot_times, np.array(values), name=f"d_alpha_{alpha:g}")


def fit_rate(
    d: TimeSeries,
    window: tuple[float, float] | None = None,
    floor: float | None = None,
) -> RateFit:
    """
    Least-squares line through (t, log d); σ = −slope and M = e^intercept.

    Without a window the last half of the series is used. Samples at or under the floor, by
    default 100× the solver tolerance relative to max d, sit on round-off and are dropped.
    """

    if window is None:
        t_mid = d.t[0] + 0.5 * (d.t[-1] - d.t[0])
        selected = d.window(t_mid, d.t[-1])
    else:
        selected = d.window(*window)
        if np.any(selected.values <= 0):
            raise NonPositiveData(f"d(t) must be positive on the fit window {window}.")

    if floor is None:
        floor = 100.0 * settings.PERRON_TOL * float(np.max(np.abs(d.values), initial=0.0))
    keep = selected.values > floor
    if np.count_nonzero(keep) < len(selected):
        logfire.debug(f"Rate fit drops {len(selected) - np.count_nonzero(keep)} samples under the floor {floor:.2e}")
    selected = TimeSeries(selected.t[keep], selected.values[keep], d.name)

    if len(selected) < 2:
        raise NonPositiveData("A rate fit needs at least two samples above the floor.")

    log_d = np.log(selected.values)
    slope, intercept = np.polyfit(selected.t, log_d, 1)
    predicted = slope * selected.t + intercept
    total = float(np.sum((log_d - log_d.mean()) ** 2))
    goodness = 1.0 if total == 0 else 1.0 - float(np.sum((log_d - predicted) ** 2)) / total

    return RateFit(
        M=float(math.exp(intercept)),
        sigma=float(-slope),
        window=(float(selected.t[0]), float(selected.t[-1])),
        goodness=min(1.0, max(0.0, goodness)),
        samples=len(selected),
    )


def _autocorrelation(x: np.ndarray, lag: int) -> float:
    head, tail = x[:-lag], x[lag:]
    spread = head.std() * tail.std()
    if spread == 0:
        return 0.0

    return float(np.mean((head - head.mean()) * (tail - tail.mean())) / spread)


def detect_oscillation(series: TimeSeries, lam: float = 0.0, threshold: float | None = None) -> OscillationReport:
    """
    Look for a sustained period in the tail of e^{−λt}·series.

    The second half is resampled uniformly and detrended; the first autocorrelation maximum past
    the first zero crossing counts as a period when it reaches the threshold and recurs at twice
    the lag.
    """

    threshold = threshold or settings.OSCILLATION_THRESHOLD
    half = len(series) // 2
    t = series.t[half:]
    if t.size < 16:
        return OscillationReport(periodic=False, reason="series too short")

    y = series.values[half:] * np.exp(-lam * t)
    uniform_t = np.linspace(t[0], t[-1], t.size)
    y = np.interp(uniform_t, t, y)
    spacing = uniform_t[1] - uniform_t[0]
    residual = y - np.polyval(np.polyfit(uniform_t, y, 1), uniform_t)

    if residual.std() <= 1e-12 * max(abs(y).max(), 1e-300):
        return OscillationReport(periodic=False, reason="flat after detrending")

    max_lag = residual.size // 2
    acf = np.array([1.0] + [_autocorrelation(residual, k) for k in range(1, max_lag + 1)])
    crossings = np.flatnonzero(acf < 0)
    if crossings.size == 0:
        return OscillationReport(periodic=False, reason="autocorrelation never changes sign")

    for lag in range(int(crossings[0]) + 1, max_lag):
        is_peak = acf[lag] >= acf[lag - 1] and acf[lag] >= acf[lag + 1]
        if not is_peak or acf[lag] < threshold:
            continue
        if 8 * lag * spacing > series.t[-1] - series.t[0]:
            return OscillationReport(periodic=False, peak_correlation=float(acf[lag]), reason="fewer than 8 periods")
        if 2 * lag > max_lag or acf[2 * lag] < threshold:
            continue

        report = OscillationReport(
            periodic=True,
            period=float(lag * spacing),
            amplitude=float(0.5 * (residual.max() - residual.min())),
            peak_correlation=float(acf[lag]),
        )
        logfire.info(f"Sustained oscillation: period {report.period:.6g}, autocorrelation {report.peak_correlation:.4f}")
        return report

    return OscillationReport(periodic=False, peak_correlation=float(acf[crossings[0]:].max()), reason="no recurring peak")


def trace_oscillation(trace: SimulationTrace, alpha: float, threshold: float | None = None) -> OscillationReport:
    """detect_oscillation on the recorded L¹_α norm, decimated, with e^{λt} removed when the trace is unrescaled."""

    stride = max(1, trace.times.size // OSCILLATION_SAMPLES)
    series = TimeSeries(trace.times[::stride], trace.norms[alpha][::stride], name=f"norm_alpha_{alpha:g}")

    return detect_oscillation(series, lam=0.0 if trace.rescaled else trace.lam, threshold=threshold)


def osgood_demo(
    coeffs: CoefficientSet,
    grid: Grid,
    triple: PerronTriple,
    eta_list: Sequence[float],
    t: float,
    dt: float | None = None,
) -> list[OsgoodRecord]:
    """
    ‖T_t f_η − G‖_{L¹(φ)} for f_η = 1_{(0,η)}/(ηφ) normalized so that ⟨f_η, φ⟩ = 1.

    Values approach 2 as η ↓ 0 when 1/τ is not integrable at 0.
    """

    if coeffs.mode != Mode.OSGOOD:
        raise DomainError("osgood_demo needs 1/τ non-integrable at 0.")
    if min(eta_list) < 2.0 * grid.x_min:
        raise DomainError(f"Smallest η={min(eta_list):g} is below 2·x_min={2 * grid.x_min:g}.")

    dt = snapped_dt(coeffs, grid, dt or default_dt(coeffs, grid, t))
    check_gain_step(coeffs, grid, dt)
    steps = max(1, round(t / dt))

    records = []
    with logfire.span(f"Osgood demonstration at t={t:g}"):
        propagator = Propagator(coeffs, grid, dt, triple.lam)
        stepped = propagator.calibrate(triple)
        phi, G = stepped.phi, stepped.G
        widths = grid.widths

        for eta in sorted(eta_list, reverse=True):
            resolved = grid.edges[1:] <= eta
            cells = int(np.count_nonzero(resolved))
            if cells < MIN_ETA_CELLS:
                raise DomainError(f"η={eta:g} covers only {cells} cells; need {MIN_ETA_CELLS}.")

            values = np.where(resolved, 1.0 / (eta * phi.values), 0.0)
            f_eta = DiscreteField(values, grid)
            f_eta = f_eta * (1.0 / bracket(f_eta, phi))

            current = f_eta.values
            for _ in range(steps):
                current = propagator.step(current)
            distance = float(np.sum(np.abs(current - G.values) * phi.values * widths))

            records.append(OsgoodRecord(eta=eta, cells=cells, bracket=bracket(f_eta, phi), distance=distance))
            logfire.info(f"η={eta:g}: {cells} cells, distance {distance:.6f}")

    return records


def moment_creation_profile(
    coeffs: CoefficientSet,
    f: DiscreteField,
    alpha: float,
    beta: float,
    times: Sequence[float],
) -> tuple[float, np.ndarray]:
    """sup_t t^{(β−α)/γ₀} e^{−βτ₁t} ‖S_t f‖_{L¹_β} over the given times, with the per-time values."""

    gamma0 = coeffs.b.gamma0
    if gamma0 <= 0:
        raise DomainError("Moment creation needs γ₀ > 0.")

    flow = make_flow(coeffs.tau)
    tau1 = coeffs.tau.tau1
    values = np.array(
        [
            t ** ((beta - alpha) / gamma0)
            * math.exp(-beta * tau1 * t)
            * weighted_norm(transport_step(flow, coeffs, 0.0, t, f), beta)
            for t in times
        ]
    )

    return float(values.max()), values


def growth_bound_ratio(trace: SimulationTrace, alpha: float) -> float:
    """Smallest C with ‖f(t)‖_{L¹_α} ≤ C(1+t)‖f_in‖_{L¹_α} along the trace."""

    norms = trace.norms.get(alpha)
    if norms is None:
        raise KeyError(f"α={alpha} was not recorded in this trace.")

    return float(np.max(norms / ((1.0 + trace.times) * norms[0])))


def spectral_gap_estimate(coeffs: CoefficientSet, grid: Grid) -> tuple[float, float, float]:
    """
    Experimental: leading and next real parts of the discrete generator spectrum, and their gap.

    Dense eigenvalues, so only practical on coarse grids.
    """

    if grid.n > MAX_DENSE_SPECTRUM:
        raise ValueError(f"Dense spectrum limited to {MAX_DENSE_SPECTRUM} cells, grid has {grid.n}.")

    eigenvalues = linalg.eigvals(assemble_generator(coeffs, grid).dense())
    real = np.sort(np.unique(np.round(eigenvalues.real, 12)))[::-1]
    leading = float(real[0])
    following = float(real[1]) if real.size > 1 else -math.inf

    return leading, following, leading - following
