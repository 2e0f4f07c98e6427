import math
from collections.abc import Callable

import logfire
import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from gfkit.errors import BlowUp, TailOverflow
from gfkit.models.coefficients import CoefficientSet, GrowthFamily
from gfkit.models.grid import DiscreteField, Grid, Spacing, bracket, weighted_norm
from gfkit.models.perron import PerronTriple, normalize_pair
from gfkit.models.trace import EvolutionConfig, Method, SimulationTrace, SnapshotSpacing, TailPolicy
from gfkit.numerics.characteristics import Flow, damping_law, make_flow
from gfkit.numerics.eigensolver import ShiftedFactors
from gfkit.numerics.operators import Matrix, add, assemble_gain, two_moment_split

# dt·max B above this makes the explicit half-gain steps inaccurate.
GAIN_STEP_LIMIT = 0.5

CALIBRATION_MAX_ITER = 100
CALIBRATION_SETTLE = 3
MAX_GENERATIONS = 256


def build_transport_matrix(
    flow: Flow,
    coeffs: CoefficientSet,
    grid: Grid,
    t: float,
    lam: float = 0.0,
) -> tuple[sparse.csr_matrix, NDArray[np.float64], NDArray[np.float64]]:
    """
    S_t on pivots: each pivot moves to X(t, c_i), damped by e^{−∫B/τ − λt}, and is shared between
    the pivots around its landing size with the two-moment rule.

    Returns:
        The matrix, the surviving number per unit number leaving through x_max, and landing sizes.
    """

    if t < 0:
        raise ValueError(f"Transport is only defined forward in time, got t={t}.")

    c, widths = grid.centers, grid.widths
    landing = flow.map(t, c)
    finite = np.isfinite(landing)
    exits = ~finite | (landing > grid.x_max)

    decay = damping_law(coeffs.tau, coeffs.b).integral(c, np.where(finite, landing, c))
    survival = np.exp(-decay - lam * t)

    lower, lower_share, upper, upper_share = two_moment_split(grid, np.where(exits, c, landing))
    parents = np.arange(grid.n)
    stays = ~exits
    rows = np.concatenate((lower[stays], upper[stays]))
    cols = np.concatenate((parents[stays], parents[stays]))
    shares = np.concatenate((lower_share[stays], upper_share[stays]))
    values = shares * survival[cols] * widths[cols] / widths[rows]

    matrix = sparse.coo_matrix((values, (rows, cols)), shape=(grid.n, grid.n)).tocsr()
    exit_weight = np.where(exits & finite, survival, 0.0)

    return matrix, exit_weight, np.where(finite, landing, grid.x_max)


def transport_step(flow: Flow, coeffs: CoefficientSet, lam: float, t: float, f: DiscreteField) -> DiscreteField:
    """S_t f in one jump along the exact characteristics; zero below X(t, x_min)."""

    matrix, _, _ = build_transport_matrix(flow, coeffs, f.grid, t, lam)
    return DiscreteField(matrix @ f.values, f.grid)


class Propagator:
    """
    One splitting step M = H·S_dt·H with H = I + (dt/2)ℱ₊.

    `calibrate` replaces λ by the Perron root of M itself, after which every step is divided by
    it and ⟨f, φ_dt⟩ is conserved to round-off.
    """

    def __init__(self, coeffs: CoefficientSet, grid: Grid, dt: float, lam: float = 0.0, flow: Flow | None = None) -> None:
        coeffs.ensure_admissible()
        self.coeffs = coeffs
        self.grid = grid
        self.dt = dt
        self.lam = lam
        self.flow = flow or make_flow(coeffs.tau)
        self.scale = 1.0

        self.transport, self.exit_weight, self.exit_sizes = build_transport_matrix(self.flow, coeffs, grid, dt, lam)
        gain = assemble_gain(coeffs, grid).matrix
        self.gain = gain
        identity = np.eye(grid.n) if isinstance(gain, np.ndarray) else sparse.identity(grid.n, format="csr")
        self.half_gain = add(identity, 0.5 * dt * gain)

    def step(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.scale * (self.half_gain @ (self.transport @ (self.half_gain @ values)))

    def outflow(self, values: NDArray[np.float64], phi: DiscreteField) -> float:
        """φ-weighted amount one step pushes past x_max."""

        before = self.half_gain @ values
        weights = self.exit_weight * self.grid.widths
        if not np.any(weights):
            return 0.0

        return float(self.scale * np.sum(weights * before * phi.interpolate(self.exit_sizes)))

    def matrix(self) -> Matrix:
        if isinstance(self.half_gain, np.ndarray):
            return self.half_gain @ (self.transport @ self.half_gain)

        return (self.half_gain @ self.transport @ self.half_gain).tocsr()

    def calibrate(self, triple: PerronTriple) -> PerronTriple:
        """Perron triple of M by inverse iteration started from the generator triple."""

        grid = self.grid
        widths = grid.widths
        step_matrix = self.matrix()
        guess = math.exp((triple.lam - self.lam) * self.dt)
        factors = ShiftedFactors(step_matrix, guess * (1.0 + 1e-3 * self.dt))

        g = triple.G.values.copy()
        psi = triple.phi.values * widths
        rho = guess
        settled = 0
        for iteration in range(1, CALIBRATION_MAX_ITER + 1):
            g = factors.solve(g)
            g = g / np.sum(g * widths)
            psi = factors.solve(psi, transpose=True)
            psi = psi / np.sum(np.abs(psi))
            rho_next = float(psi @ (step_matrix @ g)) / float(psi @ g)
            settled = settled + 1 if abs(rho_next - rho) <= 1e-15 * rho_next else 0
            rho = rho_next
            # The vectors lag the Rayleigh quotient, so keep going a little after ρ settles.
            if settled == CALIBRATION_SETTLE:
                break

        G, phi = normalize_pair(np.clip(g, 0.0, None), psi / widths, widths)
        direct = float(np.sum(np.abs(step_matrix @ G - rho * G) * (1.0 + grid.centers) * widths))
        dual_action = np.asarray(step_matrix.T @ (phi * widths)).reshape(-1) / widths
        dual = float(np.max(np.abs(dual_action - rho * phi) / (1.0 + grid.centers)))

        self.scale = 1.0 / rho
        lam_dt = self.lam + math.log(rho) / self.dt
        logfire.info(f"Step map calibrated: λ_dt={lam_dt:.12g} (generator λ={triple.lam:.12g}), ρ={rho:.15g}")

        return PerronTriple(
            lam=lam_dt,
            G=DiscreteField(G, grid),
            phi=DiscreteField(phi, grid),
            direct_residual=direct,
            dual_residual=dual,
            sandwich_constant=triple.sandwich_constant,
            iterations=iteration,
            mode=triple.mode,
        )


def snapped_dt(coeffs: CoefficientSet, grid: Grid, dt: float) -> float:
    """For τ(x) = c·x on a geometric grid, round dt to whole log-cells so pivots land on pivots."""

    tau = coeffs.tau
    if tau.family != GrowthFamily.POWER or tau.p != 1.0 or grid.spacing != Spacing.GEOMETRIC:
        return dt

    cells = max(1, round(dt * tau.c / grid.log_ratio))
    snapped = cells * grid.log_ratio / tau.c
    if snapped != dt:
        logfire.info(f"dt snapped from {dt:g} to {snapped:.12g} ({cells} log-cells per step)")

    return snapped


def check_gain_step(coeffs: CoefficientSet, grid: Grid, dt: float) -> None:
    product = dt * float(np.max(coeffs.b(grid.centers)))
    if product > GAIN_STEP_LIMIT:
        raise ValueError(f"dt·max B = {product:.3g} exceeds {GAIN_STEP_LIMIT}; reduce dt or x_max.")


def default_dt(coeffs: CoefficientSet, grid: Grid, t: float) -> float:
    largest = min(1e-2, 0.25 / max(float(np.max(coeffs.b(grid.centers))), 1e-12))
    return t / max(1, math.ceil(t / largest))


def _snapshot_indices(steps: int, cfg: EvolutionConfig) -> NDArray[np.intp]:
    count = min(cfg.max_snapshots, steps + 1)
    if cfg.snapshot_spacing == SnapshotSpacing.LINEAR:
        picked = np.round(np.linspace(0, steps, count))
    else:
        picked = np.concatenate(([0], np.round(np.geomspace(1, steps, count - 1)))) if steps > 0 else np.array([0])

    return np.unique(picked.astype(np.intp))


def _march_generations(
    propagator: Propagator,
    values: NDArray[np.float64],
    steps: int,
    order: int,
    observe: Callable[[int, list[NDArray[np.float64]]], None] | None = None,
) -> list[NDArray[np.float64]]:
    """
    Advance the splitting scheme split by the number of gain events.

    (I + aℱ)S(I + aℱ) = S + a(ℱS + Sℱ) + a²ℱSℱ, so generation k collects the terms with k gain
    factors; their sum over all k is the splitting solution.
    """

    a = 0.5 * propagator.dt
    transport, gain, scale = propagator.transport, propagator.gain, propagator.scale
    generations = [values] + [np.zeros_like(values) for _ in range(order)]
    if observe:
        observe(0, generations)

    for step in range(1, steps + 1):
        moved = [transport @ w for w in generations]
        gained_after = [np.asarray(gain @ m).reshape(-1) for m in moved]
        moved_gain = [transport @ np.asarray(gain @ w).reshape(-1) for w in generations]
        twice = [np.asarray(gain @ m).reshape(-1) for m in moved_gain]

        updated = []
        for k in range(order + 1):
            term = moved[k].copy()
            if k >= 1:
                term += a * (gained_after[k - 1] + moved_gain[k - 1])
            if k >= 2:
                term += a * a * twice[k - 2]
            updated.append(scale * term)
        generations = updated
        if observe:
            observe(step, generations)

    return generations


def dyson_phillips_partial(
    coeffs: CoefficientSet,
    grid: Grid,
    f_in: DiscreteField,
    t: float,
    n: int,
    lam: float = 0.0,
    dt: float | None = None,
) -> DiscreteField:
    """
    Σ_{k≤n} T_t^{(k)} f on the time lattice of the splitting scheme.

    Generation 0 is the lattice transport S_dt^m, which is S_t itself when dt = t or when the
    flow maps pivots onto pivots.

    The default lam=0 gives the unrescaled terms. With the Perron λ the sum tends to what
    `evolve` returns on the same dt with consistent_dual=False and snap_dt=False; `evolve` snaps
    dt by default, this function never does.
    """

    if n < 0 or t < 0:
        raise ValueError("dyson_phillips_partial needs n ≥ 0 and t ≥ 0.")
    if t == 0:
        return f_in

    dt = dt or default_dt(coeffs, grid, t)
    steps = max(1, round(t / dt))
    propagator = Propagator(coeffs, grid, t / steps, lam)
    generations = _march_generations(propagator, f_in.values, steps, n)

    return DiscreteField(np.sum(generations, axis=0), grid)


def duhamel_residual(
    coeffs: CoefficientSet,
    grid: Grid,
    triple: PerronTriple,
    f_in: DiscreteField,
    t: float,
    quad_points: int,
    alpha: float = 1.0,
    dt: float | None = None,
) -> float:
    """
    ‖T_t f − S_t f − Σ_k w_k S_{t−s_k} ℱ₊ T_{s_k} f‖_{L¹_α}.

    Nodes s_k = t(k/K)² are rounded to the time lattice and weighted by the trapezoid rule; the
    sum is accumulated Horner-style so each S_{t−s_k} costs only the steps between nodes.
    """

    if t <= 0:
        raise ValueError("duhamel_residual needs t > 0.")

    dt = dt or default_dt(coeffs, grid, t)
    steps = max(1, round(t / dt))
    propagator = Propagator(coeffs, grid, t / steps, triple.lam)
    gain, transport = propagator.gain, propagator.transport

    nodes = np.unique(np.round(steps * (np.arange(quad_points + 1) / quad_points) ** 2).astype(int))
    s = nodes * propagator.dt
    weights = np.zeros(s.size)
    weights[:-1] += 0.5 * np.diff(s)
    weights[1:] += 0.5 * np.diff(s)

    full = f_in.values
    free = f_in.values
    acc = weights[0] * np.asarray(gain @ full).reshape(-1)
    for j in range(1, nodes.size):
        for _ in range(nodes[j] - nodes[j - 1]):
            full = propagator.step(full)
            free = transport @ free
            acc = transport @ acc
        acc = acc + weights[j] * np.asarray(gain @ full).reshape(-1)

    residual = DiscreteField(full - free - acc, grid)
    return weighted_norm(residual, alpha)


def evolve(
    coeffs: CoefficientSet,
    grid: Grid,
    triple: PerronTriple,
    f_in: DiscreteField,
    cfg: EvolutionConfig,
) -> SimulationTrace:
    """Rescaled Strang splitting (half gain, exact transport with decay, half gain), recording scalars every step."""

    grid.require_same(f_in.grid)
    grid.require_same(triple.grid)

    dt = snapped_dt(coeffs, grid, cfg.dt) if cfg.snap_dt else cfg.dt
    check_gain_step(coeffs, grid, dt)
    steps = max(1, round(cfg.t_end / dt))

    with logfire.span(f"Evolution: {steps} steps of dt={dt:.6g}, method={cfg.method.value}"):
        propagator = Propagator(coeffs, grid, dt, triple.lam)
        used = propagator.calibrate(triple) if cfg.consistent_dual else triple

        if cfg.method == Method.DUHAMEL_PICARD:
            order = 2
            while True:
                trace, last = _run(propagator, used, f_in, steps, cfg, order)
                if last <= cfg.tail_tolerance or order >= MAX_GENERATIONS:
                    break
                order *= 2
            if last > cfg.tail_tolerance:
                logfire.warning(f"Dyson-Phillips tail still {last:.2e} at {order} generations")
            else:
                logfire.info(f"Duhamel-Picard converged with {order} generations, tail {last:.2e}")
            return trace

        order = cfg.dyson_order if cfg.method == Method.DYSON_PHILLIPS else None
        trace, _ = _run(propagator, used, f_in, steps, cfg, order)

    return trace


def _run(
    propagator: Propagator,
    used: PerronTriple,
    f_in: DiscreteField,
    steps: int,
    cfg: EvolutionConfig,
    order: int | None,
) -> tuple[SimulationTrace, float]:
    grid = propagator.grid
    dt = propagator.dt
    phi = used.phi
    times = dt * np.arange(steps + 1)
    growth = np.ones(steps + 1) if cfg.rescale_by_lambda else np.exp(used.lam * times)

    bracket_phi = np.zeros(steps + 1)
    norms = {alpha: np.zeros(steps + 1) for alpha in cfg.alphas}
    number = np.zeros(steps + 1)
    mass = np.zeros(steps + 1)
    tail_loss = np.zeros(steps + 1)
    keep = set(_snapshot_indices(steps, cfg).tolist())
    snapshots: list[DiscreteField] = []

    reference = abs(bracket(f_in, phi))
    state = {"lost": 0.0, "warned": False}

    def observe(step: int, values: NDArray[np.float64]) -> None:
        if not np.all(np.isfinite(values)):
            logfire.error(f"Blow-up at t={times[step]:g}: non-finite values")
            raise BlowUp(f"Non-finite values at t={times[step]:g}.")
        field = DiscreteField(values * growth[step], grid)
        bracket_phi[step] = bracket(field, phi)
        for alpha in cfg.alphas:
            norm = weighted_norm(field, alpha)
            if not math.isfinite(norm) or norm > cfg.blowup_threshold:
                logfire.error(f"Blow-up at t={times[step]:g}: ‖f‖_{{L¹_{alpha:g}}}={norm:.3e}")
                raise BlowUp(f"Weighted norm α={alpha:g} reached {norm:.3e} at t={times[step]:g}.")
            norms[alpha][step] = norm
        number[step] = field.number()
        mass[step] = field.mass()
        tail_loss[step] = state["lost"] * growth[step]
        if step in keep:
            snapshots.append(field)

        if reference > 0 and state["lost"] > cfg.tail_tolerance * reference:
            message = f"Outflow past x_max reached {state['lost'] / reference:.2e} of ⟨f_in, φ⟩ at t={times[step]:g}"
            if cfg.tail_policy == TailPolicy.ERROR:
                logfire.error(message)
                raise TailOverflow(message)
            if not state["warned"]:
                logfire.warning(message)
                state["warned"] = True

    last_generation = 0.0
    if order is None:
        values = f_in.values
        observe(0, values)
        for step in range(1, steps + 1):
            state["lost"] += propagator.outflow(values, phi)
            values = propagator.step(values)
            observe(step, values)
    else:
        state["previous"] = f_in.values

        def observe_generations(step: int, generations: list[NDArray[np.float64]]) -> None:
            total = np.sum(generations, axis=0)
            if step > 0:
                state["lost"] += propagator.outflow(state["previous"], phi)
            state["previous"] = total
            observe(step, total)

        generations = _march_generations(propagator, f_in.values, steps, order, observe_generations)
        total = weighted_norm(DiscreteField(np.sum(generations, axis=0), grid), 1.0)
        last_generation = weighted_norm(DiscreteField(generations[-1], grid), 1.0) / total if total > 0 else 0.0

    trace = SimulationTrace(
        times=times,
        bracket_phi=bracket_phi,
        norms=norms,
        number=number,
        mass=mass,
        tail_loss=tail_loss,
        snapshot_times=times[sorted(keep)],
        snapshots=snapshots,
        triple=used,
        rescaled=cfg.rescale_by_lambda,
        method=cfg.method,
    )

    return trace, last_generation
