import math
from dataclasses import dataclass

import logfire
import numpy as np
from numpy.typing import NDArray
from scipy import linalg, optimize, sparse
from scipy.sparse import linalg as sparse_linalg

from gfkit.errors import InvalidCoefficient, NoConvergence
from gfkit.models.coefficients import CoefficientSet, Mode, kernel_moment
from gfkit.models.grid import DiscreteField, Grid
from gfkit.models.perron import PerronTriple, normalize_pair
from gfkit.numerics.operators import Matrix, OperatorMatrix, assemble_gain, assemble_generator, transport_rates
from gfkit.settings import settings

# The coarse stage only has to land λ well inside the spectral gap.
COARSE_RTOL = 1e-7
INNER_RTOL = 1e-10
INNER_MAX_ITER = 5000
DIVERGENCE_FACTOR = 1e10


class _Diverged(Exception):
    pass


def _resolvent_bands(coeffs: CoefficientSet, grid: Grid, sigma: float) -> NDArray[np.float64]:
    kappa = transport_rates(coeffs, grid)
    widths = grid.widths
    bands = np.zeros((2, grid.n))
    bands[0] = sigma + coeffs.b(grid.centers) + kappa
    bands[1, :-1] = -kappa[:-1] * widths[:-1] / widths[1:]

    return bands


def apply_resolvent(coeffs: CoefficientSet, grid: Grid, mu: float, lam: float, h: DiscreteField) -> DiscreteField:
    """
    (μ + λ − 𝒜₀)⁻¹h by one upwind sweep.

    The discrete transport only feeds cell j from cell j−1, so the system is lower bidiagonal
    and the sweep is the discrete form of τf = ∫₀^x e^{−∫_y^x (μ+λ+B)/τ} h(y) dy.
    """

    if mu <= 0:
        raise ValueError(f"The resolvent shift must be positive, got μ={mu}.")
    coeffs.ensure_admissible()
    grid.require_same(h.grid)

    bands = _resolvent_bands(coeffs, grid, mu + lam)
    return DiscreteField(linalg.solve_banded((1, 0), bands, h.values), grid)


@dataclass
class _Context:
    coeffs: CoefficientSet
    grid: Grid
    gain: OperatorMatrix
    weight: NDArray[np.float64]

    def norm(self, values: NDArray[np.float64]) -> float:
        return float(np.sum(np.abs(values) * self.weight))


def _shifted_inverse(ctx: _Context, sigma: float, x: NDArray, start: NDArray) -> NDArray:
    """Solve (σ − 𝒜)y = x through the fixed point y ← R_σ(x + ℱ₊y)."""

    bands = _resolvent_bands(ctx.coeffs, ctx.grid, sigma)
    ceiling = DIVERGENCE_FACTOR * max(ctx.norm(x), ctx.norm(start))
    y = start
    for _ in range(INNER_MAX_ITER):
        y_next = linalg.solve_banded((1, 0), bands, x + ctx.gain @ y)
        size = ctx.norm(y_next)
        if size > ceiling:
            raise _Diverged()
        converged = ctx.norm(y_next - y) <= INNER_RTOL * size
        y = y_next
        if converged:
            return y

    raise _Diverged()


def _dominant_shift(ctx: _Context, lam: float, mu: float, v: NDArray, max_iter: int) -> tuple[float, NDArray]:
    """Largest real eigenvalue of 𝒜 − λ as μ − 1/ρ, ρ the spectral radius of (μ+λ−𝒜)⁻¹."""

    v = v / ctx.norm(v)
    rho = 1.0 / mu
    for _ in range(max_iter):
        y = _shifted_inverse(ctx, mu + lam, v, rho * v)
        rho_next = ctx.norm(y)
        v = y / rho_next
        if abs(rho_next - rho) <= COARSE_RTOL * rho_next:
            rho = rho_next
            break
        rho = rho_next

    return mu - 1.0 / rho, v


def _coarse_lambda(ctx: _Context, max_iter: int) -> tuple[float, NDArray]:
    coeffs = ctx.coeffs
    k_b = math.floor(coeffs.b.gamma1) + 2
    mu = 1.0 + 2.0 * k_b * coeffs.tau.tau1
    v = np.exp(-ctx.grid.centers)

    def shifted_bound(lam: float) -> float:
        nonlocal mu, v
        while True:
            try:
                nu, v = _dominant_shift(ctx, lam, mu, v, max_iter)
                return nu
            except _Diverged:
                mu *= 2.0
                logfire.debug(f"Inner fixed point diverged at λ={lam:g}, shift doubled to μ={mu:g}")

    upper = coeffs.tau.tau1 + (kernel_moment(coeffs.kernel, 0.0) - 1.0) * coeffs.b.B1
    result = optimize.root_scalar(shifted_bound, x0=0.0, x1=upper, method="secant", xtol=1e-9, maxiter=50)
    if not result.converged or not math.isfinite(result.root):
        logfire.warning("Secant on the spectral bound failed, falling back to a bracketing solve.")
        lower, upper = -1.0, max(upper, 1.0)
        while shifted_bound(lower) < 0:
            lower *= 2.0
        while shifted_bound(upper) > 0:
            upper *= 2.0
        result = optimize.root_scalar(shifted_bound, bracket=(lower, upper), method="brentq", xtol=1e-9)

    return float(result.root), np.abs(v)


class ShiftedFactors:
    """LU factors of σ − M for a sparse or dense M, solving with M or Mᵀ."""

    def __init__(self, matrix: Matrix, sigma: float) -> None:
        n = matrix.shape[0]
        if isinstance(matrix, np.ndarray):
            self._dense = linalg.lu_factor(sigma * np.eye(n) - matrix)
            self._sparse = None
        else:
            self._sparse = sparse_linalg.splu((sigma * sparse.identity(n, format="csc") - matrix).tocsc())
            self._dense = None

    def solve(self, b: NDArray, transpose: bool = False) -> NDArray:
        if self._sparse is not None:
            return self._sparse.solve(b, trans="T" if transpose else "N")

        return linalg.lu_solve(self._dense, b, trans=1 if transpose else 0)


def _sandwich(phi: NDArray[np.float64], centers: NDArray[np.float64]) -> float:
    weight = 1.0 + centers
    with np.errstate(divide="ignore"):
        return float(np.max(np.maximum(phi / weight, weight / phi)))


def check_sandwich(triple: PerronTriple) -> float:
    """C = max over the grid of max(φ/(1+x), (1+x)/φ)."""

    if triple.mode == Mode.OSGOOD:
        logfire.warning("The φ sandwich is only expected in standard mode.")

    return _sandwich(triple.phi.values, triple.grid.centers)


def solve_perron(
    coeffs: CoefficientSet,
    grid: Grid,
    tol: float | None = None,
    max_iter: int | None = None,
) -> PerronTriple:
    """
    Perron triple of the discrete generator.

    A coarse λ comes from secant iteration on the spectral bound of 𝒜 − λ, each value obtained by
    inverse power iteration through the resolvent. It is refined by shifted inverse iteration on a
    direct factorization of σ − 𝒜 for G and, with the transposed factors, for φ.
    """

    tol = tol or settings.PERRON_TOL
    max_iter = max_iter or settings.PERRON_MAX_ITER
    if tol <= 0:
        raise ValueError("tol must be positive.")

    with logfire.span(f"Perron solve on {grid.n} cells"):
        generator = assemble_generator(coeffs, grid)
        widths, centers = grid.widths, grid.centers
        ctx = _Context(coeffs, grid, assemble_gain(coeffs, grid), (1.0 + centers) * widths)

        lam_coarse, g = _coarse_lambda(ctx, max_iter)
        coarse_residual = ctx.norm(generator @ g - lam_coarse * g) / ctx.norm(g)
        shift = max(1e-3 * max(1.0, abs(lam_coarse)), 10.0 * coarse_residual)
        logfire.info(f"Coarse λ={lam_coarse:.10g}, inverse iteration shift {shift:.3e}")

        factors = ShiftedFactors(generator.matrix, lam_coarse + shift)
        psi = (1.0 + centers) * widths
        direct = dual = math.inf

        for iteration in range(1, max_iter + 1):
            g = factors.solve(g)
            g = g / np.sum(g * widths)
            psi = factors.solve(psi, transpose=True)
            psi = psi / np.sum(np.abs(psi))

            lam = float(psi @ (generator @ g)) / float(psi @ g)
            G, phi = normalize_pair(g, psi / widths, widths)
            direct = ctx.norm(generator @ G - lam * G)
            dual_action = np.asarray(generator.matrix.T @ (phi * widths)).reshape(-1) / widths
            dual = float(np.max(np.abs(dual_action - lam * phi) / (1.0 + centers)))

            logfire.debug(f"Inverse iteration {iteration}: λ={lam:.14g}, residuals {direct:.2e}/{dual:.2e}")
            if direct <= tol and dual <= tol:
                break
        else:
            logfire.error(f"Perron solve stalled at residuals {direct:.2e}/{dual:.2e}")
            raise NoConvergence("Perron eigentriple did not converge", iterations=max_iter, residual=max(direct, dual))

        G, phi = normalize_pair(np.clip(G, 0.0, None), phi, widths)
        if np.any(phi <= 0):
            raise InvalidCoefficient("(HB) the dual eigenvector is not positive; is supp B connected?")
        if coeffs.mode == Mode.STANDARD and lam <= 0:
            logfire.warning(f"Standard-mode Malthus parameter is not positive: λ={lam}")

        sandwich = _sandwich(phi, centers) if coeffs.mode == Mode.STANDARD else math.inf
        logfire.info(f"Perron triple: λ={lam:.12g}, residuals {direct:.2e}/{dual:.2e}, C={sandwich:.4g}")

    return PerronTriple(
        lam=lam,
        G=DiscreteField(G, grid),
        phi=DiscreteField(phi, grid),
        direct_residual=direct,
        dual_residual=dual,
        sandwich_constant=sandwich,
        iterations=iteration,
        mode=coeffs.mode,
    )
