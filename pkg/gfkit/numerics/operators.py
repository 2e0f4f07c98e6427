from dataclasses import dataclass
from enum import Enum

import logfire
import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from gfkit.errors import InvalidCoefficient
from gfkit.models.coefficients import CoefficientSet
from gfkit.models.grid import DiscreteField, Grid

# Above this fill ratio an operator is kept as a dense array.
DENSE_FILL = 0.1

# Split fractions this close to 0 or 1 are snapped so lattice-exact maps stay exact.
SNAP_FRACTION = 1e-10


class OperatorKind(str, Enum):
    GAIN = "gain"
    LOSS = "loss"
    ADJOINT_GAIN = "adjoint_gain"
    TRANSPORT = "transport"
    GENERATOR = "generator"


Matrix = sparse.csr_matrix | NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """A linear map between fields on one grid, in density units."""

    matrix: Matrix
    kind: OperatorKind
    grid: Grid

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def apply(self, f: DiscreteField) -> DiscreteField:
        self.grid.require_same(f.grid)
        return DiscreteField(np.asarray(self.matrix @ f.values).reshape(-1), self.grid)

    def __matmul__(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(self.matrix @ values).reshape(-1)

    def dense(self) -> NDArray[np.float64]:
        return self.matrix if self.is_dense else self.matrix.toarray()

    def is_nonnegative(self) -> bool:
        data = self.matrix if self.is_dense else self.matrix.data
        return bool(np.all(data >= 0))


def _compact(rows: NDArray, cols: NDArray, vals: NDArray, n: int) -> Matrix:
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    if matrix.nnz > DENSE_FILL * n * n:
        return matrix.toarray()

    return matrix


def add(a: Matrix, b: Matrix) -> Matrix:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.asarray(a + b)

    return (a + b).tocsr()


def two_moment_split(grid: Grid, sizes: NDArray[np.float64]) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """
    Share unit number at each size between the two bracketing pivots, preserving number and size.

    Sizes below the first pivot go to cell 0 with number v/c₀, which preserves size only.
    Sizes above the last pivot are the caller's business and are put in the last cell.

    Returns:
        (lower cell, lower number, upper cell, upper number) per size.
    """

    c = grid.centers
    sizes = np.asarray(sizes, dtype=float)
    k = np.clip(np.searchsorted(c, sizes, side="right") - 1, 0, c.size - 2)
    a = (c[k + 1] - sizes) / (c[k + 1] - c[k])
    a = np.where(np.abs(a) < SNAP_FRACTION, 0.0, a)
    a = np.where(np.abs(a - 1.0) < SNAP_FRACTION, 1.0, a)

    below = sizes < c[0]
    above = sizes > c[-1]
    lower = np.where(below, 0, np.where(above, c.size - 1, k))
    upper = np.where(below | above, lower, k + 1)
    lower_share = np.where(below, sizes / c[0], np.where(above, 1.0, a))
    upper_share = np.where(below | above, 0.0, 1.0 - a)

    return lower, lower_share, upper, upper_share


def _fragment_fractions(coeffs: CoefficientSet, grid: Grid) -> tuple[NDArray, NDArray, NDArray]:
    """Triplets (target k, parent i, fragment number per parent) of the gain operator."""

    c = grid.centers
    kernel = coeffs.kernel
    rows, cols, vals = [], [], []
    parents = np.arange(grid.n)

    for z, w in kernel.atoms:
        lower, lower_share, upper, upper_share = two_moment_split(grid, z * c)
        rows += [lower, upper]
        cols += [parents, parents]
        vals += [w * lower_share, w * upper_share]

    if kernel.has_density:
        for i in range(grid.n):
            z = np.append(c[:i] / c[i], 1.0)
            number = np.diff(kernel.cumulative_density_moment(z, 0))
            moment = c[i] * np.diff(kernel.cumulative_density_moment(z, 1))
            upper_share = np.clip((moment - number * c[:i]) / (c[1 : i + 1] - c[:i]), 0.0, number)
            below = c[i] * float(kernel.cumulative_density_moment(z[0], 1)) / c[0]

            targets = np.arange(i)
            rows += [targets, targets + 1, np.array([0])]
            cols += [np.full(i, i), np.full(i, i), np.array([i])]
            vals += [number - upper_share, upper_share, np.array([below])]

    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def assemble_gain(coeffs: CoefficientSet, grid: Grid) -> OperatorMatrix:
    """ℱ₊ by fixed-pivot assignment of fragments; discrete size conservation holds to round-off."""

    coeffs.ensure_admissible()

    rows, cols, fractions = _fragment_fractions(coeffs, grid)
    b = coeffs.b(grid.centers)
    widths = grid.widths
    values = fractions * b[cols] * widths[cols] / widths[rows]

    matrix = _compact(rows, cols, values, grid.n)
    logfire.debug(f"Gain operator assembled on {grid.n} cells, dense={isinstance(matrix, np.ndarray)}")

    return OperatorMatrix(matrix, OperatorKind.GAIN, grid)


def assemble_adjoint_gain(coeffs: CoefficientSet, grid: Grid) -> OperatorMatrix:
    """ℱ₊* = D⁻¹ℱ₊ᵀD with D = diag(Δx), the adjoint for ⟨f, φ⟩ = Σ f φ Δx."""

    gain = assemble_gain(coeffs, grid)
    widths = grid.widths
    if gain.is_dense:
        matrix = gain.matrix.T * widths[None, :] / widths[:, None]
    else:
        d = sparse.diags(widths)
        d_inv = sparse.diags(1.0 / widths)
        matrix = (d_inv @ gain.matrix.T @ d).tocsr()

    return OperatorMatrix(matrix, OperatorKind.ADJOINT_GAIN, grid)


def assemble_loss(coeffs: CoefficientSet, grid: Grid) -> OperatorMatrix:
    coeffs.ensure_admissible()
    return OperatorMatrix(sparse.diags(coeffs.b(grid.centers)).tocsr(), OperatorKind.LOSS, grid)


def transport_rates(coeffs: CoefficientSet, grid: Grid) -> NDArray[np.float64]:
    """κ_j = τ(c_j)/(c_{j+1} − c_j), with κ = 0 in the last cell."""

    c = grid.centers
    kappa = np.zeros(grid.n)
    kappa[:-1] = coeffs.tau(c[:-1]) / np.diff(c)

    return kappa


def assemble_transport(coeffs: CoefficientSet, grid: Grid) -> OperatorMatrix:
    """Upwind number flux between consecutive pivots; d/dt Σ c f Δx = Σ τ f Δx over all but the last cell."""

    kappa = transport_rates(coeffs, grid)
    widths = grid.widths
    inflow = kappa[:-1] * widths[:-1] / widths[1:]
    matrix = sparse.diags([-kappa, inflow], [0, -1], shape=(grid.n, grid.n)).tocsr()

    return OperatorMatrix(matrix, OperatorKind.TRANSPORT, grid)


def assemble_generator(coeffs: CoefficientSet, grid: Grid) -> OperatorMatrix:
    """𝒜 = 𝒜₀ + ℱ₊ with 𝒜₀ = transport − B."""

    if coeffs.b.vanishes:
        raise InvalidCoefficient("(HB) the fragmentation rate vanishes identically.")

    transport = assemble_transport(coeffs, grid).matrix
    loss = assemble_loss(coeffs, grid).matrix
    gain = assemble_gain(coeffs, grid).matrix

    return OperatorMatrix(add((transport - loss).tocsr(), gain), OperatorKind.GENERATOR, grid)
