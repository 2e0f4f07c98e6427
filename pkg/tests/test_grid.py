import math

import numpy as np
import pytest

from gfkit.errors import GridMismatch
from gfkit.models.grid import DiscreteField, Grid, Spacing, bracket, build_grid, weighted_norm


def test_geometric_grid():
    grid = build_grid(1e-3, 50.0, 256)
    ratios = grid.edges[1:] / grid.edges[:-1]

    assert grid.n == 256
    assert grid.x_min == pytest.approx(1e-3)
    assert grid.x_max == pytest.approx(50.0)
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    np.testing.assert_allclose(grid.centers, 0.5 * (grid.edges[:-1] + grid.edges[1:]))


def test_snapping_puts_the_atom_on_the_lattice():
    grid = build_grid(1e-2, 20.0, 512, snap_to=0.5)
    cells = math.log(2.0) / grid.log_ratio

    assert cells == pytest.approx(round(cells), abs=1e-9)
    assert grid.x_max != pytest.approx(20.0, rel=1e-6)


def test_uniform_grid_has_no_ratio():
    grid = build_grid(0.5, 2.5, 20, spacing=Spacing.UNIFORM)

    np.testing.assert_allclose(grid.widths, 0.1)
    with pytest.raises(ValueError):
        _ = grid.log_ratio


@pytest.mark.parametrize(("x_min", "x_max", "n"), [(0.0, 1.0, 32), (2.0, 1.0, 32), (1e-3, 1.0, 8)])
def test_rejects_bad_meshes(x_min, x_max, n):
    with pytest.raises(ValueError):
        build_grid(x_min, x_max, n)


def test_rejects_uneven_geometric_edges():
    edges = np.geomspace(1e-2, 1.0, 33)
    edges[5] *= 1.01

    with pytest.raises(ValueError):
        Grid(edges)


def test_moments_of_a_constant_field():
    grid = build_grid(0.5, 2.5, 20, spacing=Spacing.UNIFORM)
    f = DiscreteField(np.ones(grid.n), grid)

    assert f.number() == pytest.approx(2.0)
    assert f.mass() == pytest.approx(3.0)
    assert weighted_norm(f, 0.0) == pytest.approx(2.0)
    assert f.weighted_norm(1.0) == pytest.approx(5.0)


def test_field_must_fit_its_grid():
    grid = build_grid(1e-2, 1.0, 32)

    with pytest.raises(GridMismatch):
        DiscreteField(np.ones(31), grid)
    with pytest.raises(ValueError):
        DiscreteField(np.full(32, np.nan), grid)


def test_operations_across_grids_fail():
    a = build_grid(1e-2, 1.0, 32).zeros()
    b = build_grid(1e-2, 1.0, 64).zeros()

    with pytest.raises(GridMismatch):
        bracket(a, b)
    with pytest.raises(GridMismatch):
        _ = a + b


def test_equal_edges_are_the_same_grid():
    a = build_grid(1e-2, 1.0, 32)
    b = build_grid(1e-2, 1.0, 32)

    assert a.same_as(b)
    a.require_same(b)


def test_field_arithmetic_and_bracket():
    grid = build_grid(1e-2, 1.0, 32)
    f = DiscreteField.sample(grid, lambda x: x)
    g = 2.0 * f - f

    np.testing.assert_allclose(g.values, f.values)
    assert bracket(f, grid.zeros() + DiscreteField(np.ones(grid.n), grid)) == pytest.approx(f.number())
    assert bracket(f, DiscreteField(grid.centers.copy(), grid)) == pytest.approx(f.mass())


def test_interpolation_is_linear_to_zero_below_the_first_center():
    grid = build_grid(1e-2, 1.0, 32)
    phi = DiscreteField.sample(grid, lambda x: 3.0 * x)

    np.testing.assert_allclose(phi.interpolate([1e-3, 0.5, 2.0]), [3e-3, 1.5, 6.0], rtol=1e-12)


def test_interpolation_holds_a_dip_in_the_last_cell():
    grid = build_grid(1.0, 10.0, 8, spacing=Spacing.UNIFORM)
    values = 1.0 + grid.centers
    values[-1] = 0.2 * values[-2]
    phi = DiscreteField(values, grid)

    beyond = phi.interpolate([grid.x_max, 2.0 * grid.x_max])

    np.testing.assert_allclose(beyond, values[-1])
    assert np.all(beyond > 0)


def test_support_and_frame():
    grid = build_grid(1.0, 5.0, 16, spacing=Spacing.UNIFORM)
    values = np.zeros(grid.n)
    values[3:6] = 1.0
    f = DiscreteField(values, grid)

    assert f.support() == (pytest.approx(grid.edges[3]), pytest.approx(grid.edges[6]))
    assert list(f.to_frame().columns) == ["x_center", "width", "value"]
    assert math.isnan(grid.zeros().support()[0])
