import math

import numpy as np
import pytest
from scipy import sparse

from gfkit.errors import NoConvergence
from gfkit.models.coefficients import Mode
from gfkit.models.grid import DiscreteField, bracket, build_grid
from gfkit.numerics.eigensolver import ShiftedFactors, apply_resolvent, check_sandwich, solve_perron
from gfkit.numerics.operators import assemble_generator, assemble_transport


def test_baseline_triple(baseline_triple):
    triple = baseline_triple

    assert triple.lam == pytest.approx(1.0, abs=5e-3)
    assert triple.direct_residual <= 1e-8
    assert triple.dual_residual <= 1e-8
    assert triple.G.number() == pytest.approx(1.0, rel=1e-12)
    assert bracket(triple.G, triple.phi) == pytest.approx(1.0, rel=1e-12)
    assert np.all(triple.G.values >= 0)
    assert np.all(triple.phi.values > 0)
    assert triple.mode == Mode.STANDARD


def test_baseline_sandwich(baseline_triple):
    constant = check_sandwich(baseline_triple)

    assert math.isfinite(constant)
    assert constant >= 1.0
    assert constant == pytest.approx(baseline_triple.sandwich_constant)


def test_profile_is_nearly_all_inside_the_window(baseline_triple):
    assert baseline_triple.tail_mass < 1e-10


def test_mesh_refinement_moves_lambda_little(baseline_triple, small_triple):
    assert small_triple.lam == pytest.approx(baseline_triple.lam, abs=1e-2)


def test_osgood_triple(osgood):
    grid = build_grid(1e-5, 20.0, 512)
    triple = solve_perron(osgood, grid, tol=1e-8)
    c = grid.centers
    ratio = triple.phi.values / c

    assert triple.lam == pytest.approx(1.0, abs=1e-4)
    assert triple.mode == Mode.OSGOOD
    assert triple.sandwich_constant == math.inf
    np.testing.assert_allclose(ratio[c < 5.0], ratio[0], rtol=1e-3)


def test_resolvent_solves_the_shifted_transport(baseline, small_grid):
    h = DiscreteField.sample(small_grid, lambda x: np.exp(-x))
    mu, lam = 2.0, 0.5

    f = apply_resolvent(baseline, small_grid, mu, lam, h)
    a0 = assemble_transport(baseline, small_grid).matrix - sparse.diags(baseline.b(small_grid.centers))
    lhs = (mu + lam) * f.values - a0 @ f.values

    np.testing.assert_allclose(lhs, h.values, rtol=1e-10, atol=1e-12)
    assert np.all(f.values >= 0)


def test_resolvent_needs_a_positive_shift(baseline, small_grid):
    with pytest.raises(ValueError):
        apply_resolvent(baseline, small_grid, 0.0, 1.0, small_grid.zeros())


def test_no_convergence_is_reported(baseline, small_grid):
    with pytest.raises(NoConvergence) as excinfo:
        solve_perron(baseline, small_grid, tol=1e-300, max_iter=2)

    assert excinfo.value.iterations == 2


@pytest.mark.parametrize("dense", [True, False])
def test_shifted_factors(baseline, small_grid, dense):
    generator = assemble_generator(baseline, small_grid)
    matrix = generator.dense() if dense else sparse.csr_matrix(generator.dense())
    shifted = 5.0 * np.eye(small_grid.n) - generator.dense()
    rhs = np.linspace(1.0, 2.0, small_grid.n)

    factors = ShiftedFactors(matrix, 5.0)

    np.testing.assert_allclose(factors.solve(rhs), np.linalg.solve(shifted, rhs), rtol=1e-9)
    np.testing.assert_allclose(factors.solve(rhs, transpose=True), np.linalg.solve(shifted.T, rhs), rtol=1e-9)


@pytest.mark.slow
def test_baseline_triple_is_grid_converged(baseline, acceptance_triple):
    finer = solve_perron(baseline, build_grid(1e-3, 50.0, 4096), tol=1e-9)

    assert acceptance_triple.lam > 0
    assert acceptance_triple.direct_residual <= 1e-8
    assert acceptance_triple.dual_residual <= 1e-8
    assert acceptance_triple.G.number() == pytest.approx(1.0, abs=1e-10)
    assert bracket(acceptance_triple.G, acceptance_triple.phi) == pytest.approx(1.0, abs=1e-10)
    assert abs(finer.lam - acceptance_triple.lam) <= 1e-4
    assert math.isfinite(acceptance_triple.sandwich_constant)
    assert finer.sandwich_constant == pytest.approx(acceptance_triple.sandwich_constant, rel=0.1)
