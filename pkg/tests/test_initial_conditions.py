import numpy as np
import pytest

from gfkit.errors import ScenarioError
from gfkit.initial_conditions import (
    BaseInitialCondition,
    GaussianBumps,
    InitialConditionDispatcher,
    InitialConditionSpec,
)
from gfkit.models.grid import DiscreteField, Spacing, bracket, build_grid


@pytest.fixture
def dispatcher():
    return InitialConditionDispatcher()


@pytest.fixture(scope="module")
def grid():
    return build_grid(1e-2, 50.0, 512)


def test_indicator_uses_exact_overlaps(dispatcher):
    uniform = build_grid(0.5, 2.5, 20, spacing=Spacing.UNIFORM)
    f = dispatcher.build(InitialConditionSpec(kind="indicator", a=1.05, b=1.5), uniform)

    assert f.number() == pytest.approx(0.45)
    assert f.values[5] == pytest.approx(0.5)
    assert f.values[6] == pytest.approx(1.0)


def test_gaussian_bump(dispatcher, grid):
    f = dispatcher.build(InitialConditionSpec(kind="gaussian_bump", centers=[5.0], width=0.5), grid)

    assert f.number() == pytest.approx(1.0, rel=1e-6)
    assert f.mass() == pytest.approx(5.0, rel=1e-3)


def test_two_bump_alias(dispatcher, grid):
    spec = InitialConditionSpec(kind="Two_Bump", centers=[2.0, 6.0], width=0.3, scale=0.5)

    assert isinstance(dispatcher.get_builder(spec), GaussianBumps)
    assert dispatcher.build(spec, grid).number() == pytest.approx(1.0, rel=1e-6)


def test_power_tail(dispatcher, grid):
    f = dispatcher.build(InitialConditionSpec(kind="power_tail", power=3.0), grid)

    np.testing.assert_allclose(f.values, (1.0 + grid.centers) ** -3.0)


def test_tabulated(dispatcher, grid):
    spec = InitialConditionSpec(kind="tabulated", nodes=[1.0, 2.0, 3.0], values=[0.0, 1.0, 0.0])
    f = dispatcher.build(spec, grid)
    low, high = f.support()

    assert low >= 1.0 - grid.widths.max()
    assert high <= 3.0 + grid.widths.max()
    assert f.number() == pytest.approx(1.0, rel=2e-2)


@pytest.mark.parametrize(
    "spec",
    [
        InitialConditionSpec(kind="tabulated"),
        InitialConditionSpec(kind="tabulated", nodes=[1.0, 2.0], values=[1.0, -1.0]),
    ],
    ids=["missing", "negative"],
)
def test_tabulated_rejects_bad_tables(dispatcher, grid, spec):
    with pytest.raises(ScenarioError):
        dispatcher.build(spec, grid)


def test_eta_concentrated(dispatcher, grid):
    phi = DiscreteField.sample(grid, lambda x: 1.0 + x)
    f = dispatcher.build(InitialConditionSpec(kind="f_eta", eta=0.1), grid, phi)

    assert bracket(f, phi) == pytest.approx(1.0)
    assert f.support()[1] <= 0.1
    with pytest.raises(ScenarioError):
        dispatcher.build(InitialConditionSpec(kind="f_eta"), grid)


def test_unknown_kind(dispatcher, grid):
    with pytest.raises(ScenarioError, match="dirac"):
        dispatcher.build(InitialConditionSpec(kind="dirac"), grid)


def test_register_a_builder(dispatcher, grid):
    class Flat(BaseInitialCondition):
        kind = "flat"

        def build(self, grid, phi=None):
            return DiscreteField(np.full(grid.n, self.spec.scale), grid)

    dispatcher.register("Flat", Flat)
    f = dispatcher.build(InitialConditionSpec(kind="flat", scale=2.0), grid)

    np.testing.assert_allclose(f.values, 2.0)
