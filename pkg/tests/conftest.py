import logfire
import pytest

from gfkit.initial_conditions import InitialConditionDispatcher, InitialConditionSpec
from gfkit.models.coefficients import CoefficientSet, FragmentationKernel, FragmentationRate, GrowthRate
from gfkit.models.grid import build_grid
from gfkit.models.trace import EvolutionConfig
from gfkit.numerics.eigensolver import solve_perron
from gfkit.numerics.evolution import evolve

logfire.configure(send_to_logfire=False, console=False)


@pytest.fixture(scope="session")
def baseline() -> CoefficientSet:
    """τ ≡ 1, B(x) = x, equal mitosis."""

    return CoefficientSet(tau=GrowthRate.constant(), b=FragmentationRate.power(), kernel=FragmentationKernel.mitosis())


@pytest.fixture(scope="session")
def periodic() -> CoefficientSet:
    """τ(x) = x, B(x) = x, equal mitosis."""

    return CoefficientSet(tau=GrowthRate.power(1.0, 1.0), b=FragmentationRate.power(), kernel=FragmentationKernel.mitosis())


@pytest.fixture(scope="session")
def osgood() -> CoefficientSet:
    """τ(x) = x, B(x) = x, uniform kernel."""

    return CoefficientSet(tau=GrowthRate.power(1.0, 1.0), b=FragmentationRate.power(), kernel=FragmentationKernel.uniform())


@pytest.fixture(scope="session")
def baseline_grid():
    return build_grid(1e-3, 50.0, 512)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1e-3, 30.0, 128)


@pytest.fixture(scope="session")
def baseline_triple(baseline, baseline_grid):
    return solve_perron(baseline, baseline_grid, tol=1e-8)


@pytest.fixture(scope="session")
def small_triple(baseline, small_grid):
    return solve_perron(baseline, small_grid, tol=1e-8)


@pytest.fixture(scope="session")
def acceptance_grid():
    """The bundled baseline mesh."""

    return build_grid(1e-3, 50.0, 2048)


@pytest.fixture(scope="session")
def acceptance_triple(baseline, acceptance_grid):
    return solve_perron(baseline, acceptance_grid, tol=1e-9)


@pytest.fixture(scope="session")
def acceptance_indicator(acceptance_grid):
    return InitialConditionDispatcher().build(InitialConditionSpec(kind="indicator", a=1.0, b=2.0), acceptance_grid)


@pytest.fixture(scope="session")
def acceptance_trace(baseline, acceptance_grid, acceptance_triple, acceptance_indicator):
    """Indicator of [1, 2] evolved with dt = 1e-3 up to t = 20."""

    cfg = EvolutionConfig(dt=1e-3, t_end=20.0, alphas=[1.0, 2.0])
    return evolve(baseline, acceptance_grid, acceptance_triple, acceptance_indicator, cfg)


@pytest.fixture
def scenario_text() -> str:
    """A fast baseline scenario on a coarse mesh."""

    return """
[scenario]
name = quick
seed = 11

[growth]
family = constant

[fragmentation]
family = power
b = 1
gamma = 1

[kernel]
family = mitosis

[grid]
x_min = 1e-3
x_max = 30
n = 128

[evolution]
dt = 0.01
t_end = 5

[diagnostics]
alpha = 2

[initial]
kind = indicator
a = 1
b = 2

[oracle]
enabled = true
n0 = 200
replicas = 2
t_end = 1
times = 0.5, 1
"""
