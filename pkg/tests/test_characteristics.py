import math

import numpy as np
import pytest

from gfkit.errors import DomainError
from gfkit.models.coefficients import FragmentationRate, GrowthRate
from gfkit.numerics.characteristics import damping_integral, exit_time, flow, jacobian, make_flow

GROWTH_RATES = {
    "constant": GrowthRate.constant(),
    "affine_capped": GrowthRate.affine_capped(),
    "linear": GrowthRate.power(1.0, 1.0),
    "tabulated": GrowthRate.tabulated([0.1, 1.0, 5.0], [0.5, 1.0, 3.0]),
}


@pytest.fixture
def samples():
    rng = np.random.default_rng(7)
    n = 10_000
    return rng.uniform(0.0, 2.0, n), rng.uniform(0.0, 2.0, n), np.exp(rng.uniform(np.log(1e-3), np.log(20.0), n))


@pytest.mark.parametrize("name", GROWTH_RATES)
def test_semiflow(name, samples):
    f = make_flow(GROWTH_RATES[name])
    t, s, x = samples

    np.testing.assert_allclose(flow(f, t, flow(f, s, x)), flow(f, t + s, x), rtol=1e-9)


@pytest.mark.parametrize("name", GROWTH_RATES)
def test_flow_is_invertible(name, samples):
    f = make_flow(GROWTH_RATES[name])
    t, _, x = samples

    np.testing.assert_allclose(flow(f, -t, flow(f, t, x)), x, rtol=1e-9)
    np.testing.assert_allclose(f.F_inverse(f.F(x)), x, rtol=1e-10)


@pytest.mark.parametrize("name", GROWTH_RATES)
def test_flow_is_increasing_in_size_and_time(name):
    f = make_flow(GROWTH_RATES[name])
    x = np.logspace(-3, 1, 200)

    assert np.all(np.diff(flow(f, 0.7, x)) > 0)
    assert np.all(flow(f, 0.7, x) > x)


def test_closed_forms():
    assert flow(make_flow(GrowthRate.constant()), 1.5, 2.0) == pytest.approx(3.5)
    assert flow(make_flow(GrowthRate.power(1.0, 1.0)), 1.0, 2.0) == pytest.approx(2.0 * math.e)
    # Linear up to size 1, then exponential.
    assert flow(make_flow(GrowthRate.affine_capped()), 1.0, 0.5) == pytest.approx(math.exp(0.5))


def test_exit_time_standard_mode():
    f = make_flow(GrowthRate.constant())

    assert exit_time(f, 2.0) == pytest.approx(-2.0)
    assert exit_time(f, 0.0) == 0.0
    with pytest.raises(DomainError):
        exit_time(f, -1.0)


def test_exit_time_osgood_mode():
    f = make_flow(GrowthRate.power(1.0, 1.0))

    assert f.osgood
    assert exit_time(f, 0.3) == -math.inf
    with pytest.raises(DomainError):
        exit_time(f, 0.0)


def test_tracing_back_past_the_exit_time_fails():
    f = make_flow(GrowthRate.constant())

    assert math.isnan(float(f.map(-3.0, 2.0)))
    with pytest.raises(DomainError):
        flow(f, -3.0, 2.0)


def test_finite_time_blow_up():
    f = make_flow(GrowthRate.power(1.0, 2.0))

    # dx/dt = x² from x = 1 reaches infinity at t = 1.
    assert float(f.map(2.0, 1.0)) == math.inf
    with pytest.raises(DomainError):
        flow(f, 2.0, 1.0)


def test_jacobian():
    linear = make_flow(GrowthRate.power(1.0, 1.0))

    assert jacobian(linear, 0.5, 3.0) == pytest.approx(math.exp(-0.5))
    assert jacobian(make_flow(GrowthRate.constant()), 0.5, 3.0) == pytest.approx(1.0)


def test_damping_integral():
    f = make_flow(GrowthRate.constant())

    # λt + ∫_{x−t}^x y dy with x = 3, t = 1.
    assert damping_integral(f, FragmentationRate.power(), 0.5, 1.0, 3.0) == pytest.approx(0.5 + 2.5, rel=1e-10)
    assert damping_integral(f, FragmentationRate.power(), 0.5, 0.0, 3.0) == pytest.approx(0.0)


@pytest.mark.parametrize("name", GROWTH_RATES)
def test_flow_grows_at_most_exponentially(name):
    tau = GROWTH_RATES[name]
    f = make_flow(tau)
    x = np.logspace(-3, 1, 50)

    for t in (0.1, 0.5, 1.0):
        assert np.all(flow(f, t, x) <= (1.0 + x) * math.exp(tau.tau1 * t) * (1.0 + 1e-9))


@pytest.mark.parametrize("name", GROWTH_RATES)
def test_jacobian_is_the_size_derivative_of_the_backward_flow(name):
    f = make_flow(GROWTH_RATES[name])
    x = np.logspace(0, 1, 25)
    h = 1e-6 * x

    difference = (flow(f, -0.5, x + h) - flow(f, -0.5, x - h)) / (2.0 * h)

    np.testing.assert_allclose(jacobian(f, 0.5, x), difference, rtol=1e-5)


def test_square_root_growth_exits_through_zero():
    f = make_flow(GrowthRate.power(1.0, 0.5))

    # dx/dt = √x: F(x) = 2√x and X(t,x) = (√x + t/2)².
    assert not f.osgood
    for x in (0.25, 1.0, 4.0, 9.0):
        assert exit_time(f, x) == pytest.approx(-2.0 * math.sqrt(x), rel=1e-12)
        assert flow(f, 1.0, x) == pytest.approx((math.sqrt(x) + 0.5) ** 2, rel=1e-12)
    assert flow(f, -2.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        flow(f, -2.5, 1.0)
