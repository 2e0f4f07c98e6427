import math

import numpy as np
import pytest

from gfkit.models.tabulated import PiecewisePowerLaw


def test_power_integral_from_zero():
    law = PiecewisePowerLaw.power(2.0, 1.0)

    assert float(law.integral(0.0, 3.0)) == pytest.approx(9.0, rel=1e-14)


def test_integral_to_infinity():
    law = PiecewisePowerLaw.power(1.0, -2.0)

    assert law.integrable_at_infinity
    assert float(law.integral(1.0, math.inf)) == pytest.approx(1.0, rel=1e-14)


def test_logarithmic_segment():
    law = PiecewisePowerLaw.power(1.0, -1.0)

    assert not law.integrable_at_zero
    assert law.limit_at_zero == -math.inf
    assert float(law.integral(1.0, math.e)) == pytest.approx(1.0, rel=1e-14)
    assert float(law.inverse_indefinite(law.indefinite(5.0))) == pytest.approx(5.0, rel=1e-12)


def test_table_interpolates_and_extrapolates():
    law = PiecewisePowerLaw.from_table([1.0, 2.0, 4.0], [1.0, 4.0, 8.0])

    np.testing.assert_allclose(law([1.0, 2.0, 4.0]), [1.0, 4.0, 8.0], rtol=1e-14)
    # End segments keep their slopes: 2 below the table, 1 above it.
    assert float(law(0.5)) == pytest.approx(0.25, rel=1e-14)
    assert float(law(8.0)) == pytest.approx(16.0, rel=1e-14)
    assert law.segments == 2


def test_indefinite_is_continuous_and_invertible():
    law = PiecewisePowerLaw.from_table([0.1, 1.0, 3.0, 10.0], [0.2, 1.0, 1.5, 4.0])
    xs = np.logspace(-3, 3, 60)

    np.testing.assert_allclose(law.inverse_indefinite(law.indefinite(xs)), xs, rtol=1e-10)

    left = law.integral(0.05, 2.0) + law.integral(2.0, 7.0)
    assert float(left) == pytest.approx(float(law.integral(0.05, 7.0)), rel=1e-13)


def test_inverse_beyond_range():
    assert float(PiecewisePowerLaw.power(1.0, 0.0).inverse_indefinite(-1.0)) == 0.0
    assert float(PiecewisePowerLaw.power(1.0, -2.0).inverse_indefinite(1.0)) == math.inf


def test_product_and_quotient():
    table = PiecewisePowerLaw.from_table([1.0, 2.0, 4.0], [1.0, 4.0, 8.0])
    linear = PiecewisePowerLaw.power(3.0, 1.0)
    xs = np.array([0.3, 1.5, 3.0, 9.0])

    np.testing.assert_allclose((table * linear)(xs), table(xs) * 3.0 * xs, rtol=1e-13)
    np.testing.assert_allclose((table / linear)(xs), table(xs) / (3.0 * xs), rtol=1e-13)
    np.testing.assert_allclose(table.times_power(2.0)(xs), table(xs) * xs**2, rtol=1e-13)
    np.testing.assert_allclose((2.0 * table)(xs), 2.0 * table(xs), rtol=1e-14)


def test_max_on_uses_breaks():
    law = PiecewisePowerLaw.from_table([1.0, 2.0, 4.0], [1.0, 4.0, 2.0])

    assert law.max_on(0.5, 10.0) == pytest.approx(4.0)
    assert law.max_on(3.0, 3.5) == pytest.approx(float(law(3.0)))


def test_zero_law_has_no_reciprocal():
    zero = PiecewisePowerLaw.power(0.0, 1.0)

    assert zero.is_zero
    with pytest.raises(ZeroDivisionError):
        zero.reciprocal()


@pytest.mark.parametrize(
    ("breaks", "coefficients", "exponents"),
    [
        ([2.0, 1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]),
        ([1.0], [1.0], [0.0]),
        ([1.0], [-1.0, 1.0], [0.0, 0.0]),
    ],
)
def test_rejects_malformed_segments(breaks, coefficients, exponents):
    with pytest.raises(ValueError):
        PiecewisePowerLaw(breaks, coefficients, exponents)
