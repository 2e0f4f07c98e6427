try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray

# Segments whose antiderivative exponent is this close to zero integrate to a logarithm.
_LOG_EXPONENT_EPS = 1e-13


class PiecewisePowerLaw:
    """
    A positive function that is a pure power on each segment, g(x) = a_k x^{s_k}.

    Segment k covers [breaks[k-1], breaks[k]); the first segment extends down to 0 and the
    last one up to infinity. Tabulated data interpolated linearly in log-log coordinates is
    the special case where the breaks are the interior table nodes, so the end segments carry
    the power-law extrapolation.

    All integrals and the inverse of the indefinite integral are evaluated in closed form.
    """

    def __init__(self, breaks: ArrayLike, coefficients: ArrayLike, exponents: ArrayLike) -> None:
        self.breaks = np.asarray(breaks, dtype=float).reshape(-1)
        self.coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
        self.exponents = np.asarray(exponents, dtype=float).reshape(-1)

        if self.coefficients.size != self.breaks.size + 1 or self.exponents.size != self.coefficients.size:
            raise ValueError("A piecewise power law needs one coefficient and one exponent per segment.")
        if np.any(self.breaks <= 0) or np.any(np.diff(self.breaks) <= 0):
            raise ValueError("Breakpoints must be positive and strictly increasing.")
        if not (np.all(np.isfinite(self.coefficients)) and np.all(np.isfinite(self.exponents))):
            raise ValueError("Coefficients and exponents must be finite.")
        if np.any(self.coefficients < 0):
            raise ValueError("Coefficients must be nonnegative.")

        self._offsets, self._break_values = self._accumulate()

    @classmethod
    def power(cls, coefficient: float, exponent: float) -> Self:
        return cls([], [coefficient], [exponent])

    @classmethod
    def from_table(cls, nodes: ArrayLike, values: ArrayLike) -> Self:
        """Log-log linear interpolation through (nodes, values), power-law extrapolation at both ends."""

        nodes = np.asarray(nodes, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if nodes.size < 2 or nodes.size != values.size:
            raise ValueError("A table needs at least two (node, value) pairs of equal length.")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise ValueError("Table nodes must be positive and strictly increasing.")
        if np.any(values <= 0):
            raise ValueError("Table values must be strictly positive.")

        slopes = np.diff(np.log(values)) / np.diff(np.log(nodes))
        coefficients = values[:-1] * nodes[:-1] ** (-slopes)

        return cls(nodes[1:-1], coefficients, slopes)

    # --- evaluation -------------------------------------------------------------------------

    @property
    def segments(self) -> int:
        return self.coefficients.size

    @property
    def exponent_at_zero(self) -> float:
        return float(self.exponents[0])

    @property
    def exponent_at_infinity(self) -> float:
        return float(self.exponents[-1])

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.coefficients > 0))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.coefficients == 0))

    @property
    def integrable_at_zero(self) -> bool:
        return bool(self.coefficients[0] == 0 or self.exponents[0] > -1)

    @property
    def integrable_at_infinity(self) -> bool:
        return bool(self.coefficients[-1] == 0 or self.exponents[-1] < -1)

    def segment_of(self, x: ArrayLike) -> NDArray[np.intp]:
        return np.searchsorted(self.breaks, x, side="right")

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        k = self.segment_of(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return self.coefficients[k] * np.power(x, self.exponents[k])

    def max_on(self, lower: float, upper: float) -> float:
        """Exact maximum on [lower, upper]; each segment is monotone so the extremes sit at ends or breaks."""

        inner = self.breaks[(self.breaks > lower) & (self.breaks < upper)]
        candidates = np.concatenate(([lower, upper], inner))

        return float(np.max(self(candidates)))

    # --- algebra ----------------------------------------------------------------------------

    def __mul__(self, other: "PiecewisePowerLaw | float") -> "PiecewisePowerLaw":
        if not isinstance(other, PiecewisePowerLaw):
            return PiecewisePowerLaw(self.breaks, self.coefficients * float(other), self.exponents)

        breaks = np.union1d(self.breaks, other.breaks)
        probes = _segment_probes(breaks)
        i = self.segment_of(probes)
        j = other.segment_of(probes)

        return PiecewisePowerLaw(
            breaks,
            self.coefficients[i] * other.coefficients[j],
            self.exponents[i] + other.exponents[j],
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "PiecewisePowerLaw":
        if not self.is_positive:
            raise ZeroDivisionError("Cannot take the reciprocal of a law that vanishes on a segment.")

        return PiecewisePowerLaw(self.breaks, 1.0 / self.coefficients, -self.exponents)

    def __truediv__(self, other: "PiecewisePowerLaw") -> "PiecewisePowerLaw":
        return self * other.reciprocal()

    def times_power(self, m: float) -> "PiecewisePowerLaw":
        """x^m · g(x)."""

        return PiecewisePowerLaw(self.breaks, self.coefficients, self.exponents + m)

    # --- integration ------------------------------------------------------------------------

    def _piece_primitive(self, k: NDArray[np.intp], x: NDArray[np.float64]) -> NDArray[np.float64]:
        a = self.coefficients[k]
        q = self.exponents[k] + 1.0
        logarithmic = np.abs(q) < _LOG_EXPONENT_EPS
        safe_q = np.where(logarithmic, 1.0, q)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            power_part = a * np.power(x, safe_q) / safe_q
            log_part = a * np.log(x)

        return np.where(logarithmic, log_part, power_part)

    def _accumulate(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        offsets = np.zeros(self.segments)
        break_values = np.zeros(self.breaks.size)
        for j, b in enumerate(self.breaks):
            left = self._piece_primitive(np.array([j]), np.array([b]))[0]
            break_values[j] = offsets[j] + left
            right = self._piece_primitive(np.array([j + 1]), np.array([b]))[0]
            offsets[j + 1] = break_values[j] - right

        return offsets, break_values

    def indefinite(self, x: ArrayLike) -> NDArray[np.float64]:
        """An antiderivative, continuous across breaks; only differences are meaningful."""

        x = np.asarray(x, dtype=float)
        k = self.segment_of(x)

        return self._offsets[k] + self._piece_primitive(k, x)

    @property
    def limit_at_zero(self) -> float:
        """lim_{x→0} of `indefinite`: 0 when integrable there, −∞ otherwise."""

        return 0.0 if self.integrable_at_zero else -np.inf

    @property
    def limit_at_infinity(self) -> float:
        if not self.integrable_at_infinity:
            return np.inf

        return float(self._offsets[-1])

    def integral(self, lower: ArrayLike, upper: ArrayLike) -> NDArray[np.float64]:
        """∫_lower^upper g(x) dx, with lower = 0 and upper = ∞ allowed."""

        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lower_value = np.where(lower > 0, self.indefinite(np.where(lower > 0, lower, 1.0)), self.limit_at_zero)
            upper_value = np.where(
                np.isfinite(upper), self.indefinite(np.where(np.isfinite(upper), upper, 1.0)), self.limit_at_infinity
            )

        return upper_value - lower_value

    def inverse_indefinite(self, u: ArrayLike) -> NDArray[np.float64]:
        """Solve indefinite(x) = u for x; returns 0 or ∞ when u lies beyond the attainable range."""

        if not self.is_positive:
            raise ZeroDivisionError("The indefinite integral is not invertible where the law vanishes.")

        u = np.asarray(u, dtype=float)
        k = np.searchsorted(self._break_values, u, side="right")
        a = self.coefficients[k]
        q = self.exponents[k] + 1.0
        v = u - self._offsets[k]

        logarithmic = np.abs(q) < _LOG_EXPONENT_EPS
        safe_q = np.where(logarithmic, 1.0, q)
        base = safe_q * v / a
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            power_root = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), 1.0 / safe_q), 0.0)
            power_root = np.where(base > 0, power_root, np.where(safe_q > 0, 0.0, np.inf))
            log_root = np.exp(v / a)

        return np.where(logarithmic, log_root, power_root)


def _segment_probes(breaks: NDArray[np.float64]) -> NDArray[np.float64]:
    """One interior point per segment of a breakpoint set."""

    if breaks.size == 0:
        return np.array([1.0])

    inner = np.sqrt(breaks[:-1] * breaks[1:])

    return np.concatenate(([breaks[0] / 2.0], inner, [breaks[-1] * 2.0]))
