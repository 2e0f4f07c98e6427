import math
from dataclasses import dataclass, field
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from gfkit.errors import DomainError
from gfkit.models.coefficients import FragmentationRate, GrowthRate
from gfkit.models.tabulated import PiecewisePowerLaw


@dataclass(frozen=True, eq=False)
class Flow:
    """
    Characteristic flow of dX/dt = τ(X).

    F is the primitive of 1/τ, anchored at 0 in standard mode and at 1 in osgood mode, so that
    X(t,x) = F⁻¹(F(x) + t). Both F and F⁻¹ are closed form on every segment of τ, and
    `F_table` holds F at the segment breakpoints as (x, F(x)) rows.
    """

    tau_ref: GrowthRate
    osgood: bool
    inverse_tau: PiecewisePowerLaw
    anchor: float
    F_table: NDArray[np.float64] = field(repr=False)

    @classmethod
    def from_growth(cls, tau: GrowthRate) -> Self:
        inverse_tau = tau.law.reciprocal()
        osgood = not tau.integrable_at_zero
        anchor = float(inverse_tau.indefinite(1.0)) if osgood else inverse_tau.limit_at_zero
        nodes = np.union1d([1.0], inverse_tau.breaks)
        table = np.column_stack((nodes, inverse_tau.indefinite(nodes) - anchor))

        return cls(tau_ref=tau, osgood=osgood, inverse_tau=inverse_tau, anchor=anchor, F_table=table)

    def F(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        at_zero = -np.inf if self.osgood else 0.0
        with np.errstate(divide="ignore"):
            return np.where(x > 0, self.inverse_tau.indefinite(np.where(x > 0, x, 1.0)) - self.anchor, at_zero)

    def F_inverse(self, u: ArrayLike) -> NDArray[np.float64]:
        return self.inverse_tau.inverse_indefinite(np.asarray(u, dtype=float) + self.anchor)

    def map(self, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
        """X(t,x), NaN where the characteristic has left through 0 and ∞ where it blew up."""

        u = self.F(x) + np.asarray(t, dtype=float)
        exited = np.zeros(np.shape(u), dtype=bool) if self.osgood else u < 0
        x_t = self.F_inverse(np.where(exited, 0.0, u))

        return np.where(exited, np.nan, x_t)


def make_flow(tau: GrowthRate) -> Flow:
    return Flow.from_growth(tau)


def _trace(f: Flow, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    x_t = f.map(t, x)
    if np.any(np.isnan(x_t)):
        raise DomainError("Characteristic traced back past the exit time t_*(x).")
    if np.any(np.isinf(x_t)):
        raise DomainError("Characteristic reaches infinite size in finite time.")

    return x_t


def _scalar_or_array(value: NDArray[np.float64]) -> NDArray[np.float64] | float:
    return float(value) if np.ndim(value) == 0 else value


def flow(flow: Flow, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64] | float:
    """X(t,x) = F⁻¹(F(x)+t); raises DomainError before the exit time or past a finite-time blow-up."""

    return _scalar_or_array(_trace(flow, t, x))


def exit_time(flow: Flow, x: float) -> float:
    """t_*(x) = −F(x) in standard mode, −∞ in osgood mode."""

    if x < 0:
        raise DomainError(f"Sizes are nonnegative, got x={x}.")
    if flow.osgood:
        if x == 0:
            raise DomainError("The exit time at x=0 is undefined when 1/τ is not integrable at 0.")
        return -math.inf

    return -float(flow.F(x))


def jacobian(flow: Flow, t: ArrayLike, x: ArrayLike) -> NDArray[np.float64] | float:
    """J(t,x) = τ(X(−t,x))/τ(x)."""

    tau = flow.tau_ref
    back = _trace(flow, -np.asarray(t, dtype=float), x)

    return _scalar_or_array(tau(back) / tau(x))


def damping_law(tau: GrowthRate, b: FragmentationRate) -> PiecewisePowerLaw:
    """B/τ; its integral from y to X(t,y) equals ∫₀^t B(X(s,y)) ds."""

    return b.law / tau.law


def damping_integral(flow: Flow, b: FragmentationRate, lam: float, t: float, x: float) -> float:
    """λt + ∫_{X(−t,x)}^x B(y)/τ(y) dy by adaptive quadrature."""

    lower = float(_trace(flow, -t, x))
    if lower == x:
        return lam * t

    law = damping_law(flow.tau_ref, b)
    a, c = min(lower, x), max(lower, x)
    kinks = law.breaks[(law.breaks > a) & (law.breaks < c)]
    value, _ = integrate.quad(lambda y: float(law(y)), a, c, points=kinks if kinks.size else None, limit=200)

    return lam * t + math.copysign(value, x - lower)
