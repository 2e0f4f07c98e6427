import math

import logfire
import numpy as np
from pydantic import BaseModel, Field

from gfkit.models.coefficients import PROBE_SIZES, CoefficientSet, Mode, kernel_moment

# Relative slack allowed on the samplewise bound checks.
BOUND_RTOL = 1e-12


class HypothesisCheck(BaseModel):
    name: str
    hypothesis: str = Field(description="One of Hτ, HB, H℘.")
    passed: bool
    witness: float | None = Field(default=None, description="A sample size (or α) where the check fails.")
    detail: str = ""


class ValidationReport(BaseModel):
    mode: Mode
    checks: list[HypothesisCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> list[HypothesisCheck]:
        return [check for check in self.checks if not check.passed]

    def check(self, name: str) -> HypothesisCheck:
        for check in self.checks:
            if check.name == name:
                return check

        raise KeyError(name)


def _samplewise(name: str, hypothesis: str, xs: np.ndarray, holds: np.ndarray, detail: str) -> HypothesisCheck:
    failing = xs[~holds]
    if failing.size == 0:
        return HypothesisCheck(name=name, hypothesis=hypothesis, passed=True, detail=detail)

    return HypothesisCheck(name=name, hypothesis=hypothesis, passed=False, witness=float(failing[0]), detail=detail)


def _flag(name: str, hypothesis: str, passed: bool, detail: str) -> HypothesisCheck:
    return HypothesisCheck(name=name, hypothesis=hypothesis, passed=passed, detail=detail)


def _moment_alphas(alpha_lower: float) -> np.ndarray:
    start = -2.0 if alpha_lower == -math.inf else alpha_lower + 0.25

    return start + 0.5 * np.arange(13)


def validate_hypotheses(coeffs: CoefficientSet, sample_points: list[float] | np.ndarray) -> ValidationReport:
    """
    Check (Hτ), (HB) and (H℘) on the sample sizes plus a log-spaced probe set.

    Structural failures (positivity, ℘₁ = 1) raise InvalidCoefficient; every other inequality
    is reported with a witness point.
    """

    samples = np.asarray(sample_points, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("validate_hypotheses needs at least one sample point.")
    if np.any(samples <= 0):
        raise ValueError("Sample points must be positive sizes.")

    coeffs.ensure_admissible()

    upper = float(samples.max())
    probes = PROBE_SIZES[PROBE_SIZES <= upper]
    xs = np.unique(np.concatenate((samples, probes)))

    tau, b, kernel = coeffs.tau, coeffs.b, coeffs.kernel
    tau_x = tau(xs)
    b_x = b(xs)
    slack = 1.0 + BOUND_RTOL

    checks = [
        _samplewise("tau_positive", "Hτ", xs, tau_x > 0, "τ(x) > 0"),
        _samplewise(
            "tau_lower_bound",
            "Hτ",
            xs,
            (xs < 1.0) | (tau.tau0 * xs**tau.nu0 <= tau_x * slack),
            f"τ₀·x^ν₀ ≤ τ(x) for x ≥ 1 with ν₀={tau.nu0:g}, τ₀={tau.tau0:g}",
        ),
        _samplewise(
            "tau_upper_bound",
            "Hτ",
            xs,
            tau_x <= tau.tau1 * np.maximum(1.0, xs) * slack,
            f"τ(x) ≤ τ₁·max(1,x) with τ₁={tau.tau1:g}",
        ),
        _flag("nu0_at_most_one", "Hτ", tau.nu0 <= 1.0, f"ν₀={tau.nu0:g} ≤ 1"),
        _flag("inverse_tau_integrable", "Hτ", tau.integrable_at_zero, "1/τ ∈ L¹(0,1)"),
        _samplewise("b_nonnegative", "HB", xs, b_x >= 0, "B(x) ≥ 0"),
        _samplewise(
            "b_lower_bound",
            "HB",
            xs,
            (xs < b.x0) | (b.B0 * xs**b.gamma0 <= b_x * slack),
            f"B₀·x^γ₀ ≤ B(x) for x ≥ x₀ with γ₀={b.gamma0:g}, B₀={b.B0:g}, x₀={b.x0:g}",
        ),
        _samplewise(
            "b_upper_bound",
            "HB",
            xs,
            b_x <= b.B1 * np.maximum(1.0, xs**b.gamma1) * slack,
            f"B(x) ≤ B₁·max(1,x^γ₁) with γ₁={b.gamma1:g}, B₁={b.B1:g}",
        ),
        _flag(
            "b_exponents_positive",
            "HB",
            b.gamma0 > 0 and b.gamma1 > 0,
            f"γ₀={b.gamma0:g}, γ₁={b.gamma1:g}; bounded B is outside the convergence theory",
        ),
    ]

    positive = np.flatnonzero(b_x > 0)
    connected = positive.size > 0 and positive[-1] == xs.size - 1 and np.all(np.diff(positive) == 1)
    witness = None if connected else float(xs[positive[0]] if positive.size else xs[0])
    checks.append(
        HypothesisCheck(
            name="b_support_connected",
            hypothesis="HB",
            passed=bool(connected),
            witness=witness,
            detail="supp B is an interval reaching x_max",
        )
    )

    total = kernel_moment(kernel, 0.0)
    mass = kernel_moment(kernel, 1.0)
    checks.append(_flag("kernel_mass", "H℘", abs(mass - 1.0) <= 1e-10, f"℘₁={mass:.12g}"))
    checks.append(_flag("kernel_total_finite", "H℘", math.isfinite(total) and total > 1.0, f"1 < ℘₀={total:.12g} < ∞"))

    alphas = _moment_alphas(kernel.alpha_lower)
    moments = np.array([kernel_moment(kernel, float(a)) for a in alphas])
    decreasing = np.diff(moments) < 0
    checks.append(
        HypothesisCheck(
            name="kernel_moments_decreasing",
            hypothesis="H℘",
            passed=bool(np.all(decreasing)),
            witness=None if np.all(decreasing) else float(alphas[1:][~decreasing][0]),
            detail=f"α ↦ ℘_α strictly decreasing on (α̲, ∞), α̲={kernel.alpha_lower:g}",
        )
    )

    report = ValidationReport(mode=coeffs.mode, checks=checks)
    for failure in report.failures:
        logfire.warning(f"({failure.hypothesis}) {failure.name} failed: {failure.detail}", witness=failure.witness)
    logfire.info(f"Hypotheses checked on {xs.size} sizes, mode={report.mode.value}, passed={report.passed}")

    return report
