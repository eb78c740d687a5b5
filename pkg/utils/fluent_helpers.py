"""Fluent Test Helpers.

Provides a fluent API for checking decomposition reports in a readable manner.
"""

from typing import Optional, Sequence

import numpy as np

from components.xper_exact import XperReport


class FluentReportAssertion:
    """Fluent assertion helper for XPER reports"""

    def __init__(self, report: XperReport, description: str = ""):
        self.report = report
        self.description = description
        self.validations = []

    def _label(self) -> str:
        return f"[{self.description}] " if self.description else ""

    def should_satisfy_efficiency(self, tol: float = 1e-10) -> "FluentReportAssertion":
        """Assert PM = phi0 + sum(phi) and, when present, the per-instance identity"""
        residual = self.report.efficiency_residual
        assert abs(residual) <= tol, f"{self._label()}efficiency residual {residual:.3e} exceeds {tol:.1e}"
        if self.report.has_individual:
            worst = float(np.max(np.abs(self.report.individual_residuals())))
            assert worst <= tol, f"{self._label()}largest per-instance residual {worst:.3e} exceeds {tol:.1e}"
        self.validations.append(f"Efficiency holds within {tol:.0e}")
        return self

    def should_average_to_global(self, tol: float = 1e-12) -> "FluentReportAssertion":
        """Assert mean_i phi_ij = phi_j"""
        assert self.report.has_individual, f"{self._label()}report holds no individual values"
        gap = float(np.max(np.abs(self.report.individual_phi.mean(axis=0) - self.report.phi)))
        assert gap <= tol, f"{self._label()}individual values average to the global ones only within {gap:.3e}"
        self.validations.append(f"Individual values average to global within {tol:.0e}")
        return self

    def should_have_phi(self, expected: Sequence[float], tol: float = 1e-10) -> "FluentReportAssertion":
        expected = np.asarray(expected, dtype=float)
        gap = float(np.max(np.abs(self.report.phi - expected)))
        assert gap <= tol, f"{self._label()}phi {self.report.phi.tolist()} differs from {expected.tolist()} by {gap:.3e}"
        self.validations.append("phi matches expected values")
        return self

    def should_have_phi0(self, expected: float, tol: float = 1e-10) -> "FluentReportAssertion":
        gap = abs(self.report.phi0 - expected)
        assert gap <= tol, f"{self._label()}phi0 {self.report.phi0} differs from {expected} by {gap:.3e}"
        self.validations.append("phi0 matches expected value")
        return self

    def should_have_pm(self, expected: float, tol: float = 1e-12) -> "FluentReportAssertion":
        gap = abs(self.report.pm - expected)
        assert gap <= tol, f"{self._label()}pm {self.report.pm} differs from {expected} by {gap:.3e}"
        self.validations.append("pm matches expected value")
        return self

    def should_match(self, other: XperReport, tol: float = 1e-12,
                     individual: bool = False) -> "FluentReportAssertion":
        """Assert two reports agree on pm, phi0, phi and optionally the individual values"""
        self.should_have_pm(other.pm, tol).should_have_phi0(other.phi0, tol).should_have_phi(other.phi, tol)
        if individual:
            gap = float(np.max(np.abs(self.report.individual_phi - other.individual_phi)))
            assert gap <= tol, f"{self._label()}individual values differ by {gap:.3e}"
        self.validations.append(f"Report matches {other.estimator} report")
        return self

    def should_have_null_feature(self, feature: int, individual: bool = False,
                                 tol: float = 1e-12) -> "FluentReportAssertion":
        """Assert a feature's XPER value vanishes up to rounding"""
        assert abs(self.report.phi[feature]) <= tol, f"{self._label()}phi[{feature}] = {self.report.phi[feature]!r}"
        if individual:
            worst = float(np.max(np.abs(self.report.individual_phi[:, feature])))
            assert worst <= tol, f"{self._label()}individual phi[:, {feature}] reaches {worst:.3e}"
        self.validations.append(f"Feature {feature} is null")
        return self

    def should_rank(self, names: Sequence[str]) -> "FluentReportAssertion":
        """Assert features ordered by decreasing phi"""
        order = [self.report.feature_names[j] for j in np.argsort(-self.report.phi, kind="stable")]
        assert order[: len(names)] == list(names), f"{self._label()}ranking {order}, expected {list(names)}"
        self.validations.append(f"Ranking starts with {list(names)}")
        return self

    def should_use_estimator(self, estimator: str) -> "FluentReportAssertion":
        assert self.report.estimator == estimator, f"{self._label()}estimator is {self.report.estimator}"
        self.validations.append(f"Estimator is {estimator}")
        return self

    def get_validations(self) -> list:
        return self.validations.copy()


def expect_report(report: XperReport, description: Optional[str] = "") -> FluentReportAssertion:
    """Create fluent assertion for a report"""
    return FluentReportAssertion(report, description or "")
