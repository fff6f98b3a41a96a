"""Cross-fitted estimation for linear Neyman-orthogonal scores.

A score contributes per-observation arrays psi_a and psi_b with
psi = psi_b - psi_a * theta; the engine solves E_n[psi] = 0, giving
theta_hat = E_n[psi_b] / E_n[psi_a], and builds the variance from the
centered second moment of the influence values
phi_i = J^{-1} (psi_b_i - psi_a_i * theta_hat).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..errors import BadFoldCount, SingularJacobian

JACOBIAN_ATOL = 1e-12


@dataclass
class DmlResult:
    """Estimate, uncertainty, and diagnostics for one estimand.

    Scalar estimands store length-1 arrays; ``theta``/``std_error``
    unwrap the first entry for convenience.
    """

    estimates: np.ndarray
    std_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    influence: np.ndarray  # (n,) or (n, q) influence values
    variance: np.ndarray
    alpha: float
    n: int
    trim_count: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def theta(self) -> float:
        return float(self.estimates[0])

    @property
    def std_error(self) -> float:
        return float(self.std_errors[0])

    @property
    def ci(self) -> tuple[float, float]:
        return float(self.ci_lower[0]), float(self.ci_upper[0])


def linear_score_result(psi_a, psi_b, alpha: float = 0.05,
                        jacobian: float | None = None,
                        trim_count: int = 0,
                        diagnostics: dict | None = None) -> DmlResult:
    """Solve the empirical moment condition for a linear score.

    ``jacobian`` overrides E_n[psi_a] in the influence normalization for
    estimands whose variance theory prescribes a specific J.
    """
    psi_a = np.asarray(psi_a, dtype=float).ravel()
    psi_b = np.asarray(psi_b, dtype=float).ravel()
    n = psi_b.size
    J_solve = float(np.mean(psi_a))
    if abs(J_solve) < JACOBIAN_ATOL:
        raise SingularJacobian("moment Jacobian is numerically zero")
    theta = float(np.mean(psi_b)) / J_solve
    J = J_solve if jacobian is None else float(jacobian)
    if abs(J) < JACOBIAN_ATOL:
        raise SingularJacobian("variance Jacobian is numerically zero")
    influence = (psi_b - psi_a * theta) / J
    variance = float(np.mean(influence**2) - np.mean(influence) ** 2)
    se = float(np.sqrt(variance / n))
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    return DmlResult(
        estimates=np.array([theta]),
        std_errors=np.array([se]),
        ci_lower=np.array([theta - z * se]),
        ci_upper=np.array([theta + z * se]),
        influence=influence,
        variance=np.array([variance]),
        alpha=alpha,
        n=n,
        trim_count=trim_count,
        diagnostics=diagnostics or {},
    )


def generic_dml(score, data: dict, plan, alpha: float = 0.05,
                allow_no_crossfit: bool = False) -> DmlResult:
    """Run the generic cross-fitted procedure for a user-supplied score.

    ``score`` must provide ``fit(data, train_indices) -> nuisances`` and
    ``evaluate(data, indices, nuisances) -> (psi_a, psi_b)`` returning
    per-observation arrays. Nuisances for each fold are trained on the
    fold's complement.
    """
    if plan.K < 2 and not allow_no_crossfit:
        raise BadFoldCount("cross-fitting requires K >= 2 folds")
    n = plan.n
    psi_a = np.empty(n)
    psi_b = np.empty(n)
    trim_count = 0
    diagnostics: dict = {}
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        nuis = score.fit(data, train)
        a, b = score.evaluate(data, test, nuis)
        psi_a[test] = a
        psi_b[test] = b
        trim_count += int(getattr(score, "last_trim_count", 0))
    gather = getattr(score, "diagnostics", None)
    if callable(gather):
        diagnostics = gather()
    return linear_score_result(psi_a, psi_b, alpha=alpha,
                               trim_count=trim_count,
                               diagnostics=diagnostics)
