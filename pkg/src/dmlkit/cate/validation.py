"""Validation of CATE models on held-out data: calibration by
prediction bins and TOC/QINI uplift curves with uniform bands.

Thresholds, bin edges, and tie-breaking probabilities always come from
non-test data so that the test-sample quantities are sample averages of
fixed functions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..double_lasso import simultaneous_critical_value
from ..errors import EmptyBin, EmptyTopGroup

DEFAULT_GRID_POINTS = 20  # log(p)^5 / n must stay small; 20 is plenty


@dataclass
class CalibrationReport:
    bin_edges: np.ndarray
    dr_means: np.ndarray
    model_means: np.ndarray
    dr_ci_lower: np.ndarray
    dr_ci_upper: np.ndarray
    counts: np.ndarray
    cal1: float
    cal2: float
    alpha: float


def calibration(tau_test, signals_test, tau_nontest, K: int,
                alpha: float = 0.05) -> CalibrationReport:
    """Bin test observations by predicted effect and compare the mean
    prediction with the mean DR signal per bin.

    Bin edges are the K-quantiles of the non-test predictions. cal1 is
    the count-weighted mean absolute gap, cal2 its squared analogue.
    """
    tau_test = np.asarray(tau_test, dtype=float).ravel()
    signals = np.asarray(signals_test, dtype=float).ravel()
    tau_nontest = np.asarray(tau_nontest, dtype=float).ravel()
    if K < 1:
        raise EmptyBin("need at least one bin")
    edges = np.quantile(tau_nontest, np.linspace(0.0, 1.0, K + 1)[1:-1])
    assignment = np.searchsorted(edges, tau_test, side="right")
    n = signals.size
    dr_means = np.empty(K)
    model_means = np.empty(K)
    lo = np.empty(K)
    hi = np.empty(K)
    counts = np.empty(K, dtype=int)
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    for k in range(K):
        mask = assignment == k
        counts[k] = int(np.sum(mask))
        if counts[k] == 0:
            raise EmptyBin(f"bin {k} contains no test observations")
        dr_means[k] = float(np.mean(signals[mask]))
        model_means[k] = float(np.mean(tau_test[mask]))
        se = float(np.std(signals[mask]) / np.sqrt(counts[k]))
        lo[k] = dr_means[k] - z * se
        hi[k] = dr_means[k] + z * se
    gaps = np.abs(dr_means - model_means)
    shares = counts / n
    return CalibrationReport(
        bin_edges=edges,
        dr_means=dr_means,
        model_means=model_means,
        dr_ci_lower=lo,
        dr_ci_upper=hi,
        counts=counts,
        cal1=float(np.sum(gaps * shares)),
        cal2=float(np.sum(gaps**2 * shares)),
        alpha=alpha,
    )


@dataclass
class UpliftCurves:
    grid: np.ndarray
    thresholds: np.ndarray
    tie_lambdas: np.ndarray
    toc: np.ndarray
    qini: np.ndarray
    shares: np.ndarray  # pi_hat(q)
    toc_variance: np.ndarray  # joint V_hat for the TOC vector
    qini_variance: np.ndarray
    toc_band: tuple[np.ndarray, np.ndarray]
    qini_band: tuple[np.ndarray, np.ndarray]
    toc_lower_band: np.ndarray  # one-sided
    qini_lower_band: np.ndarray
    autoc: float
    autoc_se: float
    autoc_lower: float
    auqc: float
    auqc_se: float
    auqc_lower: float
    alpha: float
    n: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["q", "toc", "toc_lo", "toc_hi",
                             "qini", "qini_lo", "qini_hi"])
            for i, q in enumerate(self.grid):
                writer.writerow([
                    q, self.toc[i], self.toc_band[0][i], self.toc_band[1][i],
                    self.qini[i], self.qini_band[0][i], self.qini_band[1][i],
                ])


def _fractional_indicator(tau, threshold, lam):
    return (tau > threshold).astype(float) + lam * (tau == threshold)


def toc_qini(tau_test, signals_test, tau_nontest, grid=None,
             alpha: float = 0.05, seed: int = 0) -> UpliftCurves:
    """Uplift curves of a CATE model on the test sample.

    TOC(q) compares the average effect among the top q-fraction
    (prioritized by the model) with the overall average; QINI rescales
    by the treated share. Thresholds and tie-breaking come from the
    non-test predictions; inference follows the joint Gaussian
    approximation with sup-norm Monte Carlo bands.
    """
    tau = np.asarray(tau_test, dtype=float).ravel()
    s = np.asarray(signals_test, dtype=float).ravel()
    ref = np.asarray(tau_nontest, dtype=float).ravel()
    if grid is None:
        grid = np.linspace(1.0 / DEFAULT_GRID_POINTS, 1.0, DEFAULT_GRID_POINTS)
    grid = np.asarray(grid, dtype=float)
    p = grid.size
    n = s.size
    theta = float(np.mean(s))

    thresholds = np.empty(p)
    lambdas = np.empty(p)
    indicators = np.empty((n, p))
    for ell, q in enumerate(grid):
        mu = float(np.quantile(ref, 1.0 - q))
        above = float(np.mean(ref > mu))
        at = float(np.mean(ref == mu))
        lam = (q - above) / at if at > 0 else 0.0
        lam = min(max(lam, 0.0), 1.0)
        thresholds[ell] = mu
        lambdas[ell] = lam
        indicators[:, ell] = _fractional_indicator(tau, mu, lam)
    shares = indicators.mean(axis=0)
    if np.any(shares <= 0.0):
        raise EmptyTopGroup("no test observations above a threshold")

    centered = s - theta
    toc = centered @ (indicators / shares[None, :] - 1.0) / n
    qini = centered @ (indicators - shares[None, :]) / n

    psi_toc = centered[:, None] * (indicators / shares[None, :] - 1.0) - toc
    psi_qini = centered[:, None] * (indicators - shares[None, :]) - qini
    V_toc = psi_toc.T @ psi_toc / n
    V_qini = psi_qini.T @ psi_qini / n

    def bands(values, V):
        se = np.sqrt(np.diag(V) / n)
        safe = np.where(se > 0, np.sqrt(np.diag(V)), 1.0)
        corr = V / safe[:, None] / safe[None, :]
        corr[np.diag(V) == 0, :] = 0.0
        corr[:, np.diag(V) == 0] = 0.0
        np.fill_diagonal(corr, 1.0)
        c_two = simultaneous_critical_value(corr, alpha, seed=seed)
        c_one = simultaneous_critical_value(corr, alpha / 2.0, seed=seed)
        two = (values - c_two * se, values + c_two * se)
        one = values - c_one * se
        return two, one, se

    toc_band, toc_lower, _ = bands(toc, V_toc)
    qini_band, qini_lower, _ = bands(qini, V_qini)

    # Area under the curves by the forward-difference sum, with the top
    # of the grid closing at q = 1.
    dq = np.append(np.diff(grid), 1.0 - grid[-1])
    z_one = stats.norm.ppf(1.0 - alpha)

    def area(values, psi):
        a = float(values @ dq)
        infl = psi @ dq
        se = float(np.sqrt(np.mean(infl**2) / n))
        return a, se, a - z_one * se

    autoc, autoc_se, autoc_lower = area(toc, psi_toc)
    auqc, auqc_se, auqc_lower = area(qini, psi_qini)

    return UpliftCurves(
        grid=grid,
        thresholds=thresholds,
        tie_lambdas=lambdas,
        toc=toc,
        qini=qini,
        shares=shares,
        toc_variance=V_toc,
        qini_variance=V_qini,
        toc_band=toc_band,
        qini_band=qini_band,
        toc_lower_band=toc_lower,
        qini_lower_band=qini_lower,
        autoc=autoc,
        autoc_se=autoc_se,
        autoc_lower=autoc_lower,
        auqc=auqc,
        auqc_se=auqc_se,
        auqc_lower=auqc_lower,
        alpha=alpha,
        n=n,
    )
