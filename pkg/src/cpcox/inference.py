"""Plug-in covariance, confidence intervals, and subgroup metrics.

The asymptotic covariance of the regression block xi is estimated by
inverting the negated Hessian of the smoothed log partial likelihood at
the fit. No standard error is available for psi: only its convergence
rate is known, so psi is deliberately reported without one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import likelihood as lk
from .errors import DimensionMismatchError, InvalidArgumentError, SingularInformationError
from .model import Dataset, KernelSpec, ThetaParams, kernel_cdf, kernel_pdf

# reject the information matrix when the smallest eigenvalue falls below
# this fraction of the largest
_RCOND = 1e-10


@dataclass(frozen=True)
class ConfidenceInterval:
    name: str
    estimate: float
    std_error: float
    lower: float
    upper: float
    level: float


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF, by bisection bracketing plus
    Newton polishing on the same erf-based CDF used everywhere else."""
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"quantile level must be in (0,1), got {p}")
    lo, hi = -40.0, 40.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if kernel_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(8):
        d = kernel_pdf(x)
        if d <= 0.0:
            break
        x -= (kernel_cdf(x) - p) / d
    return float(x)


def covariance_xi(ds: Dataset, theta_hat: ThetaParams,
                  kernel: KernelSpec) -> np.ndarray:
    """Inverse of the negated xi-Hessian at the fit. This matrix is on the
    sqrt(n)-scale: divide by n (as confidence_interval does) for the
    covariance of the estimate itself."""
    neg_h = -lk.hessian_xi_xi(ds, theta_hat, kernel)
    eigvals, eigvecs = np.linalg.eigh(neg_h)
    if eigvals[-1] <= 0.0 or eigvals[0] < _RCOND * eigvals[-1]:
        cond = np.inf if eigvals[0] <= 0 else eigvals[-1] / eigvals[0]
        raise SingularInformationError(
            f"information matrix is singular or indefinite "
            f"(eigenvalues in [{eigvals[0]:.3e}, {eigvals[-1]:.3e}])",
            condition_number=cond)
    return (eigvecs / eigvals) @ eigvecs.T


def confidence_interval(estimate, cov, n: int, level: float = 0.95,
                        names=None) -> list[ConfidenceInterval]:
    """Wald intervals estimate_k +/- z * sqrt(cov_kk / n)."""
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"level must be in (0,1), got {level}")
    estimate = np.atleast_1d(np.asarray(estimate, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (len(estimate), len(estimate)):
        raise DimensionMismatchError(
            f"covariance shape {cov.shape} does not match {len(estimate)} estimates")
    z = normal_quantile(0.5 + level / 2.0)
    out = []
    for idx, est in enumerate(estimate):
        var = cov[idx, idx] / n
        if var < 0:
            raise InvalidArgumentError(f"negative variance for component {idx}")
        se = float(np.sqrt(var))
        name = names[idx] if names is not None else f"xi_{idx}"
        out.append(ConfidenceInterval(
            name=name, estimate=float(est), std_error=se,
            lower=float(est - z * se), upper=float(est + z * se), level=level))
    return out


def predict_subgroup(ds: Dataset, psi_hat) -> np.ndarray:
    """Per-subject membership 1{V + X'psi >= 0} for the fitted plane."""
    psi_hat = np.asarray(psi_hat, dtype=float)
    if psi_hat.shape != (ds.dims[2],):
        raise DimensionMismatchError(
            f"psi has shape {psi_hat.shape}, expected ({ds.dims[2]},)")
    return (ds.v + ds.x @ psi_hat >= 0.0).astype(np.int64)


def classification_error(ds: Dataset, psi_hat, psi_true) -> float:
    """Fraction of subjects whose membership under psi_hat disagrees with
    the membership under psi_true."""
    a = predict_subgroup(ds, psi_hat)
    b = predict_subgroup(ds, psi_true)
    return float(np.mean(a != b))
