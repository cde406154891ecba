"""Log partial likelihoods, analytic derivatives, and the baseline hazard.

The smoothed log partial likelihood replaces the subgroup indicator inside
the linear predictor with a kernel CDF at bandwidth h. Everything here
walks the risk sets once over the time-sorted order: suffix accumulation
gives all per-event aggregates in O(n) after sorting. Tied times are
grouped so that every subject with T_j == T_i is at risk for subject i's
event, which is exactly the Y_j(T_i) = 1{T_j >= T_i} semantics (Breslow
tie handling; no Efron correction).

Scaling conventions: the likelihood value, scores, and Hessians all carry
the leading 1/n, and the risk-set sum inside the log carries its own 1/n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, KernelSpec, ThetaParams, kernel_cdf, kernel_pdf


def _suffix_cumsum(arr):
    return np.cumsum(arr[::-1], axis=0)[::-1]


def _linear_predictors(ds: Dataset, theta: ThetaParams, kernel: KernelSpec):
    """Per-subject smoothed predictor eta_n plus the pieces reused by the
    derivative formulas: the kernel argument a, K(a), K'(a), and U'gamma."""
    a = (ds.v + ds.x @ theta.psi) / kernel.bandwidth
    k = kernel_cdf(a, kernel)
    ug = ds.u @ theta.gamma
    eta_n = ds.z @ theta.beta + ug * k
    return eta_n, a, k, ug


def _hard_predictors(ds: Dataset, theta: ThetaParams):
    ind = (ds.v + ds.x @ theta.psi >= 0.0).astype(float)
    return ds.z @ theta.beta + (ds.u @ theta.gamma) * ind


def _log_risk_sums(eta_sorted, group_start, n):
    """log( n^-1 sum_{T_j >= T_i} exp(eta_j) ) for every sorted position.

    Fast path: one global max shift plus a suffix cumsum. When that
    underflows (an at-risk set whose predictors all sit far below the
    global max), fall back to a running log-sum-exp, which stabilizes
    each risk set at its own maximum."""
    m = float(np.max(eta_sorted))
    s = _suffix_cumsum(np.exp(eta_sorted - m))[group_start]
    if np.all(s > 0.0) and np.all(np.isfinite(s)):
        return m + np.log(s) - np.log(n)
    with np.errstate(invalid="ignore"):
        lse = np.logaddexp.accumulate(eta_sorted[::-1])[::-1]
    return lse[group_start] - np.log(n)


def _stable_suffix_sums(eta_s, group_start, stacks):
    """Rescaled suffix sums used when the vectorized single-shift path
    underflows. For each sorted position p, returns sums over the risk set
    {j : position >= group_start[p]} of exp(eta_j - m_p) and of
    stack_j * exp(eta_j - m_p), where m_p is the running at-risk maximum.
    Only ratios across the returned tables are meaningful."""
    n = len(eta_s)
    s0 = np.empty(n)
    outs = [np.empty((n,) + st.shape[1:]) for st in stacks]
    m = -np.inf
    acc0 = 0.0
    accs = [np.zeros(st.shape[1:]) for st in stacks]
    i = n - 1
    while i >= 0:
        g = group_start[i]
        for j in range(i, g - 1, -1):
            e = eta_s[j]
            if e > m:
                c = np.exp(m - e) if np.isfinite(m) else 0.0
                acc0 *= c
                for acc in accs:
                    acc *= c
                m = e
            w = np.exp(e - m)
            acc0 += w
            for acc, st in zip(accs, stacks):
                acc += st[j] * w
        s0[g:i + 1] = acc0
        for out, acc in zip(outs, accs):
            out[g:i + 1] = acc
        i = g - 1
    return s0, outs


def _suffix_ratio_tables(eta_s, group_start, stacks):
    """Suffix sums of exp(eta) and stack*exp(eta) at every sorted
    position's risk-set boundary, in a common arbitrary scale (only ratios
    are meaningful). Falls back to per-risk-set rescaling on underflow."""
    m = float(np.max(eta_s))
    w = np.exp(eta_s - m)
    s0 = _suffix_cumsum(w)[group_start]
    if np.all(s0 > 0.0) and np.all(np.isfinite(s0)):
        outs = [
            _suffix_cumsum(st * w.reshape((-1,) + (1,) * (st.ndim - 1)))[group_start]
            for st in stacks
        ]
        return s0, outs
    return _stable_suffix_sums(eta_s, group_start, stacks)


def log_partial_likelihood(ds: Dataset, theta: ThetaParams) -> float:
    """Scaled log partial likelihood l_n(theta) with the hard indicator."""
    theta.check_against(ds)
    eta = _hard_predictors(ds, theta)
    order = ds.sort_index
    eta_s = eta[order]
    log_denom = _log_risk_sums(eta_s, ds._group_start, ds.n)
    delta_s = ds.status[order]
    return float(np.sum(delta_s * (eta_s - log_denom)) / ds.n)


def smoothed_log_partial_likelihood(ds: Dataset, theta: ThetaParams,
                                    kernel: KernelSpec) -> float:
    """Smoothed log partial likelihood l*_n(theta)."""
    theta.check_against(ds)
    eta_n, _, _, _ = _linear_predictors(ds, theta, kernel)
    order = ds.sort_index
    eta_s = eta_n[order]
    log_denom = _log_risk_sums(eta_s, ds._group_start, ds.n)
    delta_s = ds.status[order]
    return float(np.sum(delta_s * (eta_s - log_denom)) / ds.n)


def _phi(ds: Dataset, k):
    """phi^(n)_i = (Z_i', U_i' K(a_i))' stacked as an (n, p1+p2) matrix."""
    return np.concatenate([ds.z, ds.u * k[:, None]], axis=1)


def score_xi(ds: Dataset, theta: ThetaParams, kernel: KernelSpec) -> np.ndarray:
    """Gradient of l*_n with respect to xi = (beta, gamma)."""
    theta.check_against(ds)
    eta_n, _, k, _ = _linear_predictors(ds, theta, kernel)
    order = ds.sort_index
    eta_s = eta_n[order]
    phi_s = _phi(ds, k)[order]
    s0, (s1,) = _suffix_ratio_tables(eta_s, ds._group_start, [phi_s])
    ev = ds.status[order] == 1
    terms = phi_s[ev] - s1[ev] / s0[ev, None]
    return terms.sum(axis=0) / ds.n


def _psi_weights(ds: Dataset, a, ug, kernel: KernelSpec):
    """(U_i'gamma) K'(a_i) / h and its product with X_i (the per-subject
    psi-score term)."""
    c = ug * kernel_pdf(a, kernel) / kernel.bandwidth
    return c, ds.x * c[:, None]


def score_psi(ds: Dataset, theta: ThetaParams, kernel: KernelSpec) -> np.ndarray:
    """Gradient of l*_n with respect to psi."""
    theta.check_against(ds)
    eta_n, a, _, ug = _linear_predictors(ds, theta, kernel)
    _, psi_term = _psi_weights(ds, a, ug, kernel)
    order = ds.sort_index
    eta_s = eta_n[order]
    psi_s = psi_term[order]
    s0, (spsi,) = _suffix_ratio_tables(eta_s, ds._group_start, [psi_s])
    ev = ds.status[order] == 1
    terms = psi_s[ev] - spsi[ev] / s0[ev, None]
    return terms.sum(axis=0) / ds.n


def hessian_xi_xi(ds: Dataset, theta: ThetaParams, kernel: KernelSpec) -> np.ndarray:
    """Hessian of l*_n in xi; negative semidefinite by construction."""
    theta.check_against(ds)
    eta_n, _, k, _ = _linear_predictors(ds, theta, kernel)
    order = ds.sort_index
    eta_s = eta_n[order]
    phi_s = _phi(ds, k)[order]
    phi2_s = phi_s[:, :, None] * phi_s[:, None, :]
    s0, (s1, s2) = _suffix_ratio_tables(eta_s, ds._group_start, [phi_s, phi2_s])
    ev = ds.status[order] == 1
    r = s1[ev] / s0[ev, None]
    terms = r[:, :, None] * r[:, None, :] - s2[ev] / s0[ev, None, None]
    h = terms.sum(axis=0) / ds.n
    return 0.5 * (h + h.T)


def hessian_xi_psi(ds: Dataset, theta: ThetaParams, kernel: KernelSpec) -> np.ndarray:
    """Cross Hessian of l*_n: rows xi = (beta, gamma), columns psi."""
    theta.check_against(ds)
    p1, p2, q = ds.dims
    eta_n, a, k, ug = _linear_predictors(ds, theta, kernel)
    _, psi_term = _psi_weights(ds, a, ug, kernel)
    phi = _phi(ds, k)
    # d phi / d psi': zero block for beta rows, U X'/h K'(a) for gamma rows
    kp_h = kernel_pdf(a, kernel) / kernel.bandwidth
    ups = np.zeros((ds.n, p1 + p2, q))
    ups[:, p1:, :] = ds.u[:, :, None] * kp_h[:, None, None] * ds.x[:, None, :]

    order = ds.sort_index
    eta_s = eta_n[order]
    phi_s = phi[order]
    psi_s = psi_term[order]
    a_stack = (ups + phi[:, :, None] * psi_term[:, None, :])[order]
    s0, (s1, spsi, sa) = _suffix_ratio_tables(
        eta_s, ds._group_start, [phi_s, psi_s, a_stack])
    ev = ds.status[order] == 1
    s0e = s0[ev]
    terms = (ups[order][ev]
             - sa[ev] / s0e[:, None, None]
             + (s1[ev][:, :, None] * spsi[ev][:, None, :]) / (s0e ** 2)[:, None, None])
    return terms.sum(axis=0) / ds.n


@dataclass(frozen=True)
class RiskSetAggregates:
    """Risk-set sums at each event time in absolute scale: s0 is the
    scaled count-weighted hazard mass n^-1 sum Y_j exp(eta_n_j); s1, s2
    weight it by phi and phi-outer-products; s_psi by the psi-score term."""

    event_times: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s_psi: np.ndarray


def risk_set_aggregates(ds: Dataset, theta: ThetaParams,
                        kernel: KernelSpec) -> RiskSetAggregates:
    theta.check_against(ds)
    eta_n, a, k, ug = _linear_predictors(ds, theta, kernel)
    _, psi_term = _psi_weights(ds, a, ug, kernel)
    phi = _phi(ds, k)
    order = ds.sort_index
    eta_s = eta_n[order]
    phi_s = phi[order]
    phi2_s = phi_s[:, :, None] * phi_s[:, None, :]
    psi_s = psi_term[order]
    # absolute scale: accumulate exp(eta - m) with the global max shift,
    # then multiply the shift back in
    m = float(np.max(eta_s))
    w = np.exp(eta_s - m)
    gs = ds._group_start
    s0 = _suffix_cumsum(w)[gs] * np.exp(m) / ds.n
    s1 = _suffix_cumsum(phi_s * w[:, None])[gs] * np.exp(m) / ds.n
    s2 = _suffix_cumsum(phi2_s * w[:, None, None])[gs] * np.exp(m) / ds.n
    s_psi = _suffix_cumsum(psi_s * w[:, None])[gs] * np.exp(m) / ds.n
    ev = ds.status[order] == 1
    return RiskSetAggregates(
        event_times=ds.time[order][ev],
        s0=s0[ev], s1=s1[ev], s2=s2[ev], s_psi=s_psi[ev])


def breslow_cumulative_hazard(ds: Dataset, theta: ThetaParams,
                              kernel: KernelSpec, t: float) -> float:
    """Step-function baseline cumulative hazard evaluated at t: the jump
    at each event time T_i is 1 / sum_{T_j >= T_i} exp(eta_n_j)."""
    theta.check_against(ds)
    eta_n, _, _, _ = _linear_predictors(ds, theta, kernel)
    order = ds.sort_index
    eta_s = eta_n[order]
    lse = np.logaddexp.accumulate(eta_s[::-1])[::-1][ds._group_start]
    ev = ds.status[order] == 1
    event_times = ds.time[order][ev]
    increments = np.exp(-lse[ev])
    return float(np.sum(increments[event_times <= t]))
