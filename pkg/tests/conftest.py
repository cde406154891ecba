"""Shared fixtures and independent oracles.

Everything here is deliberately written against the formulas directly
(plain loops, direct summation) so the tests never share a code path
with the package internals they are checking.
"""

import math

import numpy as np
import pytest

from cpcox.model import Dataset, KernelSpec, ThetaParams


_ERF_COEF = [(-1.0) ** k / (math.factorial(k) * (2 * k + 1)) for k in range(80)]


def erf_series(z, terms=80):
    """Maclaurin series for erf, independent of every library erf."""
    total = 0.0
    zk = z
    z2 = z * z
    for k in range(terms):
        total += _ERF_COEF[k] * zk
        zk *= z2
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf_series(x):
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def normal_pdf_direct(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def naive_eta_smoothed(ds, theta, h):
    """Per-subject smoothed predictor by direct evaluation."""
    out = np.empty(ds.n)
    for i in range(ds.n):
        a = (ds.v[i] + ds.x[i] @ theta.psi) / h
        out[i] = ds.z[i] @ theta.beta + (ds.u[i] @ theta.gamma) * normal_cdf_series_clipped(a)
    return out


def normal_cdf_quadrature(a):
    """Composite-Simpson integral of the normal density from 0 to a."""
    b = min(abs(a), 9.0)
    m = 4001  # odd node count, step ~2.25e-3: Simpson error ~1e-14
    t = np.linspace(0.0, b, m)
    f = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    h = t[1] - t[0]
    integral = h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())
    return 0.5 + integral if a >= 0 else 0.5 - integral


def normal_cdf_series_clipped(a):
    # the Maclaurin series cancels catastrophically past |a| ~ 4; switch
    # to direct quadrature of the density there
    if abs(a) <= 4.0:
        return normal_cdf_series(a)
    return normal_cdf_quadrature(a)


def naive_slpl(ds, theta, h):
    """O(n^2) direct evaluation of the smoothed log partial likelihood."""
    eta = naive_eta_smoothed(ds, theta, h)
    total = 0.0
    for i in range(ds.n):
        if ds.status[i] == 1:
            at_risk = ds.time >= ds.time[i]
            total += eta[i] - np.log(np.sum(np.exp(eta[at_risk])) / ds.n)
    return total / ds.n


def naive_lpl(ds, theta):
    """O(n^2) direct evaluation of the unsmoothed log partial likelihood."""
    eta = np.empty(ds.n)
    for i in range(ds.n):
        ind = 1.0 if ds.v[i] + ds.x[i] @ theta.psi >= 0.0 else 0.0
        eta[i] = ds.z[i] @ theta.beta + (ds.u[i] @ theta.gamma) * ind
    total = 0.0
    for i in range(ds.n):
        if ds.status[i] == 1:
            at_risk = ds.time >= ds.time[i]
            total += eta[i] - np.log(np.sum(np.exp(eta[at_risk])) / ds.n)
    return total / ds.n


def fd_gradient(f, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2.0 * eps)
    return g


def random_dataset(rng, n, p1=1, p2=1, q=2, tie_fraction=0.0):
    """A random survival dataset with at least one event; optionally with
    exactly tied times."""
    time = rng.exponential(1.0, n)
    if tie_fraction > 0:
        k = max(2, int(tie_fraction * n))
        idx = rng.choice(n, size=k, replace=False)
        time[idx] = time[idx[0]]
    status = (rng.random(n) < 0.7).astype(int)
    status[rng.integers(0, n)] = 1
    return Dataset(
        time=time, status=status,
        z=rng.normal(size=(n, p1)), u=rng.normal(size=(n, p2)),
        v=rng.normal(size=n), x=rng.normal(size=(n, q)))


def random_theta(rng, p1=1, p2=1, q=2, scale=0.5):
    return ThetaParams(beta=scale * rng.normal(size=p1),
                       gamma=scale * rng.normal(size=p2),
                       psi=scale * rng.normal(size=q))


def cox_newton_oracle(time, status, z, tol=1e-12, max_iter=100):
    """Independent plain-Cox Newton solver (eta = Z'beta), written with
    direct O(n^2) risk-set sums."""
    time = np.asarray(time, float)
    status = np.asarray(status)
    z = np.atleast_2d(np.asarray(z, float))
    n, p = z.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        grad = np.zeros(p)
        hess = np.zeros((p, p))
        eta = z @ beta
        w = np.exp(eta)
        for i in range(n):
            if status[i] != 1:
                continue
            risk = time >= time[i]
            s0 = np.sum(w[risk])
            s1 = w[risk] @ z[risk]
            s2 = (z[risk] * w[risk, None]).T @ z[risk]
            grad += z[i] - s1 / s0
            hess -= s2 / s0 - np.outer(s1, s1) / s0 ** 2
        step = np.linalg.solve(-hess, grad)
        beta = beta + step
        if np.max(np.abs(grad)) < tol:
            break
    return beta


@pytest.fixture
def rng():
    return np.random.default_rng(20220209)


@pytest.fixture
def five_subject_dataset():
    """Fixed 5-subject dataset used by the likelihood value checks."""
    return Dataset(
        time=[0.5, 1.2, 1.2, 2.0, 3.1],
        status=[1, 1, 0, 1, 1],
        z=[[0.3], [-0.5], [1.1], [0.0], [0.7]],
        u=[[1.0], [0.2], [-0.4], [0.9], [-1.2]],
        v=[0.1, -0.3, 0.5, -0.05, 0.2],
        x=[[0.4, -0.2], [0.0, 0.3], [-0.6, 0.1], [0.2, 0.2], [0.5, -0.5]])


@pytest.fixture
def five_subject_theta():
    return ThetaParams(beta=[0.8], gamma=[0.5], psi=[0.4, 0.3])


@pytest.fixture
def kernel_02():
    return KernelSpec(bandwidth=0.2)
