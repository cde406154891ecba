"""Core domain types for the change-plane Cox model.

The model splits the population across the hyperplane V + X'psi = 0: the
hazard multiplier is exp(Z'beta) on one side and exp(Z'beta + U'gamma) on
the other. The coefficient of V is normalized to 1 and never stored. All
types here are immutable and all functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import (
    DimensionMismatchError,
    InvalidArgumentError,
    NoEventsError,
)

GAUSSIAN_CDF = "standard-normal-cdf"

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _as_vector(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Observation:
    """One subject's censored survival record.

    time is the censored survival time min(T, C); status is 1 for an
    observed event and 0 for censoring. z, u are the covariates carrying
    the common and the subgroup-specific effect; v is the scalar
    classification covariate with its coefficient normalized to 1; x holds
    the remaining classification covariates.
    """

    time: float
    status: int
    z: np.ndarray
    u: np.ndarray
    v: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", _as_vector(self.z, "z"))
        object.__setattr__(self, "u", _as_vector(self.u, "u"))
        object.__setattr__(self, "x", _as_vector(self.x, "x"))
        if not np.isfinite(self.time) or self.time < 0:
            raise InvalidArgumentError(f"time must be finite and >= 0, got {self.time}")
        if self.status not in (0, 1):
            raise InvalidArgumentError(f"status must be 0 or 1, got {self.status}")

    @property
    def dims(self):
        return (len(self.z), len(self.u), len(self.x))


class Dataset:
    """An immutable sample of Observations stored column-wise.

    Arrays are kept read-only; the time-sorted permutation and tie-group
    boundaries are precomputed because every likelihood quantity walks the
    risk sets in time order.
    """

    __slots__ = ("time", "status", "z", "u", "v", "x", "n", "dims",
                 "sort_index", "_group_start")

    def __init__(self, time, status, z, u, v, x):
        time = np.asarray(time, dtype=float)
        status = np.asarray(status)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.asarray(v, dtype=float)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = time.shape[0]
        if z.shape[0] != n and z.shape[1] == n:
            z = z.T
        if u.shape[0] != n and u.shape[1] == n:
            u = u.T
        if x.shape[0] != n and x.shape[1] == n:
            x = x.T
        for name, arr in (("status", status), ("v", v)):
            if arr.shape != (n,):
                raise DimensionMismatchError(f"{name} must have shape ({n},), got {arr.shape}")
        for name, arr in (("z", z), ("u", u), ("x", x)):
            if arr.shape[0] != n:
                raise DimensionMismatchError(f"{name} must have {n} rows, got {arr.shape}")
        if np.any(time < 0) or not np.all(np.isfinite(time)):
            raise InvalidArgumentError("times must be finite and nonnegative")
        if not np.all(np.isin(status, (0, 1))):
            raise InvalidArgumentError("status entries must be 0 or 1")
        status = status.astype(np.int64)
        if not np.any(status == 1):
            raise NoEventsError("dataset has no events (all observations censored)")

        self.time = time
        self.status = status
        self.z = z
        self.u = u
        self.v = v
        self.x = x
        self.n = n
        self.dims = (z.shape[1], u.shape[1], x.shape[1])
        self.sort_index = np.argsort(time, kind="stable")
        ts = time[self.sort_index]
        # first sorted position sharing each time: all ties are at risk
        # before any of their events is processed
        self._group_start = np.searchsorted(ts, ts, side="left")
        for arr in (self.time, self.status, self.z, self.u, self.v, self.x,
                    self.sort_index, self._group_start):
            arr.setflags(write=False)

    @classmethod
    def from_observations(cls, observations):
        obs = list(observations)
        if not obs:
            raise InvalidArgumentError("empty dataset")
        dims = obs[0].dims
        for i, o in enumerate(obs):
            if o.dims != dims:
                raise DimensionMismatchError(
                    f"observation {i} has dims {o.dims}, expected {dims}")
        return cls(
            time=[o.time for o in obs],
            status=[o.status for o in obs],
            z=np.array([o.z for o in obs]).reshape(len(obs), dims[0]),
            u=np.array([o.u for o in obs]).reshape(len(obs), dims[1]),
            v=[o.v for o in obs],
            x=np.array([o.x for o in obs]).reshape(len(obs), dims[2]),
        )

    def observation(self, i) -> Observation:
        return Observation(time=float(self.time[i]), status=int(self.status[i]),
                           z=self.z[i], u=self.u[i], v=float(self.v[i]), x=self.x[i])

    def __len__(self):
        return self.n

    def __iter__(self):
        return (self.observation(i) for i in range(self.n))


@dataclass(frozen=True)
class ThetaParams:
    """The finite-dimensional parameter theta = (beta, gamma, psi).

    xi = (beta, gamma) is the regression block; psi parameterizes the
    classification plane V + X'psi = 0 (V's own coefficient is 1 and is
    never stored).
    """

    beta: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_vector(self.beta, "beta"))
        object.__setattr__(self, "gamma", _as_vector(self.gamma, "gamma"))
        object.__setattr__(self, "psi", _as_vector(self.psi, "psi"))

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma])

    @property
    def dims(self):
        return (len(self.beta), len(self.gamma), len(self.psi))

    def with_xi(self, xi) -> "ThetaParams":
        xi = np.asarray(xi, dtype=float)
        p1 = len(self.beta)
        return ThetaParams(beta=xi[:p1], gamma=xi[p1:], psi=self.psi)

    def with_psi(self, psi) -> "ThetaParams":
        return ThetaParams(beta=self.beta, gamma=self.gamma, psi=np.asarray(psi, dtype=float))

    def check_against(self, ds: Dataset):
        if self.dims != ds.dims:
            raise DimensionMismatchError(
                f"parameter dims {self.dims} do not match dataset dims {ds.dims}")


@dataclass(frozen=True)
class KernelSpec:
    """Smoothing kernel and bandwidth for the smoothed indicator.

    Only the standard normal CDF ships; the kind field exists so that
    alternative monotone CDF-like kernels can be added without touching
    call sites.
    """

    bandwidth: float
    kind: str = GAUSSIAN_CDF

    def __post_init__(self):
        if self.kind != GAUSSIAN_CDF:
            raise InvalidArgumentError(f"unknown kernel kind: {self.kind!r}")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise InvalidArgumentError(f"bandwidth must be positive, got {self.bandwidth}")


def kernel_cdf(s, kernel: KernelSpec | None = None):
    """Kernel CDF evaluated at s (scalar or array); values lie in [0, 1]."""
    return ndtr(s)


def kernel_pdf(s, kernel: KernelSpec | None = None):
    """Derivative of kernel_cdf at s."""
    s = np.asarray(s, dtype=float)
    out = np.exp(-0.5 * s * s) / _SQRT_2PI
    return out if out.ndim else float(out)


def default_bandwidth(n: int) -> float:
    """Bandwidth rule (log n)^2 / n with the natural logarithm."""
    if n < 2:
        raise InvalidArgumentError(f"bandwidth rule needs n >= 2, got {n}")
    return float(np.log(n) ** 2 / n)


def subgroup_indicator(obs: Observation, psi) -> int:
    """1 iff V + X'psi >= 0 (boundary counts as in-group)."""
    psi = _as_vector(psi, "psi")
    if len(psi) != len(obs.x):
        raise DimensionMismatchError(
            f"psi has length {len(psi)}, x has length {len(obs.x)}")
    return int(obs.v + obs.x @ psi >= 0.0)


def eta(obs: Observation, theta: ThetaParams) -> float:
    """Linear predictor Z'beta + U'gamma 1{V + X'psi >= 0}."""
    _check_obs_dims(obs, theta)
    ind = 1.0 if obs.v + obs.x @ theta.psi >= 0.0 else 0.0
    return float(obs.z @ theta.beta + (obs.u @ theta.gamma) * ind)


def eta_smoothed(obs: Observation, theta: ThetaParams, kernel: KernelSpec) -> float:
    """Smoothed linear predictor with the indicator replaced by the kernel
    CDF at scale kernel.bandwidth."""
    _check_obs_dims(obs, theta)
    s = (obs.v + obs.x @ theta.psi) / kernel.bandwidth
    return float(obs.z @ theta.beta + (obs.u @ theta.gamma) * kernel_cdf(s, kernel))


def _check_obs_dims(obs: Observation, theta: ThetaParams):
    if obs.dims != theta.dims:
        raise DimensionMismatchError(
            f"observation dims {obs.dims} do not match parameter dims {theta.dims}")
