"""Monte Carlo harness: data generation, replication, aggregation.

Each replication draws covariates and exponential-baseline survival times
from the change-plane hazard, fits the model, and records point
estimates, Wald interval hits for (beta, gamma), and the in-sample
classification error of the fitted plane. Replications use counter-based
random streams keyed by (seed, rep_id) so results are independent of
execution order and worker count.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import inference
from .errors import CpcoxError
from .model import Dataset, KernelSpec
from .optimizer import FitOptions, multistart_fit


@dataclass(frozen=True)
class SimConfig:
    """Configuration of the simulation study.

    The data-generating hazard is
    lambda * exp(Z beta + Z gamma 1{V + psi1 + X psi2 >= 0}) with
    Z ~ Bernoulli(z_p), V ~ N(v_mean, v_var), X ~ U(x_low, x_high), and a
    fixed censoring time. The plane intercept psi1 is carried as a
    constant-1 first column of the X matrix handed to the estimator, so
    the true classification parameter is psi0 = (psi1, psi2). The
    baseline hazard constant is configurable; with the default 1.0 and
    censor_time 15 censoring is negligible.
    """

    n: int = 200
    reps: int = 200
    beta: float = 0.8
    gamma: float = 1.0
    psi1: float = 0.4
    psi2: float = 0.3
    baseline_lambda: float = 1.0
    censor_time: float = 15.0
    z_p: float = 0.5
    v_mean: float = -2.0
    v_var: float = 4.0
    x_low: float = -0.5
    x_high: float = 0.5
    seed: int = 20220209
    level: float = 0.95
    fix_psi_at_truth: bool = False
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if self.baseline_lambda <= 0:
            raise ValueError("baseline_lambda must be positive")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0,1)")

    @property
    def psi_true(self) -> np.ndarray:
        return np.array([self.psi1, self.psi2])


def _stream(cfg: SimConfig, rep_id: int) -> np.random.Generator:
    key = np.array([cfg.seed, rep_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_dataset(cfg: SimConfig, rep_id: int):
    """Draw one replication. Returns (Dataset, truth) where truth holds
    the generating parameters and the true memberships."""
    rng = _stream(cfg, rep_id)
    n = cfg.n
    z = (rng.random(n) < cfg.z_p).astype(float)
    v = cfg.v_mean + np.sqrt(cfg.v_var) * rng.standard_normal(n)
    x = rng.uniform(cfg.x_low, cfg.x_high, n)
    member = (v + cfg.psi1 + x * cfg.psi2 >= 0.0).astype(float)
    eta = z * cfg.beta + z * cfg.gamma * member
    # inverse transform under the constant baseline hazard
    t_event = -np.log1p(-rng.random(n)) / (cfg.baseline_lambda * np.exp(eta))
    time = np.minimum(t_event, cfg.censor_time)
    status = (t_event <= cfg.censor_time).astype(int)
    ds = Dataset(
        time=time, status=status,
        z=z.reshape(-1, 1), u=z.reshape(-1, 1), v=v,
        x=np.column_stack([np.ones(n), x]),
    )
    truth = {
        "beta": cfg.beta, "gamma": cfg.gamma, "psi": cfg.psi_true,
        "membership": member.astype(np.int64),
    }
    return ds, truth


@dataclass(frozen=True)
class RepRecord:
    rep_id: int
    ok: bool
    converged: bool = False
    beta_hat: float | None = None
    gamma_hat: float | None = None
    psi_hat: tuple | None = None
    se_beta: float | None = None
    se_gamma: float | None = None
    ci_beta: tuple | None = None
    ci_gamma: tuple | None = None
    hit_beta: bool | None = None
    hit_gamma: bool | None = None
    mce: float | None = None
    loglik: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fit_options(cfg: SimConfig) -> FitOptions:
    opts = cfg.fit
    if cfg.fix_psi_at_truth:
        opts = dataclasses.replace(
            opts, psi_starts=(tuple(cfg.psi_true),), ascent_max_iter=0)
    return opts


def run_replication(cfg: SimConfig, rep_id: int) -> RepRecord:
    """Generate, fit, and score a single replication. Fit failures are
    recorded, never raised."""
    ds, truth = generate_dataset(cfg, rep_id)
    opts = _fit_options(cfg)
    kernel = KernelSpec(bandwidth=opts.resolve_bandwidth(ds.n))
    try:
        res = multistart_fit(ds, kernel, opts)
        cov = inference.covariance_xi(ds, res.theta_hat, kernel)
    except CpcoxError as exc:
        return RepRecord(rep_id=rep_id, ok=False, error=f"{type(exc).__name__}: {exc}")
    cis = inference.confidence_interval(
        res.theta_hat.xi, cov, ds.n, level=cfg.level, names=["beta", "gamma"])
    ci_b, ci_g = cis[0], cis[1]
    mce = inference.classification_error(ds, res.theta_hat.psi, truth["psi"])
    return RepRecord(
        rep_id=rep_id, ok=True, converged=bool(res.converged),
        beta_hat=float(res.theta_hat.beta[0]),
        gamma_hat=float(res.theta_hat.gamma[0]),
        psi_hat=tuple(float(p) for p in res.theta_hat.psi),
        se_beta=ci_b.std_error, se_gamma=ci_g.std_error,
        ci_beta=(ci_b.lower, ci_b.upper), ci_gamma=(ci_g.lower, ci_g.upper),
        hit_beta=bool(ci_b.lower <= truth["beta"] <= ci_b.upper),
        hit_gamma=bool(ci_g.lower <= truth["gamma"] <= ci_g.upper),
        mce=mce, loglik=float(res.loglik),
    )


@dataclass(frozen=True)
class SimReport:
    config: dict
    records: tuple[RepRecord, ...]
    aggregates: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "aggregates": self.aggregates,
        }


def _mean_sd(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return None, None
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), sd


def aggregate_records(cfg: SimConfig, records) -> dict:
    """Coverage over converged replications (and inclusively over all
    successful fits), mean MCE over all successful fits, convergence and
    failure rates, and moments of the estimates."""
    ok = [r for r in records if r.ok]
    conv = [r for r in ok if r.converged]

    def coverage(rs, attr):
        if not rs:
            return None
        return float(np.mean([getattr(r, attr) for r in rs]))

    mean_beta, sd_beta = _mean_sd([r.beta_hat for r in ok])
    mean_gamma, sd_gamma = _mean_sd([r.gamma_hat for r in ok])
    psi_err = [float(np.linalg.norm(np.array(r.psi_hat) - cfg.psi_true)) for r in ok]
    return {
        "n": cfg.n,
        "gamma_true": cfg.gamma,
        "reps": cfg.reps,
        "n_ok": len(ok),
        "n_converged": len(conv),
        "convergence_rate": len(conv) / len(records) if records else None,
        "coverage_beta": coverage(conv, "hit_beta"),
        "coverage_gamma": coverage(conv, "hit_gamma"),
        "coverage_beta_all": coverage(ok, "hit_beta"),
        "coverage_gamma_all": coverage(ok, "hit_gamma"),
        "mean_mce": float(np.mean([r.mce for r in ok])) if ok else None,
        "median_psi_error": float(np.median(psi_err)) if psi_err else None,
        "mean_beta_hat": mean_beta, "sd_beta_hat": sd_beta,
        "mean_gamma_hat": mean_gamma, "sd_gamma_hat": sd_gamma,
        "mean_se_beta": _mean_sd([r.se_beta for r in ok])[0],
        "mean_se_gamma": _mean_sd([r.se_gamma for r in ok])[0],
    }


def _worker(args):
    cfg, rep_id = args
    return run_replication(cfg, rep_id)


def run_study(cfg: SimConfig, threads: int = 1) -> SimReport:
    """Run cfg.reps replications and aggregate. The result is a pure
    function of cfg: worker count only changes the wall clock."""
    rep_ids = list(range(cfg.reps))
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_worker, [(cfg, r) for r in rep_ids],
                                    chunksize=max(1, cfg.reps // (4 * threads))))
    else:
        records = [run_replication(cfg, r) for r in rep_ids]
    records.sort(key=lambda r: r.rep_id)
    return SimReport(
        config=_config_dict(cfg),
        records=tuple(records),
        aggregates=aggregate_records(cfg, records),
    )


def _config_dict(cfg: SimConfig) -> dict:
    d = dataclasses.asdict(cfg)
    fit = d.pop("fit")
    if fit.get("psi_starts") is not None:
        fit["psi_starts"] = [list(map(float, s)) for s in fit["psi_starts"]]
    d["fit"] = fit
    return d
