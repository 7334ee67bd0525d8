"""Adaptive random-walk Metropolis sampling.

The proposal is Gaussian and centred at the current state. Until
``adapt_start`` steps have been taken its covariance is the configured
initial one. Afterwards it is ``s_d * cov(history) + s_d * eps * I``, with
the history covariance maintained by an online (Welford) update over every
state visited so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import posterior_log_density

__all__ = [
    "McmcError",
    "ChainConfig",
    "Chain",
    "OnlineCovariance",
    "mh_step",
    "adapt_covariance",
    "run_chain",
    "posterior_target",
    "histogram",
    "DesignComparison",
    "compare_designs",
]

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


class McmcError(RuntimeError):
    """Invalid chain state or configuration."""


@dataclass
class ChainConfig:
    total: int
    initial: np.ndarray
    burn_in: int = 0
    thin: int = 1
    proposal_cov: np.ndarray | None = None  # default 0.01 * I
    adapt_start: int = 1000
    s_d: float | None = None  # default 2.4^2 / n_theta
    eps: float = 1e-6
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        self.initial = np.atleast_1d(np.asarray(self.initial, dtype=float))
        n = self.initial.size
        if self.proposal_cov is None:
            self.proposal_cov = 0.01 * np.eye(n)
        cov = np.asarray(self.proposal_cov, dtype=float)
        if cov.ndim == 0 or cov.ndim == 1:
            cov = np.diag(np.broadcast_to(cov, (n,)).astype(float))
        self.proposal_cov = cov
        if self.s_d is None:
            self.s_d = 2.4**2 / n
        if self.total < 1:
            raise McmcError("total must be >= 1")
        if not 0 <= self.burn_in < self.total:
            raise McmcError("burn_in must satisfy 0 <= burn_in < total")
        if self.thin < 1:
            raise McmcError("thin must be >= 1")
        if self.eps <= 0 or self.s_d <= 0:
            raise McmcError("eps and s_d must be positive")
        if cov.shape != (n, n):
            raise McmcError(f"proposal covariance must be {n}x{n}")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise McmcError("proposal covariance is not positive definite") from exc
        if self.adapt_start < 2:
            raise McmcError("adapt_start must be >= 2")

    @property
    def n_retained(self) -> int:
        return (self.total - self.burn_in) // self.thin


@dataclass
class Chain:
    samples: np.ndarray  # (n_retained, n_theta)
    acceptance_rate: float
    accepted: int
    steps: int
    final_cov: np.ndarray
    log_density: np.ndarray = field(repr=False, default=None)

    @property
    def mean(self):
        return self.samples.mean(axis=0)

    @property
    def sd(self):
        return self.samples.std(axis=0, ddof=1) if self.samples.shape[0] > 1 else np.zeros(self.samples.shape[1])

    @property
    def cov(self):
        return np.atleast_2d(np.cov(self.samples, rowvar=False))

    def summary(self) -> dict:
        q = np.quantile(self.samples, QUANTILES, axis=0)
        params = []
        for i in range(self.samples.shape[1]):
            params.append(dict(
                index=i + 1,
                mean=float(self.mean[i]),
                sd=float(self.sd[i]),
                quantiles={str(p): float(v) for p, v in zip(QUANTILES, q[:, i])},
            ))
        return dict(acceptance_rate=self.acceptance_rate, retained=int(self.samples.shape[0]),
                    steps=self.steps, parameters=params)


class OnlineCovariance:
    """Running mean and covariance (Welford's rank-one update)."""

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self._m2 += np.outer(delta, x - self.mean)

    def covariance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self._m2)
        c = self._m2 / (self.n - 1)
        return 0.5 * (c + c.T)


def adapt_covariance(history, s_d: float, eps: float) -> np.ndarray:
    """``s_d * cov(history) + s_d * eps * I`` (sample covariance, ``ddof=1``)."""
    h = np.asarray(history, dtype=float)
    h = h.reshape(h.shape[0], -1)
    n = h.shape[1]
    c = np.atleast_2d(np.cov(h, rowvar=False)) if h.shape[0] > 1 else np.zeros((n, n))
    return s_d * c + s_d * eps * np.eye(n)


def _step(target, theta, logp, chol, rng):
    prop = theta + chol @ rng.standard_normal(theta.size)
    lp = float(target(prop))
    if lp == math.inf or math.isnan(lp):
        raise McmcError(f"target returned {lp} at {prop.tolist()}")
    if lp >= logp or math.log(rng.random()) < lp - logp:
        return prop, lp, True
    return theta, logp, False


def mh_step(target: Callable, theta, proposal_cov, rng: np.random.Generator):
    """One Metropolis step with a symmetric Gaussian proposal.

    Returns ``(theta_next, accepted)``; a rejected step returns ``theta``
    itself.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    logp = float(target(theta))
    if not math.isfinite(logp):
        raise McmcError(f"target is not finite at the current state {theta.tolist()}")
    chol = np.linalg.cholesky(np.atleast_2d(proposal_cov))
    nxt, _, acc = _step(target, theta, logp, chol, rng)
    return nxt, acc


def run_chain(target: Callable, config: ChainConfig) -> Chain:
    """Run an (adaptive) Metropolis chain of ``config.total`` steps.

    Step ``t = 1..total`` produces state ``theta_t``. States with
    ``t > burn_in`` and ``(t - burn_in) % thin == 0`` are retained, which
    gives ``floor((total - burn_in) / thin)`` samples.
    """
    rng = np.random.default_rng(config.seed)
    theta = config.initial.copy()
    logp = float(target(theta))
    if not math.isfinite(logp):
        raise McmcError(f"target is not finite at the initial state {theta.tolist()}")
    n = theta.size
    chol = np.linalg.cholesky(config.proposal_cov)
    hist = OnlineCovariance(n)
    hist.update(theta)
    reg = config.eps * np.eye(n)
    kept = np.empty((config.n_retained, n))
    kept_lp = np.empty(config.n_retained)
    cov = config.proposal_cov
    accepted = 0
    j = 0
    for t in range(1, config.total + 1):
        theta, logp, acc = _step(target, theta, logp, chol, rng)
        accepted += acc
        hist.update(theta)
        if config.adapt and hist.n >= config.adapt_start:
            cov = config.s_d * (hist.covariance() + reg)
            chol = np.linalg.cholesky(cov)
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            kept[j] = theta
            kept_lp[j] = logp
            j += 1
    return Chain(kept, accepted / config.total, accepted, config.total, cov, kept_lp)


def posterior_target(model, lik, prior, y, d) -> Callable:
    """Unnormalised log posterior ``theta -> log p(y|theta,d) + log p(theta)``."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    return lambda theta: posterior_log_density(model, lik, prior, y, d, theta)


def histogram(samples, bins: int = 30, ranges=None):
    """Per-parameter histograms as a list of ``(edges, counts)``."""
    s = np.asarray(samples, dtype=float)
    s = s.reshape(s.shape[0], -1)
    out = []
    for i in range(s.shape[1]):
        rng_i = None if ranges is None else ranges[i]
        counts, edges = np.histogram(s[:, i], bins=bins, range=rng_i)
        out.append((edges, counts))
    return out


def _overlap(a, b, bins=30):
    lo = min(np.quantile(a, 0.005), np.quantile(b, 0.005))
    hi = max(np.quantile(a, 0.995), np.quantile(b, 0.995))
    if not hi > lo:
        return 1.0
    pa, _ = np.histogram(a, bins=bins, range=(lo, hi))
    pb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    return float(np.minimum(pa / max(pa.sum(), 1), pb / max(pb.sum(), 1)).sum())


@dataclass
class DesignComparison:
    chain_a: Chain
    chain_b: Chain
    prior_sd: np.ndarray
    sd_ratio: np.ndarray  # sd_A / sd_B per parameter
    ratio_a_prior: np.ndarray
    ratio_b_prior: np.ndarray
    overlap_a: np.ndarray  # histogram overlap of posterior A with the prior
    overlap_b: np.ndarray

    def records(self):
        for i in range(self.sd_ratio.size):
            yield dict(index=i + 1, prior_sd=float(self.prior_sd[i]),
                       sd_a=float(self.chain_a.sd[i]), sd_b=float(self.chain_b.sd[i]),
                       sd_ratio=float(self.sd_ratio[i]),
                       ratio_a_prior=float(self.ratio_a_prior[i]), ratio_b_prior=float(self.ratio_b_prior[i]),
                       overlap_a=float(self.overlap_a[i]), overlap_b=float(self.overlap_b[i]))


def compare_designs(model, lik, prior, y_a, d_a, y_b, d_b, config: ChainConfig,
                    config_b: ChainConfig | None = None) -> DesignComparison:
    """Sample the posteriors under two designs and compare their spread.

    ``config_b`` defaults to ``config``. Prior reference draws for the
    overlap statistic use the chain seed.
    """
    config_b = config_b or config
    ca = run_chain(posterior_target(model, lik, prior, y_a, d_a), config)
    cb = run_chain(posterior_target(model, lik, prior, y_b, d_b), config_b)
    prior_sd = np.asarray(prior.std(), dtype=float)
    draws = prior.sample(np.random.default_rng(config.seed), max(ca.samples.shape[0], 1000))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = ca.sd / cb.sd
    return DesignComparison(
        ca, cb, prior_sd, ratio, ca.sd / prior_sd, cb.sd / prior_sd,
        np.array([_overlap(ca.samples[:, i], draws[:, i]) for i in range(prior_sd.size)]),
        np.array([_overlap(cb.samples[:, i], draws[:, i]) for i in range(prior_sd.size)]),
    )
