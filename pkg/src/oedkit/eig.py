"""Monte Carlo estimators of the expected information gain.

Three estimators share one sampling scheme:

* ``lower-bound-core``: unbiased estimate of ``int p(y|d)^2 dy``, the mean
  likelihood over ``N x M`` (outer data, inner parameter) pairs.
* ``lower-bound``: the information-gain lower bound
  ``-H[p(y|theta,d)] - log(core)``.
* ``dlmc``: the nested (double-loop) estimator with ``O(1/M)`` bias.

For ``i = 1..N`` an outer parameter ``theta_i`` is drawn from the prior and
``y_i = G(theta_i, d) + eps_i``. Inner parameters are either fresh for each
``i`` (``inner="fresh"``, the default) or one set of ``M`` draws reused by
every ``i`` (``inner="shared"``). All densities are combined in log space.

Random streams derive from ``SeedSequence(seed, spawn_key=...)`` per
fixed-size block of outer rows, so estimates are reproducible and do not
depend on how work is split.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from . import _kernels
from .models import ForwardModel, GaussianLikelihood, PriorSpec

__all__ = [
    "SampleBudget",
    "EigEstimate",
    "EigError",
    "gaussian_entropy",
    "lower_bound_core",
    "lower_bound_gain",
    "dlmc",
    "estimate",
    "estimate_many",
    "grid_scan",
    "derive_seed",
    "estimator_diagnostics",
    "lower_bound_from_samples",
    "dlmc_from_samples",
    "NegativeLowerBound",
]

KINDS = ("lower-bound-core", "lower-bound", "dlmc")

# elements per inner block (rows * M * m); fixes the random-stream layout
_BLOCK_ELEMENTS = 1 << 17


class EigError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleBudget:
    N: int
    M: int
    seed: int = 0

    def __post_init__(self):
        if int(self.N) < 1 or int(self.M) < 1:
            raise ValueError(f"sample budget needs N >= 1 and M >= 1, got N={self.N}, M={self.M}")

    def with_seed(self, seed: int) -> "SampleBudget":
        return SampleBudget(self.N, self.M, int(seed))


@dataclass
class EigEstimate:
    """One estimator value with its Monte Carlo standard error.

    ``log_core`` is ``log`` of the lower-bound core for the lower-bound
    kinds; the raw core value may under- or overflow when ``m`` is large.
    ``pair_std_error`` is the naive standard error that treats all ``N*M``
    likelihood terms as independent.
    """

    value: float
    kind: str
    budget: SampleBudget
    std_error: float
    log_core: float | None = None
    pair_std_error: float | None = None

    def to_dict(self):
        out = asdict(self)
        out["budget"] = asdict(self.budget)
        return out


def gaussian_entropy(lik: GaussianLikelihood) -> float:
    """Differential entropy of ``N(g, Sigma)``: ``(m + log((2 pi)^m |Sigma|)) / 2``."""
    return 0.5 * (lik.m + lik.m * math.log(2.0 * math.pi) + lik.log_det)


def derive_seed(seed: int, *index: int) -> int:
    """Deterministic child seed for grid point / replicate ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


# ----------------------------------------------------------------------------
# shared sampling core
# ----------------------------------------------------------------------------


@dataclass
class _PairStats:
    log_norm: float
    n_outer: int
    n_inner: int
    row_lme: np.ndarray  # log mean_j exp(q_ij), q = -0.5 |whitened residual|^2
    outer_q: np.ndarray  # q_ii, quadratic term of the outer (data-generating) pair
    lse: float  # log sum_ij exp(q_ij)
    lse2: float  # log sum_ij exp(2 q_ij)
    col_lse: np.ndarray | None = None  # shared inner samples only


def _model_output(model, theta, d):
    g = np.asarray(model.evaluate_batch(theta, d), dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if np.isfinite(g.sum()):
        return g
    bad = ~np.all(np.isfinite(g), axis=1)
    if np.any(bad):
        raise EigError(f"non-finite model output at theta={theta[np.argmax(bad)].tolist()}")
    return g


def _pair_stats(model, lik, prior, d, budget, inner="fresh") -> _PairStats:
    if inner not in ("fresh", "shared"):
        raise ValueError(f"inner must be 'fresh' or 'shared', got {inner!r}")
    d = np.asarray(d, dtype=float).ravel()
    N, M, seed = int(budget.N), int(budget.M), int(budget.seed)
    m = lik.m

    rng = _stream(seed, 0)
    theta = prior.sample(rng, N)
    g = _model_output(model, theta, d)
    if g.shape[1] != m:
        raise EigError(f"model output has dimension {g.shape[1]}, likelihood expects {m}")
    noise_w = lik.whiten(lik.sample_noise(rng, N))
    yw = lik.whiten(g) + noise_w
    outer_q = -0.5 * np.sum(noise_w * noise_w, axis=1)

    rows = max(1, min(N, _BLOCK_ELEMENTS // (M * m)))
    row_lse = np.empty(N)
    row_lse2 = np.empty(N)
    col_lse = None
    if inner == "shared":
        mrng = _stream(seed, 1)
        gw_shared = np.ascontiguousarray(lik.whiten(_model_output(model, prior.sample(mrng, M), d)))
        col_lse = np.full(M, -np.inf)

    for b, start in enumerate(range(0, N, rows)):
        stop = min(N, start + rows)
        B = stop - start
        ywb = np.ascontiguousarray(yw[start:stop])
        if inner == "fresh":
            brng = _stream(seed, 2, b)
            th = prior.sample(brng, B * M)
            gw = np.ascontiguousarray(lik.whiten(_model_output(model, th, d)).reshape(B, M, m))
            mx, s1, s2 = _kernels.fresh_rows(ywb, gw)
        else:
            mx, s1, s2, ref, col = _kernels.shared_rows(ywb, gw_shared)
            with np.errstate(divide="ignore"):
                col_lse = np.logaddexp(col_lse, ref + np.log(col))
        row_lse[start:stop] = mx + np.log(s1)
        row_lse2[start:stop] = 2.0 * mx + np.log(s2)

    return _PairStats(
        log_norm=lik.log_norm,
        n_outer=N,
        n_inner=M,
        row_lme=row_lse - math.log(M),
        outer_q=outer_q,
        lse=float(logsumexp(row_lse)),
        lse2=float(logsumexp(row_lse2)),
        col_lse=col_lse,
    )


def _relative_sd(log_vals: np.ndarray, log_mean: float) -> float:
    """Sample sd of ``exp(log_vals)`` divided by ``exp(log_mean)``."""
    if log_vals.size < 2:
        return 0.0
    r = np.exp(log_vals - log_mean)
    return float(np.std(r, ddof=1))


def _lower_bound_parts(st: _PairStats, budget: SampleBudget):
    NM = st.n_outer * st.n_inner
    log_mean_q = st.lse - math.log(NM)
    log_core = log_mean_q + st.log_norm
    # outer rows are i.i.d.; with shared inner samples the columns add a second term
    rel_var = _relative_sd(st.row_lme, log_mean_q) ** 2 / st.n_outer
    if st.col_lse is not None:
        col_lme = st.col_lse - math.log(st.n_outer)
        rel_var += _relative_sd(col_lme, log_mean_q) ** 2 / st.n_inner
    rel_se = math.sqrt(rel_var)
    if NM > 1:
        rel_pair_var = max(math.exp(st.lse2 - math.log(NM) - 2.0 * log_mean_q) - 1.0, 0.0)
        rel_pair_se = math.sqrt(rel_pair_var * NM / (NM - 1) / NM)
    else:
        rel_pair_se = 0.0
    return log_core, rel_se, rel_pair_se


def _core_estimate(st, budget) -> EigEstimate:
    log_core, rel_se, rel_pair_se = _lower_bound_parts(st, budget)
    if not np.isfinite(log_core):
        raise EigError("all likelihood terms underflowed; increase Sigma or check model scaling")
    core = math.exp(log_core) if log_core < 709.0 else math.inf
    return EigEstimate(core, "lower-bound-core", budget, core * rel_se, log_core, core * rel_pair_se)


def _gain_estimate(st, budget, lik) -> EigEstimate:
    log_core, rel_se, rel_pair_se = _lower_bound_parts(st, budget)
    if not np.isfinite(log_core):
        raise EigError("all likelihood terms underflowed; increase Sigma or check model scaling")
    value = -gaussian_entropy(lik) - log_core
    return EigEstimate(value, "lower-bound", budget, rel_se, log_core, rel_pair_se)


def _dlmc_estimate(st, budget) -> EigEstimate:
    terms = st.outer_q - st.row_lme
    se = float(np.std(terms, ddof=1) / math.sqrt(terms.size)) if terms.size > 1 else 0.0
    return EigEstimate(float(np.mean(terms)), "dlmc", budget, se)


# ----------------------------------------------------------------------------
# public estimators
# ----------------------------------------------------------------------------


def lower_bound_core(model: ForwardModel, lik: GaussianLikelihood, prior: PriorSpec, d,
                     budget: SampleBudget, inner: str = "fresh") -> EigEstimate:
    """Unbiased estimate of ``int p(y|d)^2 dy``.

    The standard error is computed from the i.i.d. outer rows (plus the
    column term for shared inner samples), which accounts for the
    correlation of pairs that share ``y_i``.
    """
    return _core_estimate(_pair_stats(model, lik, prior, d, budget, inner), budget)


def lower_bound_gain(model, lik, prior, d, budget: SampleBudget, inner: str = "fresh") -> EigEstimate:
    """Information-gain lower bound ``-H - log(core)`` in nats.

    Uses exactly the samples of :func:`lower_bound_core` for the same seed.
    The standard error is the first-order propagation ``se(core) / core``.
    """
    return _gain_estimate(_pair_stats(model, lik, prior, d, budget, inner), budget, lik)


def dlmc(model, lik, prior, d, budget: SampleBudget, inner: str = "fresh") -> EigEstimate:
    """Double-loop Monte Carlo estimate of the expected information gain."""
    return _dlmc_estimate(_pair_stats(model, lik, prior, d, budget, inner), budget)


def estimate(kind: str, model, lik, prior, d, budget, inner="fresh") -> EigEstimate:
    return estimate_many((kind,), model, lik, prior, d, budget, inner)[kind]


def estimate_many(kinds: Sequence[str], model, lik, prior, d, budget, inner="fresh") -> dict:
    """Several estimator kinds from one shared set of samples."""
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown estimator kind {k!r}; expected one of {KINDS}")
    st = _pair_stats(model, lik, prior, d, budget, inner)
    out = {}
    for k in kinds:
        if k == "lower-bound-core":
            out[k] = _core_estimate(st, budget)
        elif k == "lower-bound":
            out[k] = _gain_estimate(st, budget, lik)
        else:
            out[k] = _dlmc_estimate(st, budget)
    return out


def lower_bound_from_samples(lik: GaussianLikelihood, y, g_inner) -> float:
    """``log`` of the lower-bound core from explicit samples.

    ``y`` is ``(N, m)``; ``g_inner`` is ``(N, M, m)`` (fresh) or ``(M, m)``
    (shared) model outputs.
    """
    y = np.asarray(y, dtype=float)
    g_inner = np.asarray(g_inner, dtype=float)
    if g_inner.ndim == 2:
        g_inner = np.broadcast_to(g_inner[None], (y.shape[0],) + g_inner.shape)
    lp = lik.log_density(y[:, None, :], g_inner)
    return float(logsumexp(lp) - math.log(lp.size))


def dlmc_from_samples(lik: GaussianLikelihood, y, g_outer, g_inner) -> float:
    """Nested estimator from explicit samples; ``g_inner`` is ``(N, M, m)``."""
    y = np.asarray(y, dtype=float)
    outer = lik.log_density(y, np.asarray(g_outer, dtype=float))
    inner = lik.log_density(y[:, None, :], np.asarray(g_inner, dtype=float))
    inner = logsumexp(inner, axis=1) - math.log(inner.shape[1])
    return float(np.mean(outer - inner))


# ----------------------------------------------------------------------------
# grid scans
# ----------------------------------------------------------------------------


def _scan_point(args):
    idx, kinds, model, lik, prior, d, budget, inner = args
    try:
        return estimate_many(kinds, model, lik, prior, d, budget, inner)
    except Exception as exc:  # noqa: BLE001 - re-raised with point identity
        raise EigError(f"grid point {idx} (d={np.asarray(d).tolist()}) failed: {exc}") from exc


def grid_scan(kind, model, lik, prior, grid, budget: SampleBudget, inner: str = "fresh",
              workers: int = 1):
    """Evaluate estimators on every design of ``grid``.

    ``kind`` is a single kind (returns a list of :class:`EigEstimate`) or a
    sequence of kinds (returns a list of dicts keyed by kind, all kinds of a
    point computed from the same samples). Point ``i`` uses seed
    ``derive_seed(budget.seed, i)``.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid is empty")
    if grid.shape[1] != model.n_design and model.n_design == 1:
        grid = grid.reshape(-1, 1)
    single = isinstance(kind, str)
    kinds = (kind,) if single else tuple(kind)
    tasks = [
        (i, kinds, model, lik, prior, grid[i], budget.with_seed(derive_seed(budget.seed, i)), inner)
        for i in range(grid.shape[0])
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_point, tasks))
    else:
        results = [_scan_point(t) for t in tasks]
    if single:
        return [r[kind] for r in results]
    return results


# ----------------------------------------------------------------------------
# estimator diagnostics
# ----------------------------------------------------------------------------


@dataclass
class Regression:
    slope: float
    intercept: float
    r_squared: float

    @classmethod
    def fit(cls, x, y) -> "Regression":
        res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return cls(float(res.slope), float(res.intercept), float(res.rvalue**2))


@dataclass
class DiagnosticTable:
    rows: list
    core_variance_fit: Regression
    dlmc_bias_fit: Regression | None
    dlmc_reference: float

    def to_records(self):
        return [dict(r) for r in self.rows]


def estimator_diagnostics(model, lik, prior, d, budgets: Sequence[SampleBudget], replications: int = 30,
                          reference: float | None = None, reference_budget: SampleBudget | None = None,
                          inner: str = "fresh") -> DiagnosticTable:
    """Replicate both estimators across budgets and summarise their laws.

    For each budget, ``replications`` independent estimates (seeds derived
    from the budget's seed, budget index and replicate index) give the
    empirical mean and variance of the core and of the nested estimator.
    The nested estimator's bias is measured against ``reference`` (e.g. a
    closed form) or, if absent, a single high-budget nested estimate.
    Emits least-squares fits of core variance vs ``1/(NM)`` and nested bias
    vs ``1/M``.
    """
    if replications < 30:
        raise ValueError("estimator diagnostics need at least 30 replications")
    d = np.asarray(d, dtype=float)
    if reference is None:
        rb = reference_budget or SampleBudget(10**4, 10**4, 12345)
        reference = dlmc(model, lik, prior, d, rb, inner).value
    rows = []
    for bi, b in enumerate(budgets):
        core_vals, dl_vals = [], []
        for r in range(replications):
            est = estimate_many(("lower-bound-core", "dlmc"), model, lik, prior, d,
                                b.with_seed(derive_seed(b.seed, bi, r)), inner)
            core_vals.append(est["lower-bound-core"].value)
            dl_vals.append(est["dlmc"].value)
        core_vals = np.asarray(core_vals)
        dl_vals = np.asarray(dl_vals)
        rows.append(dict(
            N=b.N, M=b.M,
            core_mean=float(core_vals.mean()),
            core_var=float(core_vals.var(ddof=1)),
            core_se=float(core_vals.std(ddof=1) / math.sqrt(replications)),
            dlmc_mean=float(dl_vals.mean()),
            dlmc_var=float(dl_vals.var(ddof=1)),
            dlmc_se=float(dl_vals.std(ddof=1) / math.sqrt(replications)),
            dlmc_bias=float(dl_vals.mean() - reference),
        ))
    inv_nm = [1.0 / (r["N"] * r["M"]) for r in rows]
    var_fit = Regression.fit(inv_nm, [r["core_var"] for r in rows])
    bias_fit = None
    if len({r["M"] for r in rows}) > 1:
        bias_fit = Regression.fit([1.0 / r["M"] for r in rows], [r["dlmc_bias"] for r in rows])
    return DiagnosticTable(rows, var_fit, bias_fit, float(reference))


# ----------------------------------------------------------------------------
# design objective
# ----------------------------------------------------------------------------


@dataclass
class NegativeLowerBound:
    """Noisy SPSA objective ``d -> -U_L(d)`` (or the raw core with ``core=True``).

    Each call draws a fresh estimator seed from the supplied generator.
    """

    model: ForwardModel
    lik: GaussianLikelihood
    prior: PriorSpec
    N: int
    M: int
    inner: str = "fresh"
    core: bool = False

    def __call__(self, d, rng: np.random.Generator) -> float:
        budget = SampleBudget(self.N, self.M, int(rng.integers(0, 2**63 - 1)))
        if self.core:
            return lower_bound_core(self.model, self.lik, self.prior, d, budget, self.inner).value
        return -lower_bound_gain(self.model, self.lik, self.prior, d, budget, self.inner).value
