"""End-to-end design study: surrogate, design optimization, data, posterior.

Stages run in order and write their artifacts as they finish, so a failure
leaves everything produced up to that point on disk:

1. ``surrogate``: load or fit a polynomial chaos surrogate (optional).
2. ``optimize``: multi-restart SPSA on the negative lower bound.
3. ``select``: the best-scoring final design.
4. ``data``: observations at the chosen design, read from a reference field
   or generated from a hypothetical true parameter.
5. ``posterior``: adaptive MCMC at the chosen design, compared with the same
   analysis at a comparison design and with the prior.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io, mcmc, pce, spsa
from .config import ConfigError, RunConfig
from .eig import NegativeLowerBound, SampleBudget
from .models import GriddedField, PlumeModel, sample_data

__all__ = ["StageError", "PipelineReport", "pipeline", "build_surrogate", "run_optimization",
           "chain_config", "write_ensemble", "write_chain", "validate_pipeline"]


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class PipelineReport:
    design: np.ndarray
    score: float
    score_se: float
    posterior: dict
    comparison: list
    artifacts: dict = field(default_factory=dict)
    surrogate_r2_median: float | None = None

    def to_dict(self):
        return dict(
            design=[float(v) for v in self.design],
            score=self.score,
            score_se=self.score_se,
            surrogate_r2_median=self.surrogate_r2_median,
            posterior=self.posterior,
            comparison=self.comparison,
            artifacts={k: str(v) for k, v in self.artifacts.items()},
        )


# ----------------------------------------------------------------------------
# stage helpers (also used by the CLI subcommands)
# ----------------------------------------------------------------------------


def build_surrogate(cfg: RunConfig):
    """Return ``(pce_model, training_set)`` or ``(None, None)`` if no surrogate is configured."""
    s = cfg.surrogate
    if s["path"] is not None:
        return pce.PceModel.load(cfg.path(s["path"])), None
    if s["order"] is None:
        return None, None
    n, r = cfg.prior.dim, int(s["order"])
    if s["inputs"] is not None:
        ts = pce.TrainingSet(io.read_matrix(cfg.path(s["inputs"])), io.read_matrix(cfg.path(s["outputs"])))
    else:
        if not isinstance(cfg.model, PlumeModel):
            raise ConfigError("generating surrogate training data needs a plume model")
        n_train = s["n_train"] or 2 * pce.n_terms(n, r)
        xi = pce.lhs_sample(n, int(n_train), np.random.default_rng(s["seed"]))
        ts = pce.TrainingSet(xi, cfg.model.observed_field_batch(cfg.prior.ppf(xi)))
    return pce.fit_least_squares(ts, n, r), ts


def design_model(cfg: RunConfig, surrogate: pce.PceModel | None):
    if surrogate is None:
        return cfg.model
    if not isinstance(cfg.model, PlumeModel):
        raise ConfigError("a surrogate can only stand in for a plume model")
    return pce.SurrogateModel(surrogate, cfg.prior, cfg.model)


def run_optimization(cfg: RunConfig, model, workers: int | None = None) -> spsa.RestartEnsemble:
    s = cfg.spsa
    schedule = spsa.GainSchedule.default(s["iterations"], a=s["a"], A=s["A"], alpha=s["alpha"],
                                         c=s["c"], gamma=s["gamma"])
    objective = NegativeLowerBound(model, cfg.likelihood, cfg.prior, s["N"], s["M"], cfg.eig["inner"])
    scorer = spsa.LowerBoundScorer(model, cfg.likelihood, cfg.prior,
                                   SampleBudget(s["score_N"], s["score_M"], s["score_seed"]), cfg.eig["inner"])
    return spsa.multi_restart(objective, cfg.design_space.sample, schedule, s["iterations"], s["restarts"],
                              scorer, cfg.design_space, seed=s["seed"],
                              common_random_numbers=bool(s["common_random_numbers"]),
                              normalize=bool(s["normalize"]), workers=workers or cfg.workers)


def chain_config(cfg: RunConfig, **overrides) -> mcmc.ChainConfig:
    m = dict(cfg.mcmc)
    m.update({k: v for k, v in overrides.items() if v is not None})
    initial = m["initial"] if m["initial"] is not None else cfg.prior.ppf(np.full(cfg.prior.dim, 0.5))
    sd = m["proposal_sd"] if m["proposal_sd"] is not None else 0.1 * cfg.prior.std()
    return mcmc.ChainConfig(total=int(m["samples"]), burn_in=int(m["burn_in"]), thin=int(m["thin"]),
                            initial=np.asarray(initial, dtype=float),
                            proposal_cov=np.diag(np.broadcast_to(np.asarray(sd, float) ** 2, (cfg.prior.dim,))),
                            adapt_start=int(m["adapt_start"]), s_d=m["s_d"], eps=float(m["eps"]),
                            adapt=bool(m["adapt"]), seed=int(m["seed"]))


def observe(cfg: RunConfig, d, seed_offset: int = 0) -> np.ndarray:
    """Observations at design ``d`` from the reference field or from ``theta_true``."""
    dat = cfg.data
    if dat["reference_field"] is not None:
        if not isinstance(cfg.model, PlumeModel):
            raise ConfigError("a reference field needs a plume model")
        fld = GriddedField.from_csv(cfg.path(dat["reference_field"]), cfg.model.dims, cfg.model.cell_size)
        return fld.observe(d, cfg.model.config.n_layers)
    rng = np.random.default_rng([int(dat["seed"]), seed_offset])
    return sample_data(cfg.model, cfg.likelihood, np.asarray(dat["theta_true"], float), d, rng)


def validate_pipeline(cfg: RunConfig) -> None:
    if cfg.data["theta_true"] is None and cfg.data["reference_field"] is None:
        raise ConfigError("pipeline needs data.theta_true or data.reference_field")
    if cfg.data["reference_field"] is not None and not isinstance(cfg.model, PlumeModel):
        raise ConfigError("a reference field needs a plume model")
    if cfg.surrogate["order"] is not None and cfg.surrogate["inputs"] is None \
            and not isinstance(cfg.model, PlumeModel):
        raise ConfigError("generating surrogate training data needs a plume model")
    chain_config(cfg)


def write_ensemble(path, ens: spsa.RestartEnsemble, n_d: int):
    header = ["run_id"] + [f"d*_{i + 1}" for i in range(n_d)] + ["score", "score_se", "evaluations"]
    rows = [[r["run_id"], *r["final"], r["score"], r["score_se"], r["evaluations"]] for r in ens.records()]
    return io.write_csv(path, header, rows)


def write_chain(path, chain: mcmc.Chain):
    header = [f"theta_{i + 1}" for i in range(chain.samples.shape[1])]
    return io.write_csv(path, header, chain.samples.tolist())


def write_histograms(path, chain: mcmc.Chain, bins: int = 30):
    rows = []
    for i, (edges, counts) in enumerate(mcmc.histogram(chain.samples, bins)):
        rows += [[i + 1, edges[b], edges[b + 1], counts[b]] for b in range(counts.size)]
    return io.write_csv(path, ["parameter", "bin_left", "bin_right", "count"], rows)


# ----------------------------------------------------------------------------
# the pipeline
# ----------------------------------------------------------------------------


def pipeline(cfg: RunConfig, out_dir) -> PipelineReport:
    """Run every stage and write ``report.json`` into ``out_dir``."""
    validate_pipeline(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    art = {}

    def stage(name, fn):
        try:
            return fn()
        except (ConfigError, StageError):
            raise
        except Exception as exc:  # noqa: BLE001 - reported with the stage name
            raise StageError(name, exc) from exc

    surrogate, train = stage("surrogate", lambda: build_surrogate(cfg))
    r2_median = None
    if surrogate is not None:
        surrogate.save(out / "surrogate.json")
        art["surrogate"] = out / "surrogate.json"
        if train is not None:
            r2 = pce.r_squared(surrogate, train)
            ec = pce.relative_truncation_error(surrogate, train)
            art["surrogate_validation"] = io.write_csv(
                out / "surrogate_validation.csv", ["output", "r_squared", "rel_error"],
                [[i + 1, a, b] for i, (a, b) in enumerate(zip(r2, ec))])
            r2_median = float(np.nanmedian(r2)) if np.any(np.isfinite(r2)) else None
    model = stage("surrogate", lambda: design_model(cfg, surrogate))

    ens = stage("optimize", lambda: run_optimization(cfg, model))
    art["ensemble"] = write_ensemble(out / "ensemble.csv", ens, cfg.design_space.dim)
    if not ens.runs:
        raise StageError("select", RuntimeError(f"every SPSA run failed: {ens.failures}"))
    best = ens.best.final
    n_d = cfg.design_space.dim
    art["design"] = io.write_csv(out / "design.csv", [f"d_{i + 1}" for i in range(n_d)], [best])

    if cfg.comparison["design"] is not None:
        other = np.asarray(cfg.comparison["design"], dtype=float)
    else:
        other = cfg.design_space.sample(np.random.default_rng(cfg.comparison["seed"]))
    y_best = stage("data", lambda: observe(cfg, best, 0))
    y_other = stage("data", lambda: observe(cfg, other, 1))
    art["data"] = io.write_csv(out / "data.csv", [f"y_{i + 1}" for i in range(y_best.size)], [y_best])
    art["comparison_design"] = io.write_csv(out / "comparison_design.csv",
                                            [f"d_{i + 1}" for i in range(n_d)], [other])
    art["comparison_data"] = io.write_csv(out / "comparison_data.csv",
                                          [f"y_{i + 1}" for i in range(y_other.size)], [y_other])

    ccfg = chain_config(cfg)
    cmp_ = stage("posterior", lambda: mcmc.compare_designs(model, cfg.likelihood, cfg.prior, y_best, best,
                                                             y_other, other, ccfg))
    art["chain"] = write_chain(out / "chain.csv", cmp_.chain_a)
    art["comparison_chain"] = write_chain(out / "comparison_chain.csv", cmp_.chain_b)
    art["histogram"] = write_histograms(out / "histogram.csv", cmp_.chain_a)
    summary = cmp_.chain_a.summary()
    (out / "chain_summary.json").write_text(json.dumps(summary, indent=2))
    art["chain_summary"] = out / "chain_summary.json"

    art["report"] = out / "report.json"
    report = PipelineReport(best, float(ens.scores[0]), float(ens.score_se[0]), summary,
                            list(cmp_.records()), art, r2_median)
    art["report"].write_text(json.dumps(report.to_dict(), indent=2))
    return report
