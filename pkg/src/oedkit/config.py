"""Run configuration: one JSON document with a section per stage.

See the README for the full schema. :func:`load_config` validates the whole
document (and builds the model, prior, likelihood and design box) before any
computation starts.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import DesignSpace, ForwardModel, GaussianLikelihood, LinearModel, PlumeModel, PriorSpec, ToyModel

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "DEFAULT_SEED", "default_workers"]

DEFAULT_SEED = 20240607

SECTIONS = {"model", "prior", "likelihood", "design", "eig", "surrogate", "spsa", "mcmc", "data",
            "comparison", "diagnostics", "workers"}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


_EIG_DEFAULTS = dict(estimator="lower-bound", N=1000, M=1000, inner="fresh", grid=101, seed=DEFAULT_SEED)
_SPSA_DEFAULTS = dict(restarts=20, iterations=300, N=100, M=100, score_N=1000, score_M=1000,
                      a=None, A=None, alpha=None, c=None, gamma=None, common_random_numbers=False,
                      normalize=True, seed=DEFAULT_SEED + 1, score_seed=DEFAULT_SEED + 2)
_MCMC_DEFAULTS = dict(samples=50000, burn_in=10000, thin=5, adapt_start=1000, s_d=None, eps=1e-6,
                      initial=None, proposal_sd=None, adapt=True, seed=DEFAULT_SEED + 3)
_SURROGATE_DEFAULTS = dict(order=None, n_train=None, inputs=None, outputs=None, path=None, seed=DEFAULT_SEED + 4)
_DATA_DEFAULTS = dict(theta_true=None, reference_field=None, seed=DEFAULT_SEED + 5)
_COMPARISON_DEFAULTS = dict(design=None, seed=DEFAULT_SEED + 6)
_DIAG_DEFAULTS = dict(budgets=[[100, 1], [100, 10], [100, 100], [100, 1000]], replications=30,
                      design=None, reference=None, seed=DEFAULT_SEED + 7)


def _section(doc, name, defaults):
    sec = doc.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    out = dict(defaults)
    out.update(sec)
    return out


@dataclass
class RunConfig:
    raw: dict
    model: ForwardModel
    prior: PriorSpec
    likelihood: GaussianLikelihood
    design_space: DesignSpace
    eig: dict
    spsa: dict
    mcmc: dict
    surrogate: dict
    data: dict
    comparison: dict
    diagnostics: dict
    workers: int
    base_dir: Path = field(default_factory=Path.cwd)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _build_model(spec) -> ForwardModel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("'model' must be an object with a 'kind'")
    kind = spec["kind"]
    rest = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "toy":
            return ToyModel(int(rest.get("n_obs", 1)))
        if kind == "linear":
            return LinearModel(int(rest.get("n_obs", 1)), float(rest.get("bound", 2.0)))
        if kind == "plume":
            return PlumeModel(rest)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} model: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r} (expected toy, linear or plume)")


def _build_likelihood(spec, m) -> GaussianLikelihood:
    if not isinstance(spec, dict):
        raise ConfigError("'likelihood' must be an object")
    try:
        if "covariance" in spec:
            return GaussianLikelihood(np.asarray(spec["covariance"], dtype=float))
        if "variances" in spec:
            return GaussianLikelihood(np.asarray(spec["variances"], dtype=float))
        if "sigma2" in spec:
            return GaussianLikelihood(float(spec["sigma2"]), m=m)
    except (TypeError, ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"invalid likelihood: {exc}") from exc
    raise ConfigError("likelihood needs 'sigma2', 'variances' or 'covariance'")


def _positive_int(sec, key, name, allow_zero=False):
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < (0 if allow_zero else 1):
        raise ConfigError(f"{name}.{key} must be a {'non-negative' if allow_zero else 'positive'} integer, got {v!r}")


def parse_config(doc: dict, base_dir=None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    doc = copy.deepcopy(doc)
    model = _build_model(doc.get("model", {"kind": "toy"}))
    try:
        prior = PriorSpec.from_list(doc["prior"])
    except KeyError as exc:
        raise ConfigError("missing 'prior' section") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid prior: {exc}") from exc
    if prior.dim != model.n_theta:
        raise ConfigError(f"prior has {prior.dim} components, model has {model.n_theta} parameters")
    lik = _build_likelihood(doc.get("likelihood", {}), model.n_obs)
    if lik.m != model.n_obs:
        raise ConfigError(f"likelihood dimension {lik.m} differs from model output dimension {model.n_obs}")
    if "design" in doc:
        try:
            space = DesignSpace(tuple(doc["design"]["lower"]), tuple(doc["design"]["upper"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid design box: {exc}") from exc
        if space.dim != model.n_design:
            raise ConfigError(f"design box has {space.dim} coordinates, model expects {model.n_design}")
    else:
        space = model.design_space()

    eig = _section(doc, "eig", _EIG_DEFAULTS)
    if eig["estimator"] not in ("lower-bound", "lower-bound-core", "dlmc"):
        raise ConfigError(f"unknown estimator {eig['estimator']!r}")
    if eig["inner"] not in ("fresh", "shared"):
        raise ConfigError("eig.inner must be 'fresh' or 'shared'")
    for k in ("N", "M"):
        _positive_int(eig, k, "eig")
    spsa = _section(doc, "spsa", _SPSA_DEFAULTS)
    for k in ("restarts", "iterations", "N", "M", "score_N", "score_M"):
        _positive_int(spsa, k, "spsa")
    mcmc = _section(doc, "mcmc", _MCMC_DEFAULTS)
    for k in ("samples", "thin", "adapt_start"):
        _positive_int(mcmc, k, "mcmc")
    _positive_int(mcmc, "burn_in", "mcmc", allow_zero=True)
    if mcmc["burn_in"] >= mcmc["samples"]:
        raise ConfigError("mcmc.burn_in must be smaller than mcmc.samples")
    surrogate = _section(doc, "surrogate", _SURROGATE_DEFAULTS)
    if surrogate["order"] is not None:
        _positive_int(surrogate, "order", "surrogate", allow_zero=True)
    data = _section(doc, "data", _DATA_DEFAULTS)
    if data["theta_true"] is not None and len(data["theta_true"]) != model.n_theta:
        raise ConfigError(f"data.theta_true needs {model.n_theta} values")
    comparison = _section(doc, "comparison", _COMPARISON_DEFAULTS)
    if comparison["design"] is not None and len(comparison["design"]) != model.n_design:
        raise ConfigError(f"comparison.design needs {model.n_design} values")
    diagnostics = _section(doc, "diagnostics", _DIAG_DEFAULTS)
    workers = doc.get("workers", default_workers())
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")

    cfg = RunConfig(doc, model, prior, lik, space, eig, spsa, mcmc, surrogate, data, comparison,
                    diagnostics, workers, Path(base_dir) if base_dir else Path.cwd())
    for sec, key in (("surrogate", "inputs"), ("surrogate", "outputs"), ("surrogate", "path"),
                     ("data", "reference_field")):
        p = getattr(cfg, sec)[key]
        if p is not None and not cfg.path(p).exists():
            raise ConfigError(f"{sec}.{key}: file {p} does not exist")
    if (surrogate["inputs"] is None) != (surrogate["outputs"] is None):
        raise ConfigError("surrogate.inputs and surrogate.outputs must be given together")
    if surrogate["path"] is not None and surrogate["order"] is not None:
        raise ConfigError("give either surrogate.path (load a model) or surrogate.order (fit one)")
    if surrogate["inputs"] is not None and surrogate["order"] is None:
        raise ConfigError("surrogate.order is required to fit from training files")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)
