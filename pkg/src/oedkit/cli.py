"""``oedkit`` command-line interface.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
numerical failures. All inputs are validated before any computation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import eig, gp, io, mcmc, pce, pipeline as pl, spsa
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (eig.EigError, spsa.SpsaError, mcmc.McmcError, gp.GpError, pce.PceError, pl.StageError,
                  FloatingPointError, np.linalg.LinAlgError)


class UsageError(ConfigError):
    pass


# ----------------------------------------------------------------------------
# argument helpers
# ----------------------------------------------------------------------------


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def parse_grid(spec: str, space) -> np.ndarray:
    """Design grid from ``"101"`` (points per axis on the design box), per-axis
    ``"lo:hi:n,lo:hi:n"``, or a CSV file of design rows."""
    spec = str(spec)
    if Path(spec).is_file():
        g = io.read_matrix(spec)
    elif ":" in spec:
        axes = []
        for part in spec.split(","):
            try:
                lo, hi, n = part.split(":")
                axes.append(np.linspace(float(lo), float(hi), int(n)))
            except ValueError as exc:
                raise UsageError(f"bad grid axis {part!r}; expected lo:hi:n") from exc
        if len(axes) != space.dim:
            raise UsageError(f"grid has {len(axes)} axes, design space has {space.dim}")
        mesh = np.meshgrid(*axes, indexing="ij")
        g = np.column_stack([m.ravel() for m in mesh])
    else:
        try:
            n = int(spec)
        except ValueError as exc:
            raise UsageError(f"bad grid spec {spec!r}") from exc
        if n < 1:
            raise UsageError("grid needs at least one point per axis")
        g = space.grid(n)
    if g.shape[1] != space.dim:
        raise UsageError(f"grid points have {g.shape[1]} coordinates, design space has {space.dim}")
    if not all(space.contains(row) for row in g):
        raise UsageError("grid points must lie inside the design box")
    return g


def _override(section: dict, **kw):
    for k, v in kw.items():
        if v is not None:
            section[k] = v


def _positive(name, v, allow_zero=False):
    if v is not None and (v < 0 or (v == 0 and not allow_zero)):
        raise UsageError(f"{name} must be {'non-negative' if allow_zero else 'positive'}")


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_eig_scan(a):
    cfg = load_config(a.config)
    _override(cfg.eig, estimator=a.estimator, N=a.N, M=a.M, seed=a.seed, inner=a.inner)
    _positive("--N", cfg.eig["N"])
    _positive("--M", cfg.eig["M"])
    grid = parse_grid(a.grid if a.grid is not None else cfg.eig["grid"], cfg.design_space)
    kind = cfg.eig["estimator"]
    budget = eig.SampleBudget(cfg.eig["N"], cfg.eig["M"], cfg.eig["seed"])
    res = eig.grid_scan(kind, cfg.model, cfg.likelihood, cfg.prior, grid, budget, cfg.eig["inner"],
                        workers=a.workers or cfg.workers)
    header = [f"d_{i + 1}" for i in range(grid.shape[1])] + ["value", "std_error", "kind", "N", "M", "seed"]
    rows = [[*g, r.value, r.std_error, r.kind, r.budget.N, r.budget.M, r.budget.seed] for g, r in zip(grid, res)]
    io.write_csv(a.out, header, rows)


def cmd_spsa(a):
    cfg = load_config(a.config)
    _positive("--restarts", a.restarts)
    _positive("--iters", a.iters)
    _override(cfg.spsa, restarts=a.restarts, iterations=a.iters, N=a.N, M=a.M, seed=a.seed,
              score_N=a.score_N, score_M=a.score_M)
    if a.crn:
        cfg.spsa["common_random_numbers"] = True
    surrogate, _ = pl.build_surrogate(cfg)
    model = pl.design_model(cfg, surrogate)
    ens = pl.run_optimization(cfg, model, a.workers)
    pl.write_ensemble(a.out, ens, cfg.design_space.dim)
    if a.trajectories:
        rows = [[rid, k, *p] for rid, r in zip(ens.run_ids, ens.runs) for k, p in enumerate(r.trajectory)]
        io.write_csv(a.trajectories, ["run_id", "iteration"] + [f"d_{i + 1}" for i in range(cfg.design_space.dim)],
                     rows)
    for rid, msg in ens.failures:
        print(f"run {rid} failed: {msg}", file=sys.stderr)


def cmd_pce_fit(a):
    if a.order < 0:
        raise UsageError("--order must be non-negative")
    x = io.read_matrix(a.inputs)
    y = io.read_matrix(a.outputs)
    if a.config:
        cfg = load_config(a.config)
        x = cfg.prior.cdf(x)
    mask = None
    if a.mask:
        mask = np.asarray([int(v) for v in a.mask.split(",")], dtype=bool)
        if mask.size != y.shape[1]:
            raise UsageError("--mask needs one flag per output column")
    try:
        ts = pce.TrainingSet(x, y)
    except pce.PceError as exc:
        raise UsageError(str(exc)) from exc
    model = pce.fit_least_squares(ts, x.shape[1], a.order, output_mask=mask)
    model.save(a.out)


def cmd_pce_validate(a):
    try:
        model = pce.PceModel.load(a.model)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read surrogate {a.model}: {exc}") from exc
    x = io.read_matrix(a.inputs)
    y = io.read_matrix(a.outputs)
    if a.config:
        x = load_config(a.config).prior.cdf(x)
    try:
        ts = pce.TrainingSet(x, y)
    except pce.PceError as exc:
        raise UsageError(str(exc)) from exc
    if y.shape[1] != model.n_outputs:
        raise UsageError(f"outputs have {y.shape[1]} columns, surrogate has {model.n_outputs}")
    r2 = pce.r_squared(model, ts)
    ec = pce.relative_truncation_error(model, ts)
    io.write_csv(a.report, ["output", "r_squared", "rel_error"], [[i + 1, p, q] for i, (p, q) in enumerate(zip(r2, ec))])


def cmd_mcmc(a):
    cfg = load_config(a.config)
    _override(cfg.mcmc, samples=a.samples, burn_in=a.burn_in, thin=a.thin, seed=a.seed)
    if a.surrogate:
        cfg.surrogate.update(path=a.surrogate, order=None, inputs=None, outputs=None)
    y = io.read_vector(a.data)
    d = io.read_vector(a.design)
    if y.size != cfg.model.n_obs:
        raise UsageError(f"data has {y.size} values, model produces {cfg.model.n_obs}")
    if d.size != cfg.design_space.dim or not cfg.design_space.contains(d):
        raise UsageError("design is not a point of the design box")
    try:
        ccfg = pl.chain_config(cfg)
    except mcmc.McmcError as exc:
        raise UsageError(str(exc)) from exc
    surrogate, _ = pl.build_surrogate(cfg)
    model = pl.design_model(cfg, surrogate)
    chain = mcmc.run_chain(mcmc.posterior_target(model, cfg.likelihood, cfg.prior, y, d), ccfg)
    pl.write_chain(a.out, chain)
    out = Path(a.out)
    summary = Path(a.summary) if a.summary else out.with_name(out.stem + "_summary.json")
    summary.write_text(json.dumps(chain.summary(), indent=2))
    hist = Path(a.histogram) if a.histogram else out.with_name(out.stem + "_histogram.csv")
    pl.write_histograms(hist, chain, a.bins)


def cmd_gp_field(a):
    pts = io.read_matrix(a.points, columns=["x", "y", "z", "value"])
    lengths = _floats(a.lengths, 3, "--lengths")
    grid = _floats(a.grid, 6, "--grid")
    dims = tuple(int(v) for v in grid[:3])
    if a.sigma2 <= 0 or min(lengths) <= 0 or min(grid) <= 0:
        raise UsageError("variance, length scales and grid entries must be positive")
    if a.jitter is not None and a.jitter < 0:
        raise UsageError("--jitter must be non-negative")
    model = gp.fit(pts[:, :3], pts[:, 3], gp.SeKernel(a.sigma2, tuple(lengths)), a.jitter)
    gp.build_reference_field(model, dims, tuple(grid[3:])).to_csv(a.out)


def cmd_pipeline(a):
    cfg = load_config(a.config)
    if a.seed is not None:
        for sec, off in ((cfg.eig, 0), (cfg.spsa, 1), (cfg.mcmc, 3), (cfg.surrogate, 4), (cfg.data, 5),
                         (cfg.comparison, 6)):
            sec["seed"] = eig.derive_seed(a.seed, off)
        cfg.spsa["score_seed"] = eig.derive_seed(a.seed, 2)
    if a.workers:
        cfg.workers = a.workers
    report = pl.pipeline(cfg, a.out_dir)
    print(json.dumps({"design": report.to_dict()["design"], "score": report.score,
                      "report": str(report.artifacts["report"])}))


def cmd_diagnose(a):
    cfg = load_config(a.config)
    dg = cfg.diagnostics
    _override(dg, replications=a.replications, seed=a.seed)
    if a.budgets:
        try:
            dg["budgets"] = [[int(v) for v in b.split(":")] for b in a.budgets.split(",")]
        except ValueError as exc:
            raise UsageError("--budgets must look like N:M,N:M") from exc
    if a.design:
        dg["design"] = _floats(a.design, cfg.design_space.dim, "--design")
    if a.reference is not None:
        dg["reference"] = a.reference
    if dg["replications"] < 30:
        raise UsageError("at least 30 replications are required")
    if not dg["budgets"] or any(len(b) != 2 or min(b) < 1 for b in dg["budgets"]):
        raise UsageError("budgets must be positive N:M pairs")
    d = np.asarray(dg["design"] if dg["design"] is not None else
                   0.5 * (cfg.design_space.lo + cfg.design_space.hi), dtype=float)
    budgets = [eig.SampleBudget(int(n), int(m), eig.derive_seed(dg["seed"], i)) for i, (n, m) in enumerate(dg["budgets"])]
    table = eig.estimator_diagnostics(cfg.model, cfg.likelihood, cfg.prior, d, budgets, int(dg["replications"]),
                                      reference=dg["reference"], inner=cfg.eig["inner"])
    keys = ["N", "M", "core_mean", "core_var", "core_se", "dlmc_mean", "dlmc_var", "dlmc_se", "dlmc_bias"]
    io.write_csv(a.out, keys, [[r[k] for k in keys] for r in table.rows])
    fits = {"core_variance_vs_inv_NM": table.core_variance_fit.__dict__,
            "dlmc_bias_vs_inv_M": None if table.dlmc_bias_fit is None else table.dlmc_bias_fit.__dict__,
            "dlmc_reference": table.dlmc_reference}
    out = Path(a.out)
    out.with_name(out.stem + "_fits.json").write_text(json.dumps(fits, indent=2))


PLOT_KINDS = ("eig-scan", "ensemble", "chain")


def cmd_emit_plot_data(a):
    if a.kind not in PLOT_KINDS:
        raise UsageError(f"unknown kind {a.kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if not Path(a.artifact).is_file():
        raise UsageError(f"artifact {a.artifact} does not exist")
    header, rows = io.read_table(a.artifact)
    if a.kind == "eig-scan":
        dcols = [i for i, h in enumerate(header) if h.startswith("d_")]
        names = ["d"] if len(dcols) == 1 else [header[i] for i in dcols]
        iv, ie = header.index("value"), header.index("std_error")
        io.write_csv(a.out, names + ["value", "std_error"],
                     [[float(r[i]) for i in dcols] + [float(r[iv]), float(r[ie])] for r in rows])
    elif a.kind == "ensemble":
        dcols = [i for i, h in enumerate(header) if h.startswith("d*_")]
        isc = header.index("score")
        out = []
        for r in rows:
            coords = [float(r[i]) for i in dcols]
            pairs = [coords[k:k + 2] for k in range(0, len(coords), 2)]
            for p in pairs:
                out.append([int(r[0]), p[0], p[1] if len(p) > 1 else "", float(r[isc])])
        io.write_csv(a.out, ["run_id", "x", "y", "score"], out)
    else:
        samples = np.array([[float(v) for v in r] for r in rows])
        out = []
        for i, (edges, counts) in enumerate(mcmc.histogram(samples, a.bins)):
            out += [[header[i], edges[b], edges[b + 1], counts[b]] for b in range(counts.size)]
        io.write_csv(a.out, ["parameter", "bin_left", "bin_right", "count"], out)


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oedkit", description="Bayesian optimal experimental design toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("eig-scan", help="estimate expected information gain on a design grid")
    s.add_argument("--config", required=True)
    s.add_argument("--estimator", choices=["lower-bound", "lower-bound-core", "dlmc"])
    s.add_argument("--grid", help="points per axis, lo:hi:n per axis, or a CSV of designs")
    s.add_argument("--N", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--inner", choices=["fresh", "shared"])
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_eig_scan)

    s = sub.add_parser("spsa-optimize", help="multi-restart SPSA maximization of the lower bound")
    s.add_argument("--config", required=True)
    s.add_argument("--restarts", type=int)
    s.add_argument("--iters", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--score-N", dest="score_N", type=int)
    s.add_argument("--score-M", dest="score_M", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--crn", action="store_true", help="common random numbers for the two evaluations")
    s.add_argument("--workers", type=int)
    s.add_argument("--trajectories")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_spsa)

    s = sub.add_parser("pce-fit", help="least-squares polynomial chaos fit")
    s.add_argument("--inputs", required=True, help="CSV of inputs in [0,1]^n (or parameters with --config)")
    s.add_argument("--outputs", required=True)
    s.add_argument("--order", type=int, required=True)
    s.add_argument("--config", help="map parameter inputs through this config's prior CDF")
    s.add_argument("--mask", help="comma-separated 0/1 output mask")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_pce_fit)

    s = sub.add_parser("pce-validate", help="R^2 and relative error of a surrogate")
    s.add_argument("--model", required=True)
    s.add_argument("--inputs", required=True)
    s.add_argument("--outputs", required=True)
    s.add_argument("--config")
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_pce_validate)

    s = sub.add_parser("mcmc-infer", help="adaptive Metropolis posterior sampling")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--design", required=True)
    s.add_argument("--samples", type=int)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--surrogate", help="surrogate model JSON used in the likelihood")
    s.add_argument("--summary")
    s.add_argument("--histogram")
    s.add_argument("--bins", type=int, default=30)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_mcmc)

    s = sub.add_parser("gp-field", help="Gaussian-process reference field on a grid")
    s.add_argument("--points", required=True, help="CSV with columns x,y,z,value")
    s.add_argument("--sigma2", type=float, required=True)
    s.add_argument("--lengths", required=True, help="lx,ly,lz")
    s.add_argument("--grid", required=True, help="nx,ny,nz,dx,dy,dz")
    s.add_argument("--jitter", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gp_field)

    s = sub.add_parser("pipeline", help="surrogate, design optimization, data and posterior in one run")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", dest="out_dir", required=True)
    s.add_argument("--seed", type=int, help="derive every stage seed from this one")
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_pipeline)

    s = sub.add_parser("diagnose-estimators", help="replicated bias and variance study")
    s.add_argument("--config", required=True)
    s.add_argument("--budgets", help="N:M,N:M,...")
    s.add_argument("--replications", type=int)
    s.add_argument("--design")
    s.add_argument("--reference", type=float, help="exact information gain, if known")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_diagnose)

    s = sub.add_parser("emit-plot-data", help="tidy CSV from an artifact for external plotting")
    s.add_argument("--artifact", required=True)
    s.add_argument("--kind", required=True)
    s.add_argument("--bins", type=int, default=30)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_emit_plot_data)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.fn(args)
    except ConfigError as exc:
        print(f"oedkit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"oedkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"oedkit: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
