"""Legendre polynomial chaos surrogates on the unit cube.

Inputs are standardized to ``xi in [0, 1]^n`` (typically through the prior
CDF). The basis is the tensor product of orthonormal shifted Legendre
polynomials, so ``E[psi_a psi_b] = delta_ab`` under ``U(0, 1)^n``.
Coefficients are fitted by least squares through a QR factorization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .models import ForwardModel, PriorSpec

__all__ = [
    "PceError",
    "PceModel",
    "TrainingSet",
    "multi_index_set",
    "n_terms",
    "legendre_eval",
    "legendre_table",
    "basis_matrix",
    "lhs_sample",
    "fit_least_squares",
    "evaluate",
    "r_squared",
    "relative_truncation_error",
    "SurrogateModel",
]

ORDERING = "graded-lex"


class PceError(ValueError):
    """Invalid surrogate input or an ill-posed fit."""


def n_terms(n: int, r: int) -> int:
    """Number of multi-indices in ``n`` variables with total degree ``<= r``."""
    return math.comb(n + r, r)


def _compositions(n, total):
    # all length-n non-negative vectors summing to total, lexicographically descending
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(n - 1, total - first):
            yield (first,) + rest


def multi_index_set(n: int, r: int) -> np.ndarray:
    """All multi-indices with ``|alpha| <= r`` in graded-lexicographic order.

    Indices are grouped by total degree ``0, 1, ..., r``; within a degree
    they are sorted lexicographically descending, so for ``n = 2``:
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...``.

    Returns
    -------
    ndarray of int, shape ``(N_p, n)``
    """
    if n < 1 or r < 0:
        raise PceError("need n >= 1 and r >= 0")
    rows = [a for deg in range(r + 1) for a in _compositions(n, deg)]
    return np.array(rows, dtype=int).reshape(-1, n)


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise PceError("inputs must lie in the unit interval [0, 1]")
    return x


def legendre_table(x, order: int) -> np.ndarray:
    """Orthonormal shifted Legendre values ``psi_0..psi_order`` at ``x``.

    Output has shape ``x.shape + (order + 1,)``.
    """
    x = _check_unit(x)
    t = 2.0 * x - 1.0
    out = np.empty(x.shape + (order + 1,))
    p_prev = np.ones_like(t)
    out[..., 0] = 1.0
    if order >= 1:
        p = t.copy()
        out[..., 1] = math.sqrt(3.0) * p
        for k in range(1, order):
            # (k+1) P_{k+1} = (2k+1) t P_k - k P_{k-1}
            p_prev, p = p, ((2 * k + 1) * t * p - k * p_prev) / (k + 1)
            out[..., k + 1] = math.sqrt(2 * k + 3) * p
    return out


def legendre_eval(k: int, x):
    """Orthonormal shifted Legendre polynomial ``psi_k`` on ``[0, 1]``."""
    if k < 0:
        raise PceError("order must be non-negative")
    v = legendre_table(x, k)[..., k]
    return float(v) if np.ndim(v) == 0 else v


def basis_matrix(xi, indices) -> np.ndarray:
    """Design matrix ``Psi[j, a] = prod_i psi_{alpha_i}(xi_ji)``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    indices = np.asarray(indices, dtype=int)
    if xi.shape[1] != indices.shape[1]:
        raise PceError(f"inputs have {xi.shape[1]} columns, basis has dimension {indices.shape[1]}")
    tab = legendre_table(xi, int(indices.max(initial=0)))  # (N, n, r+1)
    psi = np.ones((xi.shape[0], indices.shape[0]))
    for i in range(indices.shape[1]):
        psi *= tab[:, i, indices[:, i]]
    return psi


def lhs_sample(n: int, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample: one point per stratum ``[k/N, (k+1)/N)`` in each column."""
    if n_points < 1 or n < 1:
        raise PceError("need n >= 1 and n_points >= 1")
    u = rng.random((n_points, n))
    perm = np.argsort(rng.random((n_points, n)), axis=0)
    return (perm + u) / n_points


@dataclass
class TrainingSet:
    inputs: np.ndarray  # (N_G, n) in [0, 1]^n
    outputs: np.ndarray  # (N_G, m)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        out = np.asarray(self.outputs, dtype=float)
        self.outputs = out.reshape(-1, 1) if out.ndim == 1 else out
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise PceError("inputs and outputs have different row counts")
        _check_unit(self.inputs)

    @property
    def size(self):
        return self.inputs.shape[0]


@dataclass
class PceModel:
    n: int
    r: int
    indices: np.ndarray  # (N_p, n)
    coefficients: np.ndarray  # (N_p, m)
    output_mask: np.ndarray | None = None  # bool (m,) of outputs the model is meant for
    condition: float = field(default=float("nan"), compare=False)

    @property
    def n_outputs(self) -> int:
        return self.coefficients.shape[1]

    def __call__(self, xi):
        return evaluate(self, xi)

    def __add__(self, other: "PceModel") -> "PceModel":
        if self.n != other.n or not np.array_equal(self.indices, other.indices):
            raise PceError("cannot add surrogates with different bases")
        return PceModel(self.n, self.r, self.indices, self.coefficients + other.coefficients, self.output_mask)

    def to_dict(self):
        return dict(
            n=self.n,
            r=self.r,
            ordering=ORDERING,
            indices=self.indices.tolist(),
            coefficients=self.coefficients.tolist(),
            output_mask=None if self.output_mask is None else [bool(b) for b in self.output_mask],
        )

    @classmethod
    def from_dict(cls, doc) -> "PceModel":
        if doc.get("ordering", ORDERING) != ORDERING:
            raise PceError(f"unsupported index ordering {doc.get('ordering')!r}")
        idx = np.asarray(doc["indices"], dtype=int).reshape(-1, int(doc["n"]))
        coef = np.asarray(doc["coefficients"], dtype=float).reshape(idx.shape[0], -1)
        mask = doc.get("output_mask")
        return cls(int(doc["n"]), int(doc["r"]), idx, coef, None if mask is None else np.asarray(mask, bool))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_least_squares(training: TrainingSet, n: int, r: int, rcond: float = 1e-12,
                      output_mask=None) -> PceModel:
    """Least-squares coefficients for every output column.

    Solved with a pivoted QR factorization of the design matrix. Raises
    :class:`PceError` if there are fewer points than basis terms or the
    design matrix is numerically rank deficient (``R`` diagonal ratio below
    ``rcond``).
    """
    if training.inputs.shape[1] != n:
        raise PceError(f"training inputs have {training.inputs.shape[1]} columns, expected {n}")
    idx = multi_index_set(n, r)
    n_p = idx.shape[0]
    if training.size < n_p:
        raise PceError(f"underdetermined fit: {training.size} points for {n_p} coefficients")
    psi = basis_matrix(training.inputs, idx)
    q, rr, piv = linalg.qr(psi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rr))
    ratio = diag.min() / diag.max()
    if ratio < rcond:
        raise PceError(f"rank-deficient design matrix (R diagonal ratio {ratio:.3e}, "
                       f"condition estimate {1.0 / max(ratio, 1e-300):.3e})")
    z = linalg.solve_triangular(rr, q.T @ training.outputs)
    coef = np.empty_like(z)
    coef[piv] = z
    mask = None if output_mask is None else np.asarray(output_mask, dtype=bool)
    return PceModel(n, r, idx, coef, mask, condition=float(np.linalg.cond(rr)))


def evaluate(model: PceModel, xi) -> np.ndarray:
    """Surrogate outputs: shape ``(m,)`` for one point or ``(K, m)`` for a batch."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    out = basis_matrix(np.atleast_2d(xi), model.indices) @ model.coefficients
    return out[0] if single else out


def r_squared(model: PceModel, training: TrainingSet) -> np.ndarray:
    """Coefficient of determination per output; ``nan`` where the output is constant."""
    y = training.outputs
    res = y - evaluate(model, training.inputs)
    rss = np.sum(res**2, axis=0)
    tss = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - rss / tss
    return np.where(tss > 0, out, np.nan)


def relative_truncation_error(model: PceModel, validation: TrainingSet) -> np.ndarray:
    """``sum |G - y_hat|^2 / sum |G|^2`` per output; ``nan`` where the truth is zero."""
    if validation.size == 0:
        raise PceError("validation set is empty")
    truth = validation.outputs
    err = np.sum((truth - evaluate(model, validation.inputs)) ** 2, axis=0)
    den = np.sum(truth**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = err / den
    return np.where(den > 0, out, np.nan)


# ----------------------------------------------------------------------------
# surrogate forward model
# ----------------------------------------------------------------------------


class SurrogateModel(ForwardModel):
    """Plume model whose observable layers are replaced by a surrogate.

    The surrogate maps ``xi = F(theta)`` (prior CDF transform) to every
    observable cell of ``plume`` (``plume.observed_field_batch`` order); a
    design selects the cells it observes and only those coefficient columns
    are evaluated.
    """

    def __init__(self, model: PceModel, prior: PriorSpec, plume):
        if prior.dim != model.n:
            raise PceError(f"surrogate has {model.n} inputs, prior has {prior.dim}")
        nx, ny, _ = plume.dims
        if model.n_outputs != nx * ny * plume.config.n_layers:
            raise PceError("surrogate outputs do not match the plume's observable cells")
        self.pce = model
        self.prior = prior
        self.plume = plume
        self.n_theta = model.n
        self.n_design = plume.n_design
        self.n_obs = plume.n_obs

    def columns(self, d) -> np.ndarray:
        nx, ny, _ = self.plume.dims
        i, j, k = self.plume.observed_cells(d)
        return k * nx * ny + j * nx + i

    def evaluate_batch(self, theta, d):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        xi = np.clip(self.prior.cdf(theta), 0.0, 1.0)
        return basis_matrix(xi, self.pce.indices) @ self.pce.coefficients[:, self.columns(d)]

    def design_space(self):
        return self.plume.design_space()
