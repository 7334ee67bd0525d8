"""Zero-mean Gaussian-process regression with a squared-exponential kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .models import GriddedField, cell_centers

__all__ = ["GpError", "SeKernel", "GpModel", "kernel_eval", "fit", "predict_mean", "predict_cov",
           "build_reference_field"]


class GpError(RuntimeError):
    """Gram-matrix factorization failure."""


@dataclass(frozen=True)
class SeKernel:
    """``k(x, x') = variance * exp(-0.5 * sum_i (x_i - x'_i)^2 / l_i^2)``."""

    variance: float
    lengths: tuple

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        object.__setattr__(self, "lengths", lengths)
        if not self.variance > 0:
            raise ValueError("kernel variance must be positive")
        if not lengths or min(lengths) <= 0:
            raise ValueError("length scales must be positive")

    def __call__(self, a, b) -> np.ndarray:
        """Cross-covariance matrix between row sets ``a`` (P, n) and ``b`` (Q, n)."""
        ell = np.asarray(self.lengths)
        a = np.atleast_2d(np.asarray(a, dtype=float)) / ell
        b = np.atleast_2d(np.asarray(b, dtype=float)) / ell
        sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        np.maximum(sq, 0.0, out=sq)
        return self.variance * np.exp(-0.5 * sq)


def kernel_eval(kernel: SeKernel, x, x_prime) -> float:
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError("inputs must have equal dimension")
    r = (x - x_prime) / np.broadcast_to(np.asarray(kernel.lengths), x.shape)
    return float(kernel.variance * np.exp(-0.5 * np.dot(r, r)))


@dataclass
class GpModel:
    X: np.ndarray
    f: np.ndarray
    kernel: SeKernel
    jitter: float
    chol: np.ndarray  # lower Cholesky factor of K(X, X) + jitter I
    alpha: np.ndarray  # (K + jitter I)^-1 f


def fit(X, f, kernel: SeKernel, jitter: float | None = None) -> GpModel:
    """Factorize the training Gram matrix.

    ``jitter`` defaults to ``1e-8 * variance``; pass ``0`` for an exact
    interpolant. A failed factorization raises :class:`GpError` with the
    smallest eigenvalue of the jittered Gram matrix.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    f = np.asarray(f, dtype=float).ravel()
    if X.shape[0] != f.size or X.shape[0] < 1:
        raise ValueError("X and f must have the same non-zero number of rows")
    if len(kernel.lengths) not in (1, X.shape[1]):
        raise ValueError("one length scale per input dimension is required")
    if jitter is None:
        jitter = 1e-8 * kernel.variance
    K = kernel(X, X)
    K[np.diag_indices_from(K)] += jitter
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        low = float(np.linalg.eigvalsh(K)[0])
        raise GpError(f"Gram matrix is not positive definite (smallest eigenvalue {low:.3e}); "
                      "increase the jitter") from exc
    alpha = linalg.cho_solve((L, True), f)
    return GpModel(X, f, kernel, float(jitter), L, alpha)


def _cross(model, Xs):
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if Xs.shape[1] != model.X.shape[1]:
        raise ValueError(f"queries have {Xs.shape[1]} columns, training inputs {model.X.shape[1]}")
    return Xs, model.kernel(Xs, model.X)


def predict_mean(model: GpModel, Xs, chunk: int = 4096) -> np.ndarray:
    """Conditional mean ``K(X*, X) K(X, X)^-1 f``."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    out = np.empty(Xs.shape[0])
    for s in range(0, Xs.shape[0], chunk):
        _, ks = _cross(model, Xs[s:s + chunk])
        out[s:s + chunk] = ks @ model.alpha
    return out


def predict_cov(model: GpModel, Xs) -> np.ndarray:
    """Conditional covariance; small negative diagonal round-off is clipped to zero."""
    Xs, ks = _cross(model, Xs)
    v = linalg.solve_triangular(model.chol, ks.T, lower=True)
    cov = model.kernel(Xs, Xs) - v.T @ v
    diag = np.einsum("ii->i", cov)
    diag[(diag < 0) & (diag >= -1e-10)] = 0.0
    return cov


def build_reference_field(model: GpModel, dims, cell_size) -> GriddedField:
    """Conditional mean at every cell centre of a grid."""
    centers = cell_centers(dims, cell_size)
    vals = predict_mean(model, centers[:, : model.X.shape[1]])
    nx, ny, nz = (int(v) for v in dims)
    return GriddedField(dims, cell_size, vals.reshape(nz, ny, nx).transpose(2, 1, 0))
