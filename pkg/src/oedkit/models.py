"""Forward models, priors and the Gaussian observation model.

Everything here is pure given explicit inputs and an explicit
``numpy.random.Generator``; no function keeps hidden random state.

Conventions
-----------
* A parameter batch is a ``(K, n_theta)`` array, a design is a flat vector
  of length ``n_design`` and model output is ``(K, m)``.
* Priors are products of independent one-dimensional marginals.
"""
from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

__all__ = [
    "Uniform",
    "Normal",
    "LogNormal",
    "PriorSpec",
    "GaussianLikelihood",
    "ForwardModel",
    "ToyModel",
    "LinearModel",
    "PlumeModel",
    "GriddedField",
    "DesignSpace",
    "toy_model_eval",
    "kappa_e",
    "prior_sample",
    "cdf_transform",
    "inverse_cdf_transform",
    "log_likelihood",
    "sample_data",
    "posterior_log_density",
    "plume_model_eval",
]


# ----------------------------------------------------------------------------
# priors
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    """Uniform marginal on ``[a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"Uniform needs finite a < b, got a={self.a}, b={self.b}")

    def sample(self, rng, size):
        u = rng.random(size)
        if self.a != 0.0 or self.b != 1.0:
            u *= self.b - self.a
            u += self.a
        return u

    def in_support(self, x):
        return (x >= self.a) & (x <= self.b)

    def cdf(self, x):
        return (x - self.a) / (self.b - self.a)

    def ppf(self, u):
        return self.a + (self.b - self.a) * u

    def logpdf(self, x):
        return np.where(self.in_support(x), -math.log(self.b - self.a), -np.inf)

    @property
    def std(self):
        return (self.b - self.a) / math.sqrt(12.0)

    def to_dict(self):
        return {"dist": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Normal:
    """Gaussian marginal with ``mean`` and ``var``.

    Useful for log-parameters: a ``Normal`` on ``log k`` is the same prior as
    a ``LogNormal`` on ``k``.
    """

    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"Normal variance must be positive, got {self.var}")

    @property
    def std(self):
        return math.sqrt(self.var)

    def sample(self, rng, size):
        return self.mean + self.std * rng.standard_normal(size)

    def in_support(self, x):
        return np.isfinite(x)

    def cdf(self, x):
        return special.ndtr((x - self.mean) / self.std)

    def ppf(self, u):
        return self.mean + self.std * special.ndtri(u)

    def logpdf(self, x):
        z = (x - self.mean) / self.std
        return -0.5 * z * z - 0.5 * math.log(2.0 * math.pi * self.var)

    def to_dict(self):
        return {"dist": "normal", "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class LogNormal:
    """Lognormal marginal: ``log x ~ N(mean, var)``."""

    mean: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"LogNormal variance must be positive, got {self.var}")

    @property
    def sigma(self):
        return math.sqrt(self.var)

    @property
    def std(self):
        return math.sqrt((math.exp(self.var) - 1.0) * math.exp(2.0 * self.mean + self.var))

    def sample(self, rng, size):
        return np.exp(self.mean + self.sigma * rng.standard_normal(size))

    def in_support(self, x):
        return x > 0

    def cdf(self, x):
        with np.errstate(divide="ignore"):
            z = (np.log(x) - self.mean) / self.sigma
        return special.ndtr(z)

    def ppf(self, u):
        return np.exp(self.mean + self.sigma * special.ndtri(u))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        ok = x > 0
        lx = np.log(x[ok])
        z = (lx - self.mean) / self.sigma
        out[ok] = -0.5 * z * z - lx - 0.5 * math.log(2.0 * math.pi * self.var)
        return out

    def to_dict(self):
        return {"dist": "lognormal", "mean": self.mean, "var": self.var}


_MARGINALS = {"uniform": Uniform, "normal": Normal, "lognormal": LogNormal}


class PriorSpec:
    """Product prior over independent components.

    Parameters
    ----------
    components : sequence of Uniform, Normal or LogNormal
    """

    def __init__(self, components: Sequence):
        components = list(components)
        if not components:
            raise ValueError("PriorSpec needs at least one component")
        self.components = components

    def __repr__(self):
        return f"PriorSpec({self.components!r})"

    def __len__(self):
        return len(self.components)

    @property
    def dim(self) -> int:
        return len(self.components)

    @classmethod
    def from_list(cls, items) -> "PriorSpec":
        comps = []
        for item in items:
            item = dict(item)
            try:
                kind = _MARGINALS[item.pop("dist").lower()]
            except KeyError as exc:
                raise ValueError(f"unknown prior component {item!r}") from exc
            comps.append(kind(**item))
        return cls(comps)

    def to_list(self):
        return [c.to_dict() for c in self.components]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("sample count must be >= 1")
        if len(self.components) == 1:
            return self.components[0].sample(rng, n).reshape(n, 1)
        return np.column_stack([c.sample(rng, n) for c in self.components])

    def std(self) -> np.ndarray:
        return np.array([c.std for c in self.components])

    def in_support(self, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        ok = np.ones(theta.shape[0], dtype=bool)
        for i, c in enumerate(self.components):
            ok &= c.in_support(theta[:, i])
        return ok

    def log_density(self, theta) -> np.ndarray | float:
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        theta = np.atleast_2d(theta)
        out = np.zeros(theta.shape[0])
        for i, c in enumerate(self.components):
            out = out + c.logpdf(theta[:, i])
        return float(out[0]) if single else out

    def cdf(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        theta = np.atleast_2d(theta)
        if not np.all(self.in_support(theta)):
            raise ValueError("parameter outside prior support")
        xi = np.column_stack([c.cdf(theta[:, i]) for i, c in enumerate(self.components)])
        return xi[0] if single else xi

    def ppf(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 1
        xi = np.atleast_2d(xi)
        if np.any((xi < 0) | (xi > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        theta = np.column_stack([c.ppf(xi[:, i]) for i, c in enumerate(self.components)])
        return theta[0] if single else theta


def prior_sample(prior: PriorSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. parameter vectors, shape ``(n, n_theta)``."""
    return prior.sample(rng, n)


def cdf_transform(prior: PriorSpec, theta) -> np.ndarray:
    """Map parameters to ``[0, 1]^n`` through the marginal CDFs."""
    return prior.cdf(theta)


def inverse_cdf_transform(prior: PriorSpec, xi) -> np.ndarray:
    return prior.ppf(xi)


# ----------------------------------------------------------------------------
# likelihood
# ----------------------------------------------------------------------------


class GaussianLikelihood:
    """Additive Gaussian noise ``y = G(theta, d) + eps``, ``eps ~ N(0, Sigma)``.

    ``sigma`` may be a scalar (with ``m``), a vector of variances, or a full
    covariance matrix.
    """

    def __init__(self, sigma, m: int | None = None):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            if m is None:
                raise ValueError("scalar variance needs the observation dimension m")
            sigma = np.full(int(m), float(sigma))
        if sigma.ndim == 1:
            if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
                raise ValueError("variances must be positive and finite")
            self.diagonal = True
            self._var = sigma
            self._sd = np.sqrt(sigma)
            self.log_det = float(np.sum(np.log(sigma)))
            self.m = sigma.size
        elif sigma.ndim == 2:
            if sigma.shape[0] != sigma.shape[1] or not np.allclose(sigma, sigma.T):
                raise ValueError("covariance must be a symmetric square matrix")
            try:
                self._chol = np.linalg.cholesky(sigma)
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance is not positive definite") from exc
            self.diagonal = False
            self.log_det = float(2.0 * np.sum(np.log(np.diag(self._chol))))
            self.m = sigma.shape[0]
        else:
            raise ValueError("sigma must be a scalar, vector or matrix")
        if m is not None and int(m) != self.m:
            raise ValueError(f"covariance has dimension {self.m}, expected {m}")
        self.log_norm = -0.5 * self.m * math.log(2.0 * math.pi) - 0.5 * self.log_det

    @property
    def covariance(self) -> np.ndarray:
        if self.diagonal:
            return np.diag(self._var)
        return self._chol @ self._chol.T

    def whiten(self, r: np.ndarray) -> np.ndarray:
        """Return ``L^{-1} r`` along the last axis, where ``Sigma = L L^T``."""
        if self.diagonal:
            return r / self._sd
        from scipy.linalg import solve_triangular

        flat = r.reshape(-1, self.m)
        out = solve_triangular(self._chol, flat.T, lower=True).T
        return out.reshape(r.shape)

    def log_density(self, y, g) -> np.ndarray | float:
        y = np.asarray(y, dtype=float)
        g = np.asarray(g, dtype=float)
        z = self.whiten(y - g)
        q = np.sum(z * z, axis=-1)
        out = self.log_norm - 0.5 * q
        return float(out) if np.ndim(out) == 0 else out

    def sample_noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.m))
        if self.diagonal:
            return z * self._sd
        return z @ self._chol.T

    def to_dict(self):
        if self.diagonal:
            return {"diag": self._var.tolist()}
        return {"cov": self.covariance.tolist()}


def log_likelihood(lik: GaussianLikelihood, y, g) -> float:
    return lik.log_density(y, g)


# ----------------------------------------------------------------------------
# forward models
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignSpace:
    """Box ``[lo_i, hi_i]`` of admissible design vectors."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("bounds must be two equal-length vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
            raise ValueError("bounds must be finite with lo <= hi")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.asarray(self.lower)

    @property
    def hi(self):
        return np.asarray(self.upper)

    def contains(self, d) -> bool:
        d = np.asarray(d, dtype=float)
        return d.shape == (self.dim,) and bool(np.all((d >= self.lo) & (d <= self.hi)))

    def clip(self, d):
        return np.clip(d, self.lo, self.hi)

    def sample(self, rng, n=None):
        size = (self.dim,) if n is None else (n, self.dim)
        return self.lo + (self.hi - self.lo) * rng.random(size)

    def grid(self, points_per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


class ForwardModel(ABC):
    """Deterministic map ``(theta, d) -> R^m``.

    Subclasses implement :meth:`evaluate_batch`; :meth:`evaluate` is the
    single-point convenience wrapper.
    """

    n_theta: int
    n_design: int
    n_obs: int

    @abstractmethod
    def evaluate_batch(self, theta: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Model output for a ``(K, n_theta)`` batch at design ``d``; ``(K, m)``."""

    def evaluate(self, theta, d) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return self.evaluate_batch(theta[None, :], np.asarray(d, dtype=float))[0]

    def design_space(self) -> DesignSpace:
        raise NotImplementedError


def toy_model_eval(kappa, d):
    """``kappa^3 d^2 + kappa exp(-|0.2 - d|)``, broadcasting over inputs."""
    kappa = np.asarray(kappa, dtype=float)
    d = np.asarray(d, dtype=float)
    out = kappa**3 * d**2 + kappa * np.exp(-np.abs(0.2 - d))
    return float(out) if out.ndim == 0 else out


def kappa_e() -> float:
    """Parameter value where the slope in kappa at d=1 overtakes the one at d=0.2."""
    return math.sqrt((1.0 - math.exp(-0.8)) / 2.88)


class ToyModel(ForwardModel):
    """Scalar nonlinear toy model observed at ``n_obs`` design locations."""

    n_theta = 1

    def __init__(self, n_obs: int = 1):
        if n_obs < 1:
            raise ValueError("n_obs must be >= 1")
        self.n_obs = n_obs
        self.n_design = n_obs

    def evaluate_batch(self, theta, d):
        k = np.asarray(theta, dtype=float)[:, :1]
        d = np.asarray(d, dtype=float).reshape(1, -1)
        out = (k * k) * (d * d)
        out += np.exp(-np.abs(0.2 - d))
        out *= k
        return out

    def design_space(self):
        return DesignSpace((0.0,) * self.n_design, (1.0,) * self.n_design)


class LinearModel(ForwardModel):
    """``G(theta, d) = theta * d`` per design coordinate.

    With a Gaussian prior on theta this model has closed-form evidence and
    information gain, which makes it the reference case for estimator tests.
    """

    n_theta = 1

    def __init__(self, n_obs: int = 1, bound: float = 2.0):
        self.n_obs = n_obs
        self.n_design = n_obs
        self.bound = bound

    def evaluate_batch(self, theta, d):
        return np.asarray(theta, dtype=float)[:, :1] * np.asarray(d, dtype=float).reshape(1, -1)

    def design_space(self):
        return DesignSpace((-self.bound,) * self.n_design, (self.bound,) * self.n_design)


# ----------------------------------------------------------------------------
# gridded fields and the synthetic plume
# ----------------------------------------------------------------------------


@dataclass
class GriddedField:
    """Cell-centred values on a regular ``nx x ny x nz`` grid.

    ``values`` has shape ``(nx, ny, nz)``. Layer ``k = 0`` is the surface
    and the ``z`` coordinate of a cell centre is its depth ``(k + 1/2) dz``.
    """

    dims: tuple
    cell_size: tuple
    values: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(v) for v in self.dims)
        self.cell_size = tuple(float(v) for v in self.cell_size)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("grid dims must be three positive integers")
        if len(self.cell_size) != 3 or min(self.cell_size) <= 0:
            raise ValueError("cell sizes must be positive")
        values = np.asarray(self.values, dtype=float)
        if values.size != int(np.prod(self.dims)):
            raise ValueError(f"expected {np.prod(self.dims)} values, got {values.size}")
        self.values = values.reshape(self.dims)

    @property
    def extent(self):
        return tuple(n * h for n, h in zip(self.dims, self.cell_size))

    def centers(self) -> np.ndarray:
        """Cell centres as ``(nx*ny*nz, 3)``, ordered with x fastest, then y, then z."""
        return cell_centers(self.dims, self.cell_size)

    def flat_values(self) -> np.ndarray:
        return self.values.transpose(2, 1, 0).ravel()

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        return snap_to_cell(x, y, self.dims, self.cell_size)

    def observe(self, d, n_layers: int) -> np.ndarray:
        """Values of the top ``n_layers`` at each ``(x, y)`` pair of ``d``."""
        pts = np.asarray(d, dtype=float).reshape(-1, 2)
        out = []
        for x, y in pts:
            i, j = self.cell_index(x, y)
            out.append(self.values[i, j, :n_layers])
        return np.concatenate(out)

    def to_csv(self, path) -> None:
        xyz = self.centers()
        vals = self.flat_values()
        with open(path, "w") as fh:
            fh.write("x,y,z,value\n")
            for (x, y, z), v in zip(xyz, vals):
                fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path, dims, cell_size) -> "GriddedField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        field_ = cls(dims, cell_size, np.zeros(dims))
        for x, y, z, v in data:
            i = int(x // field_.cell_size[0])
            j = int(y // field_.cell_size[1])
            k = int(z // field_.cell_size[2])
            field_.values[i, j, k] = v
        return field_


def cell_centers(dims, cell_size) -> np.ndarray:
    nx, ny, nz = dims
    dx, dy, dz = cell_size
    x = (np.arange(nx) + 0.5) * dx
    y = (np.arange(ny) + 0.5) * dy
    z = (np.arange(nz) + 0.5) * dz
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


def snap_to_cell(x, y, dims, cell_size) -> tuple[int, int]:
    """Index of the nearest cell centre; ties go to the lower index."""
    nx, ny = dims[0], dims[1]
    dx, dy = cell_size[0], cell_size[1]
    if not (0.0 <= x <= nx * dx and 0.0 <= y <= ny * dy):
        raise ValueError(f"location ({x}, {y}) is outside the grid footprint")
    i = min(max(math.ceil(x / dx - 1.0), 0), nx - 1)
    j = min(max(math.ceil(y / dy - 1.0), 0), ny - 1)
    return i, j


@dataclass
class PlumeConfig:
    """Parameters of :class:`PlumeModel`; see the README for the JSON schema."""

    dims: tuple
    cell_size: tuple
    sources: list  # dicts with x, y, strength
    material_map: np.ndarray  # (nx, ny, nz) ints
    spread: list  # per material, length units
    theta_ref: float = -23.5
    tau: float = 1.0
    depth_scale: float = 10.0
    n_layers: int = 3
    n_locations: int = 2

    @classmethod
    def from_dict(cls, cfg: dict) -> "PlumeConfig":
        g = cfg["grid"]
        dims = (int(g["nx"]), int(g["ny"]), int(g["nz"]))
        size = (float(g["dx"]), float(g["dy"]), float(g["dz"]))
        mat = _material_map(cfg.get("materials", {}), dims, size)
        n_mat = int(mat.max()) + 1
        spread = cfg.get("spread", 0.25 * min(dims[0] * size[0], dims[1] * size[1]))
        spread = [float(s) for s in np.broadcast_to(np.asarray(spread, dtype=float), (n_mat,))]
        n_layers = int(cfg.get("n_layers", 3))
        if not 1 <= n_layers <= dims[2]:
            raise ValueError("n_layers must be between 1 and nz")
        sources = [dict(x=float(s["x"]), y=float(s["y"]), strength=float(s.get("strength", 1.0)))
                   for s in cfg["sources"]]
        if not sources:
            raise ValueError("plume model needs at least one source")
        return cls(
            dims=dims,
            cell_size=size,
            sources=sources,
            material_map=mat,
            spread=spread,
            theta_ref=float(cfg.get("theta_ref", -23.5)),
            tau=float(cfg.get("tau", 1.0)),
            depth_scale=float(cfg.get("depth_scale", 10.0)),
            n_layers=n_layers,
            n_locations=int(cfg.get("n_locations", 2)),
        )


def _material_map(spec: dict, dims, size) -> np.ndarray:
    if "array" in spec:
        # nested list indexed [z][y][x]
        arr = np.asarray(spec["array"], dtype=int).transpose(2, 1, 0)
        if arr.shape != dims:
            raise ValueError(f"material array has shape {arr.shape}, grid is {dims}")
        return arr
    mat = np.full(dims, int(spec.get("default", 0)), dtype=int)
    centers = cell_centers(dims, size).reshape(dims[2], dims[1], dims[0], 3).transpose(2, 1, 0, 3)
    for region in spec.get("regions", []):
        sel = np.ones(dims, dtype=bool)
        for axis, key in enumerate("xyz"):
            if key in region:
                lo, hi = region[key]
                c = centers[..., axis]
                sel &= (c >= lo) & (c < hi)
        mat[sel] = int(region["material"])
    return mat


class PlumeModel(ForwardModel):
    """Analytic stand-in for a contaminant transport simulator.

    The field in a cell of material ``s`` is

        A(theta_s) * sum_src w_src exp(-r^2 / (2 l_s^2)) * exp(-depth / L)

    with ``A(theta) = 1 / (1 + exp(-(theta - theta_ref) / tau))``, which is
    increasing in the permeability ``exp(theta)``. ``theta`` holds one
    log-permeability per material. A design is a flat vector of ``(x, y)``
    pairs; each location yields the values of the top ``n_layers`` cells in
    its column.
    """

    def __init__(self, config: PlumeConfig | dict):
        if isinstance(config, dict):
            config = PlumeConfig.from_dict(config)
        self.config = config
        self.n_theta = int(config.material_map.max()) + 1
        if len(config.spread) != self.n_theta:
            raise ValueError("need one spread per material")
        self.n_design = 2 * config.n_locations
        self.n_obs = config.n_locations * config.n_layers
        self._shape = self._shape_field()

    @classmethod
    def from_json(cls, path) -> "PlumeModel":
        cfg = json.loads(Path(path).read_text())
        return cls(cfg.get("model", cfg))

    @property
    def dims(self):
        return self.config.dims

    @property
    def cell_size(self):
        return self.config.cell_size

    def _shape_field(self) -> np.ndarray:
        c = self.config
        nx, ny, nz = c.dims
        centers = cell_centers(c.dims, c.cell_size).reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
        spread = np.asarray(c.spread)[c.material_map]
        s = np.zeros(c.dims)
        for src in c.sources:
            r2 = (centers[..., 0] - src["x"]) ** 2 + (centers[..., 1] - src["y"]) ** 2
            s += src["strength"] * np.exp(-0.5 * r2 / spread**2)
        return s * np.exp(-centers[..., 2] / c.depth_scale)

    def amplitude(self, theta):
        return special.expit((np.asarray(theta, dtype=float) - self.config.theta_ref) / self.config.tau)

    def field(self, theta) -> GriddedField:
        theta = np.asarray(theta, dtype=float)
        amp = self.amplitude(theta)[self.config.material_map]
        return GriddedField(self.dims, self.cell_size, amp * self._shape)

    def observed_cells(self, d) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell indices ``(i, j, k)`` behind each observation of design ``d``."""
        pts = np.asarray(d, dtype=float).reshape(-1, 2)
        if pts.shape[0] != self.config.n_locations:
            raise ValueError(f"design needs {self.config.n_locations} (x, y) pairs")
        ii, jj, kk = [], [], []
        for x, y in pts:
            i, j = snap_to_cell(x, y, self.dims, self.cell_size)
            for k in range(self.config.n_layers):
                ii.append(i)
                jj.append(j)
                kk.append(k)
        return np.array(ii), np.array(jj), np.array(kk)

    def evaluate_batch(self, theta, d):
        theta = np.asarray(theta, dtype=float)
        i, j, k = self.observed_cells(d)
        mats = self.config.material_map[i, j, k]
        return self.amplitude(theta[:, mats]) * self._shape[i, j, k]

    def observed_field_batch(self, theta) -> np.ndarray:
        """Values of every cell in the observable layers, ``(K, nx*ny*n_layers)``."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        nl = self.config.n_layers
        mats = self.config.material_map[:, :, :nl].transpose(2, 1, 0).ravel()
        shape = self._shape[:, :, :nl].transpose(2, 1, 0).ravel()
        return self.amplitude(theta[:, mats]) * shape

    def observed_materials(self) -> set:
        return set(np.unique(self.config.material_map[:, :, : self.config.n_layers]).tolist())

    def design_space(self):
        ex, ey, _ = (n * h for n, h in zip(self.dims, self.cell_size))
        n = self.config.n_locations
        return DesignSpace((0.0,) * (2 * n), (ex, ey) * n)


def plume_model_eval(model: PlumeModel, theta, d) -> np.ndarray:
    return model.evaluate(theta, d)


# ----------------------------------------------------------------------------
# data and posterior
# ----------------------------------------------------------------------------


def sample_data(model: ForwardModel, lik: GaussianLikelihood, theta, d, rng) -> np.ndarray:
    """One noisy observation vector ``G(theta, d) + eps``."""
    g = model.evaluate(theta, d)
    return g + lik.sample_noise(rng, 1)[0]


def posterior_log_density(model, lik, prior, y, d, theta) -> float:
    """Unnormalised log posterior; ``-inf`` outside the prior support."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not prior.in_support(theta)[0]:
        return -np.inf
    lp = prior.log_density(theta)
    if not np.isfinite(lp):
        return -np.inf
    return lik.log_density(y, model.evaluate(theta, d)) + lp
