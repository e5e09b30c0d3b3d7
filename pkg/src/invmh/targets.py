"""Target log-densities and their gradients.

Four synthetic 2D energies (mog2, mog6, ring, ring5), an unbalanced
3-component mixture, and Bayesian logistic-regression posteriors over
delimited-text datasets. All densities are unnormalized log-densities in
nats, vectorized over a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TargetDensity",
    "Dataset",
    "LogisticPosterior",
    "load_dataset",
    "make_target",
    "TARGET_NAMES",
    "mog2",
    "mog6",
    "ring",
    "ring5",
    "mog3_unbalanced",
    "MOG3_WEIGHTS",
    "MOG3_CENTERS",
    "standardized",
]


@dataclass(frozen=True)
class TargetDensity:
    """Named unnormalized log-density over R^dim with gradient access."""

    name: str
    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    grad_log_density: Callable[[np.ndarray], np.ndarray]
    # analytic moments when known (used as ESS reference for mixtures)
    mean: np.ndarray | None = None
    var: np.ndarray | None = None


def standardized(target, mean, scale):
    """Reparameterize `target` over whitened coordinates z = (x - mean)/scale.

    Sampling z from the returned density and mapping back through
    x = mean + scale*z samples the original target exactly, for any finite
    mean and positive scale; good estimates just make the whitened density
    close to a standard normal, which is the geometry the proposal
    architecture handles best. Normalization constants are dropped (the
    density stays unnormalized either way).
    """
    mean = np.asarray(mean, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if mean.shape != (target.dim,) or scale.shape != (target.dim,):
        raise ValueError(
            f"mean/scale must have shape ({target.dim},), "
            f"got {mean.shape} and {scale.shape}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale))):
        raise ValueError("mean and scale must be finite")
    if np.any(scale <= 0.0):
        raise ValueError("scale entries must be positive")

    def logp(z):
        return target.log_density(mean + scale * np.asarray(z))

    def grad(z):
        return scale * target.grad_log_density(mean + scale * np.asarray(z))

    return TargetDensity(target.name + "_whitened", target.dim, logp, grad)


# ---------------------------------------------------------------------------
# Gaussian mixtures

_LOG_2PI = np.log(2.0 * np.pi)


def _mixture(centers, sigma, weights):
    centers = np.asarray(centers, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    log_w = np.log(weights)
    dim = centers.shape[1]
    log_norm = -0.5 * dim * _LOG_2PI - dim * np.log(sigma)
    inv_var = 1.0 / sigma**2

    def logp(x):
        x = np.asarray(x, dtype=np.float64)
        diff = x[..., None, :] - centers  # (..., K, dim)
        log_comp = log_w + log_norm - 0.5 * inv_var * np.sum(diff * diff, axis=-1)
        m = np.max(log_comp, axis=-1)
        return m + np.log(np.sum(np.exp(log_comp - m[..., None]), axis=-1))

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        diff = x[..., None, :] - centers
        log_comp = log_w + log_norm - 0.5 * inv_var * np.sum(diff * diff, axis=-1)
        m = np.max(log_comp, axis=-1, keepdims=True)
        resp = np.exp(log_comp - m)
        resp /= np.sum(resp, axis=-1, keepdims=True)
        return -inv_var * np.sum(resp[..., None] * diff, axis=-2)

    # exact mixture moments
    mean = weights @ centers
    second = weights @ (centers**2) + sigma**2
    var = second - mean**2
    return logp, grad, mean, var


def _mixture_target(name, centers, sigma, weights):
    logp, grad, mean, var = _mixture(centers, sigma, weights)
    dim = np.asarray(centers).shape[1]
    return TargetDensity(name, dim, logp, grad, mean=mean, var=var)


def mog2():
    """Equal-weight two-Gaussian mixture at (+-5, 0), sigma 0.5."""
    return _mixture_target("mog2", [[5.0, 0.0], [-5.0, 0.0]], 0.5, [0.5, 0.5])


def mog6():
    """Six equal-weight modes on a circle of radius 5, sigma 0.5."""
    idx = np.arange(1, 7)
    centers = np.stack(
        [5.0 * np.sin(idx * np.pi / 3.0), 5.0 * np.cos(idx * np.pi / 3.0)], axis=1
    )
    return _mixture_target("mog6", centers, 0.5, np.full(6, 1.0 / 6.0))


MOG3_WEIGHTS = np.array([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0])
# equilateral triangle centered at the origin, circumradius 5; heavy mode last
MOG3_CENTERS = np.array(
    [
        [5.0 * np.sin(2.0 * np.pi / 3.0), 5.0 * np.cos(2.0 * np.pi / 3.0)],
        [5.0 * np.sin(4.0 * np.pi / 3.0), 5.0 * np.cos(4.0 * np.pi / 3.0)],
        [0.0, 5.0],
    ]
)
MOG3_SIGMA = 0.5


def mog3_unbalanced():
    """3-component isotropic mixture with weights (1/6, 1/6, 2/3)."""
    return _mixture_target("mog3_unbalanced", MOG3_CENTERS, MOG3_SIGMA, MOG3_WEIGHTS)


# ---------------------------------------------------------------------------
# ring energies; log p(x) = -U(x)


def ring():
    """Single ring of radius 2: U = ((|x| - 2) / 0.32)^2."""

    def logp(x):
        x = np.asarray(x, dtype=np.float64)
        r = np.sqrt(np.sum(x * x, axis=-1))
        return -(((r - 2.0) / 0.32) ** 2)

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        r = np.sqrt(np.sum(x * x, axis=-1))
        # dU/dx = 2 (r - 2) / 0.32^2 * x / r; subgradient 0 at the origin
        safe_r = np.where(r > 0.0, r, 1.0)
        coef = np.where(r > 0.0, -2.0 * (r - 2.0) / (0.32**2 * safe_r), 0.0)
        return coef[..., None] * x

    return TargetDensity("ring", 2, logp, grad)


def ring5():
    """Five concentric rings: U = min_i ((|x| - i)^2 / 0.04), i = 1..5."""
    radii = np.arange(1.0, 6.0)

    def _energies(r):
        return (r[..., None] - radii) ** 2 / 0.04

    def logp(x):
        x = np.asarray(x, dtype=np.float64)
        r = np.sqrt(np.sum(x * x, axis=-1))
        return -np.min(_energies(r), axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=np.float64)
        r = np.sqrt(np.sum(x * x, axis=-1))
        # ties broken toward the lowest index by argmin
        i = np.argmin(_energies(r), axis=-1)
        nearest = radii[i]
        safe_r = np.where(r > 0.0, r, 1.0)
        coef = np.where(r > 0.0, -2.0 * (r - nearest) / (0.04 * safe_r), 0.0)
        return coef[..., None] * x

    return TargetDensity("ring5", 2, logp, grad)


# ---------------------------------------------------------------------------
# Bayesian logistic regression


@dataclass(frozen=True)
class Dataset:
    """Design matrix (intercept column included) and binary labels."""

    name: str
    X: np.ndarray
    y: np.ndarray

    @property
    def n_covariates(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class LogisticPosterior:
    dataset: Dataset
    prior_mean: np.ndarray = field(default=None)
    prior_var: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.dataset.n_covariates
        if self.prior_mean is None:
            object.__setattr__(self, "prior_mean", np.zeros(d))
        if self.prior_var is None:
            object.__setattr__(self, "prior_var", np.ones(d))

    def log_density(self, beta):
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape[-1] != self.dataset.n_covariates:
            raise ValueError(
                f"beta dim {beta.shape[-1]} != covariate count "
                f"{self.dataset.n_covariates}"
            )
        z = beta @ self.dataset.X.T  # (..., n_points)
        y = self.dataset.y
        # y*log(sig(z)) + (1-y)*log(1-sig(z)) = y*z - softplus(z)
        sp = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
        loglik = np.sum(y * z - sp, axis=-1)
        diff = beta - self.prior_mean
        logprior = -0.5 * np.sum(
            diff * diff / self.prior_var + np.log(2.0 * np.pi * self.prior_var),
            axis=-1,
        )
        return loglik + logprior

    def grad_log_density(self, beta):
        beta = np.asarray(beta, dtype=np.float64)
        z = beta @ self.dataset.X.T
        e = np.exp(-np.abs(z))
        sig = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        grad_lik = (self.dataset.y - sig) @ self.dataset.X
        grad_prior = -(beta - self.prior_mean) / self.prior_var
        return grad_lik + grad_prior

    def as_target(self):
        return TargetDensity(
            self.dataset.name,
            self.dataset.n_covariates,
            self.log_density,
            self.grad_log_density,
        )


EXPECTED_SHAPES = {"heart": (532, 14), "australian": (690, 15), "german": (1000, 25)}


def load_dataset(path, name, delimiter=None):
    """Load a delimited-text dataset: one record per line, label last.

    Features are standardized per column (zero mean, unit variance, constant
    columns mapped to zero) and an intercept column of ones is appended.
    Lines starting with '#' are skipped. `delimiter=None` splits on
    whitespace; pass ',' for CSV.
    """
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(v) for v in line.split(delimiter)]
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: malformed row") from e
            rows.append((lineno, vals))
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    width = len(rows[0][1])
    for lineno, vals in rows:
        if len(vals) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} fields, got {len(vals)}")
    data = np.array([v for _, v in rows], dtype=np.float64)
    X_raw, y = data[:, :-1], data[:, -1]
    labels = np.unique(y)
    if not np.all(np.isin(labels, [0.0, 1.0])):
        raise ValueError(f"{path}: labels must be 0/1, found {labels}")
    mu = X_raw.mean(axis=0)
    sd = X_raw.std(axis=0)
    sd = np.where(sd > 0.0, sd, 1.0)
    X = (X_raw - mu) / sd
    X = np.hstack([X, np.ones((X.shape[0], 1))])
    return Dataset(name, X, y.astype(np.float64))


TARGET_NAMES = ["mog2", "mog6", "ring", "ring5", "mog3_unbalanced"]

_FACTORIES = {
    "mog2": mog2,
    "mog6": mog6,
    "ring": ring,
    "ring5": ring5,
    "mog3_unbalanced": mog3_unbalanced,
}


def make_target(name, dataset_path=None):
    """Construct a TargetDensity by name; logistic posteriors need a file."""
    if name in _FACTORIES:
        return _FACTORIES[name]()
    if name in EXPECTED_SHAPES:
        if dataset_path is None:
            raise ValueError(f"target '{name}' requires a dataset path")
        ds = load_dataset(dataset_path, name)
        return LogisticPosterior(ds).as_target()
    raise ValueError(f"unknown target '{name}'")
