"""Chain-quality metrics: autocorrelation ESS, Gelman R-hat, predictive
log-posterior, posterior-mean matching, mode-weight recovery and grid-KDE
total variation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReferenceMoments",
    "EssReport",
    "autocorr",
    "ess",
    "rhat",
    "predictive_log_posterior",
    "mean_match",
    "mode_weights",
    "KdeTvResult",
    "kde_tv",
    "split_dataset",
]


@dataclass(frozen=True)
class ReferenceMoments:
    """Per-dimension mean/variance from an independent sampler (or analytic)."""

    mean: np.ndarray
    var: np.ndarray
    source: str = "unknown"

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=np.float64)))
        object.__setattr__(self, "var", np.atleast_1d(np.asarray(self.var, dtype=np.float64)))
        if np.any(self.var <= 0):
            raise ValueError("reference variance must be strictly positive")


@dataclass(frozen=True)
class EssReport:
    per_dim: np.ndarray
    min_ess: float
    truncation_lag: int
    ess_per_second_per_chain: float = float("nan")


def autocorr(series, ref: ReferenceMoments, s: int, dim: int = 0):
    """Lag-s autocorrelation against external reference moments:
    rho_s = 1 / (var (N - s)) * sum_{n>s} (x_n - mu)(x_{n-s} - mu)."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    N = x.shape[0]
    if not 0 <= s < N:
        raise ValueError(f"lag {s} out of range for series length {N}")
    mu, var = ref.mean[dim], ref.var[dim]
    xd = x[:, dim] - mu
    if s == 0:
        return float(np.dot(xd, xd) / (var * N))
    return float(np.dot(xd[s:], xd[:-s]) / (var * (N - s)))


def ess(states, ref: ReferenceMoments, wall_time: float | None = None):
    """Per-dimension effective sample size with the (1 - s/N) taper,
    truncating at the first lag where the autocorrelation drops below 0.05.

    Returns the minimum over dimensions and the largest truncation lag.
    """
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    N, dim = x.shape
    if N < 10:
        raise ValueError("need at least 10 samples for an ESS estimate")
    per_dim = np.empty(dim)
    max_lag = 0
    for d in range(dim):
        xd = x[:, d] - ref.mean[d]
        var = ref.var[d]
        if np.ptp(x[:, d]) == 0.0:
            # constant series: the autocorrelation is ill-defined, so the
            # sum is truncated immediately and the estimate degenerates to N
            per_dim[d] = N
            max_lag = max(max_lag, 1)
            continue
        acc = 0.0
        lag = 1
        for s in range(1, N):
            rho = np.dot(xd[s:], xd[:-s]) / (var * (N - s))
            if rho < 0.05:
                lag = s
                break
            acc += (1.0 - s / N) * rho
            lag = s
        per_dim[d] = N / (1.0 + 2.0 * acc)
        max_lag = max(max_lag, lag)
    per_dim = np.clip(per_dim, 1e-12, N)
    min_ess = float(per_dim.min())
    eps_per_sec = float("nan")
    if wall_time is not None and wall_time > 0:
        eps_per_sec = min_ess / wall_time
    return EssReport(per_dim, min_ess, max_lag, eps_per_sec)


def rhat(chains):
    """Classic potential-scale-reduction factor, max over dimensions.

    chains: (m, n, dim) with m >= 2 chains of equal length n. Values below
    one (finite-sample noise when the between-chain variance vanishes) are
    clamped to exactly 1.
    """
    c = np.asarray(chains, dtype=np.float64)
    if c.ndim == 2:
        c = c[:, :, None]
    m, n, dim = c.shape
    if m < 2:
        raise ValueError("rhat needs at least 2 chains")
    if n < 10:
        raise ValueError("rhat needs chains of length >= 10")
    chain_means = c.mean(axis=1)  # (m, dim)
    grand_mean = chain_means.mean(axis=0)
    B = n / (m - 1) * np.sum((chain_means - grand_mean) ** 2, axis=0)
    W = np.mean(np.var(c, axis=1, ddof=1), axis=0)
    var_plus = (n - 1) / n * W + B / n
    r = np.sqrt(var_plus / W)
    return float(np.max(np.maximum(r, 1.0)))


def predictive_log_posterior(chain, X_test, y_test):
    """Average over test points of log of the chain-averaged Bernoulli
    likelihood, stabilized with log-sum-exp."""
    beta = np.asarray(chain, dtype=np.float64)
    X_test = np.asarray(X_test, dtype=np.float64)
    y_test = np.asarray(y_test, dtype=np.float64)
    if beta.ndim != 2 or beta.shape[0] == 0:
        raise ValueError("chain must be a nonempty (samples, dim) array")
    if X_test.shape[0] == 0:
        raise ValueError("empty test split")
    if beta.shape[1] != X_test.shape[1]:
        raise ValueError(
            f"chain dim {beta.shape[1]} != covariate count {X_test.shape[1]}"
        )
    z = X_test @ beta.T  # (n_test, n_samples)
    sp = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    loglik = y_test[:, None] * z - sp
    m = loglik.max(axis=1, keepdims=True)
    log_avg = m[:, 0] + np.log(np.mean(np.exp(loglik - m), axis=1))
    return float(np.mean(log_avg))


def mean_match(chain, ref: ReferenceMoments):
    """l2 distance between the chain mean and the reference mean."""
    chain = np.asarray(chain, dtype=np.float64)
    mu = chain.mean(axis=0)
    if mu.shape != ref.mean.shape:
        raise ValueError(f"dimension mismatch: {mu.shape} vs {ref.mean.shape}")
    return float(np.linalg.norm(mu - ref.mean))


def mode_weights(samples, centers, truth):
    """Nearest-center assignment frequencies and KL(empirical || truth).

    Ties go to the lowest center index; the 0*log(0) = 0 convention applies.
    """
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if samples.shape[0] == 0:
        raise ValueError("mode_weights needs at least one sample")
    d2 = np.sum((samples[:, None, :] - centers) ** 2, axis=-1)
    assign = np.argmin(d2, axis=1)
    weights = np.bincount(assign, minlength=centers.shape[0]) / samples.shape[0]
    nz = weights > 0
    kl = float(np.sum(weights[nz] * np.log(weights[nz] / truth[nz])))
    return weights, kl


@dataclass(frozen=True)
class KdeTvResult:
    tv: float
    frac_outside_grid: float
    warning: str | None = None


def kde_tv(samples, target, bounds, resolution=200):
    """Total variation between a Gaussian-KDE of the samples and the target,
    both renormalized over a regular 2D grid.

    bounds: ((x_lo, x_hi), (y_lo, y_hi)). Bandwidth is Scott's rule. The
    gridded target is convolved with the same kernel before comparison, so
    the bandwidth bias hits both sides equally and TV -> 0 for samples drawn
    from the target itself. If more than 1% of the samples fall outside the
    grid a warning is recorded.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)

    inside = ((samples[:, 0] >= x_lo) & (samples[:, 0] <= x_hi)
              & (samples[:, 1] >= y_lo) & (samples[:, 1] <= y_hi))
    frac_outside = 1.0 - float(np.mean(inside))
    warning = None
    if frac_outside > 0.01:
        warning = f"{frac_outside:.1%} of samples outside the KDE grid"

    bw = n ** (-1.0 / 6.0) * samples.std(axis=0, ddof=1)  # Scott, d = 2
    bw = np.maximum(bw, 1e-12)
    # the product kernel makes each sample's grid contribution rank-1
    ex = np.exp(-0.5 * ((xs[:, None] - samples[None, :, 0]) / bw[0]) ** 2)
    ey = np.exp(-0.5 * ((ys[:, None] - samples[None, :, 1]) / bw[1]) ** 2)
    kde = (ex @ ey.T).ravel()
    total = kde.sum()
    if total <= 0.0:  # every sample far off-grid: disjoint supports
        return KdeTvResult(1.0, frac_outside, warning)
    kde /= total

    true_logp = target.log_density(grid)
    true_p = np.exp(true_logp - true_logp.max()).reshape(resolution, resolution)
    # separable smoothing of the gridded target with the sample bandwidth
    kx = np.exp(-0.5 * ((xs[:, None] - xs[None, :]) / bw[0]) ** 2)
    ky = np.exp(-0.5 * ((ys[:, None] - ys[None, :]) / bw[1]) ** 2)
    true_p = (kx @ true_p @ ky.T).ravel()
    true_p /= true_p.sum()

    tv = 0.5 * float(np.sum(np.abs(kde - true_p)))
    # the cell area cancels after renormalizing both densities to the grid
    del cell
    return KdeTvResult(tv, frac_outside, warning)


def split_dataset(dataset, test_frac=0.2, seed=1234):
    """Deterministic train/test split of a targets.Dataset."""
    from .targets import Dataset

    n = dataset.X.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(test_frac * n))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    train = Dataset(dataset.name + "_train", dataset.X[train_idx], dataset.y[train_idx])
    test = Dataset(dataset.name + "_test", dataset.X[test_idx], dataset.y[test_idx])
    return train, test
