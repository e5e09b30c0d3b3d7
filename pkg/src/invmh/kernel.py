"""Metropolis-Hastings machinery on the lifted state (x, v).

The sampling-mode step uses the true joint density ratio with the
Metropolis test; the training-mode step delegates the ratio to the critic
and uses the Barker test. Chains record post-burn-in positions into Trace
objects that all diagnostics consume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad

__all__ = [
    "accept_prob",
    "ChainState",
    "ChainRNG",
    "Trace",
    "lognormal",
    "mh_step_true",
    "mh_step_adversarial",
    "mh_step_true_batch",
    "run_chain",
    "run_parallel_chains",
    "write_trace",
    "read_trace",
]

_LOG_2PI = np.log(2.0 * np.pi)


def lognormal(v):
    """log N(v | 0, I), summed over the last axis."""
    v = np.asarray(v, dtype=np.float64)
    return -0.5 * np.sum(v * v, axis=-1) - 0.5 * v.shape[-1] * _LOG_2PI


def accept_prob(kind, log_ratio):
    """Acceptance probability for a log density ratio.

    Barker: sigmoid(log_ratio); Metropolis: min(1, exp(log_ratio)).
    Both are evaluated in a form stable for large |log_ratio|.
    """
    log_ratio = np.asarray(log_ratio, dtype=np.float64)
    if kind == "barker":
        e = np.exp(-np.abs(log_ratio))
        return np.where(log_ratio >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if kind == "metropolis":
        return np.exp(np.minimum(log_ratio, 0.0))
    raise ValueError(f"unknown test function '{kind}'")


class ChainRNG:
    """Independent streams for auxiliary refresh and accept/reject draws,
    split from one seed so parallel chains stay reproducible."""

    def __init__(self, seed):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        child_v, child_u = ss.spawn(2)
        self.v = np.random.default_rng(child_v)
        self.u = np.random.default_rng(child_u)


@dataclass
class ChainState:
    x: np.ndarray
    v: np.ndarray
    logp: float  # cached joint log-density log p(x) + log N(v)


@dataclass
class Trace:
    states: np.ndarray  # (n_keep, dim)
    accepts: np.ndarray  # (n_keep,) bool
    seed: int
    target: str
    kernel: str
    n_burn: int
    n_nonfinite: int = 0
    wall_time_keep: float = 0.0  # seconds spent in the kept-steps phase
    extra: dict = field(default_factory=dict)

    @property
    def accept_rate(self):
        return float(np.mean(self.accepts)) if len(self.accepts) else 0.0


def _init_state(target, x, rng):
    x = np.asarray(x, dtype=np.float64)
    v = rng.v.standard_normal(x.shape[0])
    return ChainState(x, v, float(target.log_density(x) + lognormal(v)))


def mh_step_true(state, target, proposal, rng, test="metropolis"):
    """One involutive MH step with the true density ratio.

    Refreshes v ~ N(0, I), proposes z' = M(x, v) and accepts with
    r(exp(logp(z') + log|det J| - logp(z))). Non-finite proposal densities
    auto-reject (flagged in the returned tuple's third element).
    """
    v = rng.v.standard_normal(state.x.shape[0])
    logp_cur = float(target.log_density(state.x) + lognormal(v))
    z = np.concatenate([state.x, v])
    z_new = proposal.apply_array(z)
    n = state.x.shape[0]
    x_new, v_new = z_new[:n], z_new[n:]
    logp_new = float(target.log_density(x_new) + lognormal(v_new))
    log_ratio = logp_new - logp_cur + float(proposal.log_det_jacobian(z))
    if not np.isfinite(logp_new):
        return ChainState(state.x, v, logp_cur), False, True
    if rng.u.uniform() < accept_prob(test, log_ratio):
        return ChainState(x_new, v_new, logp_new), True, False
    return ChainState(state.x, v, logp_cur), False, False


def mh_step_adversarial(state, proposal, critic, rng, test="barker"):
    """Training-mode step: acceptance from the critic, no target evaluated."""
    v = rng.v.standard_normal(state.x.shape[0])
    z = np.concatenate([state.x, v])
    z_new = proposal.apply_array(z)
    with no_grad():
        d = float(critic.eval(Tensor(z), Tensor(z_new)).data)
    if rng.u.uniform() < accept_prob(test, d):
        n = state.x.shape[0]
        return ChainState(z_new[:n], z_new[n:], np.nan), True, False
    return ChainState(state.x, v, np.nan), False, False


def mh_step_true_batch(X, target, proposal, rng, test="metropolis"):
    """Vectorized true-ratio MH step over a batch of positions (B, n).

    Used for sample-pool refresh during training; each row behaves like an
    independent chain sharing one RNG stream.
    """
    X = np.asarray(X, dtype=np.float64)
    B, n = X.shape
    v = rng.v.standard_normal((B, n))
    logp_cur = target.log_density(X) + lognormal(v)
    z = np.concatenate([X, v], axis=1)
    z_new = proposal.apply_array(z)
    x_new, v_new = z_new[:, :n], z_new[:, n:]
    logp_new = target.log_density(x_new) + lognormal(v_new)
    log_ratio = logp_new - logp_cur + proposal.log_det_jacobian(z)
    finite = np.isfinite(logp_new)
    accept = finite & (rng.u.uniform(size=B) < accept_prob(test, np.where(finite, log_ratio, -np.inf)))
    X_out = np.where(accept[:, None], x_new, X)
    return X_out, accept


def run_chain(step, init_x, target, n_burn, n_keep, seed, kernel_name):
    """Run one chain; `step(state, rng) -> (state, accepted, nonfinite)`.

    Deterministic given the seed; only post-burn-in states are recorded.
    """
    import time

    if n_burn < 0 or n_keep < 0:
        raise ValueError("n_burn and n_keep must be >= 0")
    rng = ChainRNG(seed)
    state = _init_state(target, init_x, rng)
    for _ in range(n_burn):
        state, _, _ = step(state, rng)
    dim = state.x.shape[0]
    states = np.empty((n_keep, dim))
    accepts = np.zeros(n_keep, dtype=bool)
    n_nonfinite = 0
    t0 = time.perf_counter()
    for i in range(n_keep):
        state, acc, bad = step(state, rng)
        states[i] = state.x
        accepts[i] = acc
        n_nonfinite += bad
    wall = time.perf_counter() - t0
    return Trace(states, accepts, seed, target.name, kernel_name, n_burn,
                 n_nonfinite=n_nonfinite, wall_time_keep=wall)


def run_parallel_chains(step, inits, target, n_burn, n_keep, seeds, kernel_name,
                        threads=1):
    """Independent chains, one distinct seed each."""
    if len(seeds) != len(inits):
        raise ValueError("need one seed per chain")
    if len(set(int(s) for s in seeds)) != len(seeds):
        raise ValueError("chain seeds must be distinct")
    args = [(step, x0, target, n_burn, n_keep, s, kernel_name)
            for x0, s in zip(inits, seeds)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: run_chain(*a), args))
    return [run_chain(*a) for a in args]


def write_trace(trace, path):
    """Trace CSV plus a key=value metadata sidecar at `<path>.meta`."""
    dim = trace.states.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "accept"] + [f"x{i}" for i in range(dim)])
        for i in range(trace.states.shape[0]):
            w.writerow([i, int(trace.accepts[i])]
                       + [repr(float(v)) for v in trace.states[i]])
    with open(str(path) + ".meta", "w") as f:
        f.write(f"seed={trace.seed}\n")
        f.write(f"target={trace.target}\n")
        f.write(f"kernel={trace.kernel}\n")
        f.write(f"n_burn={trace.n_burn}\n")
        f.write(f"n_nonfinite={trace.n_nonfinite}\n")


def read_trace(path):
    with open(str(path) + ".meta") as f:
        meta = dict(line.strip().split("=", 1) for line in f if line.strip())
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, rows = rows[0], rows[1:]
    dim = len(header) - 2
    states = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), dim)
    accepts = np.array([bool(int(r[1])) for r in rows])
    return Trace(states, accepts, int(meta["seed"]), meta["target"],
                 meta["kernel"], int(meta["n_burn"]),
                 n_nonfinite=int(meta.get("n_nonfinite", 0)))
