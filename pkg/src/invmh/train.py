"""Adversarial training of the proposal against the critic, wrapped in a
bootstrap loop: each round the sample pool is partially re-drawn from the
wide initial distribution, polished with a few random-walk MH steps, and
refreshed with true-ratio MH steps under the current kernel; then proposal
and critic take alternating Adam steps on minibatches from the pool.

The proposal maximizes the expected Barker acceptance (through its
non-saturating logarithm, which keeps gradients alive for regions the
kernel currently maps badly); the critic minimizes the expected r*log(r)
of its own acceptance value.

Training oscillates, so the returned proposal is the parameter snapshot
that scored best on periodic mixing pilots, not the final round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Adam, Tensor, backward, logsigmoid, mul, narrow, neg,
                       sigmoid, tmean, tsum)
from .kernel import ChainRNG, mh_step_true_batch

__all__ = [
    "TrainConfig",
    "SamplePool",
    "TrainDivergence",
    "TrainHistory",
    "loss_acceptance",
    "loss_acceptance_log",
    "loss_acceptance_jump",
    "loss_disc",
    "bootstrap_train",
]


@dataclass
class TrainConfig:
    disc_steps: int = 3
    kernel_steps: int = 1
    batch_size: int = 256
    lr: float = 1e-3
    pool_size: int = 1024
    bootstrap_rounds: int = 200
    mh_steps_per_round: int = 10
    # initial pool is N(0, p0_scale^2 I); wide enough to cover every mode,
    # otherwise the critic never sees (and the kernel never learns) the
    # regions the refresh chain cannot reach early on
    p0_scale: float = 1.0
    # per round, this fraction of the pool is re-drawn from the initial
    # distribution so coverage of slow-to-reach modes never drains away,
    # then the whole pool takes a few random-walk MH polish steps
    reinject_frac: float = 0.125
    rwmh_steps: int = 3
    rwmh_scale: float = 0.5
    # keep the best parameter snapshot seen during training instead of the
    # final round; scored every `snapshot_every` rounds (after a warm-up)
    # by a short mixing pilot
    keep_best: bool = True
    snapshot_every: int = 10
    snapshot_warmup: int = 20
    # weight of the acceptance-weighted expected-squared-jump term added to
    # the proposal objective; 0 disables it. The plain adversarial objective
    # is indifferent between any density-preserving involutions, so it never
    # prefers maps that cross between distant modes — this term does.
    jump_bonus: float = 0.0

    def __post_init__(self):
        for name in ("disc_steps", "kernel_steps", "batch_size", "pool_size",
                     "bootstrap_rounds", "mh_steps_per_round", "rwmh_steps",
                     "snapshot_every"):
            value = getattr(self, name)
            zero_ok = name in ("bootstrap_rounds", "rwmh_steps")
            if value < 0 or (not zero_ok and value == 0):
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.reinject_frac < 1.0:
            raise ValueError("reinject_frac must be in [0, 1)")
        if self.jump_bonus < 0.0:
            raise ValueError("jump_bonus must be >= 0")
        if self.disc_steps < self.kernel_steps:
            raise ValueError("disc_steps should be >= kernel_steps")


@dataclass
class SamplePool:
    positions: np.ndarray  # (N, dim)
    provenance: np.ndarray  # round index each row was last refreshed

    @classmethod
    def initial(cls, n, dim, rng, scale=1.0):
        return cls(scale * rng.standard_normal((n, dim)), np.zeros(n, dtype=int))


class TrainDivergence(RuntimeError):
    def __init__(self, round_index, message):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index


def _lift(batch, rng):
    """Attach fresh auxiliaries: (B, n) positions -> (B, 2n) states."""
    v = rng.standard_normal(batch.shape)
    return Tensor(np.concatenate([batch, v], axis=1))


def _critic_value(proposal, critic, batch, rng):
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    z = _lift(batch, rng)
    return critic.eval(z, proposal.apply(z))


def loss_acceptance(proposal, critic, batch, rng):
    """Mean Barker acceptance of the critic value over the batch; the value
    to MAXIMIZE over the proposal parameters. Gradients flow into the
    proposal through the critic's dependence on M(z)."""
    return tmean(sigmoid(_critic_value(proposal, critic, batch, rng)))


def loss_acceptance_log(proposal, critic, batch, rng):
    """Mean log of the Barker acceptance; same maximizer as
    `loss_acceptance` but with a gradient that does not vanish where the
    critic is confidently negative, so badly-mapped regions keep pulling on
    the proposal instead of being abandoned."""
    return tmean(logsigmoid(_critic_value(proposal, critic, batch, rng)))


def loss_acceptance_jump(proposal, critic, batch, rng, bonus):
    """`loss_acceptance_log` plus `bonus` times the expected squared jump
    E[sigmoid(d) * |x' - x|^2]; the value to MAXIMIZE over the proposal
    parameters. Weighting the jump by the acceptance keeps the term from
    rewarding large moves that would be rejected."""
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    z = _lift(batch, rng)
    mz = proposal.apply(z)
    d = critic.eval(z, mz)
    n = batch.shape[1]
    dx = narrow(mz, 0, n) - narrow(z, 0, n)
    jump = tmean(mul(sigmoid(d), tsum(mul(dx, dx), axis=-1)))
    return tmean(logsigmoid(d)) + jump * bonus


def loss_disc(proposal, critic, batch, rng):
    """Mean r*log(r) of the Barker acceptance; the value to MINIMIZE over
    the critic parameters (r log r, with r = sigmoid(d), computed via the
    stable log-sigmoid)."""
    d = _critic_value(proposal, critic, batch, rng)
    return tmean(mul(sigmoid(d), logsigmoid(d)))


@dataclass
class TrainHistory:
    rounds: list = field(default_factory=list)  # (round, mean_accept, loss_A, loss_disc)

    def append(self, r, acc, la, ld):
        self.rounds.append((r, acc, la, ld))

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("round,mean_accept,loss_A,loss_disc\n")
            for r, acc, la, ld in self.rounds:
                f.write(f"{r},{acc!r},{la!r},{ld!r}\n")


def _grad_step(optimizer, params, loss, sign):
    params.zero_grad()
    backward(neg(loss) if sign > 0 else loss)
    optimizer.step(params.grads())


def _rwmh_batch(X, target, rng, scale):
    """One batch step of isotropic random-walk Metropolis; keeps the pool
    locally equilibrated around whatever modes re-injection lands in."""
    prop = X + scale * rng.v.standard_normal(X.shape)
    log_ratio = target.log_density(prop) - target.log_density(X)
    with np.errstate(over="ignore"):
        acc = rng.u.uniform(size=X.shape[0]) < np.exp(np.minimum(log_ratio, 0.0))
    return np.where(acc[:, None], prop, X)


def _pilot_tv_score(target, proposal, pool_positions, rng, bounds):
    """Mixing score for a parameter snapshot: tile a walker population at a
    single random pool point, run short true-ratio MH, and measure how well
    the late-step spread matches the target (a collapsed or mode-trapped
    kernel cannot re-spread the walkers). Returns accept_rate * (1 - TV)^4,
    weighting coverage much harder than raw acceptance."""
    from .diag import kde_tv  # local import: diag depends on nothing here

    start = pool_positions[rng.u.integers(pool_positions.shape[0])]
    X = np.tile(start, (256, 1)) + 0.01 * rng.v.standard_normal((256, target.dim))
    kept, acc_total = [], 0.0
    n_steps = 40
    for s in range(n_steps):
        X, acc = mh_step_true_batch(X, target, proposal, rng)
        acc_total += float(np.mean(acc))
        if s >= n_steps // 2:
            kept.append(X.copy())
    tv = kde_tv(np.concatenate(kept), target, bounds, resolution=100).tv
    return (acc_total / n_steps) * (1.0 - tv) ** 4


def bootstrap_train(target, proposal, critic, cfg: TrainConfig, seed=0,
                    callback=None):
    """Alternating bootstrap training (pool refresh + adversarial steps).

    Returns (proposal, critic, pool, history); the proposal and critic are
    updated in place. `callback(round, history_row)` is invoked per round.

    Snapshot selection: for 2-D targets the periodic mixing pilot scores
    coverage via a kernel-density TV distance on a grid; for higher
    dimensions (where a grid is unavailable) the expected squared jump
    distance of the pool refresh is used instead.
    """
    ss = np.random.SeedSequence([seed, 0x7261696E])
    s_pool, s_refresh, s_v, s_shuffle, s_eval = ss.spawn(5)
    pool_rng = np.random.default_rng(s_pool)
    refresh_rng = ChainRNG(s_refresh)
    v_rng = np.random.default_rng(s_v)
    shuffle_rng = np.random.default_rng(s_shuffle)
    eval_rng = ChainRNG(s_eval)

    pool = SamplePool.initial(cfg.pool_size, target.dim, pool_rng,
                              scale=cfg.p0_scale)
    b = 1.6 * cfg.p0_scale
    bounds = tuple((-b, b) for _ in range(target.dim))
    use_pilot = target.dim == 2

    opt_theta = Adam(proposal.params, lr=cfg.lr)
    opt_phi = Adam(critic.params, lr=cfg.lr)
    history = TrainHistory()

    n_reinject = int(cfg.reinject_frac * cfg.pool_size)
    best_score, best_theta = -np.inf, None
    for r in range(1, cfg.bootstrap_rounds + 1):
        if n_reinject:
            idx = pool_rng.choice(cfg.pool_size, n_reinject, replace=False)
            pool.positions[idx] = cfg.p0_scale * pool_rng.standard_normal(
                (n_reinject, target.dim))
        for _ in range(cfg.rwmh_steps):
            pool.positions = _rwmh_batch(pool.positions, target, refresh_rng,
                                         cfg.rwmh_scale)

        acc_total = 0.0
        jump_total = 0.0
        for _ in range(cfg.mh_steps_per_round):
            prev = pool.positions
            pool.positions, acc = mh_step_true_batch(
                prev, target, proposal, refresh_rng, test="metropolis")
            acc_total += float(np.mean(acc))
            jump_total += float(np.mean(
                np.sum((pool.positions - prev) ** 2, axis=1)))
        mean_accept = acc_total / cfg.mh_steps_per_round
        pool.provenance[:] = r

        if cfg.keep_best and r > cfg.snapshot_warmup and r % cfg.snapshot_every == 0:
            if use_pilot:
                score = _pilot_tv_score(target, proposal, pool.positions,
                                        eval_rng, bounds)
            else:
                score = jump_total / cfg.mh_steps_per_round
            if score > best_score:
                best_score, best_theta = score, proposal.params.copy_values()

        order = shuffle_rng.permutation(cfg.pool_size)
        la_val = ld_val = float("nan")
        for start in range(0, cfg.pool_size, cfg.batch_size):
            batch = pool.positions[order[start:start + cfg.batch_size]]
            if batch.shape[0] == 0:
                continue
            for _ in range(cfg.kernel_steps):
                if cfg.jump_bonus > 0.0:
                    la = loss_acceptance_jump(proposal, critic, batch, v_rng,
                                              cfg.jump_bonus)
                else:
                    la = loss_acceptance_log(proposal, critic, batch, v_rng)
                la_val = la.item()
                if not np.isfinite(la_val):
                    raise TrainDivergence(r, f"acceptance loss {la_val}")
                _grad_step(opt_theta, proposal.params, la, sign=+1)
            for _ in range(cfg.disc_steps):
                ld = loss_disc(proposal, critic, batch, v_rng)
                ld_val = ld.item()
                if not np.isfinite(ld_val):
                    raise TrainDivergence(r, f"discriminator loss {ld_val}")
                _grad_step(opt_phi, critic.params, ld, sign=-1)

        history.append(r, mean_accept, la_val, ld_val)
        if callback is not None:
            callback(r, history.rounds[-1])

    if cfg.keep_best and best_theta is not None:
        proposal.params.load_values(best_theta)
    return proposal, critic, pool, history
