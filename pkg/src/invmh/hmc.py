"""Hamiltonian Monte Carlo baseline with leapfrog integration.

The protocol is fixed-length leapfrog (default 40 steps, identity mass)
with a step size chosen by grid search on a short pilot run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ChainState, lognormal, run_chain

__all__ = ["HmcConfig", "leapfrog", "hmc_step", "make_hmc_step", "tune_step_size"]


@dataclass
class HmcConfig:
    step_size: float = 0.1
    leapfrog_steps: int = 40

    def __post_init__(self):
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def leapfrog(x, p, grad, eps, n_steps):
    """n_steps of half-kick / drift / half-kick; grad is grad log p(x)."""
    x = np.array(x, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    p = p + 0.5 * eps * grad(x)
    for i in range(n_steps):
        x = x + eps * p
        g = grad(x)
        if not np.all(np.isfinite(g)):
            return x, p, False
        p = p + (eps if i < n_steps - 1 else 0.5 * eps) * g
    return x, p, True


def hmc_step(state, target, cfg, rng):
    """Momentum refresh, leapfrog, Metropolis accept on -dH."""
    p = rng.v.standard_normal(state.x.shape[0])
    logp_cur = float(target.log_density(state.x))
    h_cur = -logp_cur - lognormal(p)
    x_new, p_new, ok = leapfrog(state.x, p, target.grad_log_density,
                                cfg.step_size, cfg.leapfrog_steps)
    if not ok:
        return ChainState(state.x, p, logp_cur), False, True
    logp_new = float(target.log_density(x_new))
    h_new = -logp_new - lognormal(p_new)
    if not np.isfinite(h_new):
        return ChainState(state.x, p, logp_cur), False, True
    if rng.u.uniform() < np.exp(min(0.0, h_cur - h_new)):
        return ChainState(x_new, p_new, logp_new), True, False
    return ChainState(state.x, p, logp_cur), False, False


def make_hmc_step(target, cfg):
    return lambda state, rng: hmc_step(state, target, cfg, rng)


DEFAULT_STEP_GRID = (0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5)


def tune_step_size(target, init_x, seed=0, grid=DEFAULT_STEP_GRID,
                   leapfrog_steps=40, pilot_steps=200):
    """Pick the grid step size with the best pilot min-ESS.

    Reference moments for the pilot ESS come from the pilot chain itself;
    this is only a ranking heuristic, not a reported diagnostic.
    """
    from .diag import ReferenceMoments, ess

    best, best_ess = None, -np.inf
    for eps in grid:
        cfg = HmcConfig(step_size=eps, leapfrog_steps=leapfrog_steps)
        trace = run_chain(make_hmc_step(target, cfg), init_x, target,
                          pilot_steps // 2, pilot_steps, seed, "hmc")
        mu = trace.states.mean(axis=0)
        sd = trace.states.std(axis=0)
        if np.any(sd <= 0):
            continue
        ref = ReferenceMoments(mu, sd**2, source="pilot")
        report = ess(trace.states, ref)
        score = report.min_ess * trace.accept_rate
        if score > best_ess:
            best, best_ess = eps, score
    if best is None:
        raise RuntimeError("step-size tuning failed on every grid point")
    return HmcConfig(step_size=best, leapfrog_steps=leapfrog_steps)
