import numpy as np
import pytest

from invmh.hmc import DEFAULT_STEP_GRID, HmcConfig, hmc_step, leapfrog, make_hmc_step, tune_step_size
from invmh.kernel import ChainRNG, ChainState, run_chain
from invmh.targets import TargetDensity, mog2


def gaussian_target(dim=2):
    return TargetDensity(
        name="stdnormal",
        dim=dim,
        log_density=lambda x: -0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        grad_log_density=lambda x: -np.asarray(x),
        mean=np.zeros(dim),
        var=np.ones(dim),
    )


class TestConfig:
    def test_defaults(self):
        cfg = HmcConfig()
        assert cfg.leapfrog_steps == 40

    def test_validation(self):
        with pytest.raises(ValueError):
            HmcConfig(step_size=0.0)
        with pytest.raises(ValueError):
            HmcConfig(leapfrog_steps=0)


class TestLeapfrog:
    def test_free_particle_drift(self):
        x, p = np.array([1.0, -2.0]), np.array([0.5, 0.5])
        grad = lambda x: np.zeros_like(x)
        x1, p1, ok = leapfrog(x, p, grad, eps=0.1, n_steps=10)
        assert ok
        np.testing.assert_allclose(x1, x + 0.1 * 10 * p)
        np.testing.assert_allclose(p1, p)

    def test_harmonic_energy_error(self):
        # U = x^2/2: energy error stays O(eps^2)
        grad = lambda x: -x
        x, p = np.array([1.0]), np.array([0.3])
        h0 = 0.5 * (x @ x + p @ p)
        x1, p1, ok = leapfrog(x, p, grad, eps=1e-2, n_steps=10)
        assert ok
        h1 = 0.5 * (x1 @ x1 + p1 @ p1)
        assert abs(h1 - h0) < 1e-4

    def test_reversibility(self):
        t = mog2()
        rng = np.random.default_rng(0)
        x, p = rng.standard_normal(2) + [5, 0], rng.standard_normal(2)
        x1, p1, ok = leapfrog(x, p, t.grad_log_density, eps=0.05, n_steps=40)
        assert ok
        xb, pb, _ = leapfrog(x1, -p1, t.grad_log_density, eps=0.05, n_steps=40)
        np.testing.assert_allclose(xb, x, atol=1e-8)
        np.testing.assert_allclose(-pb, p, atol=1e-8)

    def test_volume_preservation_fd(self):
        grad = lambda x: -x + 0.3 * np.sin(x)
        h = 1e-6
        z0 = np.array([0.4, -0.2])  # (x, p) in n=1

        def flow(z):
            x1, p1, _ = leapfrog(z[:1], z[1:], grad, eps=0.1, n_steps=5)
            return np.concatenate([x1, p1])

        J = np.zeros((2, 2))
        for j in range(2):
            zp, zm = z0.copy(), z0.copy()
            zp[j] += h
            zm[j] -= h
            J[:, j] = (flow(zp) - flow(zm)) / (2 * h)
        assert abs(np.linalg.det(J) - 1.0) < 1e-6

    def test_nonfinite_gradient_flagged(self):
        grad = lambda x: np.full_like(x, np.nan)
        _, _, ok = leapfrog(np.zeros(2), np.ones(2), grad, eps=0.1, n_steps=3)
        assert not ok


class TestHmcStep:
    def test_tiny_step_always_accepts(self):
        t = gaussian_target()
        cfg = HmcConfig(step_size=1e-8, leapfrog_steps=5)
        rng = ChainRNG(1)
        state = ChainState(np.array([0.3, -0.3]), np.zeros(2), 0.0)
        for _ in range(50):
            state, accepted, bad = hmc_step(state, t, cfg, rng)
            assert accepted and not bad

    def test_gaussian_high_acceptance(self):
        t = gaussian_target()
        cfg = HmcConfig(step_size=0.1, leapfrog_steps=40)
        tr = run_chain(make_hmc_step(t, cfg), np.zeros(2), t, 100, 2000, 2, "hmc")
        assert tr.accept_rate > 0.9

    def test_gaussian_moments(self):
        t = gaussian_target()
        cfg = HmcConfig(step_size=0.2, leapfrog_steps=20)
        tr = run_chain(make_hmc_step(t, cfg), np.zeros(2), t, 500, 5000, 3, "hmc")
        np.testing.assert_allclose(tr.states.mean(axis=0), 0.0, atol=0.1)
        np.testing.assert_allclose(tr.states.var(axis=0), 1.0, atol=0.15)

    def test_mog2_mode_trapping(self):
        # modes 10 sigma-units apart: HMC essentially never crosses
        t = mog2()
        cfg = HmcConfig(step_size=0.1, leapfrog_steps=40)
        tr = run_chain(make_hmc_step(t, cfg), np.array([5.0, 0.0]), t,
                       100, 1000, 4, "hmc")
        signs = np.sign(tr.states[:, 0])
        crossings = int(np.sum(signs[1:] != signs[:-1]))
        assert crossings <= 1

    def test_determinism(self):
        t = mog2()
        cfg = HmcConfig(step_size=0.1, leapfrog_steps=10)
        t1 = run_chain(make_hmc_step(t, cfg), np.array([5.0, 0.0]), t, 10, 50, 5, "hmc")
        t2 = run_chain(make_hmc_step(t, cfg), np.array([5.0, 0.0]), t, 10, 50, 5, "hmc")
        np.testing.assert_array_equal(t1.states, t2.states)


class TestTuneStepSize:
    def test_returns_grid_member(self):
        t = gaussian_target()
        cfg = tune_step_size(t, np.zeros(2), seed=6, pilot_steps=100)
        assert cfg.step_size in DEFAULT_STEP_GRID
        assert cfg.leapfrog_steps == 40

    def test_custom_grid(self):
        t = gaussian_target()
        cfg = tune_step_size(t, np.zeros(2), seed=7, grid=(0.05, 0.1),
                             pilot_steps=100)
        assert cfg.step_size in (0.05, 0.1)
