import numpy as np
import pytest

from invmh.autodiff import (
    Adam,
    ParamSet,
    Tensor,
    add,
    backward,
    concat,
    exp,
    load_checkpoint,
    log,
    logsigmoid,
    matmul,
    mul,
    narrow,
    neg,
    no_grad,
    save_checkpoint,
    sigmoid,
    sub,
    tanh,
    tmean,
    tsum,
)


def finite_diff(f, x, h=1e-5):
    """Central finite differences of scalar f w.r.t. flat array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def grad_of(build, x0):
    t = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
    out = build(t)
    backward(out)
    return t.grad


class TestForward:
    def test_square(self):
        x = Tensor(np.array(3.0))
        assert mul(x, x).data == 9.0

    def test_matmul_identity(self):
        v = np.array([1.5, -2.0])
        out = matmul(Tensor(np.eye(2)), Tensor(v))
        np.testing.assert_array_equal(out.data, v)

    def test_zero_weight_mlp_returns_last_bias(self):
        x = np.array([0.3, -0.7])
        w1, b1 = Tensor(np.zeros((2, 4))), Tensor(np.zeros(4))
        w2, b2 = Tensor(np.zeros((4, 2))), Tensor(np.array([5.0, -1.0]))
        h = tanh(add(matmul(Tensor(x), w1), b1))
        out = add(matmul(h, w2), b2)
        np.testing.assert_array_equal(out.data, [5.0, -1.0])

    def test_shape_mismatch_names_primitive(self):
        with pytest.raises(ValueError, match="matmul"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_nonfinite_detected(self):
        with pytest.raises(FloatingPointError):
            log(Tensor(np.array(-1.0)))


class TestBackward:
    def test_x_squared(self):
        g = grad_of(lambda x: mul(x, x), 3.0)
        assert g == pytest.approx(6.0)

    def test_constant_has_zero_grad(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        out = add(tsum(mul(x, Tensor(np.zeros(2)))), Tensor(np.array(7.0)))
        backward(out)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_nonscalar_root_rejected(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with pytest.raises(ValueError):
            backward(add(x, x))

    def test_detached_root_rejected(self):
        with pytest.raises(ValueError):
            backward(Tensor(np.array(1.0)))

    def test_sum_tanh_wx_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        W = rng.standard_normal((4, 4))
        x0 = rng.standard_normal(4)

        def build(t):
            return tsum(tanh(matmul(Tensor(W), t)))

        g = grad_of(build, x0)
        fd = finite_diff(lambda x: float(np.sum(np.tanh(W @ x))), x0)
        np.testing.assert_allclose(g, fd, rtol=1e-5)

    @pytest.mark.parametrize("seed", range(100))
    def test_primitives_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        x0 = rng.standard_normal(n) * 0.8
        W = rng.standard_normal((n, n))

        def build(t):
            a = matmul(Tensor(W), t)
            b = sigmoid(sub(a, t))
            c = mul(tanh(t), exp(mul(Tensor(np.full(n, 0.1)), a)))
            d = logsigmoid(neg(add(b, c)))
            e = log(add(exp(d), Tensor(np.ones(n))))
            both = concat([e, narrow(t, 0, 1)])
            return tmean(both)

        def ref(x):
            a = W @ x
            b = 1 / (1 + np.exp(-(a - x)))
            c = np.tanh(x) * np.exp(0.1 * a)
            d = -np.logaddexp(0.0, b + c)
            e = np.log(np.exp(d) + 1.0)
            return float(np.mean(np.concatenate([e, x[:1]])))

        g = grad_of(build, x0)
        fd = finite_diff(ref, x0)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_backward_linearity(self):
        rng = np.random.default_rng(3)
        x0 = rng.standard_normal(5)

        def f1(t):
            return tsum(tanh(t))

        def f2(t):
            return tsum(mul(t, t))

        g_sum = grad_of(lambda t: add(f1(t), f2(t)), x0)
        g_parts = grad_of(f1, x0) + grad_of(f2, x0)
        np.testing.assert_array_equal(g_sum, g_parts)

    def test_grad_accumulates_over_multiple_uses(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        out = add(mul(x, x), mul(Tensor(np.array(3.0)), x))  # x^2 + 3x
        backward(out)
        assert x.grad == pytest.approx(7.0)

    def test_broadcast_bias_grad(self):
        b = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        X = Tensor(np.zeros((5, 2)))
        out = tsum(add(X, b))
        backward(out)
        np.testing.assert_array_equal(b.grad, [5.0, 5.0])

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(11)
            t = Tensor(rng.standard_normal(6), requires_grad=True)
            out = tsum(sigmoid(mul(t, tanh(t))))
            backward(out)
            return out.data.copy(), t.grad.copy()

        v1, g1 = run()
        v2, g2 = run()
        np.testing.assert_array_equal(v1, v2)
        np.testing.assert_array_equal(g1, g2)

    def test_no_grad_suppresses_graph(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        with no_grad():
            out = mul(x, x)
        assert not out.requires_grad


class TestParamSet:
    def test_duplicate_name_rejected(self):
        ps = ParamSet()
        ps.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            ps.add("w", np.zeros(2))

    def test_iteration_order_is_insertion_order(self):
        ps = ParamSet()
        for name in ("b", "a", "c"):
            ps.add(name, np.zeros(1))
        assert ps.names() == ["b", "a", "c"]

    def test_grads_zero_for_uninfluenced(self):
        ps = ParamSet()
        ps.add("used", np.array([1.0]))
        ps.add("unused", np.array([1.0]))
        ps.zero_grad()
        backward(tsum(mul(ps["used"], ps["used"])))
        g = ps.grads()
        np.testing.assert_array_equal(g["unused"], [0.0])
        np.testing.assert_array_equal(g["used"], [2.0])

    def test_checkpoint_roundtrip(self, tmp_path):
        ps = ParamSet()
        rng = np.random.default_rng(0)
        ps.add("layer.w", rng.standard_normal((3, 4)))
        ps.add("layer.b", rng.standard_normal(4))
        path = tmp_path / "p.ckpt"
        save_checkpoint(ps, path)
        values = load_checkpoint(path)
        assert list(values) == ["layer.w", "layer.b"]
        for name, value in values.items():
            np.testing.assert_array_equal(value, ps[name].data)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        ps = ParamSet()
        ps.add("w", np.arange(6.0).reshape(2, 3))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ps, p1)
        save_checkpoint(ps, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestAdam:
    def test_first_step_hand_value(self):
        ps = ParamSet()
        ps.add("p", np.array(0.0))
        opt = Adam(ps, lr=0.1)
        opt.step({"p": np.array(1.0)})
        # t=1: m_hat = v_hat = 1, update = -lr / (sqrt(1) + eps)
        assert ps["p"].data == pytest.approx(-0.1 / (1.0 + 1e-8))

    def test_zero_grad_leaves_params(self):
        ps = ParamSet()
        ps.add("p", np.array([1.0, -2.0]))
        opt = Adam(ps, lr=0.1)
        for _ in range(5):
            opt.step({"p": np.zeros(2)})
        np.testing.assert_array_equal(ps["p"].data, [1.0, -2.0])

    def test_two_steps_match_hand_recurrence(self):
        ps = ParamSet()
        ps.add("p", np.array(0.0))
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        opt = Adam(ps, lr=lr)
        g = 1.0
        p, m, v = 0.0, 0.0, 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)
            opt.step({"p": np.array(g)})
        assert ps["p"].data == pytest.approx(p, abs=1e-15)

    def test_missing_gradient_fails(self):
        ps = ParamSet()
        ps.add("p", np.array(0.0))
        ps.add("q", np.array(0.0))
        opt = Adam(ps)
        with pytest.raises(KeyError, match="q"):
            opt.step({"p": np.array(1.0)})

    def test_step_counter_increases(self):
        ps = ParamSet()
        ps.add("p", np.array(0.0))
        opt = Adam(ps)
        assert opt.t == 0
        opt.step({"p": np.array(1.0)})
        opt.step({"p": np.array(1.0)})
        assert opt.t == 2
