import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fipwc.nn import AdamState, Mlp, MlpSpec, adam_step, soft_update


def numeric_grads(net, x, loss_of_output, h=1e-6):
    """Central differences of ``loss(net(x))`` w.r.t. every parameter entry and every input entry."""
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = loss_of_output(net.forward(x))
            p[idx] = orig - h
            lm = loss_of_output(net.forward(x))
            p[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        out.append(g)
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        lp = loss_of_output(net.forward(x))
        x[idx] = orig - h
        lm = loss_of_output(net.forward(x))
        x[idx] = orig
        gx[idx] = (lp - lm) / (2 * h)
    return out, gx


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8)))


@given(
    seed=st.integers(0, 10_000),
    hidden=st.lists(st.integers(1, 6), min_size=1, max_size=3),
    act=st.sampled_from(["linear", "tanh"]),
)
@settings(max_examples=30, deadline=None)
def test_gradients_match_central_differences(seed, hidden, act):
    rng = np.random.default_rng(seed)
    net = Mlp(MlpSpec(3, tuple(hidden), 2, act), rng)
    for b in net.biases:
        b[...] = rng.standard_normal(b.shape)
    x = rng.standard_normal((4, 3))
    # finite differences are meaningless across a ReLU kink
    pre = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        pre = pre @ w + b
        assume(np.min(np.abs(pre)) > 1e-4)
        pre = np.maximum(pre, 0)
    target = rng.standard_normal((4, 2))
    loss = lambda y: 0.5 * float(np.sum((y - target) ** 2))  # noqa: E731
    y = net.forward(x)
    dx = net.backward(y - target)
    analytic = [g.copy() for g in net.grads]
    numeric, ndx = numeric_grads(net, x, loss)
    for a, n in zip(analytic, numeric):
        assert max_rel_err(a, n) < 1e-4
    assert max_rel_err(dx, ndx) < 1e-4


def test_dead_relu_unit_has_zero_incoming_gradient():
    net = Mlp(MlpSpec(2, (3,), 1))
    net.weights[0][:, 1] = -1.0
    net.biases[0][1] = -5.0
    x = np.array([[0.3, 0.2], [0.1, 0.9]])
    net.forward(x)
    net.backward(np.ones((2, 1)))
    assert np.all(net.grad_weights[0][:, 1] == 0.0)
    assert net.grad_biases[0][1] == 0.0


def test_single_input_is_batch_of_one():
    net = Mlp(MlpSpec(3, (5,), 2, "tanh"), np.random.default_rng(1))
    x = np.array([0.1, -0.2, 0.3])
    assert net.forward(x).shape == (2,)
    np.testing.assert_array_equal(net.forward(x), net.forward(x[None, :])[0])


def test_backward_before_forward_raises():
    with pytest.raises(RuntimeError):
        Mlp(MlpSpec(1, (2,), 1)).backward(np.ones((1, 1)))


def test_final_layer_init_range():
    net = Mlp(MlpSpec(6, (64, 64), 1, "tanh"), np.random.default_rng(0), final_scale=3e-3)
    assert np.max(np.abs(net.weights[-1])) <= 3e-3
    assert np.max(np.abs(net.biases[-1])) <= 3e-3
    # He init: std sqrt(2/fan_in)
    assert np.std(net.weights[1]) == pytest.approx(np.sqrt(2 / 64), rel=0.05)


class TestAdam:
    def test_first_step_moves_each_param_by_lr_times_sign(self):
        # with zero moments, bias-corrected m/sqrt(v) = g/|g| on the first step
        net = Mlp(MlpSpec(2, (3,), 1), np.random.default_rng(0))
        before = [p.copy() for p in net.params]
        grads = [np.full_like(p, 0.5) * np.where(np.arange(p.size).reshape(p.shape) % 2, -1, 1) for p in net.params]
        opt = AdamState.for_net(net, lr=1e-3)
        adam_step(net, opt, grads)
        for b, a, g in zip(before, net.params, grads):
            np.testing.assert_allclose(a - b, -1e-3 * np.sign(g) * 0.5 / (0.5 + 1e-8), rtol=0, atol=1e-15)
        assert opt.t == 1

    def test_second_step_hand_computed(self):
        net = Mlp(MlpSpec(1, (1,), 1))
        opt = AdamState.for_net(net, lr=0.1)
        g1 = [np.full_like(p, 2.0) for p in net.params]
        g2 = [np.full_like(p, -1.0) for p in net.params]
        p0 = net.params[0].copy()
        adam_step(net, opt, g1)
        adam_step(net, opt, g2)
        m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0
        v = 0.999 * (0.001 * 4.0) + 0.001 * 1.0
        m_hat, v_hat = m / (1 - 0.9**2), v / (1 - 0.999**2)
        step2 = 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(net.params[0], p0 - 0.1 * 2.0 / (2.0 + 1e-8) - step2, rtol=1e-12)

    def test_rejects_non_finite_gradient(self):
        net = Mlp(MlpSpec(1, (2,), 1))
        opt = AdamState.for_net(net)
        grads = [np.zeros_like(p) for p in net.params]
        grads[2][0, 0] = np.nan
        before = [p.copy() for p in net.params]
        with pytest.raises(FloatingPointError, match="block 2"):
            adam_step(net, opt, grads)
        assert opt.t == 0
        for b, a in zip(before, net.params):
            np.testing.assert_array_equal(a, b)


class TestSoftUpdate:
    def nets(self):
        spec = MlpSpec(2, (4,), 1)
        return Mlp(spec, np.random.default_rng(1)), Mlp(spec, np.random.default_rng(2))

    def test_tau_one_copies(self):
        target, online = self.nets()
        soft_update(target, online, 1.0)
        for t, o in zip(target.params, online.params):
            np.testing.assert_array_equal(t, o)

    def test_tau_zero_keeps(self):
        target, online = self.nets()
        before = [p.copy() for p in target.params]
        soft_update(target, online, 0.0)
        for t, b in zip(target.params, before):
            np.testing.assert_array_equal(t, b)

    def test_convex_combination(self):
        target, online = self.nets()
        before = [p.copy() for p in target.params]
        soft_update(target, online, 0.005)
        for t, b, o in zip(target.params, before, online.params):
            np.testing.assert_allclose(t, 0.995 * b + 0.005 * o, rtol=1e-15, atol=1e-18)

    def test_spec_mismatch(self):
        with pytest.raises(ValueError):
            soft_update(Mlp(MlpSpec(2, (4,), 1)), Mlp(MlpSpec(2, (5,), 1)), 0.1)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = Mlp(MlpSpec(6, (7, 5), 1, "tanh"), np.random.default_rng(3))
        net.save(tmp_path / "a.mlp", extra={"note": "x"})
        loaded, extra = Mlp.load(tmp_path / "a.mlp")
        assert loaded.spec == net.spec
        assert extra == {"note": "x"}
        for a, b in zip(loaded.params, net.params):
            assert a.tobytes() == b.tobytes()
        x = np.random.default_rng(4).standard_normal((3, 6))
        assert loaded.forward(x).tobytes() == net.forward(x).tobytes()

    def test_layout_is_row_major_little_endian(self):
        net = Mlp(MlpSpec(2, (3,), 1), np.random.default_rng(0))
        data = net.to_bytes()
        payload = data.split(b"\n", 2)[2]
        w0 = np.frombuffer(payload[: 6 * 8], dtype="<f8").reshape(2, 3)
        np.testing.assert_array_equal(w0, net.weights[0])

    def test_truncated_and_foreign_files_rejected(self):
        data = Mlp(MlpSpec(2, (3,), 1)).to_bytes()
        with pytest.raises(ValueError, match="truncated"):
            Mlp.from_bytes(data[:-8])
        with pytest.raises(ValueError, match="trailing"):
            Mlp.from_bytes(data + b"\0" * 8)
        with pytest.raises(ValueError, match="not an MLP"):
            Mlp.from_bytes(b"hello")
