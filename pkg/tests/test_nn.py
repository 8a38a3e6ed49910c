import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaoa_mixer import nn
from qaoa_mixer.errors import InputError, NumericError
from qaoa_mixer.nn import AdamState, Tape, Tensor


def gradcheck(fn, arrays, h=1e-4, tol=1e-5):
    """Central differences against the tape for a scalar-valued ``fn(*tensors)``."""
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
    tape.backward(out)
    for k, a in enumerate(arrays):
        fd = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus, minus = [x.copy() for x in arrays], [x.copy() for x in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            fd[idx] = (fn(*map(Tensor, plus)).item() - fn(*map(Tensor, minus)).item()) / (2 * h)
        got = leaves[k].grad if leaves[k].grad is not None else np.zeros_like(a)
        err = np.abs(got - fd) / np.maximum(np.abs(fd), 1.0)
        assert err.max() <= tol, (k, err.max())


def away_from_zero(rng, shape):
    # keeps relu and hinge kinks out of the finite-difference stencil
    x = rng.uniform(0.1, 1.0, shape)
    return x * rng.choice([-1, 1], shape)


class TestGradcheck:
    def test_elementwise(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
        gradcheck(lambda x, y: nn.sum_all(nn.mul(nn.sub(x, y), nn.add(x, y))), [a, b])

    def test_scale_reshape_mean(self, rng):
        gradcheck(lambda x: nn.mean_all(nn.scale(nn.reshape(x, (6, 2)), -3.0)), [rng.normal(size=(3, 4))])

    def test_matmul(self, rng):
        w = rng.normal(size=(4, 3))
        gradcheck(lambda x, w: nn.sum_all(nn.mul(nn.matmul(x, w), nn.matmul(x, w))),
                  [rng.normal(size=(2, 5, 4)), w])

    def test_bmm(self, rng):
        gradcheck(lambda a, h: nn.sum_all(nn.mul(nn.bmm(a, h), nn.bmm(a, h))),
                  [rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 2))])

    def test_relu(self, rng):
        gradcheck(lambda x: nn.sum_all(nn.mul(nn.relu(x), x)), [away_from_zero(rng, (5,))])

    def test_concat_take(self, rng):
        def fn(a, b):
            c = nn.concat([a, b], axis=1)
            return nn.sum_all(nn.mul(nn.take(c, [0, 2, 2, 4], axis=1), nn.take(c, [1, 1, 3, 0], axis=1)))

        gradcheck(fn, [rng.normal(size=(2, 2)), rng.normal(size=(2, 3))])

    def test_masked_mean(self, rng):
        mask = np.array([[1, 1, 0], [1, 0, 0]])
        gradcheck(lambda h: nn.sum_all(nn.mul(nn.masked_mean(h, mask), nn.masked_mean(h, mask))),
                  [rng.normal(size=(2, 3, 4))])

    def test_softmax(self, rng):
        weights = rng.normal(size=(3, 5))
        gradcheck(lambda x: nn.sum_all(nn.mul(nn.softmax(x), weights)), [rng.normal(size=(3, 5))])

    def test_gumbel_soft(self, rng):
        weights = rng.normal(size=(4, 2))
        gradcheck(lambda x: nn.sum_all(nn.mul(nn.gumbel_softmax(x, 0.7, np.random.default_rng(3)), weights)),
                  [rng.normal(size=(4, 2))])

    def test_graph_conv(self, rng):
        adj = rng.uniform(0, 1, (2, 4, 4))
        h = rng.normal(size=(2, 4, 3))
        ws, wn, b = rng.normal(size=(3, 5)), rng.normal(size=(3, 5)), rng.normal(size=5)
        pre = (h @ ws + (adj @ h) @ wn + b)
        assert np.abs(pre).min() > 1e-3
        readout = rng.normal(size=(2, 4, 5))
        gradcheck(lambda h, ws, wn, b: nn.sum_all(nn.mul(nn.graph_conv(h, adj, ws, wn, b), readout)),
                  [h, ws, wn, b])

    def test_mlp(self, rng):
        widths = [4, 6, 1]
        layers = nn.init_mlp(widths, rng)
        arrays = [rng.normal(size=(3, 4))] + [t.data for pair in layers for t in pair]

        def fn(x, w1, b1, w2, b2):
            return nn.sum_all(nn.mlp_forward(x, [(w1, b1), (w2, b2)]))

        gradcheck(fn, arrays)

    def test_mse(self, rng):
        y = rng.normal(size=6)
        gradcheck(lambda p: nn.mse_loss(p, y), [rng.normal(size=6)])

    def test_ranking(self, rng):
        y = rng.permutation(5).astype(float)
        pred = np.array([0.13, 2.71, -1.37, 4.05, 0.58])
        gradcheck(lambda p: nn.ranking_loss(p, y), [pred])

    def test_linearity(self, rng):
        p, y = Tensor(rng.normal(size=5), requires_grad=True), rng.normal(size=5)
        with Tape() as tape:
            total = nn.add(nn.mse_loss(p, y), nn.ranking_loss(p, y))
        tape.backward(total)
        both = p.grad.copy()
        parts = []
        for loss in (nn.mse_loss, nn.ranking_loss):
            q = Tensor(p.data, requires_grad=True)
            with Tape() as tape:
                out = loss(q, y)
            tape.backward(out)
            parts.append(q.grad)
        np.testing.assert_allclose(both, parts[0] + parts[1], atol=1e-14)


class TestTape:
    def test_reverse_order(self, rng):
        x = Tensor(rng.normal(size=3), requires_grad=True)
        with Tape() as tape:
            out = nn.sum_all(nn.relu(nn.scale(nn.add(x, 1.0), 2.0)))
        visited = tape.backward(out)
        assert visited == sorted(visited, reverse=True) == list(range(len(tape.nodes) - 1, -1, -1))

    def test_single_sweep(self):
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            out = nn.sum_all(x)
        tape.backward(out)
        with pytest.raises(InputError):
            tape.backward(out)

    def test_untracked_outside_tape(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        out = nn.sum_all(x)
        assert out.item() == 3.0 and x.grad is None

    def test_grad_shape(self, rng):
        b = Tensor(np.zeros(4), requires_grad=True)
        with Tape() as tape:
            out = nn.sum_all(nn.add(rng.normal(size=(3, 4)), b))
        tape.backward(out)
        assert b.grad.shape == b.shape
        np.testing.assert_array_equal(b.grad, 3.0)


class TestLayers:
    def test_graph_conv_zero_weights(self, rng):
        h = rng.normal(size=(1, 3, 2))
        z = np.zeros((2, 4))
        bias = np.array([-1.0, 0.5, 2.0, 0.0])
        out = nn.graph_conv(h, rng.uniform(size=(1, 3, 3)), z, z, bias)
        np.testing.assert_array_equal(out.data, np.broadcast_to(np.maximum(bias, 0), (1, 3, 4)))

    def test_isolated_node(self, rng):
        h = rng.normal(size=(1, 3, 2))
        adj = np.zeros((1, 3, 3))
        adj[0, 0, 1] = adj[0, 1, 0] = 1
        ws, wn = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        out = nn.graph_conv(h, adj, ws, wn, np.zeros(2), activate=False)
        np.testing.assert_allclose(out.data[0, 2], h[0, 2] @ ws)

    def test_shape_mismatch(self, rng):
        with pytest.raises(InputError):
            nn.graph_conv(np.zeros((1, 3, 2)), np.zeros((1, 4, 4)), np.zeros((2, 2)), np.zeros((2, 2)), 0)

    def test_permutation_equivariance(self, rng):
        h, adj = rng.normal(size=(1, 5, 3)), rng.uniform(size=(1, 5, 5))
        ws, wn, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=4)
        perm = rng.permutation(5)
        out = nn.graph_conv(h, adj, ws, wn, b).data
        permuted = nn.graph_conv(h[:, perm], adj[:, perm][:, :, perm], ws, wn, b).data
        np.testing.assert_allclose(permuted, out[:, perm], atol=1e-12)

    def test_identity_mlp(self, rng):
        x = rng.normal(size=(2, 3))
        out = nn.mlp_forward(x, [(Tensor(np.eye(3)), Tensor(np.zeros(3)))])
        np.testing.assert_array_equal(out.data, x)

    def test_zero_input(self, rng):
        layers = [(w, Tensor(np.zeros_like(b.data))) for w, b in nn.init_mlp([3, 5, 2], rng)]
        np.testing.assert_array_equal(nn.mlp_forward(np.zeros((1, 3)), layers).data, 0.0)

    def test_mlp_shape_mismatch(self, rng):
        with pytest.raises(InputError):
            nn.mlp_forward(np.zeros((1, 4)), nn.init_mlp([3, 2], rng))


class TestLosses:
    def test_reversed_pair(self):
        assert nn.ranking_loss([2.0, 1.0], [1.0, 2.0]).item() == 2.0

    def test_ordered_with_margin(self):
        assert nn.ranking_loss([0.0, 1.0, 2.5], [1.0, 2.0, 3.0]).item() == 0.0

    def test_ties_contribute_one(self):
        assert nn.ranking_loss([5.0, -3.0], [1.0, 1.0]).item() == 1.0

    def test_single_sample(self):
        with pytest.raises(InputError):
            nn.ranking_loss([1.0], [1.0])

    def test_mse(self):
        assert nn.mse_loss([1.0, 2.0], [1.0, 2.0]).item() == 0.0
        assert nn.mse_loss([0.0, 0.0], [1.0, 3.0]).item() == 5.0

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            nn.mse_loss([1.0, 2.0], [1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.floats(-10, 10), st.integers(0, 2**32 - 1))
    def test_ranking_shift_invariance(self, pred, shift, seed):
        y = np.random.default_rng(seed).normal(size=len(pred))
        a = nn.ranking_loss(pred, y).item()
        assert nn.ranking_loss(np.add(pred, shift), y).item() == pytest.approx(a, abs=1e-9)
        assert nn.ranking_loss(pred, y + shift).item() == pytest.approx(a, abs=1e-12)


class TestGumbel:
    def test_zero_noise_is_softmax(self, rng):
        logits = rng.normal(size=(3, 4))
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        np.testing.assert_allclose(nn.gumbel_softmax(logits).data, e / e.sum(axis=1, keepdims=True))

    def test_low_temperature_is_argmax(self, rng):
        logits = rng.normal(size=(5, 3))
        out = nn.gumbel_softmax(logits, temperature=1e-3).data
        np.testing.assert_allclose(out, np.eye(3)[logits.argmax(axis=1)], atol=1e-12)

    def test_hard_one_hot_with_soft_gradient(self, rng):
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        w = rng.normal(size=(2, 3))
        with Tape() as tape:
            out = nn.gumbel_softmax(x, 1.0, np.random.default_rng(0), hard=True)
            loss = nn.sum_all(nn.mul(out, w))
        assert set(np.unique(out.data)) == {0.0, 1.0} and np.all(out.data.sum(axis=1) == 1)
        tape.backward(loss)
        soft = nn.gumbel_softmax(x.data, 1.0, np.random.default_rng(0)).data
        expected = soft * (w - (w * soft).sum(axis=1, keepdims=True))
        np.testing.assert_allclose(x.grad, expected, atol=1e-12)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_bad_temperature(self, tau):
        with pytest.raises(InputError):
            nn.gumbel_softmax([0.0, 1.0], temperature=tau)

    def test_sample_frequencies(self):
        logits = np.array([0.3, -1.0, 1.2])
        p = np.exp(logits) / np.exp(logits).sum()
        rng = np.random.default_rng(7)
        draws = 10_000
        counts = np.zeros(3)
        for _ in range(draws):
            counts += nn.gumbel_softmax(logits, 1.0, rng, hard=True).data
        sigma = np.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts - draws * p) < 3 * sigma)


class TestAdam:
    def test_first_step_is_sign(self):
        params = {"w": Tensor([1.0, -2.0, 0.5])}
        nn.adam_step(params, AdamState(lr=0.01), {"w": np.array([3.0, -0.2, 50.0])})
        np.testing.assert_allclose(params["w"].data, [0.99, -1.99, 0.49], atol=1e-8)

    def test_zero_gradient(self):
        params = {"w": Tensor([1.0, 2.0])}
        state = AdamState(lr=0.1)
        for _ in range(3):
            nn.adam_step(params, state, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"].data, [1.0, 2.0])

    def test_non_finite(self):
        with pytest.raises(NumericError):
            nn.adam_step({"w": Tensor([1.0])}, AdamState(lr=0.1), {"w": np.array([np.nan])})

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(11)
            params = {"w": Tensor(rng.normal(size=4), requires_grad=True)}
            state = AdamState(lr=0.05)
            y = rng.normal(size=4)
            for _ in range(20):
                params["w"].grad = None
                with Tape() as tape:
                    loss = nn.mse_loss(params["w"], y)
                tape.backward(loss)
                nn.adam_step(params, state)
            return params["w"].data

        np.testing.assert_array_equal(run(), run())

    def test_minimizes_quadratic(self):
        params = {"w": Tensor([3.0, -4.0])}
        state = AdamState(lr=0.1)
        for _ in range(300):
            nn.adam_step(params, state, {"w": 2 * params["w"].data})
        assert np.abs(params["w"].data).max() < 0.05


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        params = {"a": Tensor(rng.normal(size=(2, 3))), "b": Tensor(rng.normal(size=4))}
        nn.save_checkpoint(tmp_path / "m.json", params, {"kind": "test"})
        loaded, meta = nn.load_checkpoint(tmp_path / "m.json", {"a": (2, 3), "b": (4,)})
        assert meta == {"kind": "test"}
        assert nn.params_digest(loaded) == nn.params_digest(params)

    def test_manifest_mismatch(self, tmp_path):
        nn.save_checkpoint(tmp_path / "m.json", {"a": Tensor(np.zeros((2, 3)))})
        with pytest.raises(InputError, match="manifest"):
            nn.load_checkpoint(tmp_path / "m.json", {"a": (3, 2)})

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        nn.save_checkpoint(path, {"a": Tensor(np.zeros(1))})
        path.write_text(path.read_text().replace('"version": 1', '"version": 99'))
        with pytest.raises(InputError, match="version"):
            nn.load_checkpoint(path)
