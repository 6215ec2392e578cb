import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterwave import nn
from scatterwave.errors import CorpusError, DegenerateInputError, InputError, ParameterError, ShapeError
from scatterwave.nn.layers import BatchNorm2d, Conv2d, GlobalAvgPool, Linear, ReLU, Sequential

EPS = 1e-5


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


def check_layer(layer, store, x, train=True, seed=0):
    """Compare analytic input/parameter gradients of ``sum(R * layer(x))`` with central differences."""
    r = np.random.default_rng(seed)
    R = r.standard_normal(layer.forward(x, train).shape)
    loss = lambda: float(np.sum(R * layer.forward(x, train)))
    if store is not None:
        store.zero_grad()
    layer.forward(x, train)
    dx = layer.backward(R)
    worst = 0.0
    targets = [("x", x, dx)]
    if store is not None:
        targets += [(n, v, store.grads[n].copy()) for n, v in store.values.items()]
    for _, arr, grad in targets:
        flat, g = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + EPS
            lp = loss()
            flat[i] = orig - EPS
            lm = loss()
            flat[i] = orig
            worst = max(worst, rel_err(np.array([(lp - lm) / (2 * EPS)]), np.array([g[i]])))
    return worst


def f64_store(seed=0):
    return nn.ParamStore(np.float64, seed)


class TestConv:
    def test_ones_kernel_counts_neighbours(self):
        s = f64_store()
        conv = Conv2d(s, "c", 1, 1, 3)
        s.values["c.weight"][...] = 1.0
        out = conv.forward(np.ones((1, 1, 3, 3)))[0, 0]
        assert out[1, 1] == 9 and out[0, 0] == 4 and out[0, 1] == 6

    def test_identity_kernel(self, rng):
        s = f64_store()
        conv = Conv2d(s, "c", 2, 2, 1)
        s.values["c.weight"][...] = np.eye(2)[:, :, None, None]
        x = rng.standard_normal((3, 2, 4, 5))
        np.testing.assert_array_equal(conv.forward(x), x)

    def test_matches_direct_cross_correlation(self, rng):
        s = f64_store()
        conv = Conv2d(s, "c", 2, 3, 3, stride=2)
        x = rng.standard_normal((2, 2, 5, 6))
        w = s.values["c.weight"]
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        out = conv.forward(x)
        for n in range(2):
            for o in range(3):
                for i in range(out.shape[2]):
                    for j in range(out.shape[3]):
                        ref = np.sum(xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o])
                        assert out[n, o, i, j] == pytest.approx(ref, abs=1e-12)

    @pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (1, 2), (1, 1)])
    def test_gradients(self, rng, k, stride):
        s = f64_store(1)
        conv = Conv2d(s, "c", 3, 2, k, stride)
        assert check_layer(conv, s, rng.standard_normal((2, 3, 5, 5))) < 1e-4

    def test_chunked_batches_agree(self, rng, monkeypatch):
        s = f64_store()
        conv = Conv2d(s, "c", 2, 3, 3)
        x = rng.standard_normal((5, 2, 6, 6))
        full = conv.forward(x, True)
        dfull = conv.backward(np.ones_like(full))
        gfull = s.grads["c.weight"].copy()
        from scatterwave.nn import layers
        monkeypatch.setattr(layers, "COLS_BUDGET", 1)
        s.zero_grad()
        part = conv.forward(x, True)
        np.testing.assert_allclose(part, full, atol=1e-12)
        np.testing.assert_allclose(conv.backward(np.ones_like(full)), dfull, atol=1e-12)
        np.testing.assert_allclose(s.grads["c.weight"], gfull, atol=1e-12)

    def test_shape_errors(self):
        s = f64_store()
        with pytest.raises(ShapeError):
            Conv2d(s, "a", 1, 1, 5)
        conv = Conv2d(s, "b", 2, 1, 3)
        with pytest.raises(ShapeError):
            conv.forward(np.zeros((1, 3, 4, 4)))


class TestBatchNorm:
    def test_train_output_standardized(self, rng):
        bn = BatchNorm2d(f64_store(), "bn", 3)
        y = bn.forward(rng.standard_normal((4, 3, 5, 5)) * 4 + 2, train=True)
        assert np.all(np.abs(y.mean(axis=(0, 2, 3))) < 1e-6)
        assert np.all(np.abs(y.var(axis=(0, 2, 3)) - 1) < 1e-3)

    def test_affine(self, rng):
        s = f64_store()
        bn = BatchNorm2d(s, "bn", 2)
        s.values["bn.gamma"][...] = 2.0
        s.values["bn.beta"][...] = 3.0
        y = bn.forward(rng.standard_normal((8, 2, 4, 4)), train=True)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 3.0, atol=1e-9)
        np.testing.assert_allclose(y.std(axis=(0, 2, 3)), 2.0, rtol=1e-4)

    def test_running_stats(self, rng):
        s = f64_store()
        bn = BatchNorm2d(s, "bn", 1)
        x = rng.standard_normal((4, 1, 3, 3)) + 5
        bn.forward(x, train=True)
        assert s.buffers["bn.running_mean"][0] == pytest.approx(0.1 * x.mean())
        assert s.buffers["bn.running_var"][0] == pytest.approx(0.9 + 0.1 * x.var(ddof=1))

    def test_eval_uses_running_stats(self, rng):
        s = f64_store()
        bn = BatchNorm2d(s, "bn", 1)
        s.buffers["bn.running_mean"][...] = 1.0
        s.buffers["bn.running_var"][...] = 4.0
        y = bn.forward(np.full((1, 1, 1, 1), 3.0))
        assert y.item() == pytest.approx(2.0 / math.sqrt(4.0 + 1e-5))

    def test_gradients(self, rng):
        s = f64_store()
        bn = BatchNorm2d(s, "bn", 2)
        s.values["bn.gamma"][...] = [1.5, -0.7]
        s.values["bn.beta"][...] = [0.2, 0.1]
        assert check_layer(bn, s, rng.standard_normal((3, 2, 3, 2))) < 1e-4

    def test_degenerate_batch(self):
        bn = BatchNorm2d(f64_store(), "bn", 2)
        with pytest.raises(DegenerateInputError):
            bn.forward(np.ones((1, 2, 1, 1)), train=True)
        bn.forward(np.ones((1, 2, 1, 1)), train=False)


class TestSimpleLayers:
    def test_relu_gradient(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        x[np.abs(x) < 1e-3] = 0.5
        assert check_layer(ReLU(), None, x) < 1e-4

    def test_gap(self, rng):
        x = rng.standard_normal((2, 3, 4, 5))
        np.testing.assert_allclose(GlobalAvgPool().forward(x), x.mean(axis=(2, 3)))
        assert check_layer(GlobalAvgPool(), None, x) < 1e-4

    def test_linear_gradient(self, rng):
        s = f64_store()
        assert check_layer(Linear(s, "fc", 4, 3), s, rng.standard_normal((5, 4))) < 1e-4

    def test_linear_shape_error(self):
        with pytest.raises(ShapeError):
            Linear(f64_store(), "fc", 4, 3).forward(np.zeros((2, 5)))


class TestResidualBlock:
    def test_zero_branch_is_relu(self, rng):
        s = f64_store()
        block = nn.ResidualBlock(s, "b", 3, 3)
        for name in s.values:
            if name.endswith("weight"):
                s.values[name][...] = 0.0
        x = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_array_equal(block.forward(x, train=False), np.maximum(x, 0))

    def test_downsampling_shape(self):
        block = nn.ResidualBlock(f64_store(), "b", 16, 32, stride=2)
        assert block.forward(np.zeros((2, 16, 7, 10))).shape == (2, 32, 4, 5)

    @pytest.mark.parametrize("c_in,c_out,stride", [(2, 2, 1), (2, 3, 2)])
    def test_gradients(self, rng, c_in, c_out, stride):
        s = f64_store(2)
        block = nn.ResidualBlock(s, "b", c_in, c_out, stride)
        assert check_layer(block, s, rng.standard_normal((2, c_in, 4, 3))) < 1e-4


class TestResNet:
    def test_paper_parameter_count(self):
        spec = nn.ResNetSpec(32)
        assert nn.count_params(spec) == 176400
        assert nn.ResNet(spec).n_params() == 176400

    @given(st.integers(2, 40), st.integers(1, 3), st.integers(1, 3))
    def test_closed_form_count(self, C, blocks, depth):
        spec = nn.ResNetSpec(C, widths=(4, 8, 8)[:depth], stem_channels=4, blocks_per_stage=blocks)
        assert nn.count_params(spec) == nn.ResNet(spec).n_params()

    def test_zero_input_gives_bias(self):
        model = nn.ResNet(nn.ResNetSpec(5))
        logits = model.forward(np.zeros((2, 1, 16, 16)))
        np.testing.assert_allclose(logits, np.tile(model.store.values["fc.bias"], (2, 1)), atol=1e-6)

    @pytest.mark.parametrize("shape", [(64, 41), (63, 125), (158, 125), (1, 1)])
    def test_any_input_size(self, shape):
        model = nn.ResNet(nn.ResNetSpec(4, blocks_per_stage=1))
        n = model.n_params()
        logits = model.forward(np.random.default_rng(0).standard_normal((2, 1, *shape)))
        assert logits.shape == (2, 4) and np.all(np.isfinite(logits))
        assert model.n_params() == n

    def test_eval_is_pure(self, rng):
        model = nn.ResNet(nn.ResNetSpec(3, blocks_per_stage=1))
        x, z = rng.standard_normal((2, 2, 1, 8, 8))
        a = model.forward(x)
        model.forward(z)
        assert np.array_equal(model.forward(x), a)

    def test_end_to_end_gradient(self, rng):
        spec = nn.ResNetSpec(3, stem_channels=2, widths=(2, 3), blocks_per_stage=1)
        model = nn.ResNet(spec, seed=4, dtype=np.float64)
        assert check_layer(model, model.store, rng.standard_normal((3, 1, 5, 4))) < 1e-4


class TestMLP:
    def test_zero_weights_give_bias(self):
        mlp = nn.MLP((4, 8, 6, 3))
        for v in mlp.store.values.values():
            v[...] = 0
        mlp.store.values["fc2.bias"][...] = [1, 2, 3]
        np.testing.assert_array_equal(mlp.forward(np.ones((2, 4))), [[1, 2, 3], [1, 2, 3]])

    def test_hand_computed(self):
        mlp = nn.MLP((2, 2, 1), dtype=np.float64)
        s = mlp.store.values
        s["fc0.weight"][...] = [[1, -1], [2, 0]]
        s["fc0.bias"][...] = [0, -1]
        s["fc1.weight"][...] = [[3, 5]]
        s["fc1.bias"][...] = [0.5]
        # hidden = relu([1-2, 2-1]) = [0, 1]; out = 5 + 0.5
        assert mlp.forward(np.array([[1.0, 2.0]])).item() == 5.5

    def test_gradients(self, rng):
        mlp = nn.MLP((4, 6, 5, 3), seed=1, dtype=np.float64)
        assert check_layer(mlp, mlp.store, rng.standard_normal((3, 4))) < 1e-4


class TestCrossEntropy:
    def test_uniform(self):
        loss, _ = nn.cross_entropy(np.zeros((3, 32)), np.array([0, 5, 31]))
        assert loss == pytest.approx(math.log(32), rel=1e-15)

    def test_saturated(self):
        logits = np.zeros((2, 4))
        logits[[0, 1], [1, 3]] = 1000.0
        loss, grad = nn.cross_entropy(logits, np.array([1, 3]))
        assert loss < 1e-12 and np.all(np.isfinite(grad))

    def test_against_direct_sum(self, rng):
        logits = rng.standard_normal((6, 5)) * 3
        labels = rng.integers(0, 5, 6)
        ref = -np.mean([logits[i, labels[i]] - math.log(sum(math.exp(v) for v in logits[i])) for i in range(6)])
        assert abs(nn.cross_entropy(logits, labels)[0] - ref) < 1e-10

    def test_gradient(self, rng):
        logits = rng.standard_normal((4, 3))
        labels = np.array([0, 2, 1, 1])
        _, g = nn.cross_entropy(logits, labels)
        num = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            p, m = logits.copy(), logits.copy()
            p[idx] += EPS
            m[idx] -= EPS
            num[idx] = (nn.cross_entropy(p, labels)[0] - nn.cross_entropy(m, labels)[0]) / (2 * EPS)
        assert rel_err(num, g) < 1e-4

    def test_bad_labels(self):
        with pytest.raises(InputError):
            nn.cross_entropy(np.zeros((2, 3)), np.array([0, 3]))
        with pytest.raises(ShapeError):
            nn.cross_entropy(np.zeros((2, 3)), np.array([0]))

    @given(st.integers(1, 10), st.integers(2, 40), st.floats(0.1, 50))
    def test_softmax_rows_sum_to_one(self, b, c, scale):
        p = nn.softmax(np.random.default_rng(b).standard_normal((b, c)) * scale)
        assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-12)


class TestAdamW:
    def _store(self, value, decay=True):
        s = f64_store()
        s.add("w", np.array([value], dtype=float), decay=decay)
        return s

    def test_zero_gradient_no_decay(self):
        s = self._store(2.0)
        nn.adamw_step(s, nn.AdamWConfig(lr=0.1, weight_decay=0.0))
        assert s.values["w"][0] == 2.0

    def test_first_step(self):
        s = self._store(0.0)
        s.grads["w"][...] = 1.0
        nn.adamw_step(s, nn.AdamWConfig(lr=0.01, weight_decay=0.0))
        assert s.values["w"][0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-12)

    def test_decoupled_decay(self):
        s = self._store(1.0)
        cfg = nn.AdamWConfig(lr=0.1, weight_decay=0.01)
        for _ in range(3):
            nn.adamw_step(s, cfg)
        assert s.values["w"][0] == pytest.approx((1 - 0.001) ** 3, rel=1e-12)

    def test_decay_excluded_for_flagged_params(self):
        s = self._store(1.0, decay=False)
        nn.adamw_step(s, nn.AdamWConfig(lr=0.1, weight_decay=0.5))
        assert s.values["w"][0] == 1.0

    def test_bn_and_bias_not_decayed(self):
        model = nn.ResNet(nn.ResNetSpec(3, blocks_per_stage=1))
        no_decay = {n for n, d in model.store.decay.items() if not d}
        assert no_decay == {n for n in model.store.values if n.endswith(("gamma", "beta", "bias"))}


class TestPlateau:
    def test_improving_keeps_lr(self):
        assert nn.plateau_schedule(np.linspace(0.1, 0.9, 40), 0.01, patience=3) == 0.01

    def test_flat_reduces_once(self):
        assert nn.plateau_schedule([0.5] * 11, 0.01, patience=10) == pytest.approx(0.005)
        assert nn.plateau_schedule([0.5] * 10, 0.01, patience=10) == 0.01

    def test_counter_trace(self):
        s = nn.PlateauScheduler(1.0, patience=2, factor=0.5)
        lrs = [s.step(v) for v in [0.5, 0.5, 0.5, 0.50005, 0.5, 0.6, 0.6, 0.6]]
        assert lrs == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.125]

    def test_floor(self):
        assert nn.plateau_schedule([0.0] * 100, 1e-6, patience=1) == 1e-6

    def test_invalid(self):
        with pytest.raises(ParameterError):
            nn.PlateauScheduler(0.1, factor=1.0)


def separable_problem(n=40, seed=0):
    r = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = r.standard_normal((n, 4)) * 0.3
    x[:, 0] += 2 * y - 1
    return x.astype(np.float32), y


class TestTraining:
    def test_zero_lr_leaves_params(self):
        x, y = separable_problem(8)
        mlp = nn.MLP((4, 8, 8, 2))
        before = {k: v.copy() for k, v in mlp.store.values.items()}
        res = nn.train(mlp, x, y, cfg=nn.TrainConfig(lr=0.0, epochs=1, batch_size=8))
        assert all(np.array_equal(before[k], v) for k, v in mlp.store.values.items())
        assert len(res.history) == 1 and math.isfinite(res.history[0].train_loss)

    def test_loss_decreases(self):
        x, y = separable_problem()
        res = nn.train(nn.MLP((4, 16, 8, 2)), x, y, x, y, nn.TrainConfig(lr=1e-2, epochs=5, batch_size=8))
        losses = [r.train_loss for r in res.history]
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert res.history[-1].val_acc == 1.0

    def test_resnet_learns(self):
        r = np.random.default_rng(1)
        y = np.arange(24) % 2
        x = r.standard_normal((24, 1, 6, 6)).astype(np.float32) * 0.1
        x[y == 1, :, :3] += 1.0
        model = nn.ResNet(nn.ResNetSpec(2, blocks_per_stage=1))
        res = nn.train(model, x, y, x, y, nn.TrainConfig(epochs=6, batch_size=8))
        assert res.history[-1].train_loss < res.history[0].train_loss

    def test_deterministic(self):
        x, y = separable_problem()
        run = lambda: nn.train(nn.MLP((4, 16, 8, 2), seed=3), x, y,
                               cfg=nn.TrainConfig(epochs=3, batch_size=8, seed=9)).final_loss
        assert run() == run()

    def test_empty_split(self):
        with pytest.raises(CorpusError):
            nn.train(nn.MLP((4, 4, 4, 2)), np.zeros((0, 4)), np.zeros(0, dtype=int))

    def test_validation_not_used_for_gradients(self):
        x, y = separable_problem()
        a = nn.MLP((4, 8, 8, 2), seed=1)
        b = nn.MLP((4, 8, 8, 2), seed=1)
        cfg = nn.TrainConfig(epochs=2, batch_size=8, patience=50)
        nn.train(a, x, y, x[:4], y[:4], cfg)
        nn.train(b, x, y, x[4:20], 1 - y[4:20], cfg)
        assert all(np.array_equal(a.store.values[k], b.store.values[k]) for k in a.store.values)


class TestCheckpoint:
    def test_roundtrip_includes_running_stats(self, tmp_path):
        m = nn.ResNet(nn.ResNetSpec(3, blocks_per_stage=1), seed=1)
        m.store.buffers["stem.bn.running_mean"][...] = 0.25
        nn.save_checkpoint(m, tmp_path / "m.swnn")
        other = nn.load_checkpoint(nn.ResNet(nn.ResNetSpec(3, blocks_per_stage=1), seed=2), tmp_path / "m.swnn")
        for k, v in m.store.state().items():
            assert np.array_equal(other.store.state()[k], v)

    def test_layout(self):
        raw = nn.state_to_bytes({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
        assert raw[:4] == b"SWNN" and raw[4:8] == (1).to_bytes(4, "little")
        assert raw[8:12] == (2).to_bytes(4, "little") and raw[12:14] == b"ab"
        assert np.frombuffer(raw[-8:], "<f4").tolist() == [1.0, 2.0]

    def test_corrupt(self):
        raw = nn.state_to_bytes({"w": np.ones(4, dtype=np.float32)})
        with pytest.raises(InputError):
            nn.state_from_bytes(b"NOPE" + raw[4:])
        with pytest.raises(InputError):
            nn.state_from_bytes(raw[:-3])

    def test_shape_mismatch(self):
        m = nn.MLP((2, 3, 2))
        state = m.store.state()
        state["fc0.weight"] = np.zeros((4, 4), np.float32)
        with pytest.raises(ValueError):
            m.store.load_state(state)

    def test_training_log(self, tmp_path):
        rows = [nn.EpochRecord(1, 0.5, 0.25, 0.01), nn.EpochRecord(2, 0.125, float("nan"), 0.005)]
        nn.write_training_log(rows, tmp_path / "log.csv")
        back = nn.read_training_log(tmp_path / "log.csv")
        assert back[0] == {"epoch": 1, "train_loss": 0.5, "val_acc": 0.25, "lr": 0.01}
        assert math.isnan(back[1]["val_acc"])
        assert (tmp_path / "log.csv").read_text().splitlines()[0] == "epoch,train_loss,val_acc,lr"
