import math

import numpy as np
import pytest

import tallygrad as tg
from tallygrad.data import ArrayDataset
from tallygrad.errors import (
    CorruptCheckpoint,
    MissingGrad,
    MissingTensor,
    NonFiniteLoss,
    StepOutOfRange,
)
from tallygrad.models import MLP
from tallygrad.rng import Rng
from tallygrad.tensor import DType, Tensor
from tallygrad.training import (
    TrainConfig,
    checkpoint_load,
    checkpoint_restore,
    checkpoint_save,
    clip_grad_norm,
    cosine_lr,
    train,
)


@pytest.fixture(autouse=True)
def grad_mode():
    tg.enable_autograd()
    yield
    tg.disable_autograd()


def blob_dataset(n=60, seed=0):
    """Two linearly separable 2-d blobs."""
    rng = Rng(seed)
    xs = np.zeros((n, 2), dtype=np.float32)
    ys = np.zeros(n, dtype=np.int64)
    for i in range(n):
        label = i % 2
        cx = 1.5 if label else -1.5
        xs[i] = [cx + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)]
        ys[i] = label
    return ArrayDataset(xs, ys)


class TestCosineLR:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0, 100, 1.0, 0.1) == pytest.approx(1.0)
        assert cosine_lr(100, 100, 1.0, 0.1) == pytest.approx(0.1)
        assert cosine_lr(50, 100, 1.0, 0.1) == pytest.approx(0.55)

    def test_monotone_non_increasing(self):
        values = [cosine_lr(s, 200, 3e-3, 1e-5) for s in range(201)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_step_out_of_range(self):
        with pytest.raises(StepOutOfRange):
            cosine_lr(11, 10, 1.0, 0.1)
        with pytest.raises(StepOutOfRange):
            cosine_lr(-1, 10, 1.0, 0.1)
        with pytest.raises(StepOutOfRange):
            cosine_lr(0, 0, 1.0, 0.1)


class TestClipGradNorm:
    def _params_with_norm(self, norm):
        p = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)
        p.grad = Tensor(np.full(4, norm / 2.0, dtype=np.float32))
        return [p]  # l2 norm = norm

    def test_clips_to_bound(self):
        params = self._params_with_norm(10.0)
        factor = clip_grad_norm(params, 1.0)
        assert factor == pytest.approx(0.1)
        post = math.sqrt(float(np.sum(params[0].grad.nd ** 2)))
        assert post <= 1.0 + 1e-6

    def test_untouched_below_bound(self):
        params = self._params_with_norm(0.5)
        before = params[0].grad.nd.copy()
        assert clip_grad_norm(params, 1.0) == 1.0
        assert np.array_equal(params[0].grad.nd, before)

    def test_zero_grads_no_division(self):
        p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
        p.grad = Tensor(np.zeros(3, dtype=np.float32))
        assert clip_grad_norm([p], 1.0) == 1.0

    def test_missing_grad(self):
        p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
        with pytest.raises(MissingGrad):
            clip_grad_norm([p], 1.0)


class TestTrainLoop:
    def test_loss_decreases_on_separable_data(self):
        model = MLP([2, 2], Rng(0))
        cfg = TrainConfig(epochs=5, batch_size=10, optimizer="sgd",
                          lr_max=0.5, lr_min=0.5, seed=0)
        report = train(model, blob_dataset(), cfg)
        losses = report.epoch_loss
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert report.steps == 5 * 6

    def test_zero_lr_leaves_params_bit_identical(self):
        model = MLP([2, 2], Rng(0))
        before = [p.nd.copy() for p in model.parameters()]
        cfg = TrainConfig(epochs=2, batch_size=10, optimizer="sgd",
                          lr_max=0.0, lr_min=0.0, seed=0)
        train(model, blob_dataset(), cfg)
        for p, b in zip(model.parameters(), before):
            assert np.array_equal(p.nd, b)

    def test_determinism_same_seed_same_params(self):
        def run():
            model = MLP([2, 4, 2], Rng(3))
            cfg = TrainConfig(epochs=3, batch_size=8, optimizer="adam",
                              lr_max=1e-2, lr_min=1e-3, seed=11)
            train(model, blob_dataset(), cfg)
            return [p.nd.copy() for p in model.parameters()]

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)

    def test_non_finite_loss_aborts_with_step(self):
        class Exploder(MLP):
            def __init__(self):
                super().__init__([2, 2], Rng(0))
                self.calls = 0

            def forward(self, x):
                self.calls += 1
                out = super().forward(x)
                if self.calls == 3:
                    out.data[0] = np.float32("nan")
                return out

        cfg = TrainConfig(epochs=5, batch_size=10, optimizer="sgd",
                          lr_max=0.1, lr_min=0.1, seed=0)
        with pytest.raises(NonFiniteLoss) as e:
            train(Exploder(), blob_dataset(), cfg)
        assert "step 2" in str(e.value)

    def test_clipping_applied(self):
        model = MLP([2, 2], Rng(0))
        cfg = TrainConfig(epochs=1, batch_size=60, optimizer="sgd",
                          lr_max=0.1, lr_min=0.1, seed=0, clip_norm=1e-6)
        report = train(model, blob_dataset(), cfg)
        assert report.steps == 1  # and nothing blew up with a tiny bound

    def test_peak_bytes_covers_params_and_activations(self):
        model = MLP([2, 8, 2], Rng(1))
        param_bytes = sum(p.memory_footprint() for p in model.parameters())
        cfg = TrainConfig(epochs=2, batch_size=10, optimizer="adam",
                          lr_max=1e-2, lr_min=1e-3, seed=0)
        report = train(model, blob_dataset(), cfg)
        # adam keeps grads + two moments: peak must exceed 3x params
        assert report.peak_bytes >= 3 * param_bytes

    def test_progress_stream(self):
        records = []
        model = MLP([2, 2], Rng(0))
        cfg = TrainConfig(epochs=3, batch_size=30, optimizer="sgd",
                          lr_max=0.1, lr_min=0.1, seed=0)
        train(model, blob_dataset(), cfg, progress=records.append)
        assert len(records) == 3
        assert {"epoch", "loss", "acc", "lr", "peak_bytes"} <= records[0].keys()


class TestCheckpoint:
    def _params(self):
        return {
            "w": Tensor(Rng(1).uniform_array(12).astype(np.float32),
                        shape=(3, 4)),
            "b": Tensor(np.arange(3, dtype=np.float32)),
            "ids": Tensor([5, 6, 7], dtype=DType.INT64),
        }

    def test_round_trip_bit_exact(self, tmp_path):
        path = str(tmp_path / "ck.bin")
        params = self._params()
        checkpoint_save(params, path)
        loaded = checkpoint_load(path)
        assert set(loaded) == set(params)
        for name, t in params.items():
            assert loaded[name].shape == t.shape
            assert loaded[name].dtype is t.dtype
            assert np.array_equal(loaded[name].nd, t.nd)

    def test_truncation_detected(self, tmp_path):
        path = str(tmp_path / "ck.bin")
        checkpoint_save(self._params(), path)
        with open(path, "rb") as f:
            raw = f.read()
        with open(path, "wb") as f:
            f.write(raw[:len(raw) - 5])
        with pytest.raises(CorruptCheckpoint):
            checkpoint_load(path)

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "ck.bin")
        with open(path, "wb") as f:
            f.write(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CorruptCheckpoint):
            checkpoint_load(path)

    def test_restore_name_mismatch(self, tmp_path):
        path = str(tmp_path / "ck.bin")
        checkpoint_save(self._params(), path)
        wrong = {"w": Tensor(np.zeros((3, 4), dtype=np.float32))}
        with pytest.raises(MissingTensor):
            checkpoint_restore(wrong, path)

    def test_restore_in_place(self, tmp_path):
        path = str(tmp_path / "ck.bin")
        params = self._params()
        checkpoint_save(params, path)
        targets = {
            "w": Tensor(np.zeros((3, 4), dtype=np.float32)),
            "b": Tensor(np.zeros(3, dtype=np.float32)),
            "ids": Tensor([0, 0, 0], dtype=DType.INT64),
        }
        buffers = {k: t.data for k, t in targets.items()}
        checkpoint_restore(targets, path)
        for name in params:
            assert np.array_equal(targets[name].nd, params[name].nd)
            assert targets[name].data is buffers[name]

    def test_overhead_below_one_percent_for_big_model(self, tmp_path):
        layer_w = Tensor(Rng(2).uniform_array(784 * 340).astype(np.float32),
                         shape=(340, 784))
        path = str(tmp_path / "big.bin")
        written = checkpoint_save({"w": layer_w}, path)
        payload = layer_w.memory_footprint()
        assert payload > 1_000_000
        assert written - payload < 0.01 * payload
