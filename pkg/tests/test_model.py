import math

import numpy as np
import pytest
import torch

from dgpair.errors import ChannelConfigMismatch, EmptyDataset, ShapeMismatch
from dgpair.model import (
    LossConfig,
    PairClassifier,
    TrainConfig,
    focal_loss,
    focal_loss_from_logits,
    focal_loss_logit_gradient,
    forward,
    load_checkpoint,
    lr_for_epoch,
    save_checkpoint,
    train,
)


class TensorDataset(torch.utils.data.Dataset):
    """In-memory (stack, label) dataset for training-loop tests."""

    def __init__(self, xs, ys, records=None):
        self.xs = xs
        self.ys = ys
        self.records = records or []

    def __len__(self):
        return len(self.ys)

    def __getitem__(self, i):
        return self.xs[i], int(self.ys[i])


def separable_dataset(n=200, size=128, channels=10, seed=0):
    """Positives: identical half-pair content; negatives: independent noise."""
    g = torch.Generator().manual_seed(seed)
    xs = []
    ys = []
    for i in range(n):
        label = i % 2
        a = torch.rand((channels // 2, size, size), generator=g)
        b = a.clone() if label == 1 else torch.rand((channels // 2, size, size), generator=g)
        xs.append(torch.cat([a, b]))
        ys.append(label)
    return TensorDataset(xs, ys)


class TestFocalLoss:
    def test_gamma_zero_is_half_bce(self):
        rng = np.random.default_rng(0)
        cfg = LossConfig(alpha=0.5, gamma=0.0)
        for _ in range(100):
            n = int(rng.integers(1, 64))
            p = rng.uniform(1e-6, 1 - 1e-6, n)
            y = rng.integers(0, 2, n)
            loss = float(focal_loss(torch.tensor(p), torch.tensor(y), cfg))
            bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
            assert abs(loss - 0.5 * bce) < 1e-6

    def test_perfect_prediction_zero_loss(self):
        p = torch.tensor([1.0, 0.0])
        y = torch.tensor([1, 0])
        assert float(focal_loss(p, y)) < 1e-9

    def test_hand_computed_value(self):
        # single sample, p_t = 0.6, gamma = 2, alpha = 0.5
        loss = float(focal_loss(torch.tensor([0.6], dtype=torch.float64),
                                torch.tensor([1]), LossConfig(alpha=0.5, gamma=2.0)))
        expected = 0.5 * 0.4 ** 2 * -math.log(0.6)
        assert abs(loss - expected) < 1e-9
        assert abs(expected - 0.040866) < 1e-6

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0.01, 0.99, 32)
        y = rng.integers(0, 2, 32)
        perm = rng.permutation(32)
        a = float(focal_loss(torch.tensor(p), torch.tensor(y)))
        b = float(focal_loss(torch.tensor(p[perm]), torch.tensor(y[perm])))
        assert abs(a - b) < 1e-12

    def test_clamping_prevents_log_zero(self):
        loss = float(focal_loss(torch.tensor([0.0, 1.0]), torch.tensor([1, 0]),
                                LossConfig(gamma=0.0)))
        assert np.isfinite(loss)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(alpha=1.5)
        with pytest.raises(ValueError):
            LossConfig(gamma=-1.0)


class TestFocalLossGradient:
    def finite_difference(self, logits, labels, cfg, step=1e-5):
        grad = np.zeros_like(logits)
        for i in range(logits.shape[0]):
            for j in range(2):
                up = logits.copy()
                dn = logits.copy()
                up[i, j] += step
                dn[i, j] -= step
                f_up = float(focal_loss_from_logits(torch.tensor(up), torch.tensor(labels), cfg))
                f_dn = float(focal_loss_from_logits(torch.tensor(dn), torch.tensor(labels), cfg))
                grad[i, j] = (f_up - f_dn) / (2 * step)
        return grad

    def test_matches_central_differences(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            b = int(rng.integers(1, 9))
            logits = rng.normal(0, 2, (b, 2))
            labels = rng.integers(0, 2, b)
            cfg = LossConfig(alpha=float(rng.uniform(0.2, 0.8)),
                             gamma=float(rng.choice([0.0, 1.0, 2.0, 3.0])))
            analytic = focal_loss_logit_gradient(logits, labels, cfg)
            numeric = self.finite_difference(logits, labels, cfg)
            rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
            assert rel < 1e-4

    def test_matches_autograd(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(0, 1.5, (6, 2))
        labels = rng.integers(0, 2, 6)
        cfg = LossConfig(alpha=0.25, gamma=2.0)
        t = torch.tensor(logits, requires_grad=True)
        focal_loss_from_logits(t, torch.tensor(labels), cfg).backward()
        assert np.allclose(t.grad.numpy(), focal_loss_logit_gradient(logits, labels, cfg),
                           atol=1e-10)


class TestForward:
    def test_probabilities_in_range(self):
        torch.manual_seed(0)
        model = PairClassifier()
        x = torch.randn(4, 10, 64, 64)
        p = forward(model, x)
        assert p.shape == (4,)
        assert ((p >= 0) & (p <= 1)).all()

    def test_softmax_rows_sum_to_one(self):
        torch.manual_seed(1)
        model = PairClassifier().eval()
        with torch.no_grad():
            logits = model(torch.randn(5, 10, 64, 64))
        assert logits.shape == (5, 2)
        sums = torch.softmax(logits, dim=1).sum(dim=1)
        assert torch.allclose(sums, torch.ones(5), atol=1e-6)

    def test_duplicated_rows_identical(self):
        torch.manual_seed(2)
        model = PairClassifier()
        x = torch.randn(1, 10, 64, 64)
        p = forward(model, torch.cat([x, x, x]))
        assert p[0] == p[1] == p[2]

    def test_batch_invariance_in_eval(self):
        torch.manual_seed(3)
        model = PairClassifier()
        xs = torch.randn(6, 10, 64, 64)
        alone = float(forward(model, xs[:1])[0])
        batched = float(forward(model, xs)[0])
        assert abs(alone - batched) < 1e-5

    def test_channel_mismatch(self):
        model = PairClassifier(in_channels=6)
        with pytest.raises(ShapeMismatch):
            forward(model, torch.randn(1, 10, 32, 32))

    def test_pooled_feature_is_512(self):
        model = PairClassifier()
        assert model.fc.in_features == 512
        assert model.fc.out_features == 2


class TestSchedule:
    def test_constant_then_linear(self):
        cfg = TrainConfig()
        for e in range(1, 6):
            assert lr_for_epoch(e, cfg) == 5e-4
        assert lr_for_epoch(10, cfg) == pytest.approx(5e-6)

    def test_monotone_non_increasing(self):
        cfg = TrainConfig()
        lrs = [lr_for_epoch(e, cfg) for e in range(1, 11)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))


class TestTraining:
    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train(TensorDataset([], []), TrainConfig(epochs=1))

    def test_seeded_determinism(self):
        ds = separable_dataset(n=32, size=32)
        cfg = TrainConfig(epochs=2, batch_size=8, seed=11, input_size=32)
        _, h1 = train(ds, cfg)
        _, h2 = train(ds, cfg)
        losses1 = [row["train_loss"] for row in h1]
        losses2 = [row["train_loss"] for row in h2]
        assert np.allclose(losses1, losses2, atol=1e-4)

    def test_history_carries_schedule(self):
        ds = separable_dataset(n=16, size=32)
        cfg = TrainConfig(epochs=7, batch_size=8, seed=0, input_size=32)
        _, history = train(ds, cfg)
        assert [row["lr"] for row in history] == [lr_for_epoch(e, cfg) for e in range(1, 8)]

    def test_separable_pairs_reach_high_ap(self):
        # positives are identical stacks, negatives independent noise
        from dgpair.metrics import ScoredPair, average_precision
        from dgpair.model import predict_batched

        ds = separable_dataset(n=200, size=128)
        cfg = TrainConfig(epochs=10, batch_size=16, seed=5, input_size=128)
        model, _ = train(ds, cfg)
        probs = predict_batched(model, ds)
        scored = [ScoredPair(str(i), "s", ds.ys[i], float(p)) for i, p in enumerate(probs)]
        assert average_precision(scored) >= 0.99


class TestCheckpoints:
    def test_roundtrip_identical_predictions(self, tmp_path):
        torch.manual_seed(4)
        model = PairClassifier()
        path = tmp_path / "model.pt"
        save_checkpoint(path, model, TrainConfig(input_size=64), LossConfig())
        loaded, cfg, loss_cfg, ablation = load_checkpoint(path)
        assert cfg.input_size == 64 and ablation == frozenset()
        x = torch.randn(3, 10, 64, 64)
        assert torch.allclose(forward(model, x), forward(loaded, x))

    def test_channel_config_mismatch(self, tmp_path):
        model = PairClassifier(in_channels=6)
        path = tmp_path / "m.pt"
        save_checkpoint(path, model, TrainConfig(), LossConfig(), ablation={"no-masks"})
        with pytest.raises(ChannelConfigMismatch):
            load_checkpoint(path, expect_channels=10)
        loaded, _, _, ablation = load_checkpoint(path, expect_channels=6)
        assert ablation == {"no-masks"}

    def test_tampered_flags_rejected(self, tmp_path):
        model = PairClassifier(in_channels=10)
        path = tmp_path / "m.pt"
        save_checkpoint(path, model, TrainConfig(), LossConfig(), ablation={"no-rgb"})
        with pytest.raises(ChannelConfigMismatch):
            load_checkpoint(path)
