"""Pair classifier, focal loss, and the training loop.

The network consumes the stacked pair canvases (RGB pair + keypoint and
match masks, 10 channels by default) and outputs two logits; softmax of
the second entry is the probability that the pair observes the same
surface.  Architecture: a stride-2 7x7 stem, three pre-activation
residual blocks with output channels 128/256/512 (each downsampling by
2), global average pooling, and a fully connected 512 -> 2 head.
"""

import io
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ChannelConfigMismatch, DivergedLoss, EmptyDataset, ShapeMismatch
from .rasterize import CHANNELS_FULL, assemble_input, channels_for, normalize_ablation

PROB_EPS = 1e-7
STEM_CHANNELS = 32
BLOCK_CHANNELS = (128, 256, 512)
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LossConfig:
    """Focal loss: mean of -alpha_t * (1 - p_t)^gamma * log(p_t)."""

    alpha: float = 0.5
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr_start: float = 5e-4
    lr_end: float = 5e-6
    decay_start_epoch: int = 5   # constant lr through this epoch, linear decay after
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    input_size: int = 1024


def lr_for_epoch(epoch, cfg):
    """Learning rate used during `epoch` (1-based).

    Constant at lr_start through decay_start_epoch, then linear so the
    final epoch runs at lr_end.
    """
    if epoch <= cfg.decay_start_epoch:
        return cfg.lr_start
    span = cfg.epochs - cfg.decay_start_epoch
    frac = (epoch - cfg.decay_start_epoch) / span
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac


class ResidualBlock(nn.Module):
    """Pre-activation residual unit with stride-2 downsampling."""

    def __init__(self, c_in, c_out):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.shortcut = nn.Conv2d(c_in, c_out, 1, stride=2, bias=False)

    def forward(self, x):
        h = F.relu(self.bn1(x))
        y = self.conv1(h)
        y = self.conv2(F.relu(self.bn2(y)))
        return y + self.shortcut(h)


class PairClassifier(nn.Module):
    """Binary pair classifier over stacked canvases; forward gives logits."""

    def __init__(self, in_channels=CHANNELS_FULL):
        super().__init__()
        self.in_channels = in_channels
        self.stem = nn.Conv2d(in_channels, STEM_CHANNELS, 7, stride=2, padding=3, bias=False)
        self.stem_bn = nn.BatchNorm2d(STEM_CHANNELS)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        blocks = []
        c_in = STEM_CHANNELS
        for c_out in BLOCK_CHANNELS:
            blocks.append(ResidualBlock(c_in, c_out))
            c_in = c_out
        self.blocks = nn.Sequential(*blocks)
        self.final_bn = nn.BatchNorm2d(BLOCK_CHANNELS[-1])
        self.fc = nn.Linear(BLOCK_CHANNELS[-1], 2)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
        nn.init.zeros_(self.fc.bias)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(
                f"expected (B, {self.in_channels}, S, S) input, got {tuple(x.shape)}"
            )
        y = self.pool(F.relu(self.stem_bn(self.stem(x))))
        y = F.relu(self.final_bn(self.blocks(y)))
        y = F.adaptive_avg_pool2d(y, 1).flatten(1)
        return self.fc(y)


def forward(model, batch):
    """Positive-class probabilities for a batch (no grad, eval mode)."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            if isinstance(batch, np.ndarray):
                batch = torch.from_numpy(batch)
            logits = model(batch.float())
            probs = torch.softmax(logits, dim=1)[:, 1]
    finally:
        model.train(was_training)
    return probs


def focal_loss(probs, labels, cfg=LossConfig()):
    """Focal loss over positive-class probabilities.

    p_t is the predicted probability of the true class, clamped to
    [eps, 1 - eps]; alpha weights the positive class and 1 - alpha the
    negative class.  With gamma=0, alpha=0.5 this is half the binary
    cross-entropy.
    """
    if not torch.is_tensor(probs):
        probs = torch.as_tensor(probs, dtype=torch.float64)
    labels = torch.as_tensor(labels, dtype=probs.dtype, device=probs.device)
    probs = probs.clamp(PROB_EPS, 1.0 - PROB_EPS)
    p_t = torch.where(labels > 0.5, probs, 1.0 - probs)
    alpha_t = torch.where(
        labels > 0.5,
        torch.as_tensor(cfg.alpha, dtype=probs.dtype, device=probs.device),
        torch.as_tensor(1.0 - cfg.alpha, dtype=probs.dtype, device=probs.device),
    )
    return (-alpha_t * (1.0 - p_t) ** cfg.gamma * torch.log(p_t)).mean()


def focal_loss_from_logits(logits, labels, cfg=LossConfig()):
    """Focal loss driven by two-class logits (softmax inside)."""
    if not torch.is_tensor(logits):
        logits = torch.as_tensor(logits, dtype=torch.float64)
    probs = torch.softmax(logits, dim=1)[:, 1]
    return focal_loss(probs, labels, cfg)


def focal_loss_logit_gradient(logits, labels, cfg=LossConfig()):
    """Closed-form gradient of the mean focal loss w.r.t. the logits.

    Used to validate the training loss path against finite differences.
    Ignores the probability clamp, which is inactive for any p_t above
    the epsilon.  Returns a (B, 2) float64 array.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    b = z.shape[0]
    z_shift = z - z.max(axis=1, keepdims=True)
    e = np.exp(z_shift)
    p = e / e.sum(axis=1, keepdims=True)          # (B, 2) softmax
    p_t = p[np.arange(b), y]
    alpha_t = np.where(y == 1, cfg.alpha, 1.0 - cfg.alpha)
    # d/dp_t of -alpha_t (1-p_t)^gamma log(p_t)
    one_m = 1.0 - p_t
    if cfg.gamma == 0.0:
        dl_dpt = -alpha_t / p_t
    else:
        dl_dpt = alpha_t * (
            cfg.gamma * one_m ** (cfg.gamma - 1.0) * np.log(p_t) - one_m ** cfg.gamma / p_t
        )
    # dp_t/dz_j = p_t (delta_{jy} - p_j)
    delta = np.zeros_like(p)
    delta[np.arange(b), y] = 1.0
    grad = dl_dpt[:, None] * p_t[:, None] * (delta - p)
    return grad / b


# ---------------------------------------------------------------------------
# dataset over prepared artifacts
# ---------------------------------------------------------------------------

class ArtifactDataset(torch.utils.data.Dataset):
    """(input stack, label) pairs read lazily from an artifact store."""

    def __init__(self, records, artifacts_dir, ablation=frozenset()):
        from .pipeline import artifact_path, load_artifacts

        self._load = load_artifacts
        self._paths = [artifact_path(artifacts_dir, r.pair_id) for r in records]
        self.records = list(records)
        self.ablation = normalize_ablation(ablation)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        artifacts = self._load(self._paths[idx])
        stack = assemble_input(artifacts, self.ablation)
        label = 1 if self.records[idx].label == "positive" else 0
        return torch.from_numpy(stack), label


def predict_batched(model, dataset, batch_size=16):
    """Probabilities for every item of a dataset, in dataset order."""
    loader = torch.utils.data.DataLoader(dataset, batch_size=batch_size, shuffle=False)
    out = []
    for x, _ in loader:
        out.append(forward(model, x).cpu().numpy())
    return np.concatenate(out) if out else np.zeros(0)


def predict_pair(model, artifacts, ablation=frozenset()):
    """Probability that one assembled pair is a true match."""
    stack = assemble_input(artifacts, normalize_ablation(ablation))
    batch = torch.from_numpy(stack[None])
    return float(forward(model, batch)[0])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train(train_dataset, cfg=TrainConfig(), loss_cfg=LossConfig(), val_dataset=None,
          checkpoint_dir=None, ablation=frozenset(), log=None):
    """Train a classifier; returns (model, history).

    History carries one row per epoch: mean train loss, the learning
    rate used, and validation AP when a validation set is given.
    Non-finite losses abort with DivergedLoss naming the batch.
    """
    from pathlib import Path

    from .metrics import ScoredPair, average_precision

    if len(train_dataset) == 0:
        raise EmptyDataset("training dataset is empty")
    ablation = normalize_ablation(ablation)
    torch.manual_seed(cfg.seed)
    model = PairClassifier(in_channels=channels_for(ablation))
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr_start,
                                 betas=(cfg.beta1, cfg.beta2))
    loader = torch.utils.data.DataLoader(
        train_dataset, batch_size=cfg.batch_size, shuffle=True,
        generator=torch.Generator().manual_seed(cfg.seed), drop_last=False,
    )

    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        lr = lr_for_epoch(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        total = 0.0
        count = 0
        for x, labels in loader:
            optimizer.zero_grad()
            logits = model(x)
            probs = torch.softmax(logits, dim=1)[:, 1]
            loss = focal_loss(probs, labels, loss_cfg)
            if not torch.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at batch {step}", batch_index=step)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(labels)
            count += len(labels)
            step += 1
        row = {"epoch": epoch, "lr": lr, "train_loss": total / count, "val_ap": None}
        if val_dataset is not None and len(val_dataset):
            probs = predict_batched(model, val_dataset, cfg.batch_size)
            scored = [
                ScoredPair(r.pair_id, r.scene, 1 if r.label == "positive" else 0, float(p))
                for r, p in zip(val_dataset.records, probs)
            ]
            row["val_ap"] = average_precision(scored)
        history.append(row)
        if log is not None:
            ap = f" val_ap={row['val_ap']:.4f}" if row["val_ap"] is not None else ""
            log(f"epoch {epoch:2d}/{cfg.epochs} lr={lr:.2e} loss={row['train_loss']:.4f}{ap}")
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"checkpoint_epoch{epoch:02d}.pt"
            save_checkpoint(path, model, cfg, loss_cfg, ablation)
    return model, history


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model, cfg, loss_cfg, ablation=frozenset()):
    """Versioned container: parameter arrays by layer name plus configs."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "in_channels": model.in_channels,
        "ablation": sorted(normalize_ablation(ablation)),
        "train_config": asdict(cfg),
        "loss_config": asdict(loss_cfg),
        "state_dict": model.state_dict(),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    with open(path, "wb") as fh:
        fh.write(buffer.getvalue())


def load_checkpoint(path, expect_channels=None):
    """Load a checkpoint; channel configuration must line up.

    Returns (model, TrainConfig, LossConfig, ablation flag set).
    """
    with open(path, "rb") as fh:
        payload = torch.load(io.BytesIO(fh.read()), weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ChannelConfigMismatch(
            f"unsupported checkpoint version {version!r} (expected {CHECKPOINT_VERSION})"
        )
    ablation = normalize_ablation(payload["ablation"])
    in_channels = int(payload["in_channels"])
    if in_channels != channels_for(ablation):
        raise ChannelConfigMismatch(
            f"checkpoint stores {in_channels} channels but flags {sorted(ablation)} "
            f"imply {channels_for(ablation)}"
        )
    if expect_channels is not None and in_channels != expect_channels:
        raise ChannelConfigMismatch(
            f"expected {expect_channels}-channel model, checkpoint has {in_channels}"
        )
    model = PairClassifier(in_channels=in_channels)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    cfg = TrainConfig(**payload["train_config"])
    loss_cfg = LossConfig(**payload["loss_config"])
    return model, cfg, loss_cfg, ablation
