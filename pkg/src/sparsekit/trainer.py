"""Sparse training loop: per-batch mask re-evaluation during the pruning
era, masked momentum SGD, and a frozen mask afterwards.

Also provides the deterministic synthetic dataset the toy network trains
on, the per-epoch metrics log, and checkpoint save/load (tensor container
plus a JSON sidecar with the config and RNG state).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .masking import (
    ck_mask,
    combined_mask,
    conv_driven_fc_elimination,
    ensure_column_coverage,
    fc_block_mask,
    fc_fine_mask,
    monotone_and,
    window_mask,
)
from .model import ToyModel, backward, cross_entropy, forward, sgd_step
from .schedule import Granularity, Phase, PruningSchedule, phase_at, threshold_at
from .tensor import load_tensors, measured_sparsity, save_tensors

METRICS_HEADER = ["epoch", "top1", "loss", "sparsity", "lr", "phase"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian-blob images, reproducible from the seed."""

    n_train: int
    n_val: int
    image_size: int
    channels: int
    n_classes: int
    seed: int

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.channels, self.n_classes) < 1:
            raise ConfigError("dataset counts must all be >= 1")
        if self.image_size < 2:
            raise ConfigError(f"image_size must be >= 2, got {self.image_size}")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int
    batch_size: int
    lr0: float
    lr_drop_epochs: list[int]
    seed: int
    schedule: PruningSchedule
    dataset: SyntheticSpec
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    conv1_out: int = 8
    conv2_out: int = 8
    pool: int = 2

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.lr_drop_factor < 1:
            raise ConfigError(f"lr_drop_factor must be in (0, 1), got {self.lr_drop_factor}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    top1: float
    loss: float
    sparsity: float
    lr: float
    phase: str


class Split(NamedTuple):
    x: np.ndarray
    y: np.ndarray


def make_synthetic_dataset(spec: SyntheticSpec) -> tuple[Split, Split]:
    """Build (train, val) splits of labeled blob images in [0, 1].

    Each class has a Gaussian bump at a distinct position on a ring;
    samples are the class pattern plus iid noise, clipped to [0, 1].
    Splits are class-balanced (label counts differ by at most one) and
    byte-for-byte reproducible from the seed.
    """
    rng = np.random.default_rng(spec.seed)
    s = spec.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    sigma = s / 5.0
    means = np.empty((spec.n_classes, spec.channels, s, s))
    for i in range(spec.n_classes):
        angle = 2.0 * np.pi * i / spec.n_classes
        cy = (s - 1) / 2.0 + (s / 4.0) * np.sin(angle)
        cx = (s - 1) / 2.0 + (s / 4.0) * np.cos(angle)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        means[i] = 0.25 + 0.5 * bump

    def draw(n: int) -> Split:
        labels = rng.permutation(np.arange(n) % spec.n_classes)
        x = means[labels] + 0.1 * rng.standard_normal((n, spec.channels, s, s))
        return Split(np.clip(x, 0.0, 1.0), labels.astype(np.int64))

    return draw(spec.n_train), draw(spec.n_val)


def build_model(config: TrainingConfig) -> ToyModel:
    d = config.dataset
    return ToyModel(
        channels=d.channels,
        image_size=d.image_size,
        n_classes=d.n_classes,
        conv1_out=config.conv1_out,
        conv2_out=config.conv2_out,
        pool=config.pool,
        seed=config.seed,
    )


def network_sparsity(model: ToyModel) -> float:
    return measured_sparsity([layer.weight for _, layer in model.prunable()])


def regenerate_masks(model: ToyModel, sched: PruningSchedule, threshold: float) -> None:
    """One mask re-evaluation at the given threshold, folded monotonically.

    Conv layers use the schedule's granularity (1x1 layers always prune
    at kernel granularity since a 1x1 window is a single weight); the FC
    layer prunes fine under the conv granularities or with its own regime
    under the FC granularities. Conv-zero-driven row elimination and
    column-coverage repair run on the FC mask before the monotone fold,
    and weights and momenta are re-masked afterwards.
    """
    g = sched.granularity
    cap = sched.max_non_zero
    if g in (Granularity.WINDOW, Granularity.CK, Granularity.COMBINED):
        if g is Granularity.WINDOW:
            new1 = window_mask(model.conv1.weight, threshold, cap)
        elif g is Granularity.CK:
            new1 = ck_mask(model.conv1.weight, threshold, cap)
        else:
            new1 = combined_mask(model.conv1.weight, threshold, sched.window_fraction, cap)
        new2 = ck_mask(model.conv2.weight, threshold, cap)
        model.conv1.mask = monotone_and(model.conv1.mask, new1)
        model.conv2.mask = monotone_and(model.conv2.mask, new2)

    if g is Granularity.FC_BLOCK:
        raw = fc_block_mask(model.fc.weight, threshold, sched.fc_block)
    else:
        raw = fc_fine_mask(model.fc.weight, threshold)
    elim = conv_driven_fc_elimination(
        model.conv2.mask, model.fc.weight, model.neurons_per_channel
    )
    candidate = ensure_column_coverage(raw * elim, model.fc.weight)
    model.fc.mask = monotone_and(model.fc.mask, candidate)
    model.apply_masks()


def _learning_rate(config: TrainingConfig, epoch: int) -> float:
    drops = sum(1 for d in config.lr_drop_epochs if epoch >= d)
    return config.lr0 * config.lr_drop_factor**drops


def evaluate(model: ToyModel, split: Split, batch_size: int = 256) -> tuple[float, float]:
    """(top-1 accuracy, mean loss) over a split, masked weights as-is."""
    correct = 0
    loss_sum = 0.0
    n = len(split.y)
    for start in range(0, n, batch_size):
        xb = split.x[start : start + batch_size]
        yb = split.y[start : start + batch_size]
        logits = forward(model, xb)
        correct += int((logits.argmax(axis=1) == yb).sum())
        loss_sum += cross_entropy(logits, yb) * len(yb)
    return correct / n, loss_sum / n


def train(model: ToyModel, config: TrainingConfig,
          on_epoch_end=None) -> tuple[ToyModel, list[MetricsRow]]:
    """Run the sparse training protocol and return per-epoch metrics.

    Per batch: forward, masked backward, momentum SGD step, then (inside
    the pruning era) a mask re-evaluation at the epoch's threshold. At
    the very end of the last era epoch one extra evaluation runs at the
    final target so the frozen mask achieves it exactly; afterwards no
    new pruning occurs. ``on_epoch_end(model, row)`` is called after each
    epoch's metrics row is appended, before any end-of-era evaluation.
    """
    sched = config.schedule
    if sched.s_f > 0 and sched.e_i + sched.l_p > config.epochs:
        warnings.warn(
            f"pruning era [{sched.e_i}, {sched.e_i + sched.l_p}) extends past "
            f"{config.epochs} epochs; the run will end below the target sparsity",
            stacklevel=2,
        )
    rng = np.random.default_rng(config.seed)
    train_split, val_split = make_synthetic_dataset(config.dataset)
    n = len(train_split.y)
    rows: list[MetricsRow] = []

    for epoch in range(config.epochs):
        lr = _learning_rate(config, epoch)
        phase = phase_at(sched, epoch)
        threshold = threshold_at(sched, epoch)
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = train_split.x[idx], train_split.y[idx]
            logits = forward(model, xb)
            loss = cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            grads = backward(model, xb, yb)
            sgd_step(model, grads, lr, config.momentum, config.weight_decay)
            if phase is Phase.PRUNING:
                regenerate_masks(model, sched, threshold)

        top1, val_loss = evaluate(model, val_split)
        rows.append(
            MetricsRow(
                epoch=epoch,
                top1=top1,
                loss=val_loss,
                sparsity=network_sparsity(model),
                lr=lr,
                phase=phase.value,
            )
        )
        if on_epoch_end is not None:
            on_epoch_end(model, rows[-1])
        if phase is Phase.PRUNING and epoch == sched.e_i + sched.l_p - 1:
            regenerate_masks(model, sched, sched.s_f)

    model.final_rng_state = rng.bit_generator.state
    return model, rows


# ---------------------------------------------------------------------------
# Metrics CSV
# ---------------------------------------------------------------------------


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(METRICS_HEADER) + "\n")
        for r in rows:
            f.write(f"{r.epoch},{r.top1!r},{r.loss!r},{r.sparsity!r},{r.lr!r},{r.phase}\n")


def read_metrics_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != METRICS_HEADER:
            raise ConfigError(f"unexpected metrics header {reader.fieldnames} in {path}")
        for rec in reader:
            rows.append(
                MetricsRow(
                    epoch=int(rec["epoch"]),
                    top1=float(rec["top1"]),
                    loss=float(rec["loss"]),
                    sparsity=float(rec["sparsity"]),
                    lr=float(rec["lr"]),
                    phase=rec["phase"],
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Config <-> dict (for JSON configs and checkpoint sidecars)
# ---------------------------------------------------------------------------


def schedule_to_dict(s: PruningSchedule) -> dict:
    return {
        "s_i": s.s_i,
        "s_f": s.s_f,
        "e_i": s.e_i,
        "l_p": s.l_p,
        "r": s.r,
        "granularity": s.granularity.value,
        "max_non_zero": s.max_non_zero,
        "window_fraction": s.window_fraction,
        "fc_block": s.fc_block,
    }


def schedule_from_dict(d: dict) -> PruningSchedule:
    return PruningSchedule(**_take(d, "schedule", required=("s_f", "e_i", "l_p", "granularity"),
                                   optional=("s_i", "r", "max_non_zero", "window_fraction", "fc_block")))


def config_to_dict(c: TrainingConfig) -> dict:
    return {
        "epochs": c.epochs,
        "batch_size": c.batch_size,
        "lr0": c.lr0,
        "lr_drop_epochs": list(c.lr_drop_epochs),
        "lr_drop_factor": c.lr_drop_factor,
        "momentum": c.momentum,
        "weight_decay": c.weight_decay,
        "seed": c.seed,
        "conv1_out": c.conv1_out,
        "conv2_out": c.conv2_out,
        "pool": c.pool,
        "schedule": schedule_to_dict(c.schedule),
        "dataset": {
            "n_train": c.dataset.n_train,
            "n_val": c.dataset.n_val,
            "image_size": c.dataset.image_size,
            "channels": c.dataset.channels,
            "n_classes": c.dataset.n_classes,
            "seed": c.dataset.seed,
        },
    }


def config_from_dict(d: dict) -> TrainingConfig:
    fields = _take(
        d,
        "training",
        required=("epochs", "batch_size", "lr0", "lr_drop_epochs", "seed", "schedule", "dataset"),
        optional=("lr_drop_factor", "momentum", "weight_decay", "conv1_out", "conv2_out", "pool"),
    )
    fields["schedule"] = schedule_from_dict(fields["schedule"])
    ds = _take(
        fields["dataset"],
        "dataset",
        required=("n_train", "n_val", "image_size", "channels", "n_classes", "seed"),
        optional=(),
    )
    fields["dataset"] = SyntheticSpec(**ds)
    return TrainingConfig(**fields)


def _take(d: dict, where: str, required: tuple, optional: tuple) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} section must be an object, got {type(d).__name__}")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"missing field(s) in {where}: {', '.join(missing)}")
    return dict(d)


# ---------------------------------------------------------------------------
# Checkpoints: tensor container + JSON sidecar
# ---------------------------------------------------------------------------

_PER_LAYER = ("weight", "bias", "mask", "vel_w", "vel_b")


def save_checkpoint(path, model: ToyModel, config: TrainingConfig,
                    rng_state: dict | None = None, epoch: int | None = None) -> None:
    """Write weights, masks, and momentum buffers plus a ``.json`` sidecar.

    Tensor order is fixed: for each prunable layer in model order, the
    tensors named in the sidecar's ``tensor_order``. The sidecar carries
    the full config and the training RNG state for resumption.
    """
    arrays = []
    order = []
    for name, layer in model.prunable():
        for attr in _PER_LAYER:
            arrays.append(getattr(layer, attr))
            order.append(f"{name}.{attr}")
    save_tensors(path, arrays)
    sidecar = {
        "config": config_to_dict(config),
        "epoch": epoch,
        "rng_state": rng_state,
        "tensor_order": order,
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, sort_keys=True, indent=1)
        f.write("\n")


def load_checkpoint(path) -> tuple[ToyModel, TrainingConfig, dict]:
    with open(str(path) + ".json") as f:
        sidecar = json.load(f)
    config = config_from_dict(sidecar["config"])
    model = build_model(config)
    arrays = load_tensors(path)
    expected = [f"{name}.{attr}" for name, _ in model.prunable() for attr in _PER_LAYER]
    if sidecar["tensor_order"] != expected or len(arrays) != len(expected):
        raise ConfigError(f"checkpoint {path} does not match its sidecar layout")
    i = 0
    for name, layer in model.prunable():
        for attr in _PER_LAYER:
            current = getattr(layer, attr)
            if arrays[i].shape != current.shape:
                raise ConfigError(f"checkpoint tensor {expected[i]} has shape "
                                  f"{arrays[i].shape}, expected {current.shape}")
            setattr(layer, attr, arrays[i])
            i += 1
    return model, config, sidecar
