"""Mini-batch training with deterministic data order and dropout masks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..data.augment import AugmentSpec, augment
from ..data.image import to_tensor
from ..data.manifest import augment_rng
from ..layers import softmax_xent_backward, softmax_xent_forward
from ..model import Classifier
from .optim import Adam


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    freeze_backbone: bool = True
    augment_online: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def make_optimizer(self) -> Adam:
        return Adam(self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class SampleSet:
    """Decoded originals plus virtual augmented samples.

    ``virtual`` holds (source index, record id) pairs; their pixels are
    regenerated each epoch from ``(seed, epoch, record id)``.
    """

    images: np.ndarray
    labels: np.ndarray
    virtual: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError("images and labels differ in length")

    def __len__(self):
        return self.images.shape[0] + len(self.virtual)

    def all_labels(self) -> np.ndarray:
        extra = np.array([self.labels[s] for s, _ in self.virtual], dtype=np.int64)
        return np.concatenate([self.labels, extra])


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def append(self, epoch: int, train_loss: float, val_accuracy: float) -> None:
        self.rows.append({"epoch": epoch, "train_loss": train_loss, "val_accuracy": val_accuracy})

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, ["epoch", "train_loss", "val_accuracy"])
            w.writeheader()
            for r in self.rows:
                w.writerow({"epoch": r["epoch"], "train_loss": repr(r["train_loss"]),
                            "val_accuracy": repr(r["val_accuracy"])})


def order_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0, epoch]))


def dropout_rng(seed: int, epoch: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, epoch, batch]))


def batches_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def accuracy(model: Classifier, features_or_images: np.ndarray, labels, from_features: bool) -> float:
    if len(labels) == 0:
        return float("nan")
    if from_features:
        proba = model.predict_proba_features(features_or_images)
    else:
        proba = model.predict_proba(features_or_images)
    return float((proba.argmax(axis=1) == np.asarray(labels)).mean())


def fit(model: Classifier, train: SampleSet, val: SampleSet | None, config: TrainConfig,
        optimizer: Adam | None = None, augment_spec: AugmentSpec | None = None,
        on_epoch: Callable[[int, Classifier, Adam], None] | None = None) -> TrainLog:
    """Train ``model`` in place and return per-epoch (loss, val accuracy) rows.

    Resuming: pass an optimizer whose ``step_count`` sits on an epoch boundary
    (as restored from a checkpoint); training continues with the next epoch.
    ``on_epoch(epoch, model, optimizer)`` runs after each epoch.
    """
    optimizer = optimizer or config.make_optimizer()
    spec = augment_spec or AugmentSpec()
    n_orig, n_total = train.images.shape[0], len(train)
    if n_total == 0:
        raise ValueError("training set is empty")
    nb = batches_per_epoch(n_total, config.batch_size)
    if optimizer.step_count % nb:
        raise ValueError(f"optimizer step {optimizer.step_count} is not on an epoch boundary "
                         f"({nb} batches per epoch)")
    start = optimizer.step_count // nb
    labels = train.all_labels()
    frozen = model.freeze_backbone

    # frozen backbone: originals are pushed through it exactly once
    cache = model.features(to_tensor(train.images)) if frozen else None
    val_cache = None
    if val is not None and len(val.labels) and frozen:
        val_cache = model.features(to_tensor(val.images))

    def batch_images(idx, epoch):
        out = np.empty((len(idx),) + train.images.shape[1:], dtype=np.uint8)
        for j, i in enumerate(idx):
            if i < n_orig:
                out[j] = train.images[i]
            else:
                src, rid = train.virtual[i - n_orig]
                img = train.images[src]
                out[j] = augment(img, spec, augment_rng(config.seed, epoch, rid)) \
                    if config.augment_online else img
        return out

    log = TrainLog()
    for epoch in range(start, config.epochs):
        order = order_rng(config.seed, epoch).permutation(n_total)
        loss_sum = 0.0
        for b in range(nb):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            model.zero_grads()
            if frozen:
                virt = idx >= n_orig
                if virt.any():
                    feats = np.empty((len(idx),) + cache.shape[1:], dtype=cache.dtype)
                    feats[~virt] = cache[idx[~virt]]
                    feats[virt] = model.features(to_tensor(batch_images(idx[virt], epoch)))
                else:
                    feats = cache[idx]
                btape = None
            else:
                feats, btape = model.backbone.forward(to_tensor(batch_images(idx, epoch)))
            logits, htape = model.head.forward(feats, "train", dropout_rng(config.seed, epoch, b))
            loss, _, ltape = softmax_xent_forward(logits, labels[idx])
            dfeats = model.head.backward(softmax_xent_backward(ltape), htape)
            if not frozen:
                model.backbone.backward(dfeats, btape)
            optimizer.step(model.trainable_params())
            loss_sum += loss * len(idx)
        if val is None or len(val.labels) == 0:
            val_acc = float("nan")
        elif frozen:
            val_acc = accuracy(model, val_cache, val.labels, True)
        else:
            val_acc = accuracy(model, to_tensor(val.images), val.labels, False)
        log.append(epoch, loss_sum / n_total, val_acc)
        if on_epoch is not None:
            on_epoch(epoch, model, optimizer)
    return log
