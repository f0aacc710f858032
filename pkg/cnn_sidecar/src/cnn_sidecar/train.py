"""Training loop, generalization-gap checkpoint rule and checkpoint IO."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import data as d
from .model import SceneCNN

MAX_EPOCHS = 100
LEARNING_RATE = 1e-4
BATCH_SIZE = 128
GAP_LIMIT = 0.05
CHECKPOINT_FORMAT = "cnn_sidecar/1"


class TrainingError(ValueError):
    pass


@dataclass
class EpochTrace:
    epoch: int
    train_oa: float
    test_oa: float
    loss: float = float("nan")

    @property
    def gap(self) -> float:
        return self.train_oa - self.test_oa


def select_checkpoint(traces: list[EpochTrace], gap_limit: float = GAP_LIMIT) -> EpochTrace:
    """Best epoch: highest test accuracy among epochs whose train/test gap is
    within the limit; if none qualifies, the epoch with the smallest gap.
    Ties go to the earlier epoch."""
    if not traces:
        raise TrainingError("no epochs to select from")
    compliant = [t for t in traces if t.gap <= gap_limit]
    if compliant:
        return max(compliant, key=lambda t: (t.test_oa, -t.epoch))
    return min(traces, key=lambda t: (t.gap, t.epoch))


@dataclass
class Checkpoint:
    state: dict
    norm: d.Normalization
    classes: list[int]  # head index -> LCZ class id
    in_bands: int
    fold: int
    seed: int
    epoch: int
    traces: list[EpochTrace] = field(default_factory=list)

    def build_model(self) -> SceneCNN:
        model = SceneCNN(self.in_bands, len(self.classes))
        model.load_state_dict(self.state)
        model.eval()
        return model


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    torch.save({
        "format": CHECKPOINT_FORMAT,
        "state": ckpt.state,
        "norm_mean": ckpt.norm.mean,
        "norm_std": ckpt.norm.std,
        "classes": ckpt.classes,
        "in_bands": ckpt.in_bands,
        "fold": ckpt.fold,
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "traces": [(t.epoch, t.train_oa, t.test_oa, t.loss) for t in ckpt.traces],
    }, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    doc = torch.load(path, map_location="cpu", weights_only=False)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise TrainingError(f"{path}: not a cnn_sidecar checkpoint")
    return Checkpoint(
        state=doc["state"],
        norm=d.Normalization(mean=doc["norm_mean"], std=doc["norm_std"]),
        classes=list(doc["classes"]),
        in_bands=doc["in_bands"],
        fold=doc["fold"],
        seed=doc["seed"],
        epoch=doc["epoch"],
        traces=[EpochTrace(*t) for t in doc["traces"]],
    )


def _accuracy(model: SceneCNN, x: torch.Tensor, y: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        pred = model(x).argmax(dim=1)
    return float((pred == y).float().mean())


def train_cnn(
    dataset: d.PatchDataset,
    fold: int,
    epochs: int = MAX_EPOCHS,
    lr: float = LEARNING_RATE,
    batch_size: int = BATCH_SIZE,
    seed: int = 0,
    gap_limit: float = GAP_LIMIT,
) -> Checkpoint:
    """Train one fold and return the checkpoint picked by the gap rule.

    Class balance comes from a weighted-with-replacement sampler whose weights
    scale with class frequency to the power -0.5; each epoch draws twice the
    training-set size. Augmentation is flips and 90-degree rotations only."""
    train_rows = dataset.train_rows(fold)
    test_rows = dataset.test_rows(fold)
    if len(train_rows) == 0:
        raise TrainingError(f"fold {fold}: no labeled training patches")
    if len(test_rows) == 0:
        raise TrainingError(f"fold {fold}: no labeled test patches")
    train_classes = np.unique(dataset.labels[train_rows])
    missing = sorted(set(dataset.classes.tolist()) - set(train_classes.tolist()))
    if missing:
        raise TrainingError(
            f"fold {fold}: classes {missing} absent from the training folds; "
            "run split_singletons so every class spans at least two folds"
        )

    torch.manual_seed(seed)
    norm = d.fit_normalization(dataset.tensors, train_rows)
    classes = [int(c) for c in train_classes]
    class_index = {c: i for i, c in enumerate(classes)}

    x_train = norm.apply(dataset.tensors[train_rows])
    y_train = torch.as_tensor(
        [class_index[int(c)] for c in dataset.labels[train_rows]], dtype=torch.long
    )
    x_test = norm.apply(dataset.tensors[test_rows])
    y_test = torch.as_tensor(
        [class_index[int(c)] for c in dataset.labels[test_rows]], dtype=torch.long
    )

    model = SceneCNN(dataset.tensors.shape[1], len(classes))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    criterion = nn.CrossEntropyLoss()
    sampler = d.make_sampler(dataset.labels[train_rows], seed=seed)
    aug_gen = torch.Generator().manual_seed(seed + 1)

    traces: list[EpochTrace] = []
    states: list[dict] = []
    for epoch in range(epochs):
        model.train()
        order = torch.as_tensor(list(sampler), dtype=torch.long)
        losses = []
        for start in range(0, len(order), batch_size):
            rows = order[start : start + batch_size]
            xb = d.augment(x_train[rows], aug_gen)
            loss = criterion(model(xb), y_train[rows])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        traces.append(EpochTrace(
            epoch=epoch,
            train_oa=_accuracy(model, x_train, y_train),
            test_oa=_accuracy(model, x_test, y_test),
            loss=float(np.mean(losses)),
        ))
        states.append(copy.deepcopy(model.state_dict()))

    best = select_checkpoint(traces, gap_limit)
    return Checkpoint(
        state=states[best.epoch],
        norm=norm,
        classes=classes,
        in_bands=int(dataset.tensors.shape[1]),
        fold=fold,
        seed=seed,
        epoch=best.epoch,
        traces=traces,
    )
