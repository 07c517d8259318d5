"""Training and scoring: short search-time runs and the longer finalize mode."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .descriptor import UnsupportedArchitecture
from .model import DescriptorModel


@dataclass
class TrainReport:
    best_val_accuracy: float
    final_loss: float
    epochs: int


class Diverged(UnsupportedArchitecture):
    def __init__(self, message: str):
        super().__init__(message, code="DIVERGED")


def batches(x: torch.Tensor, y: torch.Tensor, batch_size: int, generator: torch.Generator):
    order = torch.randperm(len(x), generator=generator)
    for start in range(0, len(x), batch_size):
        idx = order[start : start + batch_size]
        yield x[idx], y[idx]


@torch.no_grad()
def accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor, batch_size: int = 256) -> float:
    model.eval()
    correct = 0
    for start in range(0, len(x), batch_size):
        logits = model(x[start : start + batch_size])
        correct += (logits.argmax(dim=1) == y[start : start + batch_size]).sum().item()
    return correct / len(x)


def train_and_score(
    model: DescriptorModel,
    train_x: torch.Tensor,
    train_y: torch.Tensor,
    val_x: torch.Tensor,
    val_y: torch.Tensor,
    epochs: int = 1,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
    keep_best_weights: bool = False,
) -> TrainReport:
    """Train, reporting the best accuracy seen on the held-out validation set.

    A non-finite loss aborts with Diverged rather than returning a bogus
    score.  With keep_best_weights the model ends up holding the parameters
    from its best validation epoch instead of the last one.
    """
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    best_accuracy = 0.0
    best_state: Optional[dict] = None
    final_loss = math.inf
    for _ in range(epochs):
        model.train()
        for batch_x, batch_y in batches(train_x, train_y, batch_size, generator):
            optimizer.zero_grad()
            loss = loss_fn(model(batch_x), batch_y)
            if not torch.isfinite(loss):
                raise Diverged(f"loss became {loss.item()!r} during training")
            loss.backward()
            optimizer.step()
            final_loss = loss.item()
        val_accuracy = accuracy(model, val_x, val_y)
        if val_accuracy >= best_accuracy:
            best_accuracy = val_accuracy
            if keep_best_weights:
                best_state = {
                    name: tensor.detach().clone()
                    for name, tensor in model.state_dict().items()
                }
    if keep_best_weights and best_state is not None:
        model.load_state_dict(best_state)
    return TrainReport(best_val_accuracy=best_accuracy, final_loss=final_loss, epochs=epochs)


def augment(images: torch.Tensor, seed: int) -> torch.Tensor:
    """Light augmentation for finalize mode: flips, small rotation and scale."""
    from torchvision.transforms import functional as tf

    generator = torch.Generator().manual_seed(seed)
    out = images.clone()
    for i in range(len(out)):
        if torch.rand((), generator=generator).item() < 0.5:
            out[i] = torch.flip(out[i], dims=[2])
        angle = (torch.rand((), generator=generator).item() - 0.5) * 20
        scale = 0.9 + torch.rand((), generator=generator).item() * 0.2
        out[i] = tf.affine(
            out[i], angle=angle, translate=[0, 0], scale=scale, shear=[0.0]
        )
    return out
