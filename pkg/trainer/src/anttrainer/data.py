"""Dataset loading: a local MNIST cache or deterministic synthetic digits.

MNIST is never downloaded here; point --data-dir at an existing
torchvision-format cache.  The synthetic-digits fallback renders the ten
digit glyphs with random affine jitter and pixel noise, giving an
MNIST-shaped (28x28x1, 10-class) task that needs no network access and is
fully reproducible from its seed.
"""

from __future__ import annotations

import random

import numpy as np
import torch
from PIL import Image, ImageDraw


class DatasetUnavailable(Exception):
    pass


IMAGE_SIZE = 28
_CANVAS = 56  # render 2x and downsample for soft strokes

# digit glyphs in unit coordinates: line chains plus optional ellipses
_GLYPHS: dict[int, dict] = {
    0: {"ellipses": [(0.25, 0.15, 0.75, 0.85)]},
    1: {"lines": [[(0.35, 0.30), (0.55, 0.15), (0.55, 0.85)]]},
    2: {"lines": [[(0.25, 0.30), (0.35, 0.15), (0.65, 0.15), (0.75, 0.30),
                   (0.25, 0.85), (0.75, 0.85)]]},
    3: {"lines": [[(0.25, 0.15), (0.70, 0.15), (0.47, 0.45), (0.72, 0.60),
                   (0.68, 0.85), (0.25, 0.82)]]},
    4: {"lines": [[(0.65, 0.85), (0.65, 0.15), (0.25, 0.60), (0.80, 0.60)]]},
    5: {"lines": [[(0.75, 0.15), (0.30, 0.15), (0.28, 0.50), (0.65, 0.45),
                   (0.75, 0.65), (0.60, 0.85), (0.25, 0.80)]]},
    6: {"lines": [[(0.70, 0.15), (0.40, 0.30), (0.30, 0.55)]],
        "ellipses": [(0.28, 0.50, 0.72, 0.85)]},
    7: {"lines": [[(0.25, 0.15), (0.75, 0.15), (0.45, 0.85)]]},
    8: {"ellipses": [(0.30, 0.15, 0.70, 0.50), (0.27, 0.48, 0.73, 0.85)]},
    9: {"lines": [[(0.70, 0.35), (0.68, 0.85)]],
        "ellipses": [(0.30, 0.15, 0.70, 0.50)]},
}


def _render_digit(digit: int, rng: random.Random) -> np.ndarray:
    image = Image.new("L", (_CANVAS, _CANVAS), 0)
    draw = ImageDraw.Draw(image)
    glyph = _GLYPHS[digit]
    width = rng.randint(4, 6)
    for chain in glyph.get("lines", []):
        points = [(x * _CANVAS, y * _CANVAS) for x, y in chain]
        draw.line(points, fill=255, width=width, joint="curve")
    for x0, y0, x1, y1 in glyph.get("ellipses", []):
        draw.ellipse(
            (x0 * _CANVAS, y0 * _CANVAS, x1 * _CANVAS, y1 * _CANVAS),
            outline=255,
            width=width,
        )
    angle = rng.uniform(-14, 14)
    scale = rng.uniform(0.85, 1.12)
    image = image.rotate(angle, resample=Image.BILINEAR, fillcolor=0)
    scaled = int(_CANVAS * scale)
    image = image.resize((scaled, scaled), Image.BILINEAR)

    # paste into a fixed canvas with a random shift
    canvas = Image.new("L", (_CANVAS, _CANVAS), 0)
    max_shift = 6
    dx = (_CANVAS - scaled) // 2 + rng.randint(-max_shift, max_shift)
    dy = (_CANVAS - scaled) // 2 + rng.randint(-max_shift, max_shift)
    canvas.paste(image, (dx, dy))
    canvas = canvas.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)

    pixels = np.asarray(canvas, dtype=np.float32) / 255.0
    noise_rng = np.random.default_rng(rng.getrandbits(32))
    pixels = pixels + noise_rng.normal(0.0, 0.05, pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0)


def synthetic_digits(count: int, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    """count images, classes balanced round-robin, deterministic per seed."""
    rng = random.Random(seed)
    images = np.empty((count, 1, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    labels = np.empty(count, dtype=np.int64)
    order = list(range(10))
    rng.shuffle(order)
    for i in range(count):
        digit = order[i % 10]
        images[i, 0] = _render_digit(digit, rng)
        labels[i] = digit
    return torch.from_numpy(images), torch.from_numpy(labels)


def mnist_from_cache(
    count: int, seed: int, data_dir: str, train: bool = True
) -> tuple[torch.Tensor, torch.Tensor]:
    try:
        from torchvision.datasets import MNIST

        dataset = MNIST(root=data_dir, train=train, download=False)
    except (RuntimeError, OSError, ImportError) as exc:
        raise DatasetUnavailable(
            f"no MNIST cache under {data_dir!r} and downloads are disabled; "
            f"use --dataset synthetic-digits or provide the cache"
        ) from exc
    data = dataset.data.numpy()
    targets = dataset.targets.numpy()
    picker = np.random.default_rng(seed)
    order = picker.permutation(len(data))[:count]
    images = (data[order].astype(np.float32) / 255.0)[:, None, :, :]
    return torch.from_numpy(images), torch.from_numpy(targets[order].astype(np.int64))


def load_split(
    dataset: str,
    train_size: int,
    val_size: int,
    seed: int,
    data_dir: str = "data",
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Train and held-out validation tensors; validation never overlaps train."""
    total = train_size + val_size
    if dataset == "mnist":
        images, labels = mnist_from_cache(total, seed, data_dir)
    elif dataset == "synthetic-digits":
        images, labels = synthetic_digits(total, seed)
    else:
        raise DatasetUnavailable(f"unknown dataset {dataset!r}")
    if len(images) < total:
        raise DatasetUnavailable(
            f"dataset {dataset!r} yielded {len(images)} samples, need {total}"
        )
    return (
        images[:train_size],
        labels[:train_size],
        images[train_size:total],
        labels[train_size:total],
    )


def load_test_set(
    dataset: str, size: int, seed: int, data_dir: str = "data"
) -> tuple[torch.Tensor, torch.Tensor]:
    """Evaluation data disjoint from any load_split() draw at the same seed.

    MNIST uses the official test split; synthetic digits draw from a far
    seed offset, which is genuinely unseen since rendering is procedural.
    """
    if dataset == "mnist":
        return mnist_from_cache(size, seed, data_dir, train=False)
    if dataset == "synthetic-digits":
        return synthetic_digits(size, seed + 104_729)
    raise DatasetUnavailable(f"unknown dataset {dataset!r}")
