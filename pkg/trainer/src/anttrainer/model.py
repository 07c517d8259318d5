"""Layer-by-layer model construction from a parsed descriptor.

The model is a list of per-descriptor-layer blocks so that weight reuse can
copy the first k blocks verbatim: identical descriptor prefixes always
produce identically shaped parameter blocks.
"""

from __future__ import annotations

import torch
from torch import nn

from .descriptor import Descriptor, UnsupportedArchitecture

NUM_CLASSES = 10


class DescriptorModel(nn.Module):
    def __init__(self, blocks: list[nn.Module]):
        super().__init__()
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x


def build_model(descriptor: Descriptor, num_classes: int = NUM_CLASSES) -> DescriptorModel:
    """One block per descriptor layer; output head sized to the class count."""
    height, width, channels = descriptor.input_shape
    flattened = None  # set once Flatten runs; presence marks dense territory
    blocks: list[nn.Module] = []
    for i, layer in enumerate(descriptor.layers):
        kind, attrs = layer.kind, layer.attributes
        if kind == "Input":
            if i != 0:
                raise UnsupportedArchitecture("Input may only open the network")
            blocks.append(nn.Identity())
        elif kind == "Conv2D":
            if flattened is not None:
                raise UnsupportedArchitecture("Conv2D after Flatten")
            filters = _expect_int(attrs, "filter_count", kind)
            kernel = _expect_int(attrs, "kernel_size", kind)
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(channels, filters, kernel, padding="same"), nn.ReLU()
                )
            )
            channels = filters
        elif kind == "Pooling":
            if flattened is not None:
                raise UnsupportedArchitecture("Pooling after Flatten")
            pool_type = attrs.get("pool_type", "max")
            size = _expect_int(attrs, "pool_size", kind)
            stride = _expect_int(attrs, "stride", kind)
            if height < size or width < size:
                raise UnsupportedArchitecture(
                    f"feature map {height}x{width} too small for pool size {size}"
                )
            if pool_type == "max":
                blocks.append(nn.MaxPool2d(size, stride))
            elif pool_type == "average":
                blocks.append(nn.AvgPool2d(size, stride))
            else:
                raise UnsupportedArchitecture(f"unknown pool_type {pool_type!r}")
            height = (height - size) // stride + 1
            width = (width - size) // stride + 1
        elif kind == "BatchNorm":
            if flattened is not None:
                raise UnsupportedArchitecture("BatchNorm after Flatten")
            blocks.append(nn.BatchNorm2d(channels))
        elif kind == "Dropout":
            rate = attrs.get("rate", 0.1)
            if not isinstance(rate, (int, float)) or not 0 <= rate < 1:
                raise UnsupportedArchitecture(f"bad dropout rate {rate!r}")
            blocks.append(nn.Dropout(float(rate)))
        elif kind == "Flatten":
            if flattened is not None:
                raise UnsupportedArchitecture("Flatten may appear only once")
            blocks.append(nn.Flatten())
            flattened = height * width * channels
        elif kind == "Dense":
            if flattened is None:
                raise UnsupportedArchitecture("Dense before Flatten")
            units = _expect_int(attrs, "output_size", kind)
            blocks.append(nn.Sequential(nn.Linear(flattened, units), nn.ReLU()))
            flattened = units
        elif kind == "Output":
            if i != len(descriptor.layers) - 1:
                raise UnsupportedArchitecture("Output must close the network")
            if flattened is None:
                raise UnsupportedArchitecture("Output requires a prior Flatten")
            blocks.append(nn.Linear(flattened, num_classes))
        else:  # pragma: no cover - parse_descriptor screens kinds
            raise UnsupportedArchitecture(f"unknown kind {kind!r}")
    return DescriptorModel(blocks)


def _expect_int(attrs: dict, name: str, kind: str) -> int:
    value = attrs.get(name)
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise UnsupportedArchitecture(f"{kind}.{name} must be a positive integer, got {value!r}")
    return value
