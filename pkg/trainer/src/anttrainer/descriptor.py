"""Descriptor JSON parsing and canonical prefix keys.

This package talks to the search engine only over the wire protocol, so it
carries its own small reading of the published descriptor schema and derives
weight-store keys from the descriptor content itself.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass


class UnsupportedArchitecture(Exception):
    """Raised when a descriptor cannot be built into a model."""

    def __init__(self, message: str, code: str = "UNSUPPORTED"):
        self.code = code
        super().__init__(message)


KNOWN_KINDS = {
    "Input", "Conv2D", "Pooling", "BatchNorm", "Dropout", "Flatten", "Dense", "Output",
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    attributes: dict

    def key(self) -> str:
        return json.dumps(
            {"kind": self.kind, "attributes": self.attributes}, sort_keys=True
        )


@dataclass(frozen=True)
class Descriptor:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def prefix_key(self, k: int) -> str:
        head = json.dumps(list(self.input_shape))
        body = "|".join(layer.key() for layer in self.layers[:k])
        return hashlib.sha1(f"{head}|{body}".encode()).hexdigest()

    @property
    def full_key(self) -> str:
        return self.prefix_key(len(self.layers))


def parse_descriptor(data: dict) -> Descriptor:
    if not isinstance(data, dict):
        raise UnsupportedArchitecture("descriptor must be an object")
    shape = data.get("input_shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or any(not isinstance(v, int) or v <= 0 for v in shape)
    ):
        raise UnsupportedArchitecture(f"bad input_shape: {shape!r}")
    raw_layers = data.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise UnsupportedArchitecture("descriptor needs a non-empty layer list")
    layers = []
    for i, entry in enumerate(raw_layers):
        kind = entry.get("kind") if isinstance(entry, dict) else None
        if kind not in KNOWN_KINDS:
            raise UnsupportedArchitecture(f"layer {i}: unknown kind {kind!r}")
        attributes = entry.get("attributes", {})
        if not isinstance(attributes, dict):
            raise UnsupportedArchitecture(f"layer {i}: attributes must be an object")
        layers.append(LayerSpec(kind, dict(attributes)))
    if layers[0].kind != "Input":
        raise UnsupportedArchitecture("first layer must be Input")
    if layers[-1].kind != "Output":
        raise UnsupportedArchitecture("last layer must be Output")
    return Descriptor(tuple(shape), tuple(layers))
