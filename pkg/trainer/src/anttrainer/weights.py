"""Prefix weight store: one file per canonical prefix key, best score wins.

After training an architecture, every prefix of it is written (or kept, if a
better-scoring owner exists) so later architectures sharing a leading
sub-path can start from those weights.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import torch

from .descriptor import Descriptor
from .model import DescriptorModel


class WeightStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.pt"

    def save_prefixes(self, descriptor: Descriptor, model: DescriptorModel, score: float) -> str:
        """Store block states for every prefix; returns the full-arch key."""
        states = [block.state_dict() for block in model.blocks]
        signatures = [layer.key() for layer in descriptor.layers]
        for k in range(1, len(descriptor.layers) + 1):
            key = descriptor.prefix_key(k)
            path = self._path(key)
            if path.exists():
                existing = torch.load(path, weights_only=False)
                if existing["score"] >= score:
                    continue
            torch.save(
                {
                    "score": score,
                    "layers": signatures[:k],
                    "states": states[:k],
                },
                path,
            )
        return descriptor.full_key

    def load_prefix(
        self, descriptor: Descriptor, model: DescriptorModel, prefix_len: int
    ) -> int:
        """Copy stored weights into the first prefix_len blocks.

        Returns how many layers were actually restored; zero when nothing is
        stored or the stored prefix no longer matches the descriptor.
        """
        if prefix_len <= 0:
            return 0
        prefix_len = min(prefix_len, len(descriptor.layers))
        path = self._path(descriptor.prefix_key(prefix_len))
        if not path.exists():
            return 0
        stored = torch.load(path, weights_only=False)
        expected = [layer.key() for layer in descriptor.layers[:prefix_len]]
        if stored["layers"] != expected:
            return 0
        for block, state in zip(model.blocks, stored["states"]):
            block.load_state_dict(state)
        return prefix_len

    def entry_score(self, key: str) -> Optional[float]:
        path = self._path(key)
        if not path.exists():
            return None
        return torch.load(path, weights_only=False)["score"]
