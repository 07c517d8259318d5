"""The pluggable fitness boundary and the built-in synthetic landscape.

The synthetic evaluator scores a descriptor by its similarity to a hidden
target architecture, which gives every search test a brute-force-computable
optimum without training a single network.  Weight-reuse bookkeeping lives
here too: a per-run cache keyed by canonical path prefixes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .errors import DescriptorError, EvaluationFailed
from .space import (
    ArchitectureDescriptor,
    Layer,
    LayerKind,
    SearchSpace,
    canonical_string,
    deserialize,
    serialize,
)

# Score composition: a floor for hopeless architectures, the bulk for layer
# similarity, and a small bonus for matching the target's depth exactly.
BASE_SCORE = 0.1
SIMILARITY_WEIGHT = 0.8
DEPTH_BONUS = 0.1

# Difficulty of randomly drawn landscapes: how many edits separate the hidden
# target from the walk a purely greedy ant would take.  At a 24-evaluation
# budget, zero-edit instances are reliably solvable and suit convergence
# regression tests; two edits already demand real exploration and suit
# comparative studies.
DEFAULT_TARGET_DEVIATIONS = 2

ENUMERATION_GUARD = 10**6


@dataclass
class Metrics:
    """What one evaluation reports back to the engine."""

    accuracy: float
    loss: Optional[float] = None
    wall_ms: float = 0.0
    reused_prefix_len: int = 0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        if self.loss is not None and self.loss < 0:
            raise ValueError(f"loss must be non-negative, got {self.loss}")
        if self.wall_ms < 0:
            raise ValueError(f"wall_ms must be non-negative, got {self.wall_ms}")
        if self.reused_prefix_len < 0:
            raise ValueError(f"reused_prefix_len must be non-negative, got {self.reused_prefix_len}")


@dataclass(frozen=True)
class ReuseHint:
    """Longest cached prefix of the descriptor about to be evaluated."""

    prefix_len: int = 0
    key: Optional[str] = None


class Evaluator(Protocol):
    """Behavioral contract every fitness backend satisfies.

    Implementations raise EvaluationFailed for anything that should count as
    a zero-score evaluation; the engine catches that and keeps searching.
    """

    def evaluate(self, descriptor: ArchitectureDescriptor, reuse: ReuseHint) -> Metrics: ...


# -- weight-reuse bookkeeping -------------------------------------------------


@dataclass
class CacheEntry:
    score: float
    layers: int
    handle: Optional[str] = None


class WeightCache:
    """Best score seen per canonical path prefix.

    Handles are opaque strings the evaluator side knows how to dereference;
    by convention they are the canonical prefix strings themselves, matching
    a trainer that stores one weight file per prefix key.
    """

    def __init__(self, space: SearchSpace):
        self._space = space
        self._entries: dict[str, CacheEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def entry(self, key: str) -> Optional[CacheEntry]:
        return self._entries.get(key)

    def record(self, descriptor: ArchitectureDescriptor, score: float) -> None:
        """Register every prefix of an evaluated descriptor; best score wins."""
        for k in range(1, len(descriptor.layers) + 1):
            key = canonical_string(descriptor.prefix(k), self._space)
            existing = self._entries.get(key)
            if existing is None or score > existing.score:
                self._entries[key] = CacheEntry(score, k, key)

    def hint(self, descriptor: ArchitectureDescriptor) -> ReuseHint:
        """Longest cached prefix of the given descriptor, if any."""
        for k in range(len(descriptor.layers), 0, -1):
            key = canonical_string(descriptor.prefix(k), self._space)
            entry = self._entries.get(key)
            if entry is not None:
                return ReuseHint(k, entry.handle)
        return ReuseHint(0, None)

    def to_json_list(self) -> list[dict]:
        # keys + scores only; handles are recoverable from the keys
        return [
            {"key": key, "score": entry.score, "layers": entry.layers}
            for key, entry in sorted(self._entries.items())
        ]

    @classmethod
    def from_json_list(cls, data: list[dict], space: SearchSpace) -> "WeightCache":
        cache = cls(space)
        for item in data:
            cache._entries[item["key"]] = CacheEntry(
                item["score"], item["layers"], item["key"]
            )
        return cache


def reuse_hint(cache: WeightCache, descriptor: ArchitectureDescriptor) -> ReuseHint:
    return cache.hint(descriptor)


def longest_common_prefix(a, b, space: Optional[SearchSpace] = None) -> int:
    """Number of leading layers two tours or descriptors share exactly.

    Layers count as equal when their per-layer canonical strings match, so
    a kind match with different attribute values does not count.
    """
    layers_a, shape_a = _layers_of(a)
    layers_b, shape_b = _layers_of(b)
    k = 0
    for la, lb in zip(layers_a, layers_b):
        if la.canonical(shape_a) != lb.canonical(shape_b):
            break
        k += 1
    return k


def _layers_of(obj) -> tuple[tuple[Layer, ...], tuple[int, int, int]]:
    if isinstance(obj, ArchitectureDescriptor):
        return obj.layers, obj.input_shape
    layers = getattr(obj, "layers", None)
    shape = getattr(obj, "input_shape", None)
    if layers is None or shape is None:
        raise TypeError(f"cannot extract layers from {type(obj).__name__}")
    return tuple(layers), tuple(shape)


# -- synthetic landscape ------------------------------------------------------


@dataclass(frozen=True)
class LandscapeSpec:
    """A hidden target descriptor plus scoring knobs.

    discount weights earlier layers more heavily; noise_sigma adds seeded
    Gaussian noise per descriptor (zero keeps the landscape deterministic).
    """

    target: ArchitectureDescriptor
    discount: float = 0.75
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    def to_json_dict(self) -> dict:
        return {
            "target": serialize(self.target),
            "discount": self.discount,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LandscapeSpec":
        unknown = set(data) - {"target", "discount", "noise_sigma", "seed"}
        if unknown:
            raise ValueError(f"unknown landscape fields: {sorted(unknown)}")
        return cls(
            target=deserialize(data["target"]),
            discount=data.get("discount", 0.75),
            noise_sigma=data.get("noise_sigma", 0.0),
            seed=data.get("seed", 0),
        )

    @classmethod
    def random(
        cls,
        seed: int,
        space: SearchSpace,
        input_shape: tuple[int, int, int] = (28, 28, 1),
        lengths: tuple[int, ...] = (1, 2, 3),
        deviations: int = DEFAULT_TARGET_DEVIATIONS,
        attribute_flip_fraction: float = 0.8,
        discount: float = 0.75,
        noise_sigma: float = 0.0,
    ) -> "LandscapeSpec":
        """Draw a hidden target a fixed edit distance from the greedy corner.

        The target starts as the walk a purely greedy ant would take (the
        first-listed kind with default attributes at every pick, length drawn
        from lengths) and then receives `deviations` random edits, each either
        an attribute flipped off its default or a kind replaced by another
        legal one.  The edit count is the landscape's difficulty dial: every
        edit is one more discovery the wheel has to make.
        """
        rng = random.Random(seed)
        target = deviated_corner_descriptor(
            space, rng, lengths, deviations, attribute_flip_fraction, input_shape
        )
        return cls(target=target, discount=discount, noise_sigma=noise_sigma, seed=seed)


def _stripped(d: ArchitectureDescriptor) -> tuple[Layer, ...]:
    return d.layers[1:]  # every descriptor starts with the same Input layer


def landscape_similarity(d: ArchitectureDescriptor, spec: LandscapeSpec) -> float:
    """Positional layer similarity in [0, 1]; 1.0 only for the target itself."""
    ours = _stripped(d)
    target = _stripped(spec.target)
    length = max(len(ours), len(target))
    if length == 0:
        return 1.0
    total_weight = 0.0
    matched = 0.0
    for i in range(length):
        weight = spec.discount**i
        total_weight += weight
        if i >= len(ours) or i >= len(target):
            continue
        a, b = ours[i], target[i]
        if a.kind is not b.kind:
            continue
        if not a.attributes:
            matched += weight
            continue
        agree = sum(1 for name, value in a.attributes.items() if b.attributes.get(name) == value)
        matched += weight * (0.5 + 0.5 * agree / len(a.attributes))
    return matched / total_weight


def landscape_score(d: ArchitectureDescriptor, spec: LandscapeSpec, with_noise: bool = True) -> float:
    sim = landscape_similarity(d, spec)
    score = BASE_SCORE + SIMILARITY_WEIGHT * sim
    if len(_stripped(d)) == len(_stripped(spec.target)):
        score += DEPTH_BONUS
    if with_noise and spec.noise_sigma > 0:
        # seeded per descriptor so repeated evaluations agree
        canon = "->".join(layer.canonical(d.input_shape) for layer in d.layers)
        noise_rng = random.Random(f"{spec.seed}:{canon}")
        score += noise_rng.gauss(0.0, spec.noise_sigma)
    return min(1.0, max(0.0, score))


class SyntheticEvaluator:
    """Pure, reentrant evaluator over a LandscapeSpec."""

    def __init__(self, spec: LandscapeSpec, space: Optional[SearchSpace] = None):
        self.spec = spec
        self.space = space

    def evaluate(self, descriptor: ArchitectureDescriptor, reuse: ReuseHint) -> Metrics:
        if self.space is not None:
            verdict = self.space.validate(descriptor)
            if not verdict:
                raise EvaluationFailed("INVALID", verdict.message)
        score = landscape_score(descriptor, self.spec)
        return Metrics(accuracy=score, loss=1.0 - score, reused_prefix_len=reuse.prefix_len)


class FailingEvaluator:
    """Test double: every evaluation fails with the given code."""

    def __init__(self, code: str = "BOOM"):
        self.code = code
        self.calls = 0

    def evaluate(self, descriptor: ArchitectureDescriptor, reuse: ReuseHint) -> Metrics:
        self.calls += 1
        raise EvaluationFailed(self.code, "synthetic failure")


# -- walk enumeration and baselines -------------------------------------------


def _complete_walk(
    space: SearchSpace,
    walk: list[Layer],
    input_shape: tuple[int, int, int],
) -> ArchitectureDescriptor:
    flatten_seen = any(layer.kind is LayerKind.FLATTEN for layer in walk)
    last = walk[-1].kind if walk else LayerKind.INPUT
    suffix = [space.default_layer(kind) for kind in space.completion_suffix(last, flatten_seen)]
    layers = (Layer(LayerKind.INPUT), *walk, *suffix)
    return ArchitectureDescriptor(layers, input_shape)


def _layer_variants(space: SearchSpace, kind: LayerKind) -> list[Layer]:
    variants = [dict()]
    for spec in space.attributes(kind):
        variants = [{**v, spec.name: opt} for v in variants for opt in spec.options]
    return [Layer(kind, v) for v in variants]


def enumerate_descriptors(
    space: SearchSpace,
    depth: int,
    input_shape: tuple[int, int, int] = (28, 28, 1),
) -> list[ArchitectureDescriptor]:
    """Every distinct completed descriptor reachable in at most depth picks."""
    seen: dict[str, ArchitectureDescriptor] = {}

    def visit(walk: list[Layer], flatten_seen: bool) -> None:
        if walk:
            d = _complete_walk(space, walk, input_shape)
            key = canonical_string(d, space)
            if key not in seen:
                seen[key] = d
                if len(seen) > ENUMERATION_GUARD:
                    raise DescriptorError(
                        f"enumeration exceeds the {ENUMERATION_GUARD} descriptor guard"
                    )
        if len(walk) == depth:
            return
        last = walk[-1].kind if walk else LayerKind.INPUT
        for kind in space.selectable_successors(last, flatten_seen):
            for layer in _layer_variants(space, kind):
                visit(walk + [layer], flatten_seen or kind is LayerKind.FLATTEN)

    visit([], False)
    return [seen[key] for key in sorted(seen)]


def brute_force_best(
    space: SearchSpace,
    depth: int,
    landscape: LandscapeSpec,
    input_shape: Optional[tuple[int, int, int]] = None,
) -> tuple[ArchitectureDescriptor, float]:
    """Exhaustive noise-free optimum; ties go to the smallest canonical string."""
    shape = input_shape or landscape.target.input_shape
    best: Optional[ArchitectureDescriptor] = None
    best_score = -1.0
    best_canon = ""
    for d in enumerate_descriptors(space, depth, shape):
        score = landscape_score(d, landscape, with_noise=False)
        canon = canonical_string(d, space)
        if score > best_score or (score == best_score and canon < best_canon):
            best, best_score, best_canon = d, score, canon
    assert best is not None
    return best, best_score


def random_descriptor(
    space: SearchSpace,
    rng: random.Random,
    max_walk: int,
    input_shape: tuple[int, int, int] = (28, 28, 1),
    exact_length: bool = False,
) -> ArchitectureDescriptor:
    """Uniform random walk of up to (or exactly) max_walk picks, completed."""
    length = max_walk if exact_length else rng.randint(1, max_walk)
    walk: list[Layer] = []
    flatten_seen = False
    kind = LayerKind.INPUT
    for _ in range(length):
        choices = space.selectable_successors(kind, flatten_seen)
        if not choices:
            break
        kind = rng.choice(choices)
        attrs = {spec.name: rng.choice(spec.options) for spec in space.attributes(kind)}
        walk.append(Layer(kind, attrs))
        flatten_seen = flatten_seen or kind is LayerKind.FLATTEN
    return _complete_walk(space, walk, input_shape)


def corner_walk(space: SearchSpace, length: int) -> list[Layer]:
    """The walk a fully greedy ant takes from a fresh graph: first-listed
    kinds, default attributes."""
    walk: list[Layer] = []
    flatten_seen = False
    kind = LayerKind.INPUT
    for _ in range(length):
        choices = space.selectable_successors(kind, flatten_seen)
        if not choices:
            break
        kind = choices[0]
        walk.append(space.default_layer(kind))
        flatten_seen = flatten_seen or kind is LayerKind.FLATTEN
    return walk


def deviated_corner_descriptor(
    space: SearchSpace,
    rng: random.Random,
    lengths: tuple[int, ...],
    deviations: int,
    attribute_flip_fraction: float,
    input_shape: tuple[int, int, int] = (28, 28, 1),
) -> ArchitectureDescriptor:
    """Corner walk plus a fixed number of random edits, kept legal."""
    length = rng.choice(lengths)
    walk = corner_walk(space, length)
    for _ in range(deviations):
        pos = rng.randrange(len(walk))
        specs = [sp for sp in space.attributes(walk[pos].kind) if len(sp.options) > 1]
        if specs and rng.random() < attribute_flip_fraction:
            sp = rng.choice(specs)
            attrs = dict(walk[pos].attributes)
            attrs[sp.name] = rng.choice([o for o in sp.options if o != attrs[sp.name]])
            walk[pos] = Layer(walk[pos].kind, attrs)
            continue
        flatten_before = any(l.kind is LayerKind.FLATTEN for l in walk[:pos])
        prev = walk[pos - 1].kind if pos else LayerKind.INPUT
        choices = space.selectable_successors(prev, flatten_before)
        others = [k for k in choices if k is not walk[pos].kind]
        if not others:
            continue
        new_kind = rng.choice(others)
        walk[pos] = space.default_layer(new_kind)
        # a kind change can invalidate what follows; truncate there and
        # regrow to the original length along the corner
        repaired: list[Layer] = []
        flatten_seen = False
        kind = LayerKind.INPUT
        for layer in walk:
            if layer.kind not in space.selectable_successors(kind, flatten_seen):
                break
            repaired.append(layer)
            kind = layer.kind
            flatten_seen = flatten_seen or kind is LayerKind.FLATTEN
        while len(repaired) < length:
            choices = space.selectable_successors(kind, flatten_seen)
            if not choices:
                break
            kind = choices[0]
            repaired.append(space.default_layer(kind))
            flatten_seen = flatten_seen or kind is LayerKind.FLATTEN
        walk = repaired
    return _complete_walk(space, walk, input_shape)


@dataclass
class RandomSearchResult:
    best: ArchitectureDescriptor
    best_score: float
    evaluations: int
    scores: list[float] = field(default_factory=list)


def random_search(
    space: SearchSpace,
    evaluator: Evaluator,
    ant_count: int,
    max_depth: int,
    seed: int,
    input_shape: tuple[int, int, int] = (28, 28, 1),
) -> RandomSearchResult:
    """Budget-matched baseline: same round structure, uniform choices.

    Round k draws ant_count uniform walks of exactly k picks, mirroring the
    depth schedule of the pheromone-guided search.
    """
    rng = random.Random(seed)
    best: Optional[ArchitectureDescriptor] = None
    best_score = -1.0
    scores: list[float] = []
    for depth in range(1, max_depth + 1):
        for _ in range(ant_count):
            d = random_descriptor(space, rng, depth, input_shape, exact_length=True)
            try:
                metrics = evaluator.evaluate(d, ReuseHint())
                score = metrics.accuracy
            except EvaluationFailed:
                score = 0.0
            scores.append(score)
            if score > best_score:
                best, best_score = d, score
    assert best is not None
    return RandomSearchResult(best, best_score, len(scores), scores)
