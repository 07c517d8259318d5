"""Layer catalog, legal transitions, and the architecture descriptor.

The search space is a closed set of CNN layer kinds, each with a fixed list
of discrete attribute options and a set of legal successor kinds.  Whether a
kind may follow another depends on whether a Flatten layer already occurred
earlier in the path, so successor lookups take that flag explicitly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .errors import DescriptorError

Option = Union[int, float, str]

_OPTION_TYPES = (int, float, str)


class LayerKind(str, enum.Enum):
    INPUT = "Input"
    CONV2D = "Conv2D"
    POOLING = "Pooling"
    BATCH_NORM = "BatchNorm"
    DROPOUT = "Dropout"
    FLATTEN = "Flatten"
    DENSE = "Dense"
    OUTPUT = "Output"

    def __str__(self) -> str:  # canonical strings use the bare name
        return self.value


@dataclass(frozen=True)
class AttributeSpec:
    """One selectable attribute: an ordered list of discrete options.

    Option order is load-bearing: it defines pheromone-table indexing and
    the deterministic first-option default used by path completion.
    """

    name: str
    options: tuple[Option, ...]

    def __post_init__(self):
        if not self.options:
            raise ValueError(f"attribute {self.name!r} has no options")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"attribute {self.name!r} has duplicate options")
        for opt in self.options:
            if not isinstance(opt, _OPTION_TYPES) or isinstance(opt, bool):
                raise ValueError(f"attribute {self.name!r}: bad option {opt!r}")

    @property
    def default(self) -> Option:
        return self.options[0]


@dataclass(frozen=True)
class NodeTemplate:
    """Catalog entry for one layer kind.

    Successor sets are kept as ordered tuples (selection candidates are
    presented in this order) and split by flatten state, since the legal
    continuations of a path change once it has been flattened.
    """

    kind: LayerKind
    attributes: tuple[AttributeSpec, ...]
    successors_before_flatten: tuple[LayerKind, ...]
    successors_after_flatten: tuple[LayerKind, ...]

    @property
    def allowed_successors(self) -> tuple[LayerKind, ...]:
        seen: list[LayerKind] = []
        for kind in self.successors_before_flatten + self.successors_after_flatten:
            if kind not in seen:
                seen.append(kind)
        return tuple(seen)


@dataclass(frozen=True)
class Layer:
    """One concrete layer of a descriptor: a kind plus chosen attribute values."""

    kind: LayerKind
    attributes: Mapping[str, Option] = field(default_factory=dict)

    def canonical(self, input_shape: Optional[tuple[int, int, int]] = None) -> str:
        if self.kind is LayerKind.INPUT:
            if input_shape is None:
                raise DescriptorError("Input layer needs an input shape to render")
            h, w, c = input_shape
            return f"Input({h},{w},{c})"
        parts = ",".join(
            f"{name}={_format_option(self.attributes[name])}"
            for name in sorted(self.attributes)
        )
        return f"{self.kind.value}({parts})"


def _format_option(value: Option) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """An ordered stack of layers plus the input tensor shape."""

    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.layers)

    def prefix(self, k: int) -> "ArchitectureDescriptor":
        return ArchitectureDescriptor(self.layers[:k], self.input_shape)


@dataclass(frozen=True)
class Verdict:
    """Validation outcome: either ok, or the first violated rule."""

    ok: bool
    position: Optional[int] = None
    rule: Optional[str] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


_PRE_FLATTEN_KINDS = (
    LayerKind.CONV2D,
    LayerKind.POOLING,
    LayerKind.BATCH_NORM,
    LayerKind.DROPOUT,
    LayerKind.FLATTEN,
)
_POST_FLATTEN_KINDS = (LayerKind.DENSE, LayerKind.DROPOUT, LayerKind.OUTPUT)


class SearchSpace:
    """Immutable catalog of layer kinds, attributes, and transitions."""

    def __init__(self, templates: Iterable[NodeTemplate]):
        self._templates: dict[LayerKind, NodeTemplate] = {}
        for tpl in templates:
            if tpl.kind in self._templates:
                raise ValueError(f"duplicate template for {tpl.kind}")
            self._templates[tpl.kind] = tpl
        missing = set(LayerKind) - set(self._templates)
        if missing:
            raise ValueError(f"catalog is missing kinds: {sorted(k.value for k in missing)}")
        self._check_reachability()

    def template(self, kind: LayerKind) -> NodeTemplate:
        return self._templates[kind]

    def attributes(self, kind: LayerKind) -> tuple[AttributeSpec, ...]:
        return self._templates[kind].attributes

    def successors(self, kind: LayerKind, after_flatten: bool) -> tuple[LayerKind, ...]:
        tpl = self._templates[kind]
        return tpl.successors_after_flatten if after_flatten else tpl.successors_before_flatten

    def selectable_successors(self, kind: LayerKind, after_flatten: bool) -> tuple[LayerKind, ...]:
        """Successors an ant may pick; Output is appended by completion, never selected."""
        return tuple(
            k for k in self.successors(kind, after_flatten) if k is not LayerKind.OUTPUT
        )

    def completion_suffix(
        self, last_kind: LayerKind, flatten_seen: bool
    ) -> tuple[LayerKind, ...]:
        """Minimal legal suffix turning a partial path into a complete one."""
        if last_kind is LayerKind.OUTPUT:
            return ()
        if flatten_seen:
            return (LayerKind.OUTPUT,)
        return (LayerKind.FLATTEN, LayerKind.OUTPUT)

    def default_layer(self, kind: LayerKind) -> Layer:
        return Layer(kind, {spec.name: spec.default for spec in self.attributes(kind)})

    def _check_reachability(self, limit: int = 3) -> None:
        for kind in LayerKind:
            frontier = {kind}
            for _ in range(limit):
                if LayerKind.OUTPUT in frontier:
                    break
                nxt: set[LayerKind] = set()
                for k in frontier:
                    nxt.update(self._templates[k].allowed_successors)
                frontier = nxt
            if kind is not LayerKind.OUTPUT and LayerKind.OUTPUT not in frontier:
                raise ValueError(f"Output unreachable from {kind.value} within {limit} steps")

    # -- validation ---------------------------------------------------------

    def validate(self, d: ArchitectureDescriptor) -> Verdict:
        """Check every descriptor invariant; complete paths must end in Output."""
        verdict = self.validate_prefix(d)
        if not verdict:
            return verdict
        if d.layers[-1].kind is not LayerKind.OUTPUT:
            return Verdict(
                False, len(d.layers) - 1, "output-last", "descriptor must end with Output"
            )
        return Verdict(True)

    def validate_prefix(self, d: ArchitectureDescriptor) -> Verdict:
        """Like validate() but accepts paths that have not reached Output yet."""
        shape = d.input_shape
        if len(shape) != 3 or any(not isinstance(v, int) or v <= 0 for v in shape):
            return Verdict(False, None, "input-shape", f"bad input shape {shape!r}")
        if not d.layers:
            return Verdict(False, None, "empty", "descriptor has no layers")

        flatten_seen = False
        for i, layer in enumerate(d.layers):
            kind = layer.kind
            if i == 0:
                if kind is not LayerKind.INPUT:
                    return Verdict(False, 0, "input-first", "first layer must be Input")
            elif kind is LayerKind.INPUT:
                return Verdict(False, i, "input-once", "Input may only appear at position 0")
            if kind is LayerKind.OUTPUT and i != len(d.layers) - 1:
                return Verdict(False, i, "output-last", "no layers may follow Output")
            if kind is LayerKind.FLATTEN and flatten_seen:
                return Verdict(False, i, "flatten-once", "Flatten may appear at most once")

            attr_verdict = self._check_attributes(i, layer)
            if attr_verdict is not None:
                return attr_verdict

            if i > 0:
                prev = d.layers[i - 1].kind
                allowed = self.successors(prev, flatten_seen)
                if kind not in allowed:
                    names = ", ".join(k.value for k in allowed) or "none"
                    return Verdict(
                        False,
                        i,
                        "transition",
                        f"{kind.value} may not follow {prev.value} here (allowed: {names})",
                    )
            if kind is LayerKind.FLATTEN:
                flatten_seen = True
        return Verdict(True)

    def _check_attributes(self, position: int, layer: Layer) -> Optional[Verdict]:
        specs = {spec.name: spec for spec in self.attributes(layer.kind)}
        if set(layer.attributes) != set(specs):
            return Verdict(
                False,
                position,
                "attributes",
                f"{layer.kind.value} attributes must be exactly {sorted(specs)}, "
                f"got {sorted(layer.attributes)}",
            )
        for name, value in layer.attributes.items():
            if value not in specs[name].options:
                return Verdict(
                    False,
                    position,
                    "attribute-option",
                    f"{layer.kind.value}.{name} value {value!r} not in {list(specs[name].options)}",
                )
        return None


def default_space() -> SearchSpace:
    """The built-in catalog.

    Convolutional-side kinds may stack freely until Flatten; after it, only
    the dense-side kinds remain.  Attribute option lists are kept small so
    the whole space at shallow depths stays enumerable by brute force.
    """
    pre = _PRE_FLATTEN_KINDS
    post = _POST_FLATTEN_KINDS
    return SearchSpace(
        [
            NodeTemplate(LayerKind.INPUT, (), pre, ()),
            NodeTemplate(
                LayerKind.CONV2D,
                (
                    AttributeSpec("filter_count", (16, 32, 64)),
                    AttributeSpec("kernel_size", (1, 3, 5)),
                ),
                pre,
                (),
            ),
            NodeTemplate(
                LayerKind.POOLING,
                (
                    AttributeSpec("pool_type", ("max", "average")),
                    AttributeSpec("pool_size", (2,)),
                    AttributeSpec("stride", (2,)),
                ),
                pre,
                (),
            ),
            NodeTemplate(LayerKind.BATCH_NORM, (), pre, ()),
            NodeTemplate(
                LayerKind.DROPOUT,
                (AttributeSpec("rate", (0.1, 0.3, 0.5)),),
                pre,
                post,
            ),
            NodeTemplate(LayerKind.FLATTEN, (), (), post),
            NodeTemplate(
                LayerKind.DENSE,
                (AttributeSpec("output_size", (64, 128)),),
                (),
                post,
            ),
            NodeTemplate(LayerKind.OUTPUT, (), (), ()),
        ]
    )


# -- canonical form ---------------------------------------------------------


def canonical_string(d: ArchitectureDescriptor, space: SearchSpace) -> str:
    """Deterministic, injective text form of a valid descriptor or prefix.

    Layers are joined in order; attribute names are sorted within a layer so
    the rendering never depends on dict insertion order.
    """
    verdict = space.validate_prefix(d)
    if not verdict:
        raise DescriptorError(
            f"cannot canonicalize invalid descriptor: {verdict.rule} at {verdict.position}: "
            f"{verdict.message}"
        )
    return "->".join(layer.canonical(d.input_shape) for layer in d.layers)


def layer_canonical(layer: Layer, input_shape: tuple[int, int, int]) -> str:
    return layer.canonical(input_shape)


# -- JSON wire form ---------------------------------------------------------


def serialize(d: ArchitectureDescriptor) -> dict:
    """Descriptor as a plain JSON-ready dict (the published schema)."""
    return {
        "input_shape": list(d.input_shape),
        "layers": [
            {"kind": layer.kind.value, "attributes": dict(layer.attributes)}
            for layer in d.layers
        ],
    }


def deserialize(data: object) -> ArchitectureDescriptor:
    """Parse the published JSON schema; unknown fields are rejected."""
    if not isinstance(data, dict):
        raise DescriptorError(f"descriptor must be an object, got {type(data).__name__}")
    unknown = set(data) - {"input_shape", "layers"}
    if unknown:
        raise DescriptorError(f"unknown descriptor fields: {sorted(unknown)}")
    try:
        raw_shape = data["input_shape"]
        raw_layers = data["layers"]
    except KeyError as exc:
        raise DescriptorError(f"descriptor missing field {exc.args[0]!r}") from None
    if (
        not isinstance(raw_shape, (list, tuple))
        or len(raw_shape) != 3
        or any(not isinstance(v, int) or isinstance(v, bool) for v in raw_shape)
    ):
        raise DescriptorError(f"input_shape must be three integers, got {raw_shape!r}")
    if not isinstance(raw_layers, list):
        raise DescriptorError("layers must be a list")

    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise DescriptorError(f"layer {i} must be an object")
        unknown = set(entry) - {"kind", "attributes"}
        if unknown:
            raise DescriptorError(f"layer {i} has unknown fields: {sorted(unknown)}")
        if "kind" not in entry:
            raise DescriptorError(f"layer {i} missing 'kind'")
        try:
            kind = LayerKind(entry["kind"])
        except ValueError:
            raise DescriptorError(f"layer {i} has unknown kind {entry['kind']!r}") from None
        attrs = entry.get("attributes", {})
        if not isinstance(attrs, dict):
            raise DescriptorError(f"layer {i} attributes must be an object")
        for name, value in attrs.items():
            if not isinstance(value, _OPTION_TYPES) or isinstance(value, bool):
                raise DescriptorError(f"layer {i} attribute {name!r} has bad value {value!r}")
        layers.append(Layer(kind, dict(attrs)))
    return ArchitectureDescriptor(tuple(layers), tuple(raw_shape))
