"""The search loop: ant generation, ACS selection, progressive deepening.

One seeded random stream drives everything, consumed in a fixed order per
decision (branch draw, then at most one wheel draw; node pick first, then
each attribute in catalog order).  That makes whole runs replayable and lets
checkpoints capture the generator state between rounds.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import CheckpointError, ConfigError, EvaluationFailed, GraphError
from .evaluation import (
    Evaluator,
    LandscapeSpec,
    Metrics,
    SyntheticEvaluator,
    WeightCache,
)
from .graph import AttributeChoice, HeuristicProvider, PheromoneGraph
from .space import (
    ArchitectureDescriptor,
    Layer,
    LayerKind,
    Option,
    SearchSpace,
    canonical_string,
    default_space,
)

CHECKPOINT_SCHEMA_VERSION = 1

STATS_HEADER = ["round", "ant_index", "depth", "score", "architecture", "wall_ms"]


@dataclass(frozen=True)
class SelectionParams:
    """Greediness q0 and heuristic exponent beta for the ACS selection rule."""

    greediness: float = 0.5
    beta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.greediness <= 1.0:
            raise ConfigError("greediness", f"must lie in [0, 1], got {self.greediness}")
        if self.beta < 0:
            raise ConfigError("beta", f"must be non-negative, got {self.beta}")


@dataclass(frozen=True)
class PheromoneParams:
    rho: float = 0.1
    alpha: float = 0.1
    tau0: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho", f"must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha", f"must lie in (0, 1), got {self.alpha}")
        if self.tau0 <= 0:
            raise ConfigError("tau0", f"must be positive, got {self.tau0}")


@dataclass
class Tour:
    """One ant's walk: the nodes it visited and the attributes it chose.

    The completion suffix holds layers appended to make the architecture
    legal; they were never selected, so they carry no pheromone decisions.
    """

    node_ids: list[int]
    kinds: list[LayerKind]
    choices: list[dict[str, Option]]
    edge_ids: list[int]
    suffix: list[LayerKind] = field(default_factory=list)
    metrics: Optional[Metrics] = None
    trace_id: str = ""
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return bool(self.suffix) and self.suffix[-1] is LayerKind.OUTPUT

    @property
    def walk_depth(self) -> int:
        return len(self.node_ids) - 1

    @property
    def accuracy(self) -> float:
        if self.metrics is None:
            raise ValueError("tour has not been evaluated")
        return self.metrics.accuracy

    def attribute_choices(self) -> list[AttributeChoice]:
        out: list[AttributeChoice] = []
        for node_id, chosen in zip(self.node_ids, self.choices):
            for name, option in chosen.items():
                out.append((node_id, name, option))
        return out

    def to_descriptor(
        self, space: SearchSpace, input_shape: tuple[int, int, int]
    ) -> ArchitectureDescriptor:
        layers = [Layer(kind, dict(chosen)) for kind, chosen in zip(self.kinds, self.choices)]
        layers.extend(space.default_layer(kind) for kind in self.suffix)
        return ArchitectureDescriptor(tuple(layers), input_shape)

    def to_json_dict(self) -> dict:
        metrics = None
        if self.metrics is not None:
            # wall_ms is volatile timing; keeping it out makes checkpoints byte-stable
            metrics = {
                "accuracy": self.metrics.accuracy,
                "loss": self.metrics.loss,
                "reused_prefix_len": self.metrics.reused_prefix_len,
            }
        return {
            "node_ids": list(self.node_ids),
            "kinds": [k.value for k in self.kinds],
            "choices": [dict(c) for c in self.choices],
            "edge_ids": list(self.edge_ids),
            "suffix": [k.value for k in self.suffix],
            "metrics": metrics,
            "trace_id": self.trace_id,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Tour":
        metrics = None
        if data.get("metrics") is not None:
            m = data["metrics"]
            metrics = Metrics(
                accuracy=m["accuracy"],
                loss=m.get("loss"),
                reused_prefix_len=m.get("reused_prefix_len", 0),
            )
        return cls(
            node_ids=list(data["node_ids"]),
            kinds=[LayerKind(k) for k in data["kinds"]],
            choices=[dict(c) for c in data["choices"]],
            edge_ids=list(data["edge_ids"]),
            suffix=[LayerKind(k) for k in data["suffix"]],
            metrics=metrics,
            trace_id=data.get("trace_id", ""),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class RunConfig:
    ant_count: int = 8
    max_depth: int = 3
    selection: SelectionParams = field(default_factory=SelectionParams)
    pheromone: PheromoneParams = field(default_factory=PheromoneParams)
    seed: int = 0
    evaluator: str = "synthetic"
    input_shape: tuple[int, int, int] = (28, 28, 1)
    landscape: Optional[LandscapeSpec] = None

    def __post_init__(self):
        if self.ant_count < 1:
            raise ConfigError("ant_count", f"must be at least 1, got {self.ant_count}")
        if self.max_depth < 1:
            raise ConfigError("max_depth", f"must be at least 1, got {self.max_depth}")
        if len(self.input_shape) != 3 or any(v <= 0 for v in self.input_shape):
            raise ConfigError("input_shape", f"must be three positive ints, got {self.input_shape}")

    def to_json_dict(self) -> dict:
        return {
            "ant_count": self.ant_count,
            "max_depth": self.max_depth,
            "greediness": self.selection.greediness,
            "beta": self.selection.beta,
            "rho": self.pheromone.rho,
            "alpha": self.pheromone.alpha,
            "tau0": self.pheromone.tau0,
            "seed": self.seed,
            "evaluator": self.evaluator,
            "input_shape": list(self.input_shape),
            "landscape": self.landscape.to_json_dict() if self.landscape else None,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunConfig":
        known = {
            "ant_count", "max_depth", "greediness", "beta", "rho", "alpha",
            "tau0", "seed", "evaluator", "input_shape", "landscape",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        landscape = None
        if data.get("landscape") is not None:
            try:
                landscape = LandscapeSpec.from_json_dict(data["landscape"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError("landscape", str(exc)) from None
        try:
            shape = tuple(data.get("input_shape", (28, 28, 1)))
        except TypeError:
            raise ConfigError("input_shape", f"must be a list, got {data['input_shape']!r}") from None
        return cls(
            ant_count=_expect_int(data, "ant_count", 8),
            max_depth=_expect_int(data, "max_depth", 3),
            selection=SelectionParams(
                greediness=_expect_number(data, "greediness", 0.5),
                beta=_expect_number(data, "beta", 1.0),
            ),
            pheromone=PheromoneParams(
                rho=_expect_number(data, "rho", 0.1),
                alpha=_expect_number(data, "alpha", 0.1),
                tau0=_expect_number(data, "tau0", 0.1),
            ),
            seed=_expect_int(data, "seed", 0),
            evaluator=data.get("evaluator", "synthetic"),
            input_shape=shape,
            landscape=landscape,
        )


def _expect_int(data: dict, key: str, default: int) -> int:
    value = data.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(key, f"must be an integer, got {value!r}")
    return value


def _expect_number(data: dict, key: str, default: float) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"must be a number, got {value!r}")
    return float(value)


# -- selection ----------------------------------------------------------------


def aco_select(
    candidates: Sequence[tuple[float, float]],
    params: SelectionParams,
    rng: random.Random,
) -> int:
    """ACS rule: greedy argmax with probability q0, else roulette wheel.

    Consumes exactly one uniform draw for the branch decision and at most
    one more for the wheel.  Argmax ties break toward the lowest index.
    """
    if not candidates:
        raise ValueError("aco_select needs at least one candidate")
    weights = []
    for tau, eta in candidates:
        if tau <= 0 or eta <= 0:
            raise ValueError(f"candidate weights must be positive, got tau={tau}, eta={eta}")
        weights.append(tau * eta**params.beta)

    q = rng.random()
    if q <= params.greediness:
        return max(range(len(weights)), key=lambda i: (weights[i], -i))
    total = sum(weights)
    pointer = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if pointer <= acc:
            return i
    return len(weights) - 1  # float round-off fallback


def complete_path(tour: Tour, space: SearchSpace) -> Tour:
    """Append the minimal legal suffix (Flatten if needed, then Output)."""
    if tour.complete:
        return tour
    flatten_seen = LayerKind.FLATTEN in tour.kinds
    suffix = space.completion_suffix(tour.kinds[-1], flatten_seen)
    tour.suffix = list(suffix)
    return tour


def generate_path(
    graph: PheromoneGraph,
    space: SearchSpace,
    params: SelectionParams,
    rng: random.Random,
    trace_id: str = "",
) -> Tour:
    """Walk from the input node to the current depth ceiling, then complete."""
    current = graph.node(graph.input_id)
    tour = Tour(
        node_ids=[current.node_id],
        kinds=[current.kind],
        choices=[{}],
        edge_ids=[],
        trace_id=trace_id,
    )
    flatten_seen = False
    for _ in range(graph.current_max_depth):
        neighbours = graph.expand_neighbours(current.node_id, flatten_seen)
        if not neighbours:
            break
        idx = aco_select(
            [(edge.pheromone, edge.heuristic) for edge, _ in neighbours], params, rng
        )
        edge, node = neighbours[idx]
        chosen: dict[str, Option] = {}
        for spec in space.attributes(node.kind):
            table = node.attribute_pheromone[spec.name]
            option_idx = aco_select(
                [
                    (table[opt], graph.heuristic.attribute(node.kind, spec.name, opt))
                    for opt in spec.options
                ],
                params,
                rng,
            )
            chosen[spec.name] = spec.options[option_idx]
        tour.node_ids.append(node.node_id)
        tour.kinds.append(node.kind)
        tour.choices.append(chosen)
        tour.edge_ids.append(edge.edge_id)
        if node.kind is LayerKind.FLATTEN:
            flatten_seen = True
        current = node
    return complete_path(tour, space)


# -- spec-shaped update wrappers ------------------------------------------------


def local_update(graph: PheromoneGraph, tour: Tour, rho: float, tau0: float) -> None:
    graph.local_update(tour.edge_ids, tour.attribute_choices(), rho, tau0)


def global_update(graph: PheromoneGraph, best: Tour, alpha: float) -> None:
    if best.metrics is None:
        raise GraphError("global update needs an evaluated tour")
    graph.global_update(best.edge_ids, best.attribute_choices(), best.accuracy, alpha)


def find_best(tours: Sequence[Tour]) -> Tour:
    """Highest accuracy wins; ties break toward earlier generation order."""
    if not tours:
        raise ValueError("find_best needs at least one tour")
    best = tours[0]
    for tour in tours[1:]:
        if tour.accuracy > best.accuracy:
            best = tour
    return best


# -- the search loop ------------------------------------------------------------


StatsCallback = Callable[[dict], None]
RoundCallback = Callable[[int, Tour], None]


@dataclass
class SearchResult:
    best: Tour
    graph: PheromoneGraph
    cache: WeightCache
    config: RunConfig
    evaluations: int
    rounds: int

    def best_descriptor(self, space: SearchSpace) -> ArchitectureDescriptor:
        return self.best.to_descriptor(space, self.config.input_shape)


def build_evaluator(config: RunConfig, space: SearchSpace) -> Evaluator:
    """Resolve the config's evaluator binding string."""
    binding = config.evaluator
    if binding == "synthetic":
        landscape = config.landscape or LandscapeSpec.random(config.seed, space, config.input_shape)
        return SyntheticEvaluator(landscape, space)
    if binding.startswith("exec:") or binding.startswith("tcp:"):
        from .protocol import evaluator_from_binding

        return evaluator_from_binding(binding, config.input_shape, space)
    raise ConfigError("evaluator", f"unknown binding {binding!r}")


def generate_ants(
    graph: PheromoneGraph,
    space: SearchSpace,
    config: RunConfig,
    rng: random.Random,
    evaluator: Evaluator,
    cache: Optional[WeightCache] = None,
    round_index: int = 1,
    stats: Optional[StatsCallback] = None,
) -> list[Tour]:
    """One round: walk, evaluate, then local-update before the next ant."""
    cache = cache if cache is not None else WeightCache(space)
    tours: list[Tour] = []
    for i in range(config.ant_count):
        tour = generate_path(graph, space, config.selection, rng, f"r{round_index}.a{i}")
        descriptor = tour.to_descriptor(space, config.input_shape)
        hint = cache.hint(descriptor)
        started = time.perf_counter()
        try:
            metrics = evaluator.evaluate(descriptor, hint)
        except EvaluationFailed as exc:
            tour.error = str(exc)
            metrics = Metrics(accuracy=0.0, wall_ms=0.0, reused_prefix_len=0)
        metrics.wall_ms = (time.perf_counter() - started) * 1000.0
        tour.metrics = metrics
        if tour.error is None:
            cache.record(descriptor, metrics.accuracy)
        tours.append(tour)
        local_update(graph, tour, config.pheromone.rho, config.pheromone.tau0)
        if stats is not None:
            stats(
                {
                    "round": round_index,
                    "ant_index": i,
                    "depth": tour.walk_depth,
                    "score": metrics.accuracy,
                    "architecture": canonical_string(descriptor, space),
                    "wall_ms": metrics.wall_ms,
                }
            )
    return tours


@dataclass
class ResumeState:
    """Engine state reconstructed from a checkpoint."""

    config: RunConfig
    graph: PheromoneGraph
    incumbent: Optional[Tour]
    cache: WeightCache
    rng_state: tuple
    completed_rounds: int


def search(
    config: RunConfig,
    evaluator: Optional[Evaluator] = None,
    space: Optional[SearchSpace] = None,
    out_dir: Optional[Path] = None,
    stats: Optional[StatsCallback] = None,
    on_round: Optional[RoundCallback] = None,
    resume_state: Optional[ResumeState] = None,
    heuristic: Optional[HeuristicProvider] = None,
) -> SearchResult:
    """Run the full progressive search and return the global best tour.

    Each round generates and evaluates ant_count ants, folds the round into
    the incumbent, applies the global update with the incumbent's score, and
    raises the depth ceiling.  A checkpoint lands in out_dir after every
    round when one is given.
    """
    space = space or default_space()
    if evaluator is None:
        evaluator = build_evaluator(config, space)

    if resume_state is not None:
        graph = resume_state.graph
        incumbent = resume_state.incumbent
        cache = resume_state.cache
        rng = random.Random()
        rng.setstate(resume_state.rng_state)
        start_round = resume_state.completed_rounds + 1
    else:
        graph = PheromoneGraph(space, config.pheromone.tau0, heuristic)
        incumbent = None
        cache = WeightCache(space)
        rng = random.Random(config.seed)
        start_round = 1

    evaluations = 0
    for round_index in range(start_round, config.max_depth + 1):
        tours = generate_ants(
            graph, space, config, rng, evaluator, cache, round_index, stats
        )
        evaluations += len(tours)
        round_best = find_best(tours)
        if incumbent is None or round_best.accuracy > incumbent.accuracy:
            incumbent = round_best
        global_update(graph, incumbent, config.pheromone.alpha)
        graph.increase_depth()
        if out_dir is not None:
            write_checkpoint(
                out_dir / f"checkpoint_round_{round_index}.json",
                config, graph, incumbent, cache, rng, round_index,
            )
        if on_round is not None:
            on_round(round_index, incumbent)

    assert incumbent is not None
    return SearchResult(
        best=incumbent,
        graph=graph,
        cache=cache,
        config=config,
        evaluations=evaluations,
        rounds=config.max_depth - start_round + 1,
    )


# -- checkpoints ----------------------------------------------------------------


def checkpoint_dict(
    config: RunConfig,
    graph: PheromoneGraph,
    incumbent: Optional[Tour],
    cache: WeightCache,
    rng: random.Random,
    completed_rounds: int,
) -> dict:
    version, state, gauss_next = rng.getstate()
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "completed_rounds": completed_rounds,
        "config": config.to_json_dict(),
        "graph": graph.to_json_dict(),
        "incumbent": incumbent.to_json_dict() if incumbent else None,
        "cache": cache.to_json_list(),
        "rng_state": [version, list(state), gauss_next],
    }


def checkpoint_bytes(data: dict) -> bytes:
    return (json.dumps(data, sort_keys=True, indent=2) + "\n").encode()


def write_checkpoint(
    path: Path,
    config: RunConfig,
    graph: PheromoneGraph,
    incumbent: Optional[Tour],
    cache: WeightCache,
    rng: random.Random,
    completed_rounds: int,
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(
        checkpoint_bytes(
            checkpoint_dict(config, graph, incumbent, cache, rng, completed_rounds)
        )
    )


def load_checkpoint(
    path: Path,
    space: Optional[SearchSpace] = None,
    heuristic: Optional[HeuristicProvider] = None,
) -> ResumeState:
    space = space or default_space()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CheckpointError(f"checkpoint {path} is not an object")
    version = data.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema version {version!r} does not match "
            f"{CHECKPOINT_SCHEMA_VERSION}; re-run with the matching release "
            f"or export the best descriptor and start fresh"
        )
    try:
        config = RunConfig.from_json_dict(data["config"])
        graph = PheromoneGraph.from_json_dict(
            data["graph"], space, config.pheromone.tau0, heuristic
        )
        incumbent = Tour.from_json_dict(data["incumbent"]) if data.get("incumbent") else None
        cache = WeightCache.from_json_list(data.get("cache", []), space)
        raw_version, raw_state, gauss_next = data["rng_state"]
        rng_state = (raw_version, tuple(raw_state), gauss_next)
        completed = data["completed_rounds"]
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from None
    return ResumeState(config, graph, incumbent, cache, rng_state, completed)


def resume_search(
    checkpoint_path: Path,
    evaluator: Optional[Evaluator] = None,
    space: Optional[SearchSpace] = None,
    out_dir: Optional[Path] = None,
    stats: Optional[StatsCallback] = None,
    on_round: Optional[RoundCallback] = None,
) -> Optional[SearchResult]:
    """Continue an interrupted run; returns None if it was already finished."""
    space = space or default_space()
    state = load_checkpoint(checkpoint_path, space)
    if state.completed_rounds >= state.config.max_depth:
        return None
    return search(
        state.config,
        evaluator=evaluator,
        space=space,
        out_dir=out_dir,
        stats=stats,
        on_round=on_round,
        resume_state=state,
    )


def best_json_dict(result: SearchResult, space: SearchSpace) -> dict:
    descriptor = result.best_descriptor(space)
    from .space import serialize

    return {
        "descriptor": serialize(descriptor),
        "canonical": canonical_string(descriptor, space),
        "score": result.best.accuracy,
        "config": result.config.to_json_dict(),
        "seed": result.config.seed,
    }
