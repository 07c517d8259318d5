"""Ant colony search over progressively deepening neural architecture graphs."""

from .engine import (
    PheromoneParams,
    RunConfig,
    SearchResult,
    SelectionParams,
    Tour,
    aco_select,
    complete_path,
    find_best,
    generate_ants,
    generate_path,
    global_update,
    local_update,
    resume_search,
    search,
)
from .evaluation import (
    Evaluator,
    LandscapeSpec,
    Metrics,
    ReuseHint,
    SyntheticEvaluator,
    WeightCache,
    brute_force_best,
    longest_common_prefix,
    random_search,
    reuse_hint,
)
from .graph import PheromoneGraph, UniformHeuristic
from .space import (
    ArchitectureDescriptor,
    AttributeSpec,
    Layer,
    LayerKind,
    NodeTemplate,
    SearchSpace,
    canonical_string,
    default_space,
    deserialize,
    serialize,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureDescriptor",
    "AttributeSpec",
    "Evaluator",
    "LandscapeSpec",
    "Layer",
    "LayerKind",
    "Metrics",
    "NodeTemplate",
    "PheromoneGraph",
    "PheromoneParams",
    "ReuseHint",
    "RunConfig",
    "SearchResult",
    "SearchSpace",
    "SelectionParams",
    "SyntheticEvaluator",
    "Tour",
    "UniformHeuristic",
    "WeightCache",
    "aco_select",
    "brute_force_best",
    "canonical_string",
    "complete_path",
    "default_space",
    "deserialize",
    "find_best",
    "generate_ants",
    "generate_path",
    "global_update",
    "local_update",
    "longest_common_prefix",
    "random_search",
    "resume_search",
    "reuse_hint",
    "search",
    "serialize",
]
