"""The dynamically growing layered pheromone graph.

Nodes are unique per (kind, depth) and carry per-attribute pheromone tables;
edges connect consecutive depths and carry pheromone plus a static heuristic
value.  The graph only ever grows: expansion reuses existing nodes and edges,
and raising the depth ceiling touches nothing that was already learned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from .errors import GraphError
from .space import LayerKind, Option, SearchSpace


class HeuristicProvider(Protocol):
    """Hook for injecting expert knowledge into selection weights."""

    def edge(self, src: LayerKind, dst: LayerKind) -> float: ...

    def attribute(self, kind: LayerKind, name: str, option: Option) -> float: ...


class UniformHeuristic:
    """Default provider: every edge and attribute option weighs 1.0."""

    def edge(self, src: LayerKind, dst: LayerKind) -> float:
        return 1.0

    def attribute(self, kind: LayerKind, name: str, option: Option) -> float:
        return 1.0


@dataclass
class GraphNode:
    node_id: int
    kind: LayerKind
    depth: int
    # attribute name -> option -> pheromone level; option order mirrors the catalog
    attribute_pheromone: dict[str, dict[Option, float]]
    out_edges: list[int] = field(default_factory=list)


@dataclass
class PheromoneEdge:
    edge_id: int
    src: int
    dst: int
    pheromone: float
    heuristic: float


# (edge_ids, attribute_choices) of one walk; attribute choices are
# (node_id, attribute name, chosen option) triples.
AttributeChoice = tuple[int, str, Option]


class PheromoneGraph:
    """Single-writer graph mutated only by the sequential search loop."""

    def __init__(
        self,
        space: SearchSpace,
        tau0: float,
        heuristic: Optional[HeuristicProvider] = None,
    ):
        if tau0 <= 0:
            raise GraphError(f"tau0 must be positive, got {tau0}")
        self.space = space
        self.tau0 = tau0
        self.heuristic = heuristic or UniformHeuristic()
        self.nodes: dict[int, GraphNode] = {}
        self.edges: dict[int, PheromoneEdge] = {}
        self.current_max_depth = 1
        self._node_at: dict[tuple[LayerKind, int], int] = {}
        self._edge_between: dict[tuple[int, int], int] = {}
        self._next_node_id = 0
        self._next_edge_id = 0
        self.input_id = self._create_node(LayerKind.INPUT, 0)

    # -- construction -------------------------------------------------------

    def _create_node(self, kind: LayerKind, depth: int) -> int:
        node_id = self._next_node_id
        self._next_node_id += 1
        tables = {
            spec.name: {opt: self.tau0 for opt in spec.options}
            for spec in self.space.attributes(kind)
        }
        self.nodes[node_id] = GraphNode(node_id, kind, depth, tables)
        self._node_at[(kind, depth)] = node_id
        return node_id

    def _ensure_node(self, kind: LayerKind, depth: int) -> int:
        existing = self._node_at.get((kind, depth))
        if existing is not None:
            return existing
        return self._create_node(kind, depth)

    def _ensure_edge(self, src: int, dst: int) -> int:
        existing = self._edge_between.get((src, dst))
        if existing is not None:
            return existing
        edge_id = self._next_edge_id
        self._next_edge_id += 1
        eta = self.heuristic.edge(self.nodes[src].kind, self.nodes[dst].kind)
        if eta <= 0:
            raise GraphError(f"heuristic must be positive, got {eta}")
        self.edges[edge_id] = PheromoneEdge(edge_id, src, dst, self.tau0, eta)
        self._edge_between[(src, dst)] = edge_id
        self.nodes[src].out_edges.append(edge_id)
        return edge_id

    # -- spec operations ----------------------------------------------------

    def expand_neighbours(
        self, node_id: int, after_flatten: bool = False
    ) -> list[tuple[PheromoneEdge, GraphNode]]:
        """Materialize (or reuse) the successors of a node one depth down.

        Candidates come back in catalog order; Output is never offered, it is
        appended by path completion instead.
        """
        node = self.nodes[node_id]
        if node.depth >= self.current_max_depth:
            raise GraphError(
                f"cannot expand node at depth {node.depth}: "
                f"current max depth is {self.current_max_depth}"
            )
        result = []
        for kind in self.space.selectable_successors(node.kind, after_flatten):
            target_id = self._ensure_node(kind, node.depth + 1)
            edge_id = self._ensure_edge(node_id, target_id)
            result.append((self.edges[edge_id], self.nodes[target_id]))
        return result

    def increase_depth(self) -> None:
        """Raise the depth ceiling by one; accumulated pheromone is kept."""
        self.current_max_depth += 1

    def local_update(
        self,
        edge_ids: Iterable[int],
        attribute_choices: Iterable[AttributeChoice],
        rho: float,
        tau0: float,
    ) -> None:
        """Decay pheromone toward tau0 on everything one ant just used."""
        if not 0 < rho < 1:
            raise GraphError(f"rho must lie in (0, 1), got {rho}")
        if tau0 <= 0:
            raise GraphError(f"tau0 must be positive, got {tau0}")
        # increment form of (1-rho)*tau + rho*tau0: exactly a no-op at tau == tau0,
        # so float round-off cannot break selection ties at fresh nodes
        for edge_id in edge_ids:
            edge = self._require_edge(edge_id)
            edge.pheromone += rho * (tau0 - edge.pheromone)
        for node_id, name, option in attribute_choices:
            table = self._require_table(node_id, name, option)
            table[option] += rho * (tau0 - table[option])

    def global_update(
        self,
        best_edge_ids: Iterable[int],
        best_attribute_choices: Iterable[AttributeChoice],
        deposit: float,
        alpha: float,
    ) -> None:
        """Evaporate everything; deposit the best tour's score on its choices."""
        if not 0 < alpha < 1:
            raise GraphError(f"alpha must lie in (0, 1), got {alpha}")
        if deposit < 0:
            raise GraphError(f"deposit must be non-negative, got {deposit}")
        on_tour_edges = set(best_edge_ids)
        for edge_id in on_tour_edges:
            self._require_edge(edge_id)
        on_tour_choices = set()
        for node_id, name, option in best_attribute_choices:
            self._require_table(node_id, name, option)
            on_tour_choices.add((node_id, name, option))

        for edge in self.edges.values():
            delta = deposit if edge.edge_id in on_tour_edges else 0.0
            edge.pheromone = (1 - alpha) * edge.pheromone + alpha * delta
        for node in self.nodes.values():
            for name, table in node.attribute_pheromone.items():
                for option in table:
                    delta = deposit if (node.node_id, name, option) in on_tour_choices else 0.0
                    table[option] = (1 - alpha) * table[option] + alpha * delta

    # -- lookups ------------------------------------------------------------

    def node(self, node_id: int) -> GraphNode:
        return self.nodes[node_id]

    def edge(self, edge_id: int) -> PheromoneEdge:
        return self.edges[edge_id]

    def node_count(self) -> int:
        return len(self.nodes)

    def edge_count(self) -> int:
        return len(self.edges)

    def total_pheromone(self) -> float:
        total = sum(e.pheromone for e in self.edges.values())
        for node in self.nodes.values():
            for table in node.attribute_pheromone.values():
                total += sum(table.values())
        return total

    def _require_edge(self, edge_id: int) -> PheromoneEdge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise GraphError(f"edge {edge_id} does not exist in the graph") from None

    def _require_table(self, node_id: int, name: str, option: Option) -> dict[Option, float]:
        try:
            table = self.nodes[node_id].attribute_pheromone[name]
        except KeyError:
            raise GraphError(f"node {node_id} has no attribute {name!r}") from None
        if option not in table:
            raise GraphError(f"node {node_id} attribute {name!r} has no option {option!r}")
        return table

    # -- checkpoint form ----------------------------------------------------

    def to_json_dict(self) -> dict:
        """Deterministically ordered plain-dict form for checkpoints."""
        return {
            "current_max_depth": self.current_max_depth,
            "input_id": self.input_id,
            "nodes": [
                {
                    "id": node.node_id,
                    "kind": node.kind.value,
                    "depth": node.depth,
                    "attributes": {
                        name: [[opt, tau] for opt, tau in table.items()]
                        for name, table in node.attribute_pheromone.items()
                    },
                    "out_edges": list(node.out_edges),
                }
                for node_id, node in sorted(self.nodes.items())
            ],
            "edges": [
                {
                    "id": edge.edge_id,
                    "from": edge.src,
                    "to": edge.dst,
                    "pheromone": edge.pheromone,
                    "heuristic": edge.heuristic,
                }
                for edge_id, edge in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_json_dict(
        cls,
        data: dict,
        space: SearchSpace,
        tau0: float,
        heuristic: Optional[HeuristicProvider] = None,
    ) -> "PheromoneGraph":
        graph = cls.__new__(cls)
        graph.space = space
        graph.tau0 = tau0
        graph.heuristic = heuristic or UniformHeuristic()
        graph.current_max_depth = data["current_max_depth"]
        graph.input_id = data["input_id"]
        graph.nodes = {}
        graph.edges = {}
        graph._node_at = {}
        graph._edge_between = {}
        for entry in data["nodes"]:
            kind = LayerKind(entry["kind"])
            tables = {
                name: {_option_from_json(opt): tau for opt, tau in pairs}
                for name, pairs in entry["attributes"].items()
            }
            node = GraphNode(entry["id"], kind, entry["depth"], tables, list(entry["out_edges"]))
            graph.nodes[node.node_id] = node
            graph._node_at[(kind, node.depth)] = node.node_id
        for entry in data["edges"]:
            edge = PheromoneEdge(
                entry["id"], entry["from"], entry["to"], entry["pheromone"], entry["heuristic"]
            )
            graph.edges[edge.edge_id] = edge
            graph._edge_between[(edge.src, edge.dst)] = edge.edge_id
        graph._next_node_id = max(graph.nodes) + 1 if graph.nodes else 0
        graph._next_edge_id = max(graph.edges) + 1 if graph.edges else 0
        return graph


def _option_from_json(value: object) -> Option:
    # JSON round-trips our option types natively; guard against surprises.
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise GraphError(f"bad attribute option in checkpoint: {value!r}")
    return value
