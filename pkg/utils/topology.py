"""
Network graph: visible/hidden partition, exogenous channels and parent sets.

Index space: neurons are 0..N-1, exogenous channel k is source N+k. Generators
number visible neurons first, then hidden neurons (layer by layer for the layered
generator).

Declarative descriptions (the `topology` section of an experiment config):

    {"generator": "fully_connected", "visible": 4, "hidden": 5, "exogenous": 20}
    {"generator": "layered", "exogenous": 20, "hidden": [16, 8], "visible": 2,
     "skip_inputs": false}
    {"generator": "explicit", "neurons": 3, "visible": [0], "hidden": [1, 2],
     "exogenous": 1, "edges": [["in:0", 1], [1, 2], [2, 0]]}
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.error_handler import TopologyError


GENERATOR_FULLY_CONNECTED = "fully_connected"
GENERATOR_LAYERED = "layered"
GENERATOR_EXPLICIT = "explicit"
EXOGENOUS_PREFIX = "in:"


@dataclass(frozen=True)
class Topology:
    """
    Validated network graph.

    Attributes:
        neuron_count: |V|
        visible: ordered visible neuron indices (X)
        hidden: ordered hidden neuron indices (H)
        exogenous_count: number of exogenous input channels
        parents: parents[i] is the ordered parent list P_i (source indices)
        layers: hidden layers of a layered graph, empty otherwise
    """
    neuron_count: int
    visible: Tuple[int, ...]
    hidden: Tuple[int, ...]
    exogenous_count: int
    parents: Tuple[Tuple[int, ...], ...]
    layers: Tuple[Tuple[int, ...], ...] = field(default=())

    @property
    def source_count(self) -> int:
        return self.neuron_count + self.exogenous_count

    @cached_property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        """All (j, i) pairs, ordered by post-synaptic neuron then parent order."""
        return tuple((j, i) for i in range(self.neuron_count) for j in self.parents[i])

    @cached_property
    def edge_src(self) -> np.ndarray:
        return np.array([j for j, _ in self.edges], dtype=np.int64)

    @cached_property
    def edge_dst(self) -> np.ndarray:
        return np.array([i for _, i in self.edges], dtype=np.int64)

    @cached_property
    def edge_index(self) -> Dict[Tuple[int, int], int]:
        return {edge: e for e, edge in enumerate(self.edges)}

    @cached_property
    def visible_index(self) -> np.ndarray:
        return np.array(self.visible, dtype=np.int64)

    @cached_property
    def hidden_index(self) -> np.ndarray:
        return np.array(self.hidden, dtype=np.int64)

    @cached_property
    def visible_mask(self) -> np.ndarray:
        mask = np.zeros(self.neuron_count, dtype=bool)
        mask[self.visible_index] = True
        return mask

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def mean_in_degree(self) -> float:
        return self.edge_count / self.neuron_count if self.neuron_count else 0.0

    def is_exogenous(self, source: int) -> bool:
        return source >= self.neuron_count

    def source_label(self, source: int) -> str:
        """'in:k' for exogenous channel k, the neuron index otherwise."""
        if self.is_exogenous(source):
            return f"{EXOGENOUS_PREFIX}{source - self.neuron_count}"
        return str(source)

    def parse_source(self, label: Union[int, str]) -> int:
        return _parse_endpoint(label, self.neuron_count, self.exogenous_count)

    def describe(self) -> Dict:
        """Declarative explicit form; build_topology(describe()) reproduces the graph."""
        return {
            "generator": GENERATOR_EXPLICIT,
            "neurons": self.neuron_count,
            "visible": list(self.visible),
            "hidden": list(self.hidden),
            "exogenous": self.exogenous_count,
            "edges": [[self.source_label(j), i] for j, i in self.edges],
            "layers": [list(layer) for layer in self.layers],
        }


def _parse_endpoint(label, neuron_count: int, exogenous_count: int) -> int:
    if isinstance(label, str) and label.startswith(EXOGENOUS_PREFIX):
        try:
            k = int(label[len(EXOGENOUS_PREFIX):])
        except ValueError:
            raise TopologyError(f"Malformed exogenous endpoint '{label}'")
        if not 0 <= k < exogenous_count:
            raise TopologyError(f"Dangling edge endpoint '{label}': only {exogenous_count} exogenous channels")
        return neuron_count + k
    try:
        index = int(label)
    except (TypeError, ValueError):
        raise TopologyError(f"Malformed edge endpoint {label!r}")
    if not 0 <= index < neuron_count:
        raise TopologyError(f"Dangling edge endpoint {index}: only {neuron_count} neurons")
    return index


def _as_count(spec: Dict, key: str, minimum: int = 0) -> int:
    value = spec.get(key, 0)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise TopologyError(f"Topology field '{key}' must be an integer >= {minimum}, got {value!r}")
    return value


def _validate(
    neuron_count: int,
    visible: Sequence[int],
    hidden: Sequence[int],
    exogenous_count: int,
    edges: Sequence[Tuple[int, int]],
    layers: Sequence[Sequence[int]] = (),
) -> Topology:
    if neuron_count < 1:
        raise TopologyError("A topology needs at least one neuron")
    visible_set, hidden_set = set(visible), set(hidden)
    if len(visible_set) != len(visible) or len(hidden_set) != len(hidden):
        raise TopologyError("Visible and hidden lists must not repeat indices")
    overlap = visible_set & hidden_set
    if overlap:
        raise TopologyError(f"Visible and hidden sets overlap on {sorted(overlap)}")
    universe = set(range(neuron_count))
    if visible_set | hidden_set != universe:
        missing = sorted(universe - visible_set - hidden_set)
        extra = sorted((visible_set | hidden_set) - universe)
        raise TopologyError(f"Visible and hidden sets must cover exactly 0..{neuron_count - 1} "
                            f"(missing {missing}, unknown {extra})")

    parents: List[List[int]] = [[] for _ in range(neuron_count)]
    seen = set()
    for j, i in edges:
        if not 0 <= i < neuron_count:
            raise TopologyError(f"Dangling edge endpoint {i}: only {neuron_count} neurons")
        if not 0 <= j < neuron_count + exogenous_count:
            raise TopologyError(f"Dangling edge source {j}")
        if j == i:
            raise TopologyError(f"Self-loop on neuron {i} is not allowed")
        if (j, i) in seen:
            raise TopologyError(f"Duplicate edge {j}->{i}")
        seen.add((j, i))
        parents[i].append(j)

    return Topology(
        neuron_count=neuron_count,
        visible=tuple(int(v) for v in visible),
        hidden=tuple(int(h) for h in hidden),
        exogenous_count=exogenous_count,
        parents=tuple(tuple(p) for p in parents),
        layers=tuple(tuple(layer) for layer in layers),
    )


def fully_connected(visible: int, hidden: int, exogenous: int) -> Topology:
    """Every neuron receives every exogenous channel and every other neuron."""
    n = visible + hidden
    edges = []
    for i in range(n):
        edges.extend((n + k, i) for k in range(exogenous))
        edges.extend((j, i) for j in range(n) if j != i)
    return _validate(n, range(visible), range(visible, n), exogenous, edges)


def layered(exogenous: int, hidden: Sequence[int], visible: int, skip_inputs: bool = False) -> Topology:
    """Feedforward layers: inputs -> hidden[0] -> ... -> hidden[-1] -> visible."""
    hidden = list(hidden)
    if any(size < 1 for size in hidden):
        raise TopologyError(f"Hidden layer sizes must be positive, got {hidden}")
    n = visible + sum(hidden)
    inputs = [n + k for k in range(exogenous)]
    layers = []
    start = visible
    for size in hidden:
        layers.append(list(range(start, start + size)))
        start += size

    edges = []
    previous = inputs
    for layer in layers:
        edges.extend((j, i) for i in layer for j in previous)
        previous = layer
    for i in range(visible):
        sources = list(previous)
        if skip_inputs and layers:
            sources = sources + inputs
        edges.extend((j, i) for j in sources)
    return _validate(n, range(visible), range(visible, n), exogenous, edges, layers)


def build_topology(spec: Dict) -> Topology:
    """
    Build and validate a Topology from a declarative description.

    Args:
        spec: Dict with a 'generator' key (fully_connected, layered or explicit)

    Returns:
        Topology

    Raises:
        TopologyError: overlapping visible/hidden sets, dangling endpoints,
            self-loops or duplicate edges
    """
    generator = spec.get("generator", GENERATOR_EXPLICIT if "edges" in spec else GENERATOR_FULLY_CONNECTED)

    if generator == GENERATOR_FULLY_CONNECTED:
        return fully_connected(_as_count(spec, "visible", 1), _as_count(spec, "hidden"),
                               _as_count(spec, "exogenous"))

    if generator == GENERATOR_LAYERED:
        hidden = spec.get("hidden", [])
        if isinstance(hidden, int):
            hidden = [hidden] if hidden > 0 else []
        return layered(_as_count(spec, "exogenous"), hidden, _as_count(spec, "visible", 1),
                       skip_inputs=bool(spec.get("skip_inputs", False)))

    if generator == GENERATOR_EXPLICIT:
        n = _as_count(spec, "neurons", 1)
        exogenous = _as_count(spec, "exogenous")
        visible = list(spec.get("visible", []))
        hidden = spec.get("hidden")
        if hidden is None:
            hidden = [i for i in range(n) if i not in set(visible)]
        edges = []
        for item in spec.get("edges", []):
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise TopologyError(f"Edge {item!r} must be a [source, target] pair")
            src = _parse_endpoint(item[0], n, exogenous)
            dst = _parse_endpoint(item[1], n, 0)
            edges.append((src, dst))
        layers = [list(layer) for layer in spec.get("layers", [])]
        return _validate(n, visible, list(hidden), exogenous, edges, layers)

    raise TopologyError(f"Unknown topology generator '{generator}'")
