"""Area adjacency graphs and the scaled intrinsic autoregressive structure.

The spatially structured random effect uses a scaled ICAR precision: the
unscaled precision is the graph Laplacian D - A, and the scale factor is
chosen so that, under per-component sum-to-zero constraints, the geometric
mean of the marginal variances equals one. Isolated nodes carry no spatial
structure and are flagged so the mixing model can route their variance
through the unstructured component.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InputError

_EIG_TOL = 1e-9


@dataclass(frozen=True)
class AdjacencyGraph:
    geography_version: str
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    components: tuple[tuple[str, ...], ...]

    def node_index(self, area_id: str) -> int:
        try:
            return self.nodes.index(area_id)
        except ValueError:
            raise InputError(
                f"area {area_id!r} not in {self.geography_version} graph"
            ) from None

    def degree(self, area_id: str) -> int:
        return sum(1 for e in self.edges if area_id in e)


def build_graph(
    edge_list: Iterable[tuple[str, str]],
    node_list: Sequence[str],
    geography_version: str,
) -> AdjacencyGraph:
    """Construct a validated undirected graph with its connected components."""
    nodes = tuple(node_list)
    if not nodes:
        raise InputError("empty node list")
    if len(set(nodes)) != len(nodes):
        raise InputError("duplicate node ids in node list")
    node_set = set(nodes)
    edges = set()
    for a, b in edge_list:
        if a == b:
            raise InputError(f"self-loop on node {a!r}")
        for endpoint in (a, b):
            if endpoint not in node_set:
                raise InputError(f"edge endpoint {endpoint!r} not in node list")
        edges.add((a, b) if a < b else (b, a))

    # connected components via union-find
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict[str, list[str]] = {}
    for n in nodes:
        groups.setdefault(find(n), []).append(n)
    components = tuple(tuple(members) for members in
                       sorted(groups.values(), key=lambda m: nodes.index(m[0])))
    return AdjacencyGraph(geography_version, nodes, frozenset(edges), components)


@dataclass(frozen=True)
class ScaledIcar:
    """Scaled ICAR precision for one graph.

    ``precision`` is kappa * (D - A) with per-component scale factors;
    island (isolated-node) rows are zero and flagged in ``island_mask``.
    ``component_scales`` holds one kappa per component, None for islands.
    ``scale_factor`` summarizes: the single kappa for a connected graph,
    else the geometric mean of the defined per-component factors.
    """

    graph: AdjacencyGraph
    precision: np.ndarray = field(repr=False)
    scale_factor: float
    component_scales: tuple[Optional[float], ...]
    island_mask: np.ndarray = field(repr=False)
    null_space_dim: int

    def __eq__(self, other):  # dataclass default chokes on arrays
        return isinstance(other, ScaledIcar) and other.graph == self.graph

    def __hash__(self):
        return hash(self.graph)


def _constrained_inverse(q: np.ndarray) -> np.ndarray:
    """Generalized inverse of a singular precision on the sum-to-zero subspace."""
    w, vecs = np.linalg.eigh(q)
    inv = np.where(w > _EIG_TOL * max(w[-1], 1.0), 1.0 / np.where(w == 0, 1.0, w), 0.0)
    return (vecs * inv) @ vecs.T


@lru_cache(maxsize=None)
def scale_icar(graph: AdjacencyGraph) -> ScaledIcar:
    """Scale the graph Laplacian so typical marginal variance is one.

    Per connected component of size >= 2: compute the constrained
    generalized inverse of D - A, take the geometric mean kappa of its
    diagonal, and multiply the component block by kappa. Isolated nodes
    are flagged iid-only with kappa undefined.
    """
    n = len(graph.nodes)
    index = {node: i for i, node in enumerate(graph.nodes)}
    lap = np.zeros((n, n))
    for a, b in graph.edges:
        ia, ib = index[a], index[b]
        lap[ia, ib] -= 1.0
        lap[ib, ia] -= 1.0
        lap[ia, ia] += 1.0
        lap[ib, ib] += 1.0

    precision = np.zeros((n, n))
    island_mask = np.zeros(n, dtype=bool)
    component_scales: list[Optional[float]] = []
    for members in graph.components:
        idx = np.array([index[m] for m in members])
        if len(members) == 1:
            island_mask[idx[0]] = True
            component_scales.append(None)
            continue
        block = lap[np.ix_(idx, idx)]
        sigma = _constrained_inverse(block)
        kappa = float(np.exp(np.mean(np.log(np.diag(sigma)))))
        precision[np.ix_(idx, idx)] = kappa * block
        component_scales.append(kappa)

    defined = [k for k in component_scales if k is not None]
    if defined:
        scale_factor = float(np.exp(np.mean(np.log(defined))))
    else:
        scale_factor = float("nan")
    return ScaledIcar(
        graph=graph,
        precision=precision,
        scale_factor=scale_factor,
        component_scales=tuple(component_scales),
        island_mask=island_mask,
        null_space_dim=len(graph.components),
    )


def sample_scaled_icar(icar: ScaledIcar, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw from the scaled ICAR under per-component sum-to-zero constraints.

    Islands are returned as exact zeros (their variance lives in the
    unstructured component). Output shape is (size, n_nodes).
    """
    n = len(icar.graph.nodes)
    out = np.zeros((size, n))
    index = {node: i for i, node in enumerate(icar.graph.nodes)}
    for members in icar.graph.components:
        if len(members) == 1:
            continue
        idx = np.array([index[m] for m in members])
        block = icar.precision[np.ix_(idx, idx)]
        w, vecs = np.linalg.eigh(block)
        keep = w > _EIG_TOL * max(w[-1], 1.0)
        scales = 1.0 / np.sqrt(w[keep])
        z = rng.standard_normal((size, int(keep.sum())))
        out[:, idx] = (z * scales) @ vecs[:, keep].T
    return out


def center_per_component(icar: ScaledIcar, values: np.ndarray) -> np.ndarray:
    """Project a node vector onto per-component sum-to-zero, zeroing islands."""
    out = values.copy()
    index = {node: i for i, node in enumerate(icar.graph.nodes)}
    for members in icar.graph.components:
        idx = np.array([index[m] for m in members])
        if len(members) == 1:
            out[idx[0]] = 0.0
        else:
            out[idx] -= out[idx].mean()
    return out


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def load_graphs(adjacency_path, nodes_path) -> dict[str, AdjacencyGraph]:
    """Load per-geography-version graphs from adjacency.csv and nodes.csv."""
    nodes_by_version: dict[str, list[str]] = {}
    with open(nodes_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"geography_version", "puma"} <= set(reader.fieldnames):
            raise InputError(f"{nodes_path}: expected columns geography_version, puma")
        for i, row in enumerate(reader, start=2):
            version = row["geography_version"].strip()
            nodes_by_version.setdefault(version, []).append(row["puma"].strip())

    edges_by_version: dict[str, list[tuple[str, str]]] = {}
    with open(adjacency_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        expected = {"geography_version", "puma_a", "puma_b"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise InputError(f"{adjacency_path}: expected columns {sorted(expected)}")
        for i, row in enumerate(reader, start=2):
            version = row["geography_version"].strip()
            edges_by_version.setdefault(version, []).append(
                (row["puma_a"].strip(), row["puma_b"].strip())
            )

    graphs = {}
    for version, nodes in nodes_by_version.items():
        try:
            graphs[version] = build_graph(edges_by_version.get(version, []), nodes, version)
        except InputError as exc:
            raise InputError(f"{adjacency_path} ({version}): {exc}") from None
    return graphs


def write_graphs(graphs: dict[str, AdjacencyGraph], adjacency_path, nodes_path) -> None:
    with open(nodes_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("geography_version", "puma"))
        for version in sorted(graphs):
            for node in graphs[version].nodes:
                writer.writerow((version, node))
    with open(adjacency_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("geography_version", "puma_a", "puma_b"))
        for version in sorted(graphs):
            for a, b in sorted(graphs[version].edges):
                writer.writerow((version, a, b))
