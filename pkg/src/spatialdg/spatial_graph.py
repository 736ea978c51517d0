"""Directed spatial K-NN graph and the (distance, signed angle) edge features.

Every node ``i`` receives exactly ``k`` in-edges ``j -> i`` from its nearest
neighbors. An edge is described by its length and by the signed turning angle
between the edge direction ``s_j - s_i`` and the direction from ``s_j`` to the
neighbor ``s_k`` of ``j`` whose turning angle is smallest in magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadK, DuplicateLocation, MissingEdge, NonFiniteCoordinate, ZeroVector

COINCIDENT_TOL = 1e-12
COLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class Location:
    id: int
    coord: tuple[float, float]

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.coord):
            raise NonFiniteCoordinate(f"location {self.id} has coordinate {self.coord}")


@dataclass(frozen=True)
class EdgeRep:
    l: float
    lam: float


@dataclass(frozen=True, eq=False)
class KnnGraph:
    """K-NN graph over ``coords``.

    ``in_edges[i]`` lists the ``k`` source ids pointing at node ``i``, sorted by
    (distance, id). When ``query_id`` is set, the last node is an augmented
    query with no out-edges; ``coincident`` names the seen node it sits on, if any.
    """

    coords: np.ndarray
    k: int
    in_edges: np.ndarray
    query_id: Optional[int] = None
    coincident: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def n_seen(self) -> int:
        return self.n - (self.query_id is not None)

    @property
    def nodes(self) -> list[Location]:
        return [Location(i, (float(x), float(y))) for i, (x, y) in enumerate(self.coords)]

    def out_degree(self, node: int) -> int:
        return int(np.count_nonzero(self.in_edges == node))


def _as_coords(locations) -> np.ndarray:
    if len(locations) and isinstance(locations[0], Location):
        ids = [loc.id for loc in locations]
        if ids != list(range(len(locations))):
            raise ValueError("location ids must be contiguous from 0 and in order")
        coords = np.array([loc.coord for loc in locations], dtype=float)
    else:
        coords = np.asarray(locations, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(coords)):
        raise NonFiniteCoordinate("coordinates must be finite")
    return coords


def _nearest(dists: np.ndarray, k: int) -> np.ndarray:
    # lexsort: last key is primary
    order = np.lexsort((np.arange(len(dists)), dists))
    return order[:k]


def build_knn_graph(locations: Sequence, k: int) -> KnnGraph:
    """Build the directed K-NN graph by exhaustive pairwise distances."""
    coords = _as_coords(locations)
    n = len(coords)
    if n == 0:
        raise BadK("cannot build a graph over zero locations")
    if not 1 <= k <= n - 1:
        raise BadK(f"k={k} outside [1, {n - 1}] for {n} locations")

    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[i, j] <= COINCIDENT_TOL:
        raise DuplicateLocation(f"locations {min(i, j)} and {max(i, j)} coincide")

    in_edges = np.stack([_nearest(dist[i], k) for i in range(n)]).astype(np.int64)
    return KnnGraph(coords=coords, k=k, in_edges=in_edges)


def augment_with_query(graph: KnnGraph, s) -> KnnGraph:
    """Append an unseen query node wired to its ``k`` nearest seen nodes.

    A query lying on a seen node (within 1e-12) takes over that node's
    in-edge sources.
    """
    if graph.query_id is not None:
        raise ValueError("graph already carries a query node")
    q = np.asarray(s.coord if isinstance(s, Location) else s, dtype=float).reshape(2)
    if not np.all(np.isfinite(q)):
        raise NonFiniteCoordinate(f"query coordinate {tuple(q)} is not finite")

    dists = np.sqrt(((graph.coords - q) ** 2).sum(-1))
    nearest = int(np.argmin(dists))
    coincident = None
    if dists[nearest] < COINCIDENT_TOL:
        coincident = nearest
        sources = graph.in_edges[nearest].copy()
    else:
        sources = _nearest(dists, graph.k)

    return KnnGraph(
        coords=np.vstack([graph.coords, q]),
        k=graph.k,
        in_edges=np.vstack([graph.in_edges, sources]).astype(np.int64),
        query_id=graph.n,
        coincident=coincident,
    )


def signed_angle(v1, v2) -> tuple[float, int]:
    """Unsigned angle between two planar vectors and the orientation sign.

    The sign is that of the z-component of ``v1 x v2``; it defaults to +1
    when the vectors are colinear.
    """
    x1, y1 = float(v1[0]), float(v1[1])
    x2, y2 = float(v2[0]), float(v2[1])
    n1 = math.hypot(x1, y1)
    n2 = math.hypot(x2, y2)
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroVector("angle undefined for a zero-length vector")
    # normalize first; n1 * n2 can underflow
    cos = (x1 / n1) * (x2 / n2) + (y1 / n1) * (y2 / n2)
    lam_bar = math.acos(min(1.0, max(-1.0, cos)))
    cross = x1 * y2 - y1 * x2
    parity = -1 if cross <= -COLINEAR_TOL else 1
    return lam_bar, parity


def _turning_angle(si, sj, sk) -> float:
    lam_bar, parity = signed_angle(sj - si, sk - sj)
    lam = parity * lam_bar
    if lam >= math.pi:
        lam = -math.pi
    return lam


def _candidates(target: int, source: int, graph: KnnGraph) -> list[int]:
    excluded = {target}
    if target == graph.query_id and graph.coincident is not None:
        excluded.add(graph.coincident)
    return [int(c) for c in graph.in_edges[source] if int(c) not in excluded]


def edge_representation(target_i: int, source_j: int, graph: KnnGraph) -> EdgeRep:
    """Feature pair (length, signed angle) of the edge ``source_j -> target_i``."""
    if source_j not in graph.in_edges[target_i]:
        raise MissingEdge(f"no edge {source_j} -> {target_i}")
    si = graph.coords[target_i]
    sj = graph.coords[source_j]
    l = float(math.hypot(*(sj - si)))

    best = None
    for c in _candidates(target_i, source_j, graph):
        lam = _turning_angle(si, sj, graph.coords[c])
        key = (abs(lam), 0 if lam < 0 else 1, c)
        if best is None or key < best[0]:
            best = (key, lam)
    return EdgeRep(l=l, lam=0.0 if best is None else best[1])


def edge_features(graph: KnnGraph) -> np.ndarray:
    """Raw (l, lambda) for every in-edge, shape ``(n, k, 2)`` aligned with ``in_edges``."""
    out = np.empty(graph.in_edges.shape + (2,))
    for i in range(graph.n):
        for slot, j in enumerate(graph.in_edges[i]):
            rep = edge_representation(i, int(j), graph)
            out[i, slot] = rep.l, rep.lam
    return out


def mean_edge_length(graph: KnnGraph) -> float:
    seen = graph.in_edges[: graph.n_seen]
    diff = graph.coords[seen] - graph.coords[: graph.n_seen, None, :]
    return float(np.sqrt((diff ** 2).sum(-1)).mean())
