"""Attention-based graph convolution that interpolates spatial embeddings.

Each layer reweights the embeddings of a node's in-neighbors with a softmax
over attention logits

    leaky_relu(alpha . [m1(e_ji) || m2(z_i) || m2(z_j)])

and replaces every node's embedding by that weighted average. Updates are
synchronous: layer ``u + 1`` reads only layer ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diffengine as de
from .diffengine import Tape, Tensor
from .downstream import _as_tensors, init_mlp, mlp_forward
from .errors import ConfigError, ShapeMismatch
from .spatial_graph import EdgeRep, KnnGraph, edge_features

DEFAULT_DZ = 16
DEFAULT_LAYERS = 2


@dataclass
class EmbeddingTable:
    z: np.ndarray

    @property
    def d_z(self) -> int:
        return self.z.shape[1]


def layer_names(layer: int) -> list[str]:
    return [f"l{layer}.{name}" for name in ("m1.w0", "m1.b0", "m1.w1", "m1.b1",
                                             "m2.w0", "m2.b0", "m2.w1", "m2.b1", "alpha")]


def init_layer(rng: np.random.Generator, d_z: int) -> dict[str, np.ndarray]:
    params = {}
    params.update(init_mlp(rng, [2, d_z, d_z], prefix="m1."))
    params.update(init_mlp(rng, [d_z, d_z, d_z], prefix="m2."))
    params["alpha"] = rng.uniform(-0.1, 0.1, size=3 * d_z)
    return params


def init_signn(rng: np.random.Generator, d_z: int = DEFAULT_DZ,
               n_layers: int = DEFAULT_LAYERS) -> dict[str, np.ndarray]:
    """Parameters for ``n_layers`` layers, keyed ``l{u}.m1.w0`` and so on."""
    if n_layers < 1:
        raise ConfigError("at least one interpolation layer is required")
    theta = {}
    for u in range(n_layers):
        theta.update({f"l{u}.{k}": v for k, v in init_layer(rng, d_z).items()})
    return theta


def split_layers(theta) -> list[dict]:
    layers: dict[int, dict] = {}
    for key, val in theta.items():
        head, _, rest = key.partition(".")
        layers.setdefault(int(head[1:]), {})[rest] = val
    return [layers[u] for u in sorted(layers)]


def edge_inputs(graph: KnnGraph, length_scale: float = 1.0) -> np.ndarray:
    """``(n, k, 2)`` m1 inputs: distance divided by ``length_scale``, then angle."""
    feats = edge_features(graph)
    feats[..., 0] /= length_scale
    return feats


# --------------------------------------------------------------- tape level


def attention_logits(in_edges: np.ndarray, edges: Tensor, Z: Tensor, layer) -> Tensor:
    """``(n, k)`` logits for every in-edge."""
    n, k = in_edges.shape
    e = mlp_forward(edges, layer, prefix="m1.")
    hz = mlp_forward(Z, layer, prefix="m2.")
    hi = de.gather_rows(hz, np.repeat(np.arange(n)[:, None], k, axis=1))
    hj = de.gather_rows(hz, in_edges)
    cat = de.concat(de.concat(e, hi), hj)
    alpha = de.reshape(layer["alpha"], (-1, 1))
    return de.leaky_relu(de.reshape(de.matmul(cat, alpha), (n, k)))


def layer_forward_tensor(in_edges: np.ndarray, edges: Tensor, Z: Tensor, layer) -> Tensor:
    if Z.shape[0] != in_edges.shape[0]:
        raise ShapeMismatch(f"{Z.shape[0]} embedding rows for {in_edges.shape[0]} nodes")
    weights = de.softmax(attention_logits(in_edges, edges, Z, layer))
    return de.weighted_sum(de.gather_rows(Z, in_edges), weights)


def propagate(in_edges: np.ndarray, edges: Tensor, Z0: Tensor, theta) -> Tensor:
    Z = Z0
    for layer in split_layers(theta):
        Z = layer_forward_tensor(in_edges, edges, Z, layer)
    return Z


def query_init(Z_seen: Tensor, graph: KnnGraph, mode: str = "mean") -> Tensor:
    """Seen table with the query's starting row appended.

    A query sitting on a seen node starts from that node's row; otherwise it
    starts from the mean of its in-neighbors (``mode="mean"``) or zeros.
    """
    if graph.query_id is None:
        return Z_seen
    if graph.coincident is not None:
        row = de.gather_rows(Z_seen, [graph.coincident])
    elif mode == "mean":
        nb = de.gather_rows(Z_seen, graph.in_edges[graph.query_id][None, :])
        w = Z_seen.tape.const(np.full((1, graph.k), 1.0 / graph.k))
        row = de.weighted_sum(nb, w)
    elif mode == "zero":
        row = Z_seen.tape.const(np.zeros((1, Z_seen.shape[1])))
    else:
        raise ConfigError(f"unknown query init {mode!r}")
    return de.reshape(de.concat(de.reshape(Z_seen, (-1,)), de.reshape(row, (-1,))),
                      (Z_seen.shape[0] + 1, Z_seen.shape[1]))


# -------------------------------------------------------------- array level


def _edge_vec(e) -> np.ndarray:
    if isinstance(e, EdgeRep):
        return np.array([e.l, e.lam])
    return np.asarray(e, dtype=float).reshape(2)


def attention_logit(e_ji, z_i, z_j, layer) -> float:
    """Unnormalized attention score of one edge.

    ``e_ji`` is an EdgeRep or an already standardized ``(l, lambda)`` pair.
    """
    z_i = np.asarray(z_i, dtype=float)
    z_j = np.asarray(z_j, dtype=float)
    d = layer["alpha"].shape[0] // 3
    if z_i.shape != (d,) or z_j.shape != (d,):
        raise ShapeMismatch(f"embeddings {z_i.shape}, {z_j.shape}; layer expects ({d},)")
    tape = Tape()
    out = attention_logits(np.array([[1]]), tape.const(_edge_vec(e_ji)[None, None, :]),
                           tape.const(np.stack([z_i, z_j])), _as_tensors(tape, layer))
    return float(out.value[0, 0])


def layer_forward(graph: KnnGraph, edge_reps: np.ndarray, Z, layer) -> np.ndarray:
    """One synchronous layer over the whole graph; ``edge_reps`` is ``(n, k, 2)``."""
    tape = Tape()
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] != graph.n:
        raise ShapeMismatch(f"{Z.shape[0]} embedding rows for {graph.n} nodes")
    return layer_forward_tensor(graph.in_edges, tape.const(edge_reps), tape.const(Z),
                                _as_tensors(tape, layer)).value


def attention_weights(graph: KnnGraph, edge_reps: np.ndarray, Z, layer) -> np.ndarray:
    tape = Tape()
    logits = attention_logits(graph.in_edges, tape.const(edge_reps), tape.const(np.asarray(Z, float)),
                              _as_tensors(tape, layer))
    return de.softmax(logits).value


def interpolate(s, graph: KnnGraph, table: EmbeddingTable, theta,
                edge_reps: Optional[np.ndarray] = None, length_scale: float = 1.0,
                init: str = "mean") -> np.ndarray:
    """Embedding of location ``s`` after all interpolation layers.

    ``s`` is a seen node id when ``graph`` has no query; otherwise the query
    row of the augmented graph is returned and ``s`` is ignored. The table is
    never modified.
    """
    if table.z.shape[0] != graph.n_seen:
        raise ShapeMismatch(f"table has {table.z.shape[0]} rows for {graph.n_seen} seen nodes")
    if edge_reps is None:
        edge_reps = edge_inputs(graph, length_scale)
    tape = Tape()
    Z0 = query_init(tape.const(table.z), graph, init)
    Z = propagate(graph.in_edges, tape.const(edge_reps), Z0, _as_tensors(tape, theta))
    row = graph.query_id if graph.query_id is not None else int(s)
    return Z.value[row].copy()
