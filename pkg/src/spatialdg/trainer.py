"""Joint fitting of embeddings, interpolation layers and hypernetwork.

Three modes share the same loop and objective:

``signn``
    per-location embeddings, interpolated over the K-NN graph and decoded by
    the hypernetwork.
``signn_g``
    one global embedding decoded by the hypernetwork; no interpolation.
``erm``
    a single task model fitted directly to the pooled samples.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import diffengine as de
from .dataio import Dataset, DomainSamples, FeatureStats, STD_FLOOR
from .diffengine import Tape, Tensor
from .downstream import (
    CLASSIFICATION,
    HYPER_HIDDEN,
    REGRESSION,
    TaskModelSpec,
    _as_tensors,
    auc,
    decode_tensor,
    init_hypernet,
    init_task_params,
    mae,
    param_count,
    sample_losses,
    task_forward_rows,
    task_predict,
)
from .errors import (
    BadFraction,
    CheckpointError,
    ConfigError,
    DegenerateLabels,
    EmptyDomain,
    NonFiniteLoss,
    NonFiniteResult,
    ShapeMismatch,
    TooFewLocations,
)
from .signn_core import edge_inputs, init_signn, propagate, query_init
from .spatial_graph import (
    KnnGraph,
    augment_with_query,
    build_knn_graph,
    edge_representation,
    mean_edge_length,
)

log = logging.getLogger(__name__)

MODES = ("signn", "signn_g", "erm")
# a directly parameterized task model lacks the hypernetwork's gain and needs
# larger steps to reach its optimum within the same epoch budget
DEFAULT_LR = {"signn": 1e-3, "signn_g": 1e-3, "erm": 3e-2}
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    k: int = 5
    d_z: int = 16
    n_layers: int = 2
    hyper_hidden: tuple[int, ...] = HYPER_HIDDEN
    task_hidden: tuple[int, ...] = ()
    # None resolves per mode, see DEFAULT_LR
    learning_rate: Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 300
    reg_weight: float = 0.5
    seed: int = 0
    test_fraction: float = 0.2
    kind: str = REGRESSION
    mode: str = "signn"
    # "auto" picks mse for regression and bce for classification
    loss: str = "auto"
    # "domain_mean" sums per-domain mean losses; "sample" sums over all samples
    pooling: str = "domain_mean"
    standardize_distances: bool = True
    query_init: str = "mean"
    equirectangular: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LR[self.mode] if self.mode in DEFAULT_LR else 1e-3
        self.hyper_hidden = tuple(int(h) for h in self.hyper_hidden)
        self.task_hidden = tuple(int(h) for h in self.task_hidden)
        self.validate()

    def validate(self):
        positive = ("k", "d_z", "n_layers", "learning_rate", "eps", "epochs", "threads")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.reg_weight < 0:
            raise ConfigError(f"reg_weight must be >= 0, got {self.reg_weight}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if not 0 < self.test_fraction < 1:
            raise BadFraction(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.loss not in ("auto", "mse", "bce"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.loss == "bce" and self.kind == REGRESSION:
            raise ConfigError("bce loss needs a classification task")
        if self.pooling not in ("domain_mean", "sample"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")
        if self.query_init not in ("mean", "zero"):
            raise ConfigError(f"unknown query_init {self.query_init!r}")
        if any(h < 1 for h in self.hyper_hidden + self.task_hidden):
            raise ConfigError("hidden widths must be >= 1")

    @property
    def loss_kind(self) -> str:
        if self.loss == "auto":
            return self.kind
        return REGRESSION if self.loss == "mse" else CLASSIFICATION

    def task_spec(self, p: int) -> TaskModelSpec:
        return TaskModelSpec(self.kind, (p, *self.task_hidden, 1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyper_hidden"] = list(self.hyper_hidden)
        d["task_hidden"] = list(self.task_hidden)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(d))


# ------------------------------------------------------------------ problem


def project(coords: np.ndarray, lat0: Optional[float]) -> np.ndarray:
    """Planar coordinates ``(x, y)`` from ``(lon, lat)``.

    With ``lat0`` set, longitude is shrunk by ``cos(lat0)``.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if lat0 is None:
        return coords
    return np.column_stack([coords[:, 0] * math.cos(math.radians(lat0)), coords[:, 1]])


@dataclass
class _Problem:
    """Flattened training data plus the seen-location graph."""

    spec: TaskModelSpec
    X: np.ndarray
    y: np.ndarray
    domain_of: np.ndarray
    weight: np.ndarray
    graph: Optional[KnnGraph] = None
    edges: Optional[np.ndarray] = None


def _build_problem(domains: Sequence[DomainSamples], config: TrainConfig,
                   coords: Optional[np.ndarray] = None, length_scale: float = 1.0) -> _Problem:
    if not domains:
        raise TooFewLocations("no training domains")
    for i, d in enumerate(domains):
        if d.n < 1:
            raise EmptyDomain(f"domain {i} at {d.location.coord} has no samples")
    p = domains[0].xs.shape[1]
    if any(d.xs.shape[1] != p for d in domains):
        raise ShapeMismatch("domains disagree on the number of features")
    X = np.concatenate([d.xs for d in domains])
    y = np.concatenate([d.ys for d in domains])
    domain_of = np.concatenate([np.full(d.n, i) for i, d in enumerate(domains)])
    if config.pooling == "domain_mean":
        weight = np.concatenate([np.full(d.n, 1.0 / d.n) for d in domains])
    else:
        weight = np.ones(len(y))
    prob = _Problem(config.task_spec(p), X, y, domain_of, weight)
    if config.mode == "signn":
        if coords is None:
            coords = np.array([d.location.coord for d in domains], dtype=float)
        if len(domains) < config.k + 1:
            raise TooFewLocations(f"{len(domains)} training locations, need at least k+1={config.k + 1}")
        prob.graph = build_knn_graph(coords, config.k)
        prob.edges = edge_inputs(prob.graph, length_scale)
    return prob


def _objective(prob: _Problem, Z: Optional[Tensor], theta, phi, config: TrainConfig) -> Tensor:
    tape = next(iter(phi.values())).tape
    n_dom = int(prob.domain_of.max()) + 1
    if config.mode == "erm":
        W = de.reshape(phi["task"], (1, -1))
        rows = de.gather_rows(W, np.zeros(len(prob.y), dtype=np.int64))
    elif config.mode == "signn_g":
        W = decode_tensor(Z, phi, prob.spec)
        rows = de.gather_rows(W, np.zeros(len(prob.y), dtype=np.int64))
    else:
        if Z.shape[0] != n_dom:
            raise ShapeMismatch(f"{Z.shape[0]} embedding rows for {n_dom} domains")
        Zs = propagate(prob.graph.in_edges, tape.const(prob.edges), Z, theta)
        W = decode_tensor(Zs, phi, prob.spec)
        rows = de.gather_rows(W, prob.domain_of)
    pred = task_forward_rows(rows, prob.spec, tape.const(prob.X))
    per = sample_losses(pred, tape.const(prob.y), config.loss_kind)
    loss = de.total(de.mul(per, tape.const(prob.weight)))
    if Z is not None and config.reg_weight > 0:
        loss = de.add(loss, de.scale(de.sum_sq(Z), config.reg_weight))
    return loss


def objective(domains: Sequence[DomainSamples], Z, theta, phi, config: TrainConfig) -> Tensor:
    """Summed per-domain prediction loss plus ``reg_weight * ||Z||^2``.

    Parameters may be arrays or Tensors on a shared tape; arrays are recorded
    as constants on a fresh tape. The graph is built over the domains' own
    coordinates with raw edge lengths.
    """
    tensors = [v for v in [Z, *(theta or {}).values(), *phi.values()] if isinstance(v, Tensor)]
    tape = tensors[0].tape if tensors else Tape()
    if Z is not None and not isinstance(Z, Tensor):
        Z = tape.const(Z)
    theta = _as_tensors(tape, theta) if theta is not None else None
    phi = _as_tensors(tape, phi)
    return _objective(_build_problem(domains, config), Z, theta, phi, config)


# -------------------------------------------------------------------- adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    b1, b2 = betas
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeMismatch(f"{name}: param {p.shape}, grad {g.shape}, state {state.m[name].shape}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(new_m, new_v, t)


# ------------------------------------------------------------------- model


@dataclass
class TrainedModel:
    config: TrainConfig
    spec: TaskModelSpec
    seen_coords: np.ndarray
    feature_stats: FeatureStats
    length_scale: float = 1.0
    lat0: Optional[float] = None
    Z: Optional[np.ndarray] = None
    theta: Optional[dict[str, np.ndarray]] = None
    phi: dict[str, np.ndarray] = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    schema: dict = field(default_factory=dict)

    def __post_init__(self):
        self._graph: Optional[KnnGraph] = None
        self._edges: Optional[np.ndarray] = None

    @property
    def graph(self) -> KnnGraph:
        if self._graph is None:
            self._graph = build_knn_graph(project(self.seen_coords, self.lat0), self.config.k)
            self._edges = edge_inputs(self._graph, self.length_scale)
        return self._graph

    def _query_edges(self, g: KnnGraph) -> np.ndarray:
        q = g.query_id
        row = np.array([[r.l / self.length_scale, r.lam]
                        for r in (edge_representation(q, int(j), g) for j in g.in_edges[q])])
        return np.concatenate([self._edges, row[None]], axis=0)

    def embedding_at(self, coord) -> np.ndarray:
        """Interpolated embedding at ``(lon, lat)`` (``signn`` mode only)."""
        if self.config.mode != "signn":
            raise ConfigError(f"mode {self.config.mode!r} has no location embeddings")
        g = augment_with_query(self.graph, project(np.asarray(coord, float), self.lat0)[0])
        tape = Tape()
        Z0 = query_init(tape.const(self.Z), g, self.config.query_init)
        Z = propagate(g.in_edges, tape.const(self._query_edges(g)), Z0, _as_tensors(tape, self.theta))
        return Z.value[g.query_id].copy()

    def weights_at(self, coord) -> np.ndarray:
        """Flat task-model weights generated for ``(lon, lat)``."""
        mode = self.config.mode
        if mode == "erm":
            return self.phi["task"].copy()
        z = self.Z[0] if mode == "signn_g" else self.embedding_at(coord)
        tape = Tape()
        return decode_tensor(tape.const(z), _as_tensors(tape, self.phi), self.spec).value

    def predict(self, coord, xs) -> np.ndarray:
        """Predictions at ``(lon, lat)`` for raw (unscaled) feature rows."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.spec.n_features:
            raise ShapeMismatch(f"{xs.shape[1]} features given, model expects {self.spec.n_features}")
        return task_predict(self.weights_at(coord), self.spec, self.feature_stats.apply(xs))


# ------------------------------------------------------------------- train


def _init_params(rng: np.random.Generator, config: TrainConfig, spec: TaskModelSpec, n_seen: int):
    Z = theta = None
    if config.mode == "erm":
        phi = {"task": init_task_params(rng, spec)}
    else:
        rows = n_seen if config.mode == "signn" else 1
        Z = rng.normal(0.0, 0.1, size=(rows, config.d_z))
        if config.mode == "signn":
            theta = init_signn(rng, config.d_z, config.n_layers)
        phi = init_hypernet(rng, config.d_z, spec, config.hyper_hidden)
    return Z, theta, phi


def _flat(Z, theta, phi) -> dict[str, np.ndarray]:
    params = {}
    if Z is not None:
        params["Z"] = Z
    for k, v in (theta or {}).items():
        params[f"theta.{k}"] = v
    for k, v in phi.items():
        params[f"phi.{k}"] = v
    return params


def _unflat(params: Mapping[str, np.ndarray]):
    Z = params.get("Z")
    theta = {k[6:]: v for k, v in params.items() if k.startswith("theta.")} or None
    phi = {k[4:]: v for k, v in params.items() if k.startswith("phi.")}
    return Z, theta, phi


def _value_and_grad(prob: _Problem, params: Mapping[str, np.ndarray], config: TrainConfig):
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    Z, theta, phi = _unflat(leaves)
    loss = _objective(prob, Z, theta, phi, config)
    grads = de.backward(tape, loss)
    return float(loss.value), {k: grads[t.id] for k, t in leaves.items()}


def train(dataset: Dataset, config: TrainConfig) -> TrainedModel:
    """Fit on every domain of ``dataset``; features are z-scored internally.

    Full-batch Adam for ``config.epochs`` steps. ``history[e]`` is the
    objective evaluated before step ``e``.
    """
    config.validate()
    if dataset.kind != config.kind:
        raise ConfigError(f"dataset is {dataset.kind}, config expects {config.kind}")
    domains = dataset.domains
    n = len(domains)
    if n < (config.k + 1 if config.mode == "signn" else 1):
        raise TooFewLocations(f"{n} training locations, need at least {config.k + 1}")

    pooled = np.concatenate([d.xs for d in domains])
    stats = FeatureStats(pooled.mean(axis=0), np.maximum(pooled.std(axis=0), STD_FLOOR))
    scaled = [replace(d, xs=stats.apply(d.xs)) for d in domains]
    raw = np.array([d.location.coord for d in domains], dtype=float)
    lat0 = float(raw[:, 1].mean()) if config.equirectangular else None
    coords = project(raw, lat0)

    length_scale = 1.0
    if config.mode == "signn" and config.standardize_distances:
        length_scale = mean_edge_length(build_knn_graph(coords, config.k))
    prob = _build_problem(scaled, config, coords, length_scale)

    rng = np.random.default_rng(config.seed)
    Z, theta, phi = _init_params(rng, config, prob.spec, n)
    params = _flat(Z, theta, phi)
    state = AdamState.zeros_like(params)
    history = []
    betas = (config.beta1, config.beta2)

    with threadpool_limits(limits=config.threads):
        for epoch in range(config.epochs):
            try:
                value, grads = _value_and_grad(prob, params, config)
            except NonFiniteResult as exc:
                raise NonFiniteLoss(f"epoch {epoch}: {exc}") from exc
            if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"epoch {epoch}: objective {value}, last finite "
                                    f"{history[-1] if history else 'n/a'}")
            history.append(value)
            params, state = adam_step(params, grads, state, config.learning_rate, betas, config.eps)
            if epoch % 50 == 0:
                log.debug("epoch %d objective %.6f", epoch, value)

    Z, theta, phi = _unflat(params)
    return TrainedModel(config=config, spec=prob.spec, seen_coords=raw, feature_stats=stats,
                        length_scale=length_scale, lat0=lat0, Z=Z, theta=theta, phi=phi,
                        history=history, feature_names=list(dataset.feature_names),
                        schema=dict(dataset.schema))


# ---------------------------------------------------------------- evaluate


@dataclass
class EvalReport:
    mode: str
    metric_name: str
    overall: float
    per_domain: list[dict]
    predictions: list[np.ndarray] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "metric_name": self.metric_name, "overall": self.overall,
                "per_domain": self.per_domain}


def evaluate(model: TrainedModel, test_domains: Sequence[DomainSamples]) -> EvalReport:
    """Score the generated model at every test location.

    Regression reports MAE, classification AUC; ``overall`` pools all test
    samples. A per-domain AUC is ``None`` when that domain has one class only.
    """
    if not test_domains:
        raise ValueError("no test domains")
    kind = model.config.kind
    preds, per_domain = [], []
    for d in test_domains:
        if d.xs.shape[1] != model.spec.n_features:
            raise ShapeMismatch(f"test domain has {d.xs.shape[1]} features, model expects "
                                f"{model.spec.n_features}")
        p = model.predict(d.location.coord, d.xs)
        preds.append(p)
        if kind == REGRESSION:
            value = mae(p, d.ys)
        else:
            try:
                value = auc(p, d.ys)
            except DegenerateLabels:
                value = None
        per_domain.append({"lat": d.lat, "lon": d.lon, "n": d.n, "value": value})
    all_p = np.concatenate(preds)
    all_y = np.concatenate([d.ys for d in test_domains])
    if kind == REGRESSION:
        name, overall = "mae", mae(all_p, all_y)
    else:
        name, overall = "auc", auc(all_p, all_y)
    return EvalReport(model.config.mode, name, overall, per_domain, preds)


def split_domains(locations, test_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Seeded leave-locations-out split; returns sorted (train ids, test ids)."""
    n = locations if isinstance(locations, int) else len(locations)
    if n < 2:
        raise TooFewLocations(f"need at least 2 locations to split, got {n}")
    if not 0 < test_fraction < 1:
        raise BadFraction(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(n - 1, max(1, math.ceil(n * test_fraction - 1e-9)))
    perm = np.random.default_rng(seed).permutation(n)
    return sorted(int(i) for i in perm[n_test:]), sorted(int(i) for i in perm[:n_test])


# -------------------------------------------------------------- checkpoint


def _tensor(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _array(t: Mapping, where: str) -> np.ndarray:
    try:
        shape = [int(s) for s in t["shape"]]
        data = np.array(t["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{where}: malformed tensor") from exc
    if data.size != int(np.prod(shape)):
        raise CheckpointError(f"{where}: {data.size} values for shape {shape}")
    return data.reshape(shape)


def checkpoint_dict(model: TrainedModel) -> dict:
    cfg = model.config.to_dict()
    cfg["task_layer_sizes"] = list(model.spec.layer_sizes)
    cfg["feature_names"] = list(model.feature_names)
    cfg["schema"] = dict(model.schema)
    doc = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "seen_locations": [{"lat": float(lat), "lon": float(lon)} for lon, lat in model.seen_coords],
        "standardization": {
            "feature_mean": _tensor(model.feature_stats.mean),
            "feature_std": _tensor(model.feature_stats.std),
            "length_scale": float(model.length_scale),
            "lat0": model.lat0,
        },
    }
    if model.Z is not None:
        doc["Z"] = _tensor(model.Z)
    if model.theta is not None:
        doc["theta"] = {k: _tensor(v) for k, v in sorted(model.theta.items())}
    doc["phi"] = {k: _tensor(v) for k, v in sorted(model.phi.items())}
    return doc


def save_checkpoint(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model), indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> TrainedModel:
    """Read a checkpoint and check every tensor shape against its config."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)


def model_from_dict(doc: Mapping) -> TrainedModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {doc.get('format_version')!r}")
    cfg = dict(doc["config"])
    sizes = cfg.pop("task_layer_sizes")
    names = cfg.pop("feature_names", [])
    schema = cfg.pop("schema", {})
    config = TrainConfig.from_dict(cfg)
    spec = config.task_spec(int(sizes[0]))
    if list(spec.layer_sizes) != list(sizes):
        raise CheckpointError(f"task layer sizes {sizes} disagree with config")

    seen = np.array([[loc["lon"], loc["lat"]] for loc in doc["seen_locations"]], dtype=float)
    seen = seen.reshape(-1, 2)
    std = doc["standardization"]
    stats = FeatureStats(_array(std["feature_mean"], "feature_mean"), _array(std["feature_std"], "feature_std"))

    Z = _array(doc["Z"], "Z") if "Z" in doc else None
    theta = {k: _array(v, f"theta.{k}") for k, v in doc["theta"].items()} if "theta" in doc else None
    phi = {k: _array(v, f"phi.{k}") for k, v in doc["phi"].items()}

    ref_Z, ref_theta, ref_phi = _init_params(np.random.default_rng(0), config, spec, len(seen))
    _check_shapes("Z", Z, ref_Z)
    _check_shapes("theta", theta, ref_theta)
    _check_shapes("phi", phi, ref_phi)
    for name, arr in (("feature_mean", stats.mean), ("feature_std", stats.std)):
        if arr.shape != (spec.n_features,):
            raise CheckpointError(f"{name} has shape {arr.shape}, expected ({spec.n_features},)")

    return TrainedModel(config=config, spec=spec, seen_coords=seen, feature_stats=stats,
                        length_scale=float(std["length_scale"]), lat0=std.get("lat0"),
                        Z=Z, theta=theta, phi=phi, feature_names=list(names), schema=dict(schema))


def _check_shapes(block: str, got, want):
    if want is None or got is None:
        if (want is None) != (got is None):
            raise CheckpointError(f"block {block!r} {'missing' if got is None else 'unexpected'}")
        return
    if isinstance(want, np.ndarray):
        if got.shape != want.shape:
            raise CheckpointError(f"{block} has shape {got.shape}, expected {want.shape}")
        return
    if set(got) != set(want):
        raise CheckpointError(f"{block} keys {sorted(got)} differ from {sorted(want)}")
    for k in want:
        if got[k].shape != want[k].shape:
            raise CheckpointError(f"{block}.{k} has shape {got[k].shape}, expected {want[k].shape}")
