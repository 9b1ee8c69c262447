"""Synthetic attributed graphs with planted bias and injected anomalies.

Edges follow a two-block model on the binary sensitive attribute: a
configurable fraction of edges stays within the same group.  Attributes sit
on latent cluster centers (clusters are drawn independently of the group,
and same-cluster pairs are preferred when wiring edges) plus a group shift
of size ``bias_strength`` along a fixed unit direction, plus Gaussian
noise.  Anomalies are planted as fully connected cliques (structural) and
as attribute rows swapped in from the most distant of a sampled candidate
pool (contextual), with the group assignment of anomalous nodes skewed so
that naive detectors are measurably unfair.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor
from .graph import AttributedGraph
from .sparse import build_csr

__all__ = [
    "GeneratorConfig",
    "InjectionReport",
    "generate_graph",
    "inject_structural_anomalies",
    "inject_contextual_anomalies",
]

# Latent attribute-community structure, independent of the sensitive groups.
# It is what makes injected anomalies reconstructible without relying on
# sensitive information.
N_CLUSTERS = 4
CLUSTER_SPREAD = 1.0
NOISE_SCALE = 0.5
SAME_CLUSTER_PREFERENCE = 0.8
DEFAULT_POOL_SIZE = 50


class GeneratorError(ValueError):
    """Invalid or infeasible generator configuration."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


@dataclass
class GeneratorConfig:
    n_nodes: int = 2000
    n_attrs: int = 16
    minority_ratio: float = 0.15
    homophily: float = 0.8
    avg_degree: float = 10.0
    bias_strength: float = 1.0
    anomaly_ratio: float = 0.08
    anomaly_group_skew: float = 0.7
    structural_fraction: float = 0.5
    clique_size: int = 8
    seed: int = 0

    def validate(self) -> "GeneratorConfig":
        def bad(name, msg):
            raise GeneratorError(f"{name}: {msg}", field_name=name)

        if self.n_nodes < 2:
            bad("n_nodes", "must be at least 2")
        if self.n_attrs < 1:
            bad("n_attrs", "must be at least 1")
        if not (0.0 < self.minority_ratio <= 0.5):
            bad("minority_ratio", "must lie in (0, 0.5]")
        if not (0.0 <= self.homophily <= 1.0):
            bad("homophily", "must lie in [0, 1]")
        if self.avg_degree <= 0:
            bad("avg_degree", "must be positive")
        if self.bias_strength < 0:
            bad("bias_strength", "must be nonnegative")
        if not (0.0 < self.anomaly_ratio < 0.5):
            bad("anomaly_ratio", "must lie in (0, 0.5)")
        if not (0.0 <= self.anomaly_group_skew <= 1.0):
            bad("anomaly_group_skew", "must lie in [0, 1]")
        if not (0.0 <= self.structural_fraction <= 1.0):
            bad("structural_fraction", "must lie in [0, 1]")
        if self.clique_size < 3:
            bad("clique_size", "must be at least 3")
        if self.clique_size > self.n_nodes:
            bad("clique_size", "must not exceed n_nodes")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InjectionReport:
    structural_anomaly_ids: np.ndarray
    contextual_anomaly_ids: np.ndarray
    per_group_anomaly_counts: dict = field(default_factory=dict)

    def all_ids(self) -> np.ndarray:
        return np.concatenate([self.structural_anomaly_ids, self.contextual_anomaly_ids])


def _streams(seed: int, n: int = 8):
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def _sample_partner(rng, i, same_side, other_side, by_cluster_same, by_cluster_other,
                    cluster_of, homophily):
    """Pick an edge partner for node i, preferring the same sensitive group
    with probability `homophily` and the same cluster within the chosen side."""
    same_group = rng.random() < homophily
    side = same_side if same_group else other_side
    cluster_pool = (by_cluster_same if same_group else by_cluster_other)[cluster_of[i]]
    for _ in range(16):
        if len(cluster_pool) > 1 and rng.random() < SAME_CLUSTER_PREFERENCE:
            j = cluster_pool[rng.integers(len(cluster_pool))]
        else:
            j = side[rng.integers(len(side))]
        if j != i:
            return int(j)
    return None


def _draw_edges(rng, s, clusters, cfg: GeneratorConfig):
    n = cfg.n_nodes
    groups = [np.flatnonzero(s == 0), np.flatnonzero(s == 1)]
    if min(len(groups[0]), len(groups[1])) == 0 and cfg.homophily < 1.0:
        raise GeneratorError("cannot draw cross-group edges: one group is empty",
                             field_name="minority_ratio")
    by_cluster = [
        [np.flatnonzero((s == g) & (clusters == c)) for c in range(N_CLUSTERS)]
        for g in (0, 1)
    ]
    m_total = int(round(cfg.avg_degree * n / 2))
    edges = []
    for _ in range(m_total):
        i = int(rng.integers(n))
        g = s[i]
        j = _sample_partner(
            rng, i,
            same_side=groups[g], other_side=groups[1 - g],
            by_cluster_same=by_cluster[g], by_cluster_other=by_cluster[1 - g],
            cluster_of=clusters, homophily=cfg.homophily,
        )
        if j is not None:
            edges.append((i, j))
    return edges


def generate_graph(cfg: GeneratorConfig):
    """Build a labeled biased graph; deterministic given ``cfg.seed``."""
    cfg.validate()
    (rng_s, rng_cluster, rng_edge, rng_attr,
     rng_select, rng_struct, rng_ctx, _spare) = _streams(cfg.seed)
    n, d = cfg.n_nodes, cfg.n_attrs

    s = (rng_s.random(n) < cfg.minority_ratio).astype(np.int64)
    clusters = rng_cluster.integers(0, N_CLUSTERS, size=n)

    edges = _draw_edges(rng_edge, s, clusters, cfg)
    adjacency = build_csr(edges, n)

    centers = CLUSTER_SPREAD * rng_attr.standard_normal((N_CLUSTERS, d))
    u = rng_attr.standard_normal(d)
    u /= np.linalg.norm(u)
    x = centers[clusters] + cfg.bias_strength * s[:, None] * u[None, :]
    x += NOISE_SCALE * rng_attr.standard_normal((n, d))

    n_anom = int(round(cfg.anomaly_ratio * n))
    n_minority_anom = int(round(cfg.anomaly_group_skew * n_anom))
    n_majority_anom = n_anom - n_minority_anom
    minority, majority = np.flatnonzero(s == 1), np.flatnonzero(s == 0)
    if n_minority_anom > len(minority):
        raise GeneratorError(
            f"requested {n_minority_anom} minority anomalies but only "
            f"{len(minority)} minority nodes exist", field_name="anomaly_group_skew")
    if n_majority_anom > len(majority):
        raise GeneratorError(
            f"requested {n_majority_anom} majority anomalies but only "
            f"{len(majority)} majority nodes exist", field_name="anomaly_group_skew")
    chosen = np.concatenate([
        rng_select.choice(minority, size=n_minority_anom, replace=False),
        rng_select.choice(majority, size=n_majority_anom, replace=False),
    ])
    rng_select.shuffle(chosen)
    n_struct = int(round(cfg.structural_fraction * n_anom))
    struct_ids, ctx_ids = chosen[:n_struct], chosen[n_struct:]

    labels = np.zeros(n, dtype=np.int64)
    labels[chosen] = 1
    g = AttributedGraph(n_nodes=n, adjacency=adjacency, attributes=Tensor(x),
                        sensitive=s, labels=labels)

    g, struct_ids = inject_structural_anomalies(
        g, len(struct_ids), cfg.clique_size, rng_struct, node_ids=struct_ids)
    g, ctx_ids = inject_contextual_anomalies(
        g, len(ctx_ids), DEFAULT_POOL_SIZE, rng_ctx, node_ids=ctx_ids)

    report = InjectionReport(
        structural_anomaly_ids=np.sort(struct_ids),
        contextual_anomaly_ids=np.sort(ctx_ids),
        per_group_anomaly_counts={
            0: int((s[chosen] == 0).sum()),
            1: int((s[chosen] == 1).sum()),
        },
    )
    g.meta = {"seed": cfg.seed, "generator_config": cfg.to_dict()}
    return g, report


def inject_structural_anomalies(g: AttributedGraph, count: int, clique_size: int,
                                rng, node_ids=None):
    """Wire `count` nodes into fully connected cliques and label them.

    Nodes are grouped into cliques of `clique_size`; a short remainder forms
    a final smaller clique (merged into the previous one when a single node
    would otherwise be left over).  Returns a new graph.
    """
    if count == 0:
        return g, np.array([], dtype=np.int64)
    if count > g.n_nodes:
        raise ValueError(f"cannot place {count} structural anomalies in {g.n_nodes} nodes")
    if node_ids is None:
        node_ids = rng.choice(g.n_nodes, size=count, replace=False)
    node_ids = np.asarray(node_ids, dtype=np.int64)

    chunks = [node_ids[k:k + clique_size] for k in range(0, count, clique_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()

    new_edges = []
    for clique in chunks:
        for a in range(len(clique)):
            for b in range(a + 1, len(clique)):
                new_edges.append((int(clique[a]), int(clique[b])))
    old_edges = [(i, j) for i, j, _ in g.adjacency.entries() if i < j]
    adjacency = build_csr(old_edges + new_edges, g.n_nodes)

    labels = np.zeros(g.n_nodes, dtype=np.int64) if g.labels is None else g.labels.copy()
    labels[node_ids] = 1
    out = AttributedGraph(g.n_nodes, adjacency, Tensor(g.attributes.data.copy()),
                          g.sensitive.copy(), labels, g.meta)
    return out, node_ids


def inject_contextual_anomalies(g: AttributedGraph, count: int, pool_size: int,
                                rng, node_ids=None):
    """Replace each target's attribute row by the most distant row among a
    sampled candidate pool; candidates keep their original rows."""
    if pool_size < 2:
        raise ValueError("pool_size must be at least 2")
    if count == 0:
        return g, np.array([], dtype=np.int64)
    if node_ids is None:
        node_ids = rng.choice(g.n_nodes, size=count, replace=False)
    node_ids = np.asarray(node_ids, dtype=np.int64)

    anomalous = np.zeros(g.n_nodes, dtype=bool)
    if g.labels is not None:
        anomalous |= g.labels.astype(bool)
    anomalous[node_ids] = True
    candidates_pool = np.flatnonzero(~anomalous)
    if len(candidates_pool) == 0:
        raise ValueError("no normal nodes left to copy attributes from")

    x = g.attributes.data.copy()
    original = g.attributes.data
    k = min(pool_size, len(candidates_pool))
    for i in node_ids:
        cand = rng.choice(candidates_pool, size=k, replace=False)
        dist = np.linalg.norm(original[cand] - original[i], axis=1)
        x[i] = original[cand[int(np.argmax(dist))]]

    labels = np.zeros(g.n_nodes, dtype=np.int64) if g.labels is None else g.labels.copy()
    labels[node_ids] = 1
    out = AttributedGraph(g.n_nodes, g.adjacency, Tensor(x),
                          g.sensitive.copy(), labels, g.meta)
    return out, node_ids
