"""Pick the auxiliary-type nodes each injected trigger connects to.

Three strategies rank the second-hop candidate pool: attention-based (sum of
two-layer attention path products), clustering-based (average pairwise cosine
similarity of embeddings within a type), and random. Rankings are computed
once per attack and shared by every trigger; ties always break toward the
lower node id.

Attention sums use math.fsum over the individual path products, so scores
are independent of accumulation order and reproducible bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .hetgraph import ClassPartition, HeteroGraph, TypeRoles

log = logging.getLogger(__name__)

NodeRef = tuple[str, int]


@dataclass
class NeighborHarvest:
    """First-hop trigger neighbors of target-class nodes and their second hop."""

    roles: TypeRoles
    first_hop: np.ndarray                    # trigger ids, ascending
    second_hop: dict[str, np.ndarray]        # aux type -> ids, ascending
    first_hop_of: dict[int, np.ndarray]      # target-class primary id -> trigger ids


@dataclass
class SurrogateSignals:
    """Attention weights and embeddings exported by a trained surrogate.

    attention maps (src_ref, dst_ref, layer) to a weight; src_ref and dst_ref
    are (type, id) pairs. Layer 1 carries aux->trigger aggregation weights,
    layer 2 trigger->primary. embeddings holds one matrix per node type with a
    common column count; rows of all zeros behave as missing.
    """

    attention: dict[tuple[NodeRef, NodeRef, int], float]
    embeddings: dict[str, np.ndarray]


@dataclass
class SelectionResult:
    """Per-auxiliary-type candidate ranking plus the final picks."""

    strategy: str
    ranked: dict[str, list[tuple[int, float]]]          # (id, score), score non-increasing
    chosen: dict[str, np.ndarray] = field(default_factory=dict)


def harvest(g: HeteroGraph, roles: TypeRoles, part: ClassPartition) -> NeighborHarvest:
    """Gather first-hop trigger neighbors of target-class nodes and the
    second-hop candidates behind them."""
    rel = g.relation_between(roles.primary_type, roles.trigger_type)
    if rel is None:
        raise DatasetError(f"trigger type unreachable: no relation from {roles.primary_type} to {roles.trigger_type}")
    first_hop_of = {}
    chunks = []
    for v in part.target_nodes:
        nbrs = g.neighbors(rel, int(v))
        if len(nbrs):
            first_hop_of[int(v)] = nbrs
            chunks.append(nbrs)
    if not chunks:
        raise DatasetError("target class has no trigger-type neighbors")
    first_hop = np.unique(np.concatenate(chunks))

    second_hop = {}
    for t_b in roles.auxiliary_types:
        rel_b = g.relation_between(roles.trigger_type, t_b)
        if rel_b is None or rel_b.n_edges == 0:
            second_hop[t_b] = np.zeros(0, dtype=np.int64)
            continue
        mask = np.isin(rel_b.pairs[:, 0], first_hop)
        second_hop[t_b] = np.unique(rel_b.pairs[mask, 1])
    return NeighborHarvest(roles=roles, first_hop=first_hop, second_hop=second_hop, first_hop_of=first_hop_of)


def degree_budget(g: HeteroGraph, roles: TypeRoles) -> dict[str, int]:
    """Per auxiliary type: round-half-even mean trigger degree, floored at 1."""
    n_tr = g.node_counts[roles.trigger_type]
    if n_tr < 1:
        raise DatasetError(f"trigger type {roles.trigger_type} has no nodes")
    budgets = {}
    for t_b in roles.auxiliary_types:
        rel = g.relation_between(roles.trigger_type, t_b)
        mean = rel.n_edges / n_tr if rel is not None else 0.0
        budgets[t_b] = max(1, int(round(mean)))
    return budgets


def _rank(scores: dict[int, float]) -> list[tuple[int, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def score_attention(h: NeighborHarvest, s: SurrogateSignals) -> SelectionResult:
    """Rank candidates by summed two-hop attention path products.

    I(w) = sum over target-class nodes v and their first-hop triggers g of
    alpha_1(w, g) * alpha_2(g, v). Missing attention entries count as zero.
    """
    t_p = h.roles.primary_type
    t_tr = h.roles.trigger_type
    in_pool = {t_b: set(int(i) for i in ids) for t_b, ids in h.second_hop.items()}

    # Index layer-1 entries by trigger node, keeping only in-pool sources.
    by_trigger: dict[int, list[tuple[str, int, float]]] = {}
    for (src, dst, layer), w in s.attention.items():
        if layer != 1 or dst[0] != t_tr:
            continue
        pool = in_pool.get(src[0])
        if pool is None or src[1] not in pool:
            continue
        by_trigger.setdefault(dst[1], []).append((src[0], src[1], w))

    products: dict[str, dict[int, list[float]]] = {t_b: {} for t_b in h.second_hop}
    for v, triggers in h.first_hop_of.items():
        for gid in triggers:
            a2 = s.attention.get(((t_tr, int(gid)), (t_p, v), 2))
            if a2 is None or not by_trigger.get(int(gid)):
                continue
            for t_w, wid, a1 in by_trigger[int(gid)]:
                products[t_w].setdefault(wid, []).append(a1 * a2)

    ranked = {}
    for t_b, ids in h.second_hop.items():
        scores = {int(i): math.fsum(products[t_b].get(int(i), ())) for i in ids}
        ranked[t_b] = _rank(scores)
    return SelectionResult(strategy="attention", ranked=ranked)


def score_clustering(h: NeighborHarvest, s: SurrogateSignals) -> SelectionResult:
    """Rank candidates by mean off-diagonal cosine similarity within their type.

    Embedding rows are L2-normalized (zero rows stay zero), S = Z Z^T with the
    diagonal removed, and I(i) is the row mean over the other n-1 candidates.
    Computed through the row-sum identity so no n x n matrix is materialized.
    """
    ranked = {}
    for t_b, ids in h.second_hop.items():
        n = len(ids)
        if n == 0:
            ranked[t_b] = []
            continue
        emb = s.embeddings.get(t_b)
        if emb is None:
            raise DatasetError(f"no embeddings for type {t_b}")
        z = np.array(emb[ids], dtype=np.float64)
        norms = np.linalg.norm(z, axis=1)
        nz = norms > 0.0
        z[nz] /= norms[nz, None]
        if n == 1:
            scores = {int(ids[0]): 0.0}
        else:
            total = z.sum(axis=0)
            row = z @ total               # sum_j S_ij including the diagonal
            self_sim = (z * z).sum(axis=1)
            vals = (row - self_sim) / (n - 1)
            scores = {int(i): float(v) for i, v in zip(ids, vals)}
        ranked[t_b] = _rank(scores)
    return SelectionResult(strategy="clustering", ranked=ranked)


def score_random(h: NeighborHarvest, rng_seed) -> SelectionResult:
    """Uniform random ranking per type; scores are rank placeholders (n-r)/n."""
    rng = np.random.default_rng(rng_seed)
    ranked = {}
    for t_b in sorted(h.second_hop):
        ids = h.second_hop[t_b]
        n = len(ids)
        perm = rng.permutation(n)
        ranked[t_b] = [(int(ids[perm[r]]), (n - r) / n) for r in range(n)]
    return SelectionResult(strategy="random", ranked=ranked)


def choose(sel: SelectionResult, budget: dict[str, int], exclude: dict[str, set[int]] | None = None) -> SelectionResult:
    """Fill sel.chosen with the top-budget ids per type, skipping exclusions.

    When a budget exceeds the candidate pool every available node is taken and
    a warning is logged.
    """
    exclude = exclude or {}
    for t_b, ranking in sel.ranked.items():
        d_b = budget.get(t_b, 0)
        banned = exclude.get(t_b, ())
        picks = []
        for nid, _score in ranking:
            if len(picks) == d_b:
                break
            if nid in banned:
                continue
            picks.append(nid)
        if len(picks) < d_b:
            log.warning("budget %d for type %s exceeds %d available candidates", d_b, t_b, len(picks))
        sel.chosen[t_b] = np.asarray(picks, dtype=np.int64)
    return sel


# -- signals I/O -----------------------------------------------------------


def save_signals(s: SurrogateSignals, path: str | Path) -> None:
    """Write attention.csv and embeddings.csv in canonical sorted order."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    lines = ["layer,src_type,src_id,dst_type,dst_id,weight"]
    rows = sorted((layer, src[0], src[1], dst[0], dst[1], w) for (src, dst, layer), w in s.attention.items())
    lines.extend(f"{l},{st},{si},{dt},{di},{float(w)!r}" for l, st, si, dt, di, w in rows)
    (root / "attention.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["type,id," + ",".join(f"v{j}" for j in range(_emb_dim(s)))]
    for t in sorted(s.embeddings):
        for i, row in enumerate(s.embeddings[t]):
            lines.append(f"{t},{i}," + ",".join(repr(float(v)) for v in row))
    (root / "embeddings.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _emb_dim(s: SurrogateSignals) -> int:
    for mat in s.embeddings.values():
        return int(mat.shape[1])
    return 0


def load_signals(path: str | Path, g: HeteroGraph) -> SurrogateSignals:
    """Read a signals directory; matrices are sized from the graph, rows
    missing from embeddings.csv stay zero."""
    root = Path(path)
    att_path = root / "attention.csv"
    emb_path = root / "embeddings.csv"
    if not att_path.is_file():
        raise DatasetError(f"missing file attention.csv in {root}")
    if not emb_path.is_file():
        raise DatasetError(f"missing file embeddings.csv in {root}")

    attention = {}
    lines = att_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "layer,src_type,src_id,dst_type,dst_id,weight":
        raise DatasetError("attention.csv missing expected header")
    for ln in lines[1:]:
        if not ln:
            continue
        layer, st, si, dt, di, w = ln.split(",")
        attention[((st, int(si)), (dt, int(di)), int(layer))] = float(w)

    lines = emb_path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("type,id,"):
        raise DatasetError("embeddings.csv missing expected header")
    k = len(lines[0].split(",")) - 2
    embeddings = {t: np.zeros((n, k), dtype=np.float64) for t, n in g.node_counts.items()}
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        t, i = parts[0], int(parts[1])
        if t not in embeddings:
            raise DatasetError(f"embeddings.csv references unknown type {t}")
        if i < 0 or i >= len(embeddings[t]):
            raise DatasetError(f"id out of range in embeddings.csv: {t} {i}")
        embeddings[t][i] = [float(v) for v in parts[2:]]
    return SurrogateSignals(attention=attention, embeddings=embeddings)


def fallback_signals(g: HeteroGraph) -> SurrogateSignals:
    """Deterministic stand-in signals when no trained surrogate is available.

    Attention: each destination splits weight uniformly over its incoming
    edges across all relations (same value on layers 1 and 2). Embeddings:
    raw feature rows L2-normalized and zero-padded to the widest type.
    """
    indeg = {t: np.zeros(n, dtype=np.int64) for t, n in g.node_counts.items()}
    for rel in g.relations:
        if rel.n_edges:
            indeg[rel.dst_type] += np.bincount(rel.pairs[:, 1], minlength=g.node_counts[rel.dst_type])

    attention = {}
    for rel in g.relations:
        dst_deg = indeg[rel.dst_type]
        for src_id, dst_id in rel.pairs:
            w = float(1.0 / dst_deg[dst_id])
            key_src = (rel.src_type, int(src_id))
            key_dst = (rel.dst_type, int(dst_id))
            attention[(key_src, key_dst, 1)] = w
            attention[(key_src, key_dst, 2)] = w

    k = max((m.shape[1] for m in g.features.values()), default=0)
    embeddings = {}
    for t, mat in g.features.items():
        z = np.zeros((mat.shape[0], k), dtype=np.float64)
        if mat.size:
            norms = np.linalg.norm(mat, axis=1)
            nz = norms > 0.0
            z[:, : mat.shape[1]] = mat
            z[nz] /= norms[nz, None]
        embeddings[t] = z
    return SurrogateSignals(attention=attention, embeddings=embeddings)
