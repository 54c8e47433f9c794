"""Heterogeneous node-classification models on a packed typed graph.

All three models run full-batch on CPU tensors. The graph is packed once:
node ids become global offsets, every directed relation keeps a contiguous
edge slice so per-edge quantities (attention) can be mapped back to typed
ids for export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .data import GraphData
from .errors import DataError


@dataclass
class PackedGraph:
    types: list[str]
    offsets: dict[str, int]
    n_total: int
    edge_src: torch.Tensor        # (E,) global source ids
    edge_dst: torch.Tensor        # (E,) global destination ids
    edge_rel: torch.Tensor        # (E,) relation ids
    rel_slices: list[tuple[int, int]]   # edge range per relation
    rel_tags: list[tuple[str, str, str]]
    type_slices: dict[str, tuple[int, int]]

    @property
    def n_rels(self) -> int:
        return len(self.rel_tags)


def pack(g: GraphData) -> PackedGraph:
    offsets, start = {}, 0
    type_slices = {}
    for t, n in g.node_counts.items():
        offsets[t] = start
        type_slices[t] = (start, start + n)
        start += n
    srcs, dsts, rels, slices, tags = [], [], [], [], []
    pos = 0
    for rid, rel in enumerate(g.relations):
        srcs.append(rel.pairs[:, 0] + offsets[rel.src_type])
        dsts.append(rel.pairs[:, 1] + offsets[rel.dst_type])
        rels.append(np.full(len(rel.pairs), rid, dtype=np.int64))
        slices.append((pos, pos + len(rel.pairs)))
        tags.append((rel.src_type, rel.name, rel.dst_type))
        pos += len(rel.pairs)
    cat = lambda chunks: torch.from_numpy(np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64))
    return PackedGraph(
        types=list(g.node_counts),
        offsets=offsets,
        n_total=start,
        edge_src=cat(srcs),
        edge_dst=cat(dsts),
        edge_rel=cat(rels),
        rel_slices=slices,
        rel_tags=tags,
        type_slices=type_slices,
    )


def feature_tensor_dict(g: GraphData) -> dict[str, torch.Tensor]:
    return {t: torch.from_numpy(g.features[t]).float() for t in g.node_counts}


def edge_softmax(logits: torch.Tensor, dst: torch.Tensor, n_nodes: int) -> torch.Tensor:
    """Softmax of per-edge logits over the incoming edges of each destination."""
    h = logits.shape[1]
    mx = torch.zeros(n_nodes, h, dtype=logits.dtype)
    mx.scatter_reduce_(0, dst.unsqueeze(1).expand_as(logits), logits, reduce="amax", include_self=False)
    ex = torch.exp(logits - mx[dst])
    denom = torch.zeros(n_nodes, h, dtype=logits.dtype).index_add_(0, dst, ex)
    return ex / (denom[dst] + 1e-16)


class TypedLinear(nn.Module):
    """One Linear per node type, applied on that type's row slice."""

    def __init__(self, in_dims: dict[str, int], out_dim: int):
        super().__init__()
        self.lins = nn.ModuleDict({t: nn.Linear(d, out_dim) for t, d in in_dims.items()})

    def forward(self, feats: dict[str, torch.Tensor], pg: PackedGraph) -> torch.Tensor:
        out = torch.zeros(pg.n_total, next(iter(self.lins.values())).out_features)
        for t, lin in self.lins.items():
            lo, hi = pg.type_slices[t]
            out[lo:hi] = lin(feats[t])
        return out


class SimpleHGNLayer(nn.Module):
    """GAT-style layer with a learned per-relation term in the attention."""

    def __init__(self, hidden: int, heads: int, n_rels: int, dropout: float):
        super().__init__()
        if hidden % heads:
            raise DataError(f"hidden {hidden} not divisible by {heads} heads")
        self.heads, self.dh = heads, hidden // heads
        self.w = nn.Linear(hidden, hidden, bias=False)
        self.rel_emb = nn.Parameter(torch.empty(n_rels, heads, self.dh))
        self.a_src = nn.Parameter(torch.empty(heads, self.dh))
        self.a_dst = nn.Parameter(torch.empty(heads, self.dh))
        self.a_rel = nn.Parameter(torch.empty(heads, self.dh))
        for p in (self.rel_emb, self.a_src, self.a_dst, self.a_rel):
            nn.init.xavier_uniform_(p)
        self.drop = nn.Dropout(dropout)

    def forward(self, h: torch.Tensor, pg: PackedGraph):
        z = self.w(h).view(-1, self.heads, self.dh)
        s_src = (z * self.a_src).sum(-1)              # (N, H)
        s_dst = (z * self.a_dst).sum(-1)
        s_rel = (self.rel_emb * self.a_rel).sum(-1)   # (R, H)
        logits = torch.nn.functional.leaky_relu(
            s_src[pg.edge_src] + s_dst[pg.edge_dst] + s_rel[pg.edge_rel], 0.2
        )
        alpha = edge_softmax(logits, pg.edge_dst, pg.n_total)
        messages = self.drop(alpha).unsqueeze(-1) * z[pg.edge_src]
        agg = torch.zeros_like(z).index_add_(0, pg.edge_dst, messages)
        out = torch.nn.functional.elu(agg.reshape(len(h), -1) + h)
        return out, alpha.mean(dim=1).detach()


class SimpleHGN(nn.Module):
    def __init__(self, in_dims: dict[str, int], n_rels: int, n_classes: int,
                 hidden: int = 64, heads: int = 8, layers: int = 4, dropout: float = 0.2):
        super().__init__()
        self.proj = TypedLinear(in_dims, hidden)
        self.layers = nn.ModuleList(SimpleHGNLayer(hidden, heads, n_rels, dropout) for _ in range(layers))
        self.drop = nn.Dropout(dropout)
        self.classifier = nn.Linear(hidden, n_classes)

    def forward(self, feats: dict[str, torch.Tensor], pg: PackedGraph):
        """Returns logits for every node, the penultimate representations,
        and the per-edge mean-head attention of each layer."""
        h = self.proj(feats, pg)
        attentions = []
        for layer in self.layers:
            h = self.drop(h)
            h, alpha = layer(h, pg)
            attentions.append(alpha)
        return self.classifier(h), h, attentions


class HGTLayer(nn.Module):
    """Transformer-style layer with per-type projections and per-relation
    attention/message transforms."""

    def __init__(self, hidden: int, heads: int, types: list[str], n_rels: int, dropout: float):
        super().__init__()
        if hidden % heads:
            raise DataError(f"hidden {hidden} not divisible by {heads} heads")
        self.heads, self.dh = heads, hidden // heads
        self.k_lin = nn.ModuleDict({t: nn.Linear(hidden, hidden) for t in types})
        self.q_lin = nn.ModuleDict({t: nn.Linear(hidden, hidden) for t in types})
        self.v_lin = nn.ModuleDict({t: nn.Linear(hidden, hidden) for t in types})
        self.a_lin = nn.ModuleDict({t: nn.Linear(hidden, hidden) for t in types})
        self.w_att = nn.Parameter(torch.empty(n_rels, heads, self.dh, self.dh))
        self.w_msg = nn.Parameter(torch.empty(n_rels, heads, self.dh, self.dh))
        nn.init.xavier_uniform_(self.w_att)
        nn.init.xavier_uniform_(self.w_msg)
        self.mu = nn.Parameter(torch.ones(n_rels, heads))
        self.drop = nn.Dropout(dropout)

    def _per_type(self, lins: nn.ModuleDict, h: torch.Tensor, pg: PackedGraph) -> torch.Tensor:
        out = torch.zeros_like(h)
        for t, lin in lins.items():
            lo, hi = pg.type_slices[t]
            out[lo:hi] = lin(h[lo:hi])
        return out.view(-1, self.heads, self.dh)

    def forward(self, h: torch.Tensor, pg: PackedGraph) -> torch.Tensor:
        k = self._per_type(self.k_lin, h, pg)
        q = self._per_type(self.q_lin, h, pg)
        v = self._per_type(self.v_lin, h, pg)

        n_edges = len(pg.edge_src)
        logits = torch.zeros(n_edges, self.heads)
        msg = torch.zeros(n_edges, self.heads, self.dh)
        for rid, (lo, hi) in enumerate(pg.rel_slices):
            if lo == hi:
                continue
            src = pg.edge_src[lo:hi]
            kt = torch.einsum("ehd,hdf->ehf", k[src], self.w_att[rid])
            logits[lo:hi] = (kt * q[pg.edge_dst[lo:hi]]).sum(-1) * self.mu[rid] / math.sqrt(self.dh)
            msg[lo:hi] = torch.einsum("ehd,hdf->ehf", v[src], self.w_msg[rid])

        alpha = edge_softmax(logits, pg.edge_dst, pg.n_total)
        agg = torch.zeros(pg.n_total, self.heads, self.dh)
        agg.index_add_(0, pg.edge_dst, self.drop(alpha).unsqueeze(-1) * msg)
        agg = torch.nn.functional.gelu(agg.reshape(pg.n_total, -1))
        out = torch.zeros_like(h)
        for t, lin in self.a_lin.items():
            lo, hi = pg.type_slices[t]
            out[lo:hi] = lin(agg[lo:hi])
        return out + h


class HGT(nn.Module):
    def __init__(self, in_dims: dict[str, int], types: list[str], n_rels: int, n_classes: int,
                 hidden: int = 64, heads: int = 4, layers: int = 8, dropout: float = 0.2):
        super().__init__()
        self.proj = TypedLinear(in_dims, hidden)
        self.layers = nn.ModuleList(HGTLayer(hidden, heads, types, n_rels, dropout) for _ in range(layers))
        self.drop = nn.Dropout(dropout)
        self.classifier = nn.Linear(hidden, n_classes)

    def forward(self, feats: dict[str, torch.Tensor], pg: PackedGraph):
        h = self.proj(feats, pg)
        for layer in self.layers:
            h = layer(self.drop(h), pg)
        return self.classifier(h), h, []


def metapath_edges(g: GraphData) -> dict[str, np.ndarray]:
    """Primary-to-primary adjacency through each adjacent type.

    For every relation primary -> X, nodes i and j are connected when they
    share an X neighbor. Pairs are deduplicated, i == j excluded, and a
    self-loop is appended for every primary node so isolated nodes still
    attend to themselves.
    """
    p = g.primary_type
    n_p = g.node_counts[p]
    out = {}
    for rel in g.relations:
        if rel.src_type != p or rel.dst_type == p:
            continue
        by_mid: dict[int, list[int]] = {}
        for v, x in rel.pairs:
            by_mid.setdefault(int(x), []).append(int(v))
        pairs = set()
        for members in by_mid.values():
            for i in members:
                for j in members:
                    if i != j:
                        pairs.add((i, j))
        loops = [(i, i) for i in range(n_p)]
        arr = np.asarray(sorted(pairs) + loops, dtype=np.int64)
        out[f"{p}-{rel.dst_type}-{p}"] = arr
    if not out:
        raise DataError(f"no metapaths: no relation leaves primary type {p}")
    return out


class GATLayer(nn.Module):
    def __init__(self, in_dim: int, hidden: int, heads: int, dropout: float):
        super().__init__()
        self.heads, self.dh = heads, hidden // heads
        self.w = nn.Linear(in_dim, hidden, bias=False)
        self.a_src = nn.Parameter(torch.empty(heads, self.dh))
        self.a_dst = nn.Parameter(torch.empty(heads, self.dh))
        nn.init.xavier_uniform_(self.a_src)
        nn.init.xavier_uniform_(self.a_dst)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
        z = self.w(x).view(len(x), self.heads, self.dh)
        logits = torch.nn.functional.leaky_relu(
            (z * self.a_src).sum(-1)[src] + (z * self.a_dst).sum(-1)[dst], 0.2
        )
        alpha = edge_softmax(logits, dst, len(x))
        agg = torch.zeros_like(z).index_add_(0, dst, self.drop(alpha).unsqueeze(-1) * z[src])
        return torch.nn.functional.elu(agg.reshape(len(x), -1))


class HAN(nn.Module):
    """Metapath-level attention over per-metapath GAT embeddings. Only the
    primary type's features are consumed; other types contribute through the
    composed adjacency."""

    def __init__(self, in_dim: int, n_metapaths: int, n_classes: int,
                 hidden: int = 64, heads: int = 4, dropout: float = 0.2):
        super().__init__()
        self.gats = nn.ModuleList(GATLayer(in_dim, hidden, heads, dropout) for _ in range(n_metapaths))
        self.sem_w = nn.Linear(hidden, hidden)
        self.sem_q = nn.Parameter(torch.empty(hidden))
        nn.init.normal_(self.sem_q, std=0.1)
        self.drop = nn.Dropout(dropout)
        self.classifier = nn.Linear(hidden, n_classes)

    def forward(self, x: torch.Tensor, paths: list[tuple[torch.Tensor, torch.Tensor]]):
        zs = [gat(self.drop(x), src, dst) for gat, (src, dst) in zip(self.gats, paths)]
        stack = torch.stack(zs)                                   # (M, N, hidden)
        scores = (torch.tanh(self.sem_w(stack)) @ self.sem_q).mean(dim=1)   # (M,)
        beta = torch.softmax(scores, dim=0)
        z = (beta[:, None, None] * stack).sum(dim=0)
        return self.classifier(self.drop(z)), z, []
