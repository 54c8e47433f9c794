"""End-to-end attack orchestration.

run_attack wires the stages together: split the primary nodes, pick the
poisoned subsets, model trigger features, harvest attachment candidates,
score them once with the chosen strategy, then inject one trigger node per
poisoned target and flip the labels of poisoned train targets. Everything is
deterministic given the config seed; sub-stages draw from tagged child seeds
so adding a stage never shifts another stage's stream.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import edgegen, featuregen
from .errors import ConfigError, DatasetError, HGPoisonError
from .hetgraph import (
    HeteroGraph,
    Relation,
    TypeRoles,
    partition_classes,
    save_dataset,
    load_dataset,
)

log = logging.getLogger(__name__)

STRATEGIES = ("attention", "clustering", "random")

# Seed tags for per-stage child generators.
_SEED_SPLITS = 101
_SEED_FEATURES = 202
_SEED_RANDOM_STRATEGY = 303


@dataclass
class AttackConfig:
    """Attack parameters; defaults follow the usual 5% poison budget."""

    target_class: int
    trigger_type: str
    strategy: str = "attention"
    poison_rate_train: float = 0.05
    poison_rate_test: float = 0.05
    split: tuple[float, float, float] = (0.70, 0.20, 0.10)
    seed: int = 0
    feature_kind: str | None = None       # override the trigger type's declared kind
    clip_features: bool = False
    weights: tuple[float, float] = (0.5, 0.5)

    _FIELDS = (
        "target_class", "trigger_type", "strategy", "poison_rate_train",
        "poison_rate_test", "split", "seed", "feature_kind", "clip_features",
        "weights",
    )

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy}; expected one of {', '.join(STRATEGIES)}")
        for name in ("poison_rate_train", "poison_rate_test"):
            r = getattr(self, name)
            if not 0.0 < r < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {r}")
        if len(self.split) != 3 or any(f <= 0.0 for f in self.split):
            raise ConfigError(f"split must be three positive fractions, got {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.split}")
        if self.feature_kind not in (None, "continuous", "binary"):
            raise ConfigError(f"unknown feature kind {self.feature_kind}")
        if len(self.weights) != 2 or any(w < 0.0 for w in self.weights):
            raise ConfigError(f"weights must be two non-negative numbers, got {self.weights}")

    def to_dict(self) -> dict:
        return {
            "target_class": int(self.target_class),
            "trigger_type": self.trigger_type,
            "strategy": self.strategy,
            "poison_rate_train": float(self.poison_rate_train),
            "poison_rate_test": float(self.poison_rate_test),
            "split": [float(f) for f in self.split],
            "seed": int(self.seed),
            "feature_kind": self.feature_kind,
            "clip_features": bool(self.clip_features),
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        unknown = set(d) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for req in ("target_class", "trigger_type"):
            if req not in d:
                raise ConfigError(f"config missing required key {req}")
        kw = dict(d)
        if "split" in kw:
            kw["split"] = tuple(float(f) for f in kw["split"])
        if "weights" in kw:
            kw["weights"] = tuple(float(w) for w in kw["weights"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg


@dataclass
class Splits:
    train: np.ndarray
    test: np.ndarray
    val: np.ndarray
    poisoned_train: np.ndarray
    poisoned_test: np.ndarray


@dataclass
class PoisonedGraph:
    """A poisoned copy of a clean graph plus full provenance of the edits."""

    graph: HeteroGraph
    roles: TypeRoles
    config: AttackConfig
    injected_nodes: np.ndarray                 # new trigger-type ids
    injected_edges: dict[str, np.ndarray]      # "src__rel__dst" -> (k, 2) pairs
    triggers: list[dict]                       # per-trigger provenance records
    flipped_labels: dict[int, tuple[int, int]]  # id -> (original, new)
    poisoned_train: np.ndarray
    poisoned_test: np.ndarray
    budgets: dict[str, int]
    chosen: dict[str, np.ndarray]


def _poison_draw(rng, split_ids: np.ndarray, labels: np.ndarray, y_t: int, k: int, name: str) -> np.ndarray:
    cands = split_ids[labels[split_ids] != y_t]
    if k > len(cands):
        raise DatasetError(
            f"{name} split has {len(cands)} nodes with label != {y_t}, need {k} for the poison subset"
        )
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(cands, size=k, replace=False))


def make_splits(g: HeteroGraph, roles: TypeRoles, cfg: AttackConfig) -> Splits:
    """Seeded train/test/val partition of labeled primary nodes plus the two
    poisoned subsets (drawn only from nodes whose true label differs from the
    target class). Poison sizes are floor(rate * total primary count)."""
    labeled = g.labeled_ids()
    if len(labeled) < 10:
        raise DatasetError(f"need at least 10 labeled {roles.primary_type} nodes, have {len(labeled)}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _SEED_SPLITS]))
    perm = rng.permutation(labeled)
    n = len(perm)
    n_train = int(round(cfg.split[0] * n))
    n_test = int(round(cfg.split[1] * n))
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:n_train + n_test])
    val = np.sort(perm[n_train + n_test:])

    n_primary = g.node_counts[roles.primary_type]
    k_train = math.floor(cfg.poison_rate_train * n_primary)
    k_test = math.floor(cfg.poison_rate_test * n_primary)
    poisoned_train = _poison_draw(rng, train, g.labels, cfg.target_class, k_train, "train")
    poisoned_test = _poison_draw(rng, test, g.labels, cfg.target_class, k_test, "test")
    return Splits(train=train, test=test, val=val, poisoned_train=poisoned_train, poisoned_test=poisoned_test)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except HGPoisonError as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def _rel_tag(rel: Relation) -> str:
    return f"{rel.src_type}__{rel.name}__{rel.dst_type}"


def run_attack(g: HeteroGraph, roles: TypeRoles, cfg: AttackConfig, signals=None) -> PoisonedGraph:
    """Execute the full attack on a clean graph and return the poisoned copy."""
    cfg.validate()
    if roles.primary_type != g.primary_type:
        raise ConfigError(f"roles use primary type {roles.primary_type} but the graph's is {g.primary_type}")
    if cfg.trigger_type != roles.trigger_type:
        raise ConfigError(f"config trigger type {cfg.trigger_type} does not match roles ({roles.trigger_type})")

    part = _stage("partition", partition_classes, g, roles, cfg.target_class)
    splits = _stage("splits", make_splits, g, roles, cfg)
    targets = np.sort(np.concatenate([splits.poisoned_train, splits.poisoned_test]))
    p = len(targets)
    split_dict = {"train": splits.train, "test": splits.test, "val": splits.val}

    if p == 0:
        graph = HeteroGraph(
            node_counts=g.node_counts,
            feature_kinds=g.feature_kinds,
            features=g.features,
            relations=g.relations,
            primary_type=g.primary_type,
            n_classes=g.n_classes,
            labels=g.labels.copy(),
            splits=split_dict,
        )
        return PoisonedGraph(
            graph=graph, roles=roles, config=cfg,
            injected_nodes=np.zeros(0, dtype=np.int64), injected_edges={},
            triggers=[], flipped_labels={},
            poisoned_train=splits.poisoned_train, poisoned_test=splits.poisoned_test,
            budgets={}, chosen={},
        )

    src = _stage("feature source", featuregen.build_source_set, g, roles, part)
    kind = cfg.feature_kind or g.feature_kinds[roles.trigger_type]
    model = _stage("feature fit", featuregen.fit, src, kind, cfg.clip_features)
    x_new = featuregen.sample(model, p, seed=[cfg.seed, _SEED_FEATURES])

    h = _stage("harvest", edgegen.harvest, g, roles, part)
    budgets = _stage("budget", edgegen.degree_budget, g, roles)
    if cfg.strategy == "attention":
        sig = signals if signals is not None else edgegen.fallback_signals(g)
        sel = _stage("scoring", edgegen.score_attention, h, sig)
    elif cfg.strategy == "clustering":
        sig = signals if signals is not None else edgegen.fallback_signals(g)
        sel = _stage("scoring", edgegen.score_clustering, h, sig)
    else:
        sel = _stage("scoring", edgegen.score_random, h, [cfg.seed, _SEED_RANDOM_STRATEGY])
    # Poisoned targets must not double as attachment points: the trigger
    # already links to its target, and a second (trigger, target) edge on the
    # same relation would be a parallel edge.
    edgegen.choose(sel, budgets, exclude={roles.primary_type: set(int(v) for v in targets)})

    t_tr = roles.trigger_type
    n_tr = g.node_counts[t_tr]
    new_ids = np.arange(n_tr, n_tr + p, dtype=np.int64)

    rel_pt = g.relation_between(roles.primary_type, t_tr)
    rel_tp = g.reverse_of(rel_pt)
    additions: dict[tuple[str, str, str], list[np.ndarray]] = {}
    target_pairs = np.column_stack([targets, new_ids])
    additions[rel_pt.key] = [target_pairs]
    additions[rel_tp.key] = [target_pairs[:, ::-1]]

    attachments = []
    for t_b in roles.auxiliary_types:
        w = sel.chosen.get(t_b)
        if w is None or len(w) == 0:
            continue
        attachments.extend([t_b, int(i)] for i in w)
        rel_tb = g.relation_between(t_tr, t_b)
        rel_bt = g.reverse_of(rel_tb)
        fan = np.column_stack([np.repeat(new_ids, len(w)), np.tile(w, p)])
        additions.setdefault(rel_tb.key, []).append(fan)
        additions.setdefault(rel_bt.key, []).append(fan[:, ::-1])

    relations = []
    injected_edges = {}
    for rel in g.relations:
        extra = additions.get(rel.key)
        if extra:
            added = np.concatenate(extra)
            injected_edges[_rel_tag(rel)] = added
            pairs = np.concatenate([rel.pairs, added])
        else:
            pairs = rel.pairs
        relations.append(Relation(rel.src_type, rel.name, rel.dst_type, pairs))

    features = dict(g.features)
    features[t_tr] = np.vstack([g.features[t_tr], x_new]) if g.features[t_tr].size else x_new
    node_counts = dict(g.node_counts)
    node_counts[t_tr] = n_tr + p

    labels = g.labels.copy()
    flipped = {}
    for v in splits.poisoned_train:
        flipped[int(v)] = (int(labels[v]), int(cfg.target_class))
        labels[v] = cfg.target_class

    triggers = [
        {
            "trigger_id": int(u),
            "target": [roles.primary_type, int(v)],
            "attachments": attachments,
        }
        for u, v in zip(new_ids, targets)
    ]

    graph = _stage("assembly", HeteroGraph,
        node_counts=node_counts,
        feature_kinds=g.feature_kinds,
        features=features,
        relations=relations,
        primary_type=g.primary_type,
        n_classes=g.n_classes,
        labels=labels,
        splits=split_dict,
    )
    return PoisonedGraph(
        graph=graph,
        roles=roles,
        config=cfg,
        injected_nodes=new_ids,
        injected_edges=injected_edges,
        triggers=triggers,
        flipped_labels=flipped,
        poisoned_train=splits.poisoned_train,
        poisoned_test=splits.poisoned_test,
        budgets=budgets,
        chosen={t: np.asarray(w, dtype=np.int64) for t, w in sel.chosen.items()},
    )


# -- export / reload --------------------------------------------------------


def export(pg: PoisonedGraph, path: str | Path) -> None:
    """Write the poisoned dataset directory plus poison_manifest.json."""
    root = Path(path)
    save_dataset(pg.graph, root)
    manifest = {
        "config": pg.config.to_dict(),
        "seed": int(pg.config.seed),
        "roles": {
            "primary_type": pg.roles.primary_type,
            "trigger_type": pg.roles.trigger_type,
            "auxiliary_types": list(pg.roles.auxiliary_types),
        },
        "budgets": {t: int(d) for t, d in pg.budgets.items()},
        "chosen": {t: [int(i) for i in ids] for t, ids in pg.chosen.items()},
        "triggers": pg.triggers,
        "flipped_labels": {str(i): [int(a), int(b)] for i, (a, b) in pg.flipped_labels.items()},
        "poisoned_train": [int(i) for i in pg.poisoned_train],
        "poisoned_test": [int(i) for i in pg.poisoned_test],
        "counts": {
            "injected_nodes": int(len(pg.injected_nodes)),
            "injected_directed_edges": int(sum(len(v) for v in pg.injected_edges.values())),
        },
    }
    (root / "poison_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_poisoned(path: str | Path) -> PoisonedGraph:
    """Reload an exported poisoned dataset together with its manifest."""
    root = Path(path)
    graph = load_dataset(root)
    mpath = root / "poison_manifest.json"
    if not mpath.is_file():
        raise DatasetError(f"missing file poison_manifest.json in {root}")
    m = json.loads(mpath.read_text(encoding="utf-8"))
    cfg = AttackConfig.from_dict(m["config"])
    roles = TypeRoles(
        primary_type=m["roles"]["primary_type"],
        trigger_type=m["roles"]["trigger_type"],
        auxiliary_types=tuple(m["roles"]["auxiliary_types"]),
    )
    injected = np.asarray([t["trigger_id"] for t in m["triggers"]], dtype=np.int64)

    # Target edges and attachment edges can land on the same relation (the
    # primary type is usually also an attachment type), so accumulate rather
    # than assign per relation.
    buckets: dict[str, list[tuple[int, int]]] = {}
    t_tr = roles.trigger_type
    for rec in m["triggers"]:
        u = rec["trigger_id"]
        tt, v = rec["target"]
        rel = graph.relation_between(tt, t_tr)
        buckets.setdefault(_rel_tag(rel), []).append((v, u))
        buckets.setdefault(_rel_tag(graph.reverse_of(rel)), []).append((u, v))
        for t_b, w in rec["attachments"]:
            rel = graph.relation_between(t_tr, t_b)
            buckets.setdefault(_rel_tag(rel), []).append((u, w))
            buckets.setdefault(_rel_tag(graph.reverse_of(rel)), []).append((w, u))
    edge_dict = {tag: np.asarray(pairs, dtype=np.int64) for tag, pairs in buckets.items()}

    return PoisonedGraph(
        graph=graph,
        roles=roles,
        config=cfg,
        injected_nodes=injected,
        injected_edges=edge_dict,
        triggers=m["triggers"],
        flipped_labels={int(k): (int(v[0]), int(v[1])) for k, v in m["flipped_labels"].items()},
        poisoned_train=np.asarray(m["poisoned_train"], dtype=np.int64),
        poisoned_test=np.asarray(m["poisoned_test"], dtype=np.int64),
        budgets={t: int(d) for t, d in m["budgets"].items()},
        chosen={t: np.asarray(ids, dtype=np.int64) for t, ids in m["chosen"].items()},
    )


# -- synthetic graphs --------------------------------------------------------


@dataclass
class SynthSpec:
    """Shape description for a random graph with planted class structure."""

    node_counts: dict[str, int]
    dims: dict[str, int]
    feature_kinds: dict[str, str]
    relations: list[tuple[str, str, str, int]]   # (src, rel, dst, undirected edge count)
    primary_type: str
    n_classes: int
    label_fraction: float = 1.0
    affinity: float = 0.8

    def validate(self) -> None:
        for t, n in self.node_counts.items():
            if n <= 0:
                raise ConfigError(f"type {t} must have at least one node")
            if self.dims.get(t, 0) <= 0:
                raise ConfigError(f"type {t} needs a positive feature dimension")
            if self.feature_kinds.get(t) not in ("continuous", "binary"):
                raise ConfigError(f"type {t} needs feature kind continuous or binary")
        if self.primary_type not in self.node_counts:
            raise ConfigError(f"primary type {self.primary_type} not among node types")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ConfigError("label_fraction must lie in (0, 1]")
        if not 0.0 <= self.affinity <= 1.0:
            raise ConfigError("affinity must lie in [0, 1]")
        seen = set()
        for src, rel, dst, k in self.relations:
            if src == dst:
                raise ConfigError(f"self-relation {rel} not supported")
            for t in (src, dst):
                if t not in self.node_counts:
                    raise ConfigError(f"relation {rel} references unknown type {t}")
            if (src, dst) in seen or (dst, src) in seen:
                raise ConfigError(f"more than one relation between {src} and {dst}")
            seen.add((src, dst))
            n_src, n_dst = self.node_counts[src], self.node_counts[dst]
            if k < n_src + n_dst:
                raise ConfigError(f"relation {rel} needs at least {n_src + n_dst} edges to cover both sides, got {k}")
            if k > 0.8 * n_src * n_dst:
                raise ConfigError(f"relation {rel} too dense: {k} edges over {n_src}x{n_dst} pairs")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            spec = cls(
                node_counts={t: int(n) for t, n in raw["node_counts"].items()},
                dims={t: int(d) for t, d in raw["dims"].items()},
                feature_kinds=dict(raw["feature_kinds"]),
                relations=[(r[0], r[1], r[2], int(r[3])) for r in raw["relations"]],
                primary_type=raw["primary_type"],
                n_classes=int(raw["n_classes"]),
                label_fraction=float(raw.get("label_fraction", 1.0)),
                affinity=float(raw.get("affinity", 0.8)),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigError(f"bad synth spec: {exc}") from exc
        spec.validate()
        return spec


def _biased_pick(rng, members: np.ndarray, n: int, affinity: float) -> int:
    if len(members) and rng.random() < affinity:
        return int(members[rng.integers(len(members))])
    return int(rng.integers(n))


def synth_graph(spec: SynthSpec, seed: int) -> HeteroGraph:
    """Random heterogeneous graph with planted community structure.

    Node communities align with primary labels; edges prefer same-community
    endpoints and every node of both endpoint types gets at least one edge
    per relation. Features separate the communities strongly enough for a
    centroid classifier to clear 80% accuracy.
    """
    spec.validate()
    rng = np.random.default_rng(seed)

    comm = {}
    members = {}
    for t, n in spec.node_counts.items():
        comm[t] = rng.permutation(np.arange(n, dtype=np.int64) % spec.n_classes)
        members[t] = [np.flatnonzero(comm[t] == c) for c in range(spec.n_classes)]

    relations = []
    for src, rel_name, dst, k in spec.relations:
        n_src, n_dst = spec.node_counts[src], spec.node_counts[dst]
        pairs = set()
        for i in range(n_src):
            j = _biased_pick(rng, members[dst][comm[src][i]], n_dst, spec.affinity)
            pairs.add((i, j))
        for j in range(n_dst):
            i = _biased_pick(rng, members[src][comm[dst][j]], n_src, spec.affinity)
            pairs.add((i, j))
        attempts = 0
        while len(pairs) < k:
            if attempts > 100 * k:
                raise DatasetError(f"could not place {k} unique edges for relation {rel_name}")
            i = int(rng.integers(n_src))
            j = _biased_pick(rng, members[dst][comm[src][i]], n_dst, spec.affinity)
            pairs.add((i, j))
            attempts += 1
        arr = np.asarray(sorted(pairs), dtype=np.int64)
        relations.append(Relation(src, rel_name, dst, arr))
        relations.append(Relation(dst, f"rev_{rel_name}", src, arr[:, ::-1]))

    features = {}
    for t, n in spec.node_counts.items():
        d = spec.dims[t]
        if spec.feature_kinds[t] == "continuous":
            centers = rng.normal(0.0, 2.0, size=(spec.n_classes, d))
            features[t] = centers[comm[t]] + rng.normal(0.0, 1.0, size=(n, d))
        else:
            profiles = rng.choice([0.15, 0.85], size=(spec.n_classes, d))
            features[t] = (rng.random((n, d)) < profiles[comm[t]]).astype(np.float64)

    labels = comm[spec.primary_type].astype(np.int64)
    if spec.label_fraction < 1.0:
        n_p = spec.node_counts[spec.primary_type]
        n_unlabeled = n_p - int(round(spec.label_fraction * n_p))
        if n_unlabeled > 0:
            labels = labels.copy()
            labels[rng.choice(n_p, size=n_unlabeled, replace=False)] = -1

    return HeteroGraph(
        node_counts=spec.node_counts,
        feature_kinds=spec.feature_kinds,
        features=features,
        relations=relations,
        primary_type=spec.primary_type,
        n_classes=spec.n_classes,
        labels=labels,
    )
