"""Heterogeneous graph data model, schema derivation, and on-disk dataset I/O.

A graph holds typed node sets, one adjacency per directed relation, per-type
feature matrices, and class labels on a designated primary type.  Every
relation between a pair of types is materialized in both directions: for each
relation (a, r, b) the graph also contains exactly one relation (b, r', a)
whose edge set is the mirror image.  Graphs are immutable after construction;
mutation happens by building a new graph.

Dataset directory format
------------------------
``schema.json``
    ``node_types``: ordered list of ``{name, count, dim, kind}`` where kind is
    ``"continuous"`` or ``"binary"``; ``relations``: ordered list of
    ``{src, rel, dst}``; ``primary_type``; ``n_classes``.
``features_<type>.csv``
    one row per node, ``dim`` comma-separated decimal values, no header,
    row index = node id.
``edges_<src>__<rel>__<dst>.csv``
    header ``src_id,dst_id``, rows sorted lexicographically by (src, dst).
``labels_<primary>.csv``
    header ``node_id,label``, one row per labeled primary node.
``splits.json`` (optional)
    arrays ``train``, ``test``, ``val`` of primary node ids.

All text is UTF-8 with LF line endings; floats are written with full
round-trip precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

FEATURE_KINDS = ("continuous", "binary")


def _sort_pairs(pairs: np.ndarray) -> np.ndarray:
    """Canonical (src, dst) lexicographic order."""
    if len(pairs) == 0:
        return pairs.reshape(0, 2).astype(np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return np.ascontiguousarray(pairs[order], dtype=np.int64)


@dataclass
class Relation:
    """One directed relation and its edge list, kept in canonical sort order."""

    src_type: str
    name: str
    dst_type: str
    pairs: np.ndarray  # (E, 2) int64, sorted by (src, dst)
    _indptr: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.src_type, self.name, self.dst_type)

    @property
    def n_edges(self) -> int:
        return int(len(self.pairs))

    def _index(self, n_src: int) -> np.ndarray:
        if self._indptr is None or len(self._indptr) != n_src + 1:
            counts = np.bincount(self.pairs[:, 0], minlength=n_src) if len(self.pairs) else np.zeros(n_src, dtype=np.int64)
            self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return self._indptr

    def neighbors(self, src_id: int, n_src: int) -> np.ndarray:
        """Destination ids adjacent to ``src_id``, ascending."""
        indptr = self._index(n_src)
        return self.pairs[indptr[src_id]:indptr[src_id + 1], 1]

    def out_degrees(self, n_src: int) -> np.ndarray:
        indptr = self._index(n_src)
        return np.diff(indptr)


@dataclass
class TypeRoles:
    """Primary / trigger / auxiliary role assignment for one attack."""

    primary_type: str
    trigger_type: str
    auxiliary_types: tuple[str, ...]


@dataclass
class ClassPartition:
    """Labeled primary nodes split by the designated target class."""

    target_class: int
    target_nodes: np.ndarray      # ids with label == target_class, ascending
    nontarget_nodes: np.ndarray   # ids with label != target_class, ascending


class HeteroGraph:
    """Immutable typed graph with per-relation adjacency and per-type features.

    Args:
        node_counts: ordered mapping type name -> node count.
        feature_kinds: mapping type name -> "continuous" | "binary".
        features: mapping type name -> (count, dim) float64 matrix.
        relations: ordered list of Relation objects (both directions present).
        primary_type: node type carrying the classification labels.
        n_classes: number of label classes.
        labels: int64 array over primary nodes, -1 marks unlabeled.
        splits: optional {"train": ids, "test": ids, "val": ids}.
    """

    def __init__(
        self,
        node_counts: dict[str, int],
        feature_kinds: dict[str, str],
        features: dict[str, np.ndarray],
        relations: list[Relation],
        primary_type: str,
        n_classes: int,
        labels: np.ndarray,
        splits: dict[str, np.ndarray] | None = None,
    ):
        self.node_counts = dict(node_counts)
        self.feature_kinds = dict(feature_kinds)
        self.features = {t: np.asarray(m, dtype=np.float64) for t, m in features.items()}
        self.relations = [
            Relation(r.src_type, r.name, r.dst_type, _sort_pairs(np.asarray(r.pairs, dtype=np.int64).reshape(-1, 2)))
            for r in relations
        ]
        self.primary_type = primary_type
        self.n_classes = int(n_classes)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.splits = None
        if splits is not None:
            self.splits = {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in splits.items()}
        self._by_pair = {}
        for rel in self.relations:
            pair = (rel.src_type, rel.dst_type)
            if pair in self._by_pair:
                raise DatasetError(f"more than one relation between types {pair[0]} and {pair[1]}")
            self._by_pair[pair] = rel
        self.validate()

    # -- queries ---------------------------------------------------------

    @property
    def node_types(self) -> list[str]:
        return list(self.node_counts)

    @property
    def n_nodes(self) -> int:
        return sum(self.node_counts.values())

    @property
    def n_edges(self) -> int:
        """Total directed edge count over all relations."""
        return sum(r.n_edges for r in self.relations)

    def relation_between(self, src_type: str, dst_type: str) -> Relation | None:
        return self._by_pair.get((src_type, dst_type))

    def reverse_of(self, rel: Relation) -> Relation:
        rev = self.relation_between(rel.dst_type, rel.src_type)
        assert rev is not None  # guaranteed by validate()
        return rev

    def neighbors(self, rel: Relation, src_id: int) -> np.ndarray:
        return rel.neighbors(src_id, self.node_counts[rel.src_type])

    def out_degrees(self, rel: Relation) -> np.ndarray:
        return rel.out_degrees(self.node_counts[rel.src_type])

    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        """Check every structural invariant; raise DatasetError on the first violation."""
        for t, n in self.node_counts.items():
            if n < 0:
                raise DatasetError(f"negative node count for type {t}")
            if t not in self.features:
                raise DatasetError(f"missing feature matrix for type {t}")
            if self.feature_kinds.get(t) not in FEATURE_KINDS:
                raise DatasetError(f"unknown feature kind for type {t}")
            mat = self.features[t]
            if mat.ndim != 2 or mat.shape[0] != n:
                raise DatasetError(f"feature matrix shape mismatch for type {t}: {mat.shape} vs {n} nodes")
            if self.feature_kinds[t] == "binary" and mat.size:
                if not np.all((mat == 0.0) | (mat == 1.0)):
                    raise DatasetError(f"non-binary value in binary-flagged matrix for type {t}")
        if self.primary_type not in self.node_counts:
            raise DatasetError(f"primary type {self.primary_type} not among node types")

        if len(self.node_counts) + len(self.relations) <= 2:
            raise DatasetError("heterogeneity condition violated: need T + |R| > 2")

        for rel in self.relations:
            if rel.src_type == rel.dst_type:
                raise DatasetError(f"self-relation {rel.key} not supported")
            for side, t in ((0, rel.src_type), (1, rel.dst_type)):
                if t not in self.node_counts:
                    raise DatasetError(f"relation {rel.key} references unknown type {t}")
                ids = rel.pairs[:, side]
                if len(ids) and (ids.min() < 0 or ids.max() >= self.node_counts[t]):
                    raise DatasetError(f"id out of range in relation {rel.key} for type {t}")
            if rel.n_edges > 1:
                dup = np.all(rel.pairs[1:] == rel.pairs[:-1], axis=1)
                if dup.any():
                    i = int(np.flatnonzero(dup)[0])
                    raise DatasetError(f"duplicate edge {tuple(rel.pairs[i])} in relation {rel.key}")
            rev = self.relation_between(rel.dst_type, rel.src_type)
            if rev is None:
                raise DatasetError(f"missing reverse relation for {rel.key}")
            mirrored = _sort_pairs(rel.pairs[:, ::-1])
            if mirrored.shape != rev.pairs.shape or not np.array_equal(mirrored, rev.pairs):
                raise DatasetError(f"forward and reverse edge lists differ for {rel.key} / {rev.key}")

        n_primary = self.node_counts[self.primary_type]
        if self.labels.shape != (n_primary,):
            raise DatasetError(f"label array must cover all {n_primary} {self.primary_type} nodes")
        valid = (self.labels == -1) | ((self.labels >= 0) & (self.labels < self.n_classes))
        if not valid.all():
            raise DatasetError("label outside class range")
        if self.splits is not None:
            for part, ids in self.splits.items():
                if len(ids) and (ids.min() < 0 or ids.max() >= n_primary):
                    raise DatasetError(f"split {part} contains id out of range")


def with_reverses(
    specs: list[tuple[str, str, str, list | np.ndarray]],
    reverse_name: str | None = None,
) -> list[Relation]:
    """Expand canonical (src, rel, dst, pairs) specs into both-direction Relations.

    The reverse of relation ``r`` is named ``rev_<r>`` unless reverse_name gives
    an explicit template.
    """
    out = []
    for src, name, dst, pairs in specs:
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        out.append(Relation(src, name, dst, _sort_pairs(arr)))
        rev = reverse_name.format(name) if reverse_name else f"rev_{name}"
        out.append(Relation(dst, rev, src, _sort_pairs(arr[:, ::-1])))
    return out


# -- role derivation and class partition ---------------------------------


def derive_roles(g: HeteroGraph, primary: str, trigger: str) -> TypeRoles:
    """Derive auxiliary types reachable from primary via trigger in two hops.

    A type ``t`` (possibly the primary type itself) is auxiliary when some
    concrete path primary -> trigger -> t exists in the edge data.
    """
    for t in (primary, trigger):
        if t not in g.node_counts:
            raise DatasetError(f"unknown node type {t}")
    if primary == trigger:
        raise DatasetError("primary and trigger types must differ")
    fwd = g.relation_between(primary, trigger)
    if fwd is None:
        raise DatasetError(f"trigger type unreachable: no relation from {primary} to {trigger}")

    # Trigger nodes with at least one primary neighbor.
    reached = np.zeros(g.node_counts[trigger], dtype=bool)
    if fwd.n_edges:
        reached[np.unique(fwd.pairs[:, 1])] = True

    aux = set()
    for rel in g.relations:
        if rel.src_type != trigger or rel.n_edges == 0:
            continue
        if reached[np.unique(rel.pairs[:, 0])].any():
            aux.add(rel.dst_type)
    return TypeRoles(primary_type=primary, trigger_type=trigger, auxiliary_types=tuple(sorted(aux)))


def partition_classes(g: HeteroGraph, roles: TypeRoles, target_class: int) -> ClassPartition:
    """Split labeled primary nodes into target-class and non-target-class sets."""
    labeled = g.labeled_ids()
    lab = g.labels[labeled]
    if target_class not in lab:
        raise DatasetError(f"target class {target_class} not present among {roles.primary_type} labels")
    mask = lab == target_class
    return ClassPartition(
        target_class=int(target_class),
        target_nodes=labeled[mask],
        nontarget_nodes=labeled[~mask],
    )


# -- dataset I/O ----------------------------------------------------------


def _edge_file(src: str, rel: str, dst: str) -> str:
    return f"edges_{src}__{rel}__{dst}.csv"


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetError(f"missing file {path.name}")
    text = path.read_text(encoding="utf-8")
    return [ln for ln in text.split("\n") if ln != ""]


def load_dataset(path: str | Path) -> HeteroGraph:
    """Load a dataset directory into a validated HeteroGraph."""
    root = Path(path)
    schema_path = root / "schema.json"
    if not schema_path.is_file():
        raise DatasetError(f"missing file schema.json in {root}")
    try:
        schema = json.loads(schema_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"schema.json is not valid JSON: {exc}") from exc

    for key in ("node_types", "relations", "primary_type", "n_classes"):
        if key not in schema:
            raise DatasetError(f"schema.json missing key {key}")

    node_counts: dict[str, int] = {}
    feature_kinds: dict[str, str] = {}
    dims: dict[str, int] = {}
    for entry in schema["node_types"]:
        name = entry["name"]
        node_counts[name] = int(entry["count"])
        feature_kinds[name] = entry["kind"]
        dims[name] = int(entry["dim"])

    features = {}
    for name in node_counts:
        lines = _read_lines(root / f"features_{name}.csv")
        if len(lines) != node_counts[name]:
            raise DatasetError(
                f"features_{name}.csv has {len(lines)} rows, schema says {node_counts[name]}"
            )
        if lines:
            mat = np.array([[float(v) for v in ln.split(",")] for ln in lines], dtype=np.float64)
        else:
            mat = np.zeros((0, dims[name]), dtype=np.float64)
        if mat.shape[1] != dims[name]:
            raise DatasetError(f"features_{name}.csv has {mat.shape[1]} columns, schema says {dims[name]}")
        features[name] = mat

    relations = []
    for entry in schema["relations"]:
        src, rel, dst = entry["src"], entry["rel"], entry["dst"]
        lines = _read_lines(root / _edge_file(src, rel, dst))
        if not lines or lines[0] != "src_id,dst_id":
            raise DatasetError(f"{_edge_file(src, rel, dst)} missing src_id,dst_id header")
        if len(lines) > 1:
            pairs = np.array([[int(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.int64)
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
        relations.append(Relation(src, rel, dst, _sort_pairs(pairs)))

    primary = schema["primary_type"]
    if primary not in node_counts:
        raise DatasetError(f"primary type {primary} not among node types")
    labels = np.full(node_counts[primary], -1, dtype=np.int64)
    lines = _read_lines(root / f"labels_{primary}.csv")
    if not lines or lines[0] != "node_id,label":
        raise DatasetError(f"labels_{primary}.csv missing node_id,label header")
    for ln in lines[1:]:
        sid, slab = ln.split(",")
        nid = int(sid)
        if nid < 0 or nid >= node_counts[primary]:
            raise DatasetError(f"id out of range in labels_{primary}.csv: {nid}")
        labels[nid] = int(slab)

    splits = None
    splits_path = root / "splits.json"
    if splits_path.is_file():
        raw = json.loads(splits_path.read_text(encoding="utf-8"))
        splits = {k: np.asarray(raw[k], dtype=np.int64) for k in ("train", "test", "val")}

    return HeteroGraph(
        node_counts=node_counts,
        feature_kinds=feature_kinds,
        features=features,
        relations=relations,
        primary_type=primary,
        n_classes=int(schema["n_classes"]),
        labels=labels,
        splits=splits,
    )


def _fmt_value(v: float, kind: str) -> str:
    if kind == "binary":
        return str(int(v))
    return repr(float(v))


def save_dataset(g: HeteroGraph, path: str | Path) -> None:
    """Write a graph as a dataset directory in canonical form.

    Canonical form means: schema entries in graph order, edge rows in
    (src, dst) lexicographic order, labels ascending by id, floats with full
    round-trip precision.  save_dataset(load_dataset(p)) reproduces p byte
    for byte when p is canonical.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    schema = {
        "node_types": [
            {"name": t, "count": g.node_counts[t], "dim": int(g.features[t].shape[1]), "kind": g.feature_kinds[t]}
            for t in g.node_counts
        ],
        "relations": [{"src": r.src_type, "rel": r.name, "dst": r.dst_type} for r in g.relations],
        "primary_type": g.primary_type,
        "n_classes": g.n_classes,
    }
    (root / "schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")

    for t in g.node_counts:
        kind = g.feature_kinds[t]
        rows = [",".join(_fmt_value(v, kind) for v in row) for row in g.features[t]]
        text = "\n".join(rows)
        (root / f"features_{t}.csv").write_text(text + "\n" if rows else "", encoding="utf-8")

    for rel in g.relations:
        lines = ["src_id,dst_id"]
        lines.extend(f"{s},{d}" for s, d in rel.pairs)
        (root / _edge_file(*rel.key)).write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["node_id,label"]
    for nid in g.labeled_ids():
        lines.append(f"{nid},{g.labels[nid]}")
    (root / f"labels_{g.primary_type}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    if g.splits is not None:
        payload = {k: [int(i) for i in np.sort(g.splits[k])] for k in ("train", "test", "val")}
        (root / "splits.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
