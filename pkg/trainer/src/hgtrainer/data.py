"""Read dataset directories written by the poisoning toolkit.

The on-disk contract is plain files: schema.json, headerless per-type
feature CSVs, headered edge CSVs (one file per directed relation), a labels
CSV listing only labeled primary nodes, splits.json, and (for poisoned
datasets) poison_manifest.json. This module parses those formats directly;
there is no library dependency between the two packages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class RelationEdges:
    src_type: str
    name: str
    dst_type: str
    pairs: np.ndarray  # (E, 2) int64

    @property
    def tag(self) -> str:
        return f"{self.src_type}__{self.name}__{self.dst_type}"


@dataclass
class GraphData:
    node_counts: dict[str, int]
    feature_kinds: dict[str, str]
    features: dict[str, np.ndarray]          # float64 (n, d) per type
    relations: list[RelationEdges]
    primary_type: str
    n_classes: int
    labels: np.ndarray                        # (n_primary,) int64, -1 = unlabeled
    splits: dict[str, np.ndarray] | None = None
    poisoned_test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    target_class: int | None = None

    @property
    def node_types(self) -> list[str]:
        return list(self.node_counts)


def _read_csv_rows(path: Path, expect_header: str | None) -> list[str]:
    if not path.is_file():
        raise DataError(f"missing file {path.name} in {path.parent}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if expect_header is not None:
        if not lines or lines[0] != expect_header:
            raise DataError(f"{path.name} missing expected header {expect_header!r}")
        return [ln for ln in lines[1:] if ln]
    return [ln for ln in lines if ln]


def load_graph_dir(path: str | Path) -> GraphData:
    """Parse one dataset directory into arrays, with basic consistency checks."""
    root = Path(path)
    schema_path = root / "schema.json"
    if not schema_path.is_file():
        raise DataError(f"missing file schema.json in {root}")
    schema = json.loads(schema_path.read_text(encoding="utf-8"))
    for key in ("node_types", "relations", "primary_type", "n_classes"):
        if key not in schema:
            raise DataError(f"schema.json missing key {key}")

    node_counts, feature_kinds, features = {}, {}, {}
    for entry in schema["node_types"]:
        t, n, d = entry["name"], int(entry["count"]), int(entry["dim"])
        node_counts[t] = n
        feature_kinds[t] = entry["kind"]
        rows = _read_csv_rows(root / f"features_{t}.csv", expect_header=None)
        if len(rows) != n:
            raise DataError(f"features_{t}.csv has {len(rows)} rows, schema says {n}")
        mat = np.asarray([[float(v) for v in ln.split(",")] for ln in rows], dtype=np.float64)
        if mat.shape != (n, d):
            raise DataError(f"features_{t}.csv is {mat.shape}, schema says ({n}, {d})")
        features[t] = mat

    relations = []
    for spec in schema["relations"]:
        src, name, dst = spec["src"], spec["rel"], spec["dst"]
        for t in (src, dst):
            if t not in node_counts:
                raise DataError(f"relation {name} references unknown type {t}")
        rows = _read_csv_rows(root / f"edges_{src}__{name}__{dst}.csv", expect_header="src_id,dst_id")
        if rows:
            pairs = np.asarray([[int(v) for v in ln.split(",")] for ln in rows], dtype=np.int64)
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
        if len(pairs) and (
            pairs[:, 0].min() < 0 or pairs[:, 0].max() >= node_counts[src]
            or pairs[:, 1].min() < 0 or pairs[:, 1].max() >= node_counts[dst]
        ):
            raise DataError(f"id out of range in edges for relation {name}")
        relations.append(RelationEdges(src, name, dst, pairs))

    primary = schema["primary_type"]
    if primary not in node_counts:
        raise DataError(f"primary type {primary} not among node types")
    labels = np.full(node_counts[primary], -1, dtype=np.int64)
    for ln in _read_csv_rows(root / f"labels_{primary}.csv", expect_header="node_id,label"):
        sid, slab = ln.split(",")
        nid = int(sid)
        if nid < 0 or nid >= len(labels):
            raise DataError(f"id out of range in labels: {nid}")
        labels[nid] = int(slab)

    splits = None
    if (root / "splits.json").is_file():
        raw = json.loads((root / "splits.json").read_text(encoding="utf-8"))
        splits = {k: np.asarray(raw[k], dtype=np.int64) for k in ("train", "test", "val")}

    poisoned_test = np.zeros(0, dtype=np.int64)
    target_class = None
    if (root / "poison_manifest.json").is_file():
        m = json.loads((root / "poison_manifest.json").read_text(encoding="utf-8"))
        poisoned_test = np.asarray(m.get("poisoned_test", []), dtype=np.int64)
        target_class = int(m["config"]["target_class"])

    return GraphData(
        node_counts=node_counts,
        feature_kinds=feature_kinds,
        features=features,
        relations=relations,
        primary_type=primary,
        n_classes=int(schema["n_classes"]),
        labels=labels,
        splits=splits,
        poisoned_test=poisoned_test,
        target_class=target_class,
    )


def require_splits(g: GraphData) -> dict[str, np.ndarray]:
    if g.splits is None:
        raise DataError("dataset has no splits.json; training needs train/test/val")
    return g.splits
