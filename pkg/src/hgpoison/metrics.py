"""Attack quality measures: stealthiness, attack success rate, accuracy drop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .hetgraph import HeteroGraph


def wasserstein_1d(a, b) -> float:
    """Exact first Wasserstein distance between two empirical distributions.

    Sorts both samples and integrates |F_a - F_b| over the merged support;
    sizes may differ. Identical multisets give exactly 0.0.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if len(a) == 0 or len(b) == 0:
        raise ValueError("wasserstein_1d requires non-empty samples")
    merged = np.sort(np.concatenate([a, b]))
    deltas = np.diff(merged)
    cdf_a = np.searchsorted(a, merged[:-1], side="right") / len(a)
    cdf_b = np.searchsorted(b, merged[:-1], side="right") / len(b)
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


@dataclass
class StealthReport:
    """Feature- and structure-level similarity between injected and clean nodes."""

    per_dim_wd: list[float]
    mean_wd: float
    sim_feat: float
    degree_gap: float
    sim_struct: float
    w_feat: float
    w_struct: float
    score: float

    def to_dict(self) -> dict:
        return {
            "per_dim_wd": [float(v) for v in self.per_dim_wd],
            "mean_wd": float(self.mean_wd),
            "sim_feat": float(self.sim_feat),
            "degree_gap": float(self.degree_gap),
            "sim_struct": float(self.sim_struct),
            "w_feat": float(self.w_feat),
            "w_struct": float(self.w_struct),
            "score": float(self.score),
        }


def _total_degrees(g: HeteroGraph, node_type: str) -> np.ndarray:
    """Undirected degree per node of a type: out-degree summed over all
    relations leaving it (each undirected edge counted once)."""
    deg = np.zeros(g.node_counts[node_type], dtype=np.int64)
    for rel in g.relations:
        if rel.src_type == node_type:
            deg += g.out_degrees(rel)
    return deg


def stealthiness(clean: HeteroGraph, pg, weights: tuple[float, float] = (0.5, 0.5)) -> StealthReport:
    """Score how much the injected trigger nodes blend in.

    Feature side: mean per-dimension Wasserstein distance between injected
    rows and all clean trigger-type rows, mapped through 1/(1+x). Structure
    side: absolute gap between mean injected degree and mean clean
    trigger-type degree, mapped the same way. The two are mixed by `weights`.
    """
    t_tr = pg.roles.trigger_type
    injected = np.asarray(pg.injected_nodes, dtype=np.int64)
    if len(injected) == 0:
        raise DatasetError("poisoned graph has no injected nodes")
    new_rows = pg.graph.features[t_tr][injected]
    clean_rows = clean.features[t_tr]

    wds = [wasserstein_1d(new_rows[:, j], clean_rows[:, j]) for j in range(clean_rows.shape[1])]
    mean_wd = float(np.mean(wds))
    sim_feat = 1.0 / (1.0 + mean_wd)

    deg_new = float(np.mean(_total_degrees(pg.graph, t_tr)[injected]))
    deg_clean = float(np.mean(_total_degrees(clean, t_tr)))
    gap = abs(deg_new - deg_clean)
    sim_struct = 1.0 / (1.0 + gap)

    w1, w2 = weights
    return StealthReport(
        per_dim_wd=[float(v) for v in wds],
        mean_wd=mean_wd,
        sim_feat=sim_feat,
        degree_gap=gap,
        sim_struct=sim_struct,
        w_feat=float(w1),
        w_struct=float(w2),
        score=w1 * sim_feat + w2 * sim_struct,
    )


@dataclass
class PredictionSet:
    """Predicted classes for primary nodes, from one trained model."""

    preds: dict[int, int]
    model_tag: str = ""                      # "clean-model" | "backdoor-model"
    split_tags: dict[int, str] = field(default_factory=dict)
    accuracy: float | None = None


def asr(preds: PredictionSet, poisoned_test, y_t: int) -> float:
    """Fraction of poisoned test nodes the model sends to the target class."""
    ids = np.asarray(poisoned_test, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("poisoned test set is empty")
    hits = 0
    for i in ids:
        i = int(i)
        if i not in preds.preds:
            raise DatasetError(f"missing prediction for node {i}")
        hits += preds.preds[i] == y_t
    return hits / len(ids)


def cad(acc_clean: float, acc_backdoor: float) -> float:
    """Clean-model accuracy minus backdoor-model accuracy; may be negative."""
    for v in (acc_clean, acc_backdoor):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    return acc_clean - acc_backdoor


def accuracy(preds: PredictionSet, ids, labels: np.ndarray) -> float:
    """Fraction of `ids` predicted with their true label."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("empty id set")
    hits = 0
    for i in ids:
        i = int(i)
        if i not in preds.preds:
            raise DatasetError(f"missing prediction for node {i}")
        hits += preds.preds[i] == int(labels[i])
    return hits / len(ids)


# -- file formats -----------------------------------------------------------


def load_predictions(path: str | Path, model_tag: str = "") -> PredictionSet:
    """Read predictions.csv (`node_id,pred,split_tag`)."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing file {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").split("\n") if ln]
    if not lines or lines[0] != "node_id,pred,split_tag":
        raise DatasetError(f"{path.name} missing node_id,pred,split_tag header")
    preds, tags = {}, {}
    for ln in lines[1:]:
        sid, spred, tag = ln.split(",")
        preds[int(sid)] = int(spred)
        tags[int(sid)] = tag
    return PredictionSet(preds=preds, model_tag=model_tag, split_tags=tags)


def save_predictions(ps: PredictionSet, path: str | Path) -> None:
    lines = ["node_id,pred,split_tag"]
    for i in sorted(ps.preds):
        lines.append(f"{i},{ps.preds[i]},{ps.split_tags.get(i, '')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(payload: dict, path: str | Path) -> None:
    """Dump a metrics report as report.json with full float precision."""
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
