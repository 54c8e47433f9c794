"""Artifact writers: attention/embedding signals, predictions, run manifest.

Attention rows carry the mean over heads for every edge at every layer,
1-based. Embeddings are the representations feeding the classifier head.
Files are written in canonical sorted order with repr() floats so reruns
are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .errors import DataError
from .train import TrainResult


def export_signals(result: TrainResult, out_dir: str | Path) -> None:
    if result.run.model != "simplehgn":
        raise DataError(f"signal export needs per-edge attention; model {result.run.model} does not expose it")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    result.model.eval()
    with torch.no_grad():
        _, hidden, attentions = result.forward()

    g, pg = result.graph, result.packed
    rows = []
    src_np = pg.edge_src.numpy()
    dst_np = pg.edge_dst.numpy()
    for layer_ix, alpha in enumerate(attentions):
        a = alpha.numpy()
        for rid, (lo, hi) in enumerate(pg.rel_slices):
            st, _, dt = pg.rel_tags[rid]
            s_off, d_off = pg.offsets[st], pg.offsets[dt]
            for e in range(lo, hi):
                rows.append((layer_ix + 1, st, int(src_np[e]) - s_off, dt, int(dst_np[e]) - d_off, float(a[e])))
    rows.sort()
    lines = ["layer,src_type,src_id,dst_type,dst_id,weight"]
    lines.extend(f"{l},{st},{si},{dt},{di},{w!r}" for l, st, si, dt, di, w in rows)
    (root / "attention.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    emb = hidden.numpy()
    lines = ["type,id," + ",".join(f"v{j}" for j in range(emb.shape[1]))]
    for t in sorted(g.node_counts):
        lo, hi = pg.type_slices[t]
        for i, row in enumerate(emb[lo:hi]):
            lines.append(f"{t},{i}," + ",".join(repr(float(v)) for v in row))
    (root / "embeddings.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_predictions(result: TrainResult, out_dir: str | Path) -> Path:
    """Write predictions.csv covering every test-split node, tagged
    poison_test for ids listed in the dataset's poison manifest."""
    g = result.graph
    if g.splits is None:
        raise DataError("dataset has no splits.json; cannot tag a test set")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    preds = result.predictions()
    poisoned = set(g.poisoned_test)
    lines = ["node_id,pred,split_tag"]
    for i in sorted(g.splits["test"]):
        tag = "poison_test" if i in poisoned else "test"
        lines.append(f"{i},{preds[i]},{tag}")
    path = root / "predictions.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def export_manifest(result: TrainResult, out_dir: str | Path, dataset: str) -> Path:
    run = result.run
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "model": run.model,
        "dataset": str(dataset),
        "seed": run.seed,
        "hyperparameters": {
            "hidden": run.hidden,
            "heads": run.heads,
            "layers": run.layers,
            "epochs": run.epochs,
            "lr": run.lr,
            "dropout": run.dropout,
            "weight_decay": run.weight_decay,
            "grad_clip": run.clip,
            "patience": run.patience,
            "optimizer": "AdamW",
            "schedule": "one-cycle",
        },
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "final_train_loss": result.train_loss[-1] if result.train_loss else None,
        "best_val_loss": result.val_loss[result.best_epoch] if result.val_loss else None,
        "attention": "mean over heads per edge, one row per layer (1-based)",
        "embeddings": "final hidden representations before the classifier",
        "metapaths": result.metapaths,
        "torch_version": torch.__version__,
        "num_threads": torch.get_num_threads(),
        "determinism": "manual_seed + use_deterministic_algorithms(True), single thread",
    }
    path = root / "run_manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path
