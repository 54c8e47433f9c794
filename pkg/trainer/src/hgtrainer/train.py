"""Full-batch training with early stopping on validation loss."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import torch
from torch import nn

from .data import GraphData, require_splits
from .errors import ConfigError, DivergenceError
from .models import HAN, HGT, PackedGraph, SimpleHGN, feature_tensor_dict, metapath_edges, pack

# Per-architecture depth and head counts; everything else is shared.
MODEL_DEFAULTS = {
    "simplehgn": {"heads": 8, "layers": 4},
    "hgt": {"heads": 4, "layers": 8},
    "han": {"heads": 4, "layers": 1},
}


@dataclass
class TrainRun:
    model: str = "simplehgn"
    seed: int = 0
    hidden: int = 64
    epochs: int = 400
    lr: float = 1e-3
    dropout: float = 0.2
    weight_decay: float = 1e-4
    clip: float = 1.0
    patience: int = 30
    heads: int | None = None
    layers: int | None = None

    def resolve(self) -> "TrainRun":
        if self.model not in MODEL_DEFAULTS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {sorted(MODEL_DEFAULTS)}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        out = copy.copy(self)
        defaults = MODEL_DEFAULTS[self.model]
        if out.heads is None:
            out.heads = defaults["heads"]
        if out.layers is None:
            out.layers = defaults["layers"]
        return out


@dataclass
class TrainResult:
    run: TrainRun
    graph: GraphData
    packed: PackedGraph
    model: nn.Module
    metapaths: list[str] = field(default_factory=list)
    path_tensors: list = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def forward(self):
        feats = feature_tensor_dict(self.graph)
        if self.run.model == "han":
            return self.model(feats[self.graph.primary_type], self.path_tensors)
        return self.model(feats, self.packed)

    def predictions(self) -> dict[int, int]:
        """Predicted class per primary-type node, keyed by local id."""
        self.model.eval()
        with torch.no_grad():
            logits, _, _ = self.forward()
        if self.run.model != "han":
            lo, hi = self.packed.type_slices[self.graph.primary_type]
            logits = logits[lo:hi]
        pred = logits.argmax(dim=1)
        return {i: int(pred[i]) for i in range(len(pred))}


def build(g: GraphData, run: TrainRun) -> TrainResult:
    run = run.resolve()
    pg = pack(g)
    in_dims = {t: g.features[t].shape[1] for t in g.node_counts}
    result = TrainResult(run=run, graph=g, packed=pg, model=None)
    if run.model == "simplehgn":
        result.model = SimpleHGN(in_dims, pg.n_rels, g.n_classes,
                                 run.hidden, run.heads, run.layers, run.dropout)
    elif run.model == "hgt":
        result.model = HGT(in_dims, pg.types, pg.n_rels, g.n_classes,
                           run.hidden, run.heads, run.layers, run.dropout)
    else:
        paths = metapath_edges(g)
        result.metapaths = sorted(paths)
        result.path_tensors = [
            (torch.from_numpy(paths[m][:, 0]), torch.from_numpy(paths[m][:, 1]))
            for m in result.metapaths
        ]
        result.model = HAN(in_dims[g.primary_type], len(paths), g.n_classes,
                           run.hidden, run.heads, run.dropout)
    return result


def _labeled(g: GraphData, ids: list[int]) -> torch.Tensor:
    keep = [i for i in ids if g.labels[i] >= 0]
    return torch.tensor(keep, dtype=torch.long)


def train(g: GraphData, run: TrainRun) -> TrainResult:
    """Fit a model on the graph's train split, early-stopping on val loss.

    Raises DivergenceError (carrying the loss trace so far) as soon as a
    non-finite training or validation loss appears.
    """
    run = run.resolve()
    splits = require_splits(g)
    torch.manual_seed(run.seed)
    torch.use_deterministic_algorithms(True)

    result = build(g, run)
    model = result.model
    train_ids = _labeled(g, splits["train"])
    val_ids = _labeled(g, splits["val"])
    if not len(train_ids) or not len(val_ids):
        raise ConfigError("train and val splits must both contain labeled nodes")
    labels = torch.from_numpy(g.labels)
    loss_fn = nn.CrossEntropyLoss()
    opt = torch.optim.AdamW(model.parameters(), lr=run.lr, weight_decay=run.weight_decay)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=run.lr, total_steps=run.epochs)

    def primary_logits(logits):
        if run.model == "han":
            return logits
        lo, hi = result.packed.type_slices[g.primary_type]
        return logits[lo:hi]

    best_val, best_state, stale = float("inf"), None, 0
    for epoch in range(run.epochs):
        model.train()
        opt.zero_grad()
        logits, _, _ = result.forward()
        loss = loss_fn(primary_logits(logits)[train_ids], labels[train_ids])
        if not torch.isfinite(loss):
            result.train_loss.append(loss.item())
            raise DivergenceError(f"non-finite train loss at epoch {epoch}", result.train_loss)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), run.clip)
        opt.step()
        sched.step()
        result.train_loss.append(loss.item())

        model.eval()
        with torch.no_grad():
            logits, _, _ = result.forward()
            vloss = float(loss_fn(primary_logits(logits)[val_ids], labels[val_ids]))
        result.val_loss.append(vloss)
        if not torch.isfinite(torch.tensor(vloss)):
            raise DivergenceError(f"non-finite val loss at epoch {epoch}", result.train_loss)
        if vloss < best_val:
            best_val, stale = vloss, 0
            best_state = copy.deepcopy(model.state_dict())
            result.best_epoch = epoch
        else:
            stale += 1
            if stale > run.patience:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result
