"""Synthesize feature vectors for injected trigger nodes.

Continuous features are modeled per dimension with a Gaussian kernel density
estimate fitted on existing trigger-type rows; binary features with a
per-dimension Bernoulli. Sampling from the KDE is exact: pick a source row
uniformly, add zero-mean Gaussian noise with the fitted bandwidth. Dimensions
are treated as independent throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetError
from .hetgraph import ClassPartition, HeteroGraph, TypeRoles

BANDWIDTH_FLOOR = 1e-9


@dataclass
class FeatureSourceSet:
    """Trigger-type nodes adjacent to non-target-class primary nodes."""

    node_ids: np.ndarray  # ascending, deduplicated
    matrix: np.ndarray    # (m, d) rows aligned with node_ids


@dataclass
class FeatureModel:
    """Fitted per-dimension generator, KDE or Bernoulli."""

    kind: str                       # "continuous" | "binary"
    values: np.ndarray | None = None      # (m, d) KDE source rows
    bandwidth: np.ndarray | None = None   # (d,) per-dimension h
    clip_lo: np.ndarray | None = None     # optional per-dimension clip range
    clip_hi: np.ndarray | None = None
    probs: np.ndarray | None = None       # (d,) Bernoulli parameters

    @property
    def dim(self) -> int:
        return int(self.probs.shape[0] if self.kind == "binary" else self.values.shape[1])


def build_source_set(g: HeteroGraph, roles: TypeRoles, part: ClassPartition) -> FeatureSourceSet:
    """Collect trigger-type neighbors of nontarget primary nodes, deduplicated.

    Raises DatasetError("no feature source") when the set comes out empty,
    which happens when every primary node carries the target class or the
    nontarget nodes have no trigger neighbors.
    """
    rel = g.relation_between(roles.primary_type, roles.trigger_type)
    if rel is None:
        raise DatasetError(f"trigger type unreachable: no relation from {roles.primary_type} to {roles.trigger_type}")
    if rel.n_edges and len(part.nontarget_nodes):
        mask = np.isin(rel.pairs[:, 0], part.nontarget_nodes)
        ids = np.unique(rel.pairs[mask, 1])
    else:
        ids = np.zeros(0, dtype=np.int64)
    if len(ids) == 0:
        raise DatasetError("no feature source")
    return FeatureSourceSet(node_ids=ids, matrix=g.features[roles.trigger_type][ids])


def _silverman(matrix: np.ndarray) -> np.ndarray:
    """Per-dimension bandwidth h = 0.9 * min(sd, IQR/1.34) * m^(-1/5).

    Degenerate dimensions (constant, or too few rows for a spread estimate)
    fall back to a tiny positive floor so the sampler stays well defined.
    """
    m, d = matrix.shape
    if m < 2:
        return np.full(d, BANDWIDTH_FLOOR)
    sd = matrix.std(axis=0, ddof=1)
    q75, q25 = np.percentile(matrix, [75, 25], axis=0)
    h = 0.9 * np.minimum(sd, (q75 - q25) / 1.34) * m ** (-0.2)
    return np.where(h > 0.0, h, BANDWIDTH_FLOOR)


def fit(src: FeatureSourceSet, kind: str, clip: bool = False) -> FeatureModel:
    """Fit a per-dimension model of the source rows.

    kind "continuous" fits a Gaussian KDE per dimension (Silverman bandwidth);
    kind "binary" fits Bernoulli probabilities as column means. With clip=True
    a continuous model remembers the observed [min, max] per dimension and
    samples are clipped to it.
    """
    if len(src.matrix) < 1:
        raise DatasetError("no feature source")
    if kind == "binary":
        return FeatureModel(kind="binary", probs=src.matrix.mean(axis=0))
    if kind != "continuous":
        raise DatasetError(f"unknown feature kind {kind}")
    model = FeatureModel(
        kind="continuous",
        values=np.array(src.matrix, dtype=np.float64),
        bandwidth=_silverman(src.matrix),
    )
    if clip:
        model.clip_lo = src.matrix.min(axis=0)
        model.clip_hi = src.matrix.max(axis=0)
    return model


def sample(model: FeatureModel, count: int, seed) -> np.ndarray:
    """Draw `count` feature rows; deterministic given seed.

    Each dimension uses its own child generator so results do not depend on
    how dimensions are batched.
    """
    d = model.dim
    out = np.zeros((count, d), dtype=np.float64)
    if count == 0:
        return out
    for j in range(d):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))
        if model.kind == "binary":
            out[:, j] = (rng.random(count) < model.probs[j]).astype(np.float64)
        else:
            picks = rng.integers(0, len(model.values), size=count)
            col = model.values[picks, j] + rng.normal(0.0, model.bandwidth[j], size=count)
            if model.clip_lo is not None:
                col = np.clip(col, model.clip_lo[j], model.clip_hi[j])
            out[:, j] = col
    return out
