import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hgpoison import pipeline
from hgpoison.hetgraph import HeteroGraph, with_reverses

settings.register_profile(
    "suite", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


def make_toy(labels=(0, 1, 2, 0), n_classes=3):
    """4 papers / 3 authors / 2 fields with hand-laid edges.

    paper-author: 0-0, 1-0, 2-1, 3-2; author-field: 0-0, 1-1, 2-1.
    """
    relations = with_reverses([
        ("paper", "pa", "author", [(0, 0), (1, 0), (2, 1), (3, 2)]),
        ("author", "af", "field", [(0, 0), (1, 1), (2, 1)]),
    ])
    features = {
        "paper": np.arange(8, dtype=np.float64).reshape(4, 2),
        "author": np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        "field": np.array([[0.0, 1.0], [1.0, 0.0]]),
    }
    return HeteroGraph(
        node_counts={"paper": 4, "author": 3, "field": 2},
        feature_kinds={"paper": "continuous", "author": "continuous", "field": "binary"},
        features=features,
        relations=relations,
        primary_type="paper",
        n_classes=n_classes,
        labels=np.asarray(labels, dtype=np.int64),
    )


@pytest.fixture
def toy_graph():
    return make_toy()


def medium_spec():
    """Desk-scale shape used by the pipeline tests."""
    return pipeline.SynthSpec(
        node_counts={"paper": 300, "author": 180, "field": 40},
        dims={"paper": 16, "author": 12, "field": 8},
        feature_kinds={"paper": "continuous", "author": "continuous", "field": "binary"},
        relations=[("paper", "pa", "author", 900), ("author", "af", "field", 400)],
        primary_type="paper",
        n_classes=3,
    )


@pytest.fixture(scope="session")
def medium_graph():
    return pipeline.synth_graph(medium_spec(), seed=11)


@pytest.fixture(scope="session")
def biblio_graph():
    """Bibliographic-shaped graph: 3 node types, 4 directed relations,
    11252 nodes, 34864 directed edges, primary type "paper"."""
    spec = pipeline.SynthSpec(
        node_counts={"paper": 4025, "author": 7167, "field": 60},
        dims={"paper": 32, "author": 24, "field": 8},
        feature_kinds={"paper": "binary", "author": "continuous", "field": "binary"},
        relations=[("paper", "pa", "author", 13000), ("paper", "pf", "field", 4432)],
        primary_type="paper",
        n_classes=3,
    )
    return pipeline.synth_graph(spec, seed=20240)
