"""Backdoor poisoning toolkit for node classification on heterogeneous graphs.

The package injects trigger nodes of a chosen type into a typed graph,
connects them to influential auxiliary nodes, flips training labels toward a
target class, and measures how successful and how conspicuous the attack is.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DatasetError, HGPoisonError
from .hetgraph import (
    ClassPartition,
    HeteroGraph,
    Relation,
    TypeRoles,
    derive_roles,
    load_dataset,
    partition_classes,
    save_dataset,
    with_reverses,
)
from .pipeline import AttackConfig, PoisonedGraph, SynthSpec, export, load_poisoned, run_attack, synth_graph
from .metrics import StealthReport, asr, cad, stealthiness, wasserstein_1d
