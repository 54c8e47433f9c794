"""Shared fixtures.

Two tiers: a small 192-node dataset for unit tests, and a session-scoped
~3k-node chain (clean dataset, surrogate signals, poisoned variants, trained
victims) for the end-to-end tests. The poisoning toolkit is a test-time
dependency only; the trainer itself talks to it purely through files.
"""

import json
import time

import numpy as np
import pytest
import torch

from hgpoison import cli as pcli
from hgpoison import pipeline
from hgpoison.hetgraph import save_dataset

from hgtrainer.data import load_graph_dir

# single thread for run-to-run reproducibility, matching the CLI default
torch.set_num_threads(1)

TINY_SPEC = pipeline.SynthSpec(
    node_counts={"paper": 120, "author": 60, "field": 12},
    dims={"paper": 6, "author": 4, "field": 3},
    feature_kinds={"paper": "continuous", "author": "continuous", "field": "binary"},
    relations=[("paper", "writes", "author", 300), ("author", "expert_in", "field", 100)],
    primary_type="paper",
    n_classes=3,
    affinity=0.9,
)

CHAIN_SPEC = {
    "node_counts": {"paper": 1500, "author": 900, "field": 600},
    "dims": {"paper": 24, "author": 16, "field": 8},
    "feature_kinds": {"paper": "continuous", "author": "continuous", "field": "binary"},
    "relations": [["paper", "writes", "author", 6000], ["author", "expert_in", "field", 3000]],
    "primary_type": "paper",
    "n_classes": 3,
    "label_fraction": 1.0,
    "affinity": 0.8,
}
SYNTH_SEED = 11
ATTACK_SEED = 3
RATES = (0.01, 0.02, 0.05)


def write_splits(ds, labels, seed=0):
    """70/20/10 split over labeled primary ids, written as splits.json."""
    labeled = sorted(int(i) for i in np.flatnonzero(labels >= 0))
    perm = np.random.default_rng(seed).permutation(labeled)
    n = len(perm)
    a, b = round(0.7 * n), round(0.9 * n)
    doc = {
        "train": sorted(int(i) for i in perm[:a]),
        "test": sorted(int(i) for i in perm[a:b]),
        "val": sorted(int(i) for i in perm[b:]),
    }
    (ds / "splits.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return doc


def make_tiny(root, spec=TINY_SPEC, seed=7):
    g = pipeline.synth_graph(spec, seed=seed)
    save_dataset(g, root)
    write_splits(root, g.labels)
    return root


@pytest.fixture(scope="session")
def tiny_ds(tmp_path_factory):
    return make_tiny(tmp_path_factory.mktemp("tiny") / "clean")


@pytest.fixture(scope="session")
def tiny_graph(tiny_ds):
    return load_graph_dir(tiny_ds)


# -- end-to-end chain --------------------------------------------------------


@pytest.fixture(scope="session")
def stage_times():
    """Wall time per chain stage, for the runtime budget assertion."""
    return {}


def _timed(times, key, fn):
    t0 = time.perf_counter()
    out = fn()
    times[key] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def chain_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("chain")


@pytest.fixture(scope="session")
def clean_ds(chain_dir, stage_times):
    """Clean ~3k-node dataset carrying the same splits the attack will use.

    The attack derives its splits from the attack seed alone, so a throwaway
    poison run materializes them; the clean dataset adopts that file so the
    clean and backdoor victims are scored on identical test ids.
    """
    spec = chain_dir / "spec.json"
    spec.write_text(json.dumps(CHAIN_SPEC), encoding="utf-8")
    ds = chain_dir / "clean"
    rc = _timed(stage_times, "synth", lambda: pcli.main(
        ["synth", "--spec", str(spec), "--seed", str(SYNTH_SEED), "--out", str(ds)]))
    assert rc == 0
    boot = chain_dir / "bootstrap"
    rc = _timed(stage_times, "bootstrap", lambda: pcli.main(
        ["poison", "--dataset", str(ds), "--strategy", "attention",
         "--rate-train", "0.05", "--rate-test", "0.05",
         "--target-class", "0", "--trigger-type", "author",
         "--seed", str(ATTACK_SEED), "--out", str(boot)]))
    assert rc == 0
    (ds / "splits.json").write_bytes((boot / "splits.json").read_bytes())
    return ds


@pytest.fixture(scope="session")
def signals_dir(chain_dir, clean_ds, stage_times):
    from hgtrainer.cli import main
    out = chain_dir / "sig"
    rc = _timed(stage_times, "surrogate", lambda: main(
        ["surrogate", "--dataset", str(clean_ds), "--out", str(out)]))
    assert rc == 0
    return out


@pytest.fixture(scope="session")
def poisoned(chain_dir, clean_ds, signals_dir, stage_times):
    out = {}
    for rate in RATES:
        ds = chain_dir / f"pois_{rate}"
        rc = _timed(stage_times, f"poison_{rate}", lambda: pcli.main(
            ["poison", "--dataset", str(clean_ds), "--signals", str(signals_dir),
             "--strategy", "attention",
             "--rate-train", str(rate), "--rate-test", str(rate),
             "--target-class", "0", "--trigger-type", "author",
             "--seed", str(ATTACK_SEED), "--out", str(ds)]))
        assert rc == 0
        out[rate] = ds
    return out


@pytest.fixture(scope="session")
def victim_preds(chain_dir, poisoned, stage_times):
    from hgtrainer.cli import main
    out = {}
    for rate, ds in poisoned.items():
        vdir = chain_dir / f"vict_{rate}"
        rc = _timed(stage_times, f"victim_{rate}", lambda: main(
            ["victim", "--dataset", str(ds), "--model", "simplehgn", "--out", str(vdir)]))
        assert rc == 0
        out[rate] = vdir / "predictions.csv"
    return out


@pytest.fixture(scope="session")
def clean_preds(chain_dir, clean_ds, stage_times):
    from hgtrainer.cli import main
    vdir = chain_dir / "vict_clean"
    rc = _timed(stage_times, "victim_clean", lambda: main(
        ["victim", "--dataset", str(clean_ds), "--model", "simplehgn", "--out", str(vdir)]))
    assert rc == 0
    return vdir / "predictions.csv"


def evaluate(poisoned_ds, clean_p, backdoor_p, out_dir):
    rc = pcli.main(["eval", "--poisoned", str(poisoned_ds),
                    "--clean-preds", str(clean_p), "--backdoor-preds", str(backdoor_p),
                    "--out", str(out_dir)])
    assert rc == 0
    return json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
