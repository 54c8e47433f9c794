import logging
import math

import numpy as np
import pytest

from hgpoison.edgegen import (
    NeighborHarvest,
    SurrogateSignals,
    choose,
    degree_budget,
    fallback_signals,
    harvest,
    load_signals,
    save_signals,
    score_attention,
    score_clustering,
    score_random,
)
from hgpoison.errors import DatasetError
from hgpoison.hetgraph import HeteroGraph, TypeRoles, derive_roles, partition_classes, with_reverses

import oracles
from conftest import make_toy

ROLES = TypeRoles(primary_type="paper", trigger_type="author", auxiliary_types=("field", "paper"))


def tiny_graph(pa_edges, af_edges, labels, n_papers=2, n_authors=2, n_fields=1):
    relations = with_reverses([
        ("paper", "pa", "author", pa_edges),
        ("author", "af", "field", af_edges),
    ])
    return HeteroGraph(
        node_counts={"paper": n_papers, "author": n_authors, "field": n_fields},
        feature_kinds={t: "continuous" for t in ("paper", "author", "field")},
        features={
            "paper": np.arange(n_papers * 2, dtype=np.float64).reshape(n_papers, 2),
            "author": np.arange(n_authors * 2, dtype=np.float64).reshape(n_authors, 2),
            "field": np.ones((n_fields, 2)),
        },
        relations=relations,
        primary_type="paper",
        n_classes=2,
        labels=np.asarray(labels, dtype=np.int64),
    )


def manual_harvest(first_hop_of, second_hop, roles=ROLES):
    chunks = [np.asarray(v, dtype=np.int64) for v in first_hop_of.values()]
    fh = np.unique(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
    return NeighborHarvest(
        roles=roles,
        first_hop=fh,
        second_hop={t: np.asarray(ids, dtype=np.int64) for t, ids in second_hop.items()},
        first_hop_of={int(k): np.asarray(v, dtype=np.int64) for k, v in first_hop_of.items()},
    )


class TestHarvest:
    def test_hand_enumerated(self):
        g = tiny_graph(pa_edges=[(0, 0)], af_edges=[(0, 0)], labels=[0, 1])
        roles = derive_roles(g, "paper", "author")
        part = partition_classes(g, roles, 0)
        h = harvest(g, roles, part)
        assert list(h.first_hop) == [0]
        assert list(h.second_hop["field"]) == [0]
        assert list(h.second_hop["paper"]) == [0]
        assert list(h.first_hop_of[0]) == [0]

    def test_target_without_trigger_neighbors_errors(self):
        g = tiny_graph(pa_edges=[(1, 0)], af_edges=[(0, 0)], labels=[0, 1])
        roles = derive_roles(g, "paper", "author")
        part = partition_classes(g, roles, 0)
        with pytest.raises(DatasetError, match="target class has no trigger-type neighbors"):
            harvest(g, roles, part)

    def test_shared_author_deduplicated(self):
        g = tiny_graph(pa_edges=[(0, 0), (1, 0)], af_edges=[(0, 0)], labels=[0, 0])
        roles = derive_roles(g, "paper", "author")
        part = partition_classes(g, roles, 0)
        h = harvest(g, roles, part)
        assert list(h.first_hop) == [0]
        assert len(h.first_hop_of) == 2

    def test_isolated_target_contributes_nothing(self):
        g = tiny_graph(pa_edges=[(0, 0)], af_edges=[(0, 0)], labels=[0, 0])
        roles = derive_roles(g, "paper", "author")
        part = partition_classes(g, roles, 0)
        h = harvest(g, roles, part)
        assert 1 not in h.first_hop_of

    def test_empty_second_hop_type_permitted(self):
        # field is an auxiliary type (author 1 touches one) but the target
        # class only reaches author 0, which has no field edges
        g = tiny_graph(pa_edges=[(0, 0), (1, 1)], af_edges=[(1, 0)], labels=[0, 1])
        roles = derive_roles(g, "paper", "author")
        part = partition_classes(g, roles, 0)
        h = harvest(g, roles, part)
        assert "field" in h.second_hop
        assert len(h.second_hop["field"]) == 0


class TestDegreeBudget:
    def test_mean_rounding(self):
        # author degrees on af: {3, 1} -> mean 2
        g = tiny_graph(
            pa_edges=[(0, 0), (1, 1)],
            af_edges=[(0, 0), (0, 1), (0, 2), (1, 0)],
            labels=[0, 1],
            n_fields=3,
        )
        roles = derive_roles(g, "paper", "author")
        assert degree_budget(g, roles)["field"] == 2

    def test_half_rounds_to_even(self):
        # degrees {1, 2} -> mean 1.5 -> 2
        g = tiny_graph(
            pa_edges=[(0, 0), (1, 1)],
            af_edges=[(0, 0), (1, 0), (1, 1)],
            labels=[0, 1],
            n_fields=2,
        )
        roles = derive_roles(g, "paper", "author")
        assert degree_budget(g, roles)["field"] == 2

    def test_floor_of_one(self):
        # single af edge over two authors: mean 0.5 -> max(1, 0) = 1
        g = tiny_graph(pa_edges=[(0, 0), (1, 1)], af_edges=[(0, 0)], labels=[0, 1])
        roles = derive_roles(g, "paper", "author")
        assert degree_budget(g, roles)["field"] == 1


class TestAttention:
    def test_single_path(self):
        h = manual_harvest({0: [0]}, {"field": [0], "paper": []})
        s = SurrogateSignals(
            attention={
                (("field", 0), ("author", 0), 1): 0.4,
                (("author", 0), ("paper", 0), 2): 0.5,
            },
            embeddings={},
        )
        sel = score_attention(h, s)
        assert sel.ranked["field"] == [(0, 0.2)]

    def test_two_targets_sum(self):
        h = manual_harvest({0: [0], 1: [0]}, {"field": [0], "paper": []})
        s = SurrogateSignals(
            attention={
                (("field", 0), ("author", 0), 1): 0.4,
                (("author", 0), ("paper", 0), 2): 0.5,
                (("author", 0), ("paper", 1), 2): 0.5,
            },
            embeddings={},
        )
        sel = score_attention(h, s)
        assert sel.ranked["field"] == [(0, 0.4)]

    def test_missing_entries_rank_last(self):
        h = manual_harvest({0: [0]}, {"field": [0, 1], "paper": []})
        s = SurrogateSignals(
            attention={
                (("field", 1), ("author", 0), 1): 0.3,
                (("author", 0), ("paper", 0), 2): 0.5,
            },
            embeddings={},
        )
        sel = score_attention(h, s)
        assert sel.ranked["field"][0][0] == 1
        assert sel.ranked["field"][1] == (0, 0.0)

    def test_sources_outside_pool_ignored(self):
        h = manual_harvest({0: [0]}, {"field": [0], "paper": []})
        s = SurrogateSignals(
            attention={
                (("field", 0), ("author", 0), 1): 0.4,
                (("field", 5), ("author", 0), 1): 9.0,   # not a candidate
                (("author", 0), ("paper", 0), 2): 0.5,
            },
            embeddings={},
        )
        sel = score_attention(h, s)
        assert sel.ranked["field"] == [(0, 0.2)]

    def test_tie_breaks_ascending(self):
        h = manual_harvest({0: [0]}, {"field": [2, 7], "paper": []})
        s = SurrogateSignals(
            attention={
                (("field", 2), ("author", 0), 1): 0.4,
                (("field", 7), ("author", 0), 1): 0.4,
                (("author", 0), ("paper", 0), 2): 0.5,
            },
            embeddings={},
        )
        sel = score_attention(h, s)
        assert [nid for nid, _ in sel.ranked["field"]] == [2, 7]

    def test_linearity_in_one_weight(self):
        rng = np.random.default_rng(0)
        h = manual_harvest(
            {0: [0, 1], 1: [1]},
            {"field": [0, 1, 2], "paper": []},
        )
        att = {}
        for f in range(3):
            for a in range(2):
                att[(("field", f), ("author", a), 1)] = float(rng.random())
        for a in range(2):
            for p in range(2):
                att[(("author", a), ("paper", p), 2)] = float(rng.random())
        base = dict(score_attention(h, SurrogateSignals(att, {})).ranked["field"])
        bumped_att = dict(att)
        bumped_att[(("field", 0), ("author", 0), 1)] *= 2.0
        bumped = dict(score_attention(h, SurrogateSignals(bumped_att, {})).ranked["field"])
        # doubling alpha1(f0, a0) adds one extra copy of that path's original
        # contribution; author 0 only serves target 0 here
        paths = att[(("field", 0), ("author", 0), 1)] * att[(("author", 0), ("paper", 0), 2)]
        assert abs(bumped[0] - base[0] - paths) < 1e-12
        assert bumped[1] == base[1] and bumped[2] == base[2]

    def test_matches_bruteforce_on_toy(self, toy_graph):
        roles = derive_roles(toy_graph, "paper", "author")
        part = partition_classes(toy_graph, roles, 0)
        h = harvest(toy_graph, roles, part)
        s = fallback_signals(toy_graph)
        sel = score_attention(h, s)
        expected = oracles.attention_scores_bruteforce(roles, h.first_hop_of, h.second_hop, s.attention)
        for t_b, ranking in sel.ranked.items():
            assert dict(ranking) == expected[t_b]


class TestClustering:
    def test_hand_example(self):
        h = manual_harvest({0: [0]}, {"field": [0, 1, 2], "paper": []})
        emb = {"field": np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), "author": np.zeros((1, 2)), "paper": np.zeros((1, 2))}
        sel = score_clustering(h, SurrogateSignals({}, emb))
        assert sel.ranked["field"][0] == (0, 0.5)
        assert sel.ranked["field"][1] == (1, 0.5)
        assert sel.ranked["field"][2][0] == 2
        assert sel.ranked["field"][2][1] == 0.0

    def test_identical_embeddings_score_one(self):
        h = manual_harvest({0: [0]}, {"field": [0, 1, 2], "paper": []})
        emb = {"field": np.tile([0.6, 0.8], (3, 1))}
        sel = score_clustering(h, SurrogateSignals({}, emb))
        for _nid, score in sel.ranked["field"]:
            assert score == pytest.approx(1.0, abs=1e-12)

    def test_singleton_scores_zero(self):
        h = manual_harvest({0: [0]}, {"field": [4], "paper": []})
        emb = {"field": np.ones((5, 3))}
        sel = score_clustering(h, SurrogateSignals({}, emb))
        assert sel.ranked["field"] == [(4, 0.0)]

    def test_zero_norm_row(self):
        h = manual_harvest({0: [0]}, {"field": [0, 1, 2], "paper": []})
        emb = {"field": np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])}
        sel = score_clustering(h, SurrogateSignals({}, emb))
        scores = dict(sel.ranked["field"])
        expected = oracles.clustering_scores_bruteforce([0, 1, 2], emb["field"])
        for nid in (0, 1, 2):
            assert abs(scores[nid] - expected[nid]) < 1e-12
        assert scores[0] == 0.0

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        ids = np.sort(rng.choice(60, size=40, replace=False))
        emb = {"field": rng.normal(size=(60, 7))}
        h = manual_harvest({0: [0]}, {"field": ids, "paper": []})
        sel = score_clustering(h, SurrogateSignals({}, emb))
        expected = oracles.clustering_scores_bruteforce(ids, emb["field"])
        for nid, score in sel.ranked["field"]:
            assert abs(score - expected[nid]) < 1e-10

    def test_scaling_invariance(self):
        rng = np.random.default_rng(5)
        emb = {"field": rng.normal(size=(30, 5))}
        h = manual_harvest({0: [0]}, {"field": np.arange(30), "paper": []})
        before = [nid for nid, _ in score_clustering(h, SurrogateSignals({}, emb)).ranked["field"]]
        scaled = {"field": emb["field"] * np.exp(rng.uniform(-3, 3, size=(30, 1)))}
        after = [nid for nid, _ in score_clustering(h, SurrogateSignals({}, scaled)).ranked["field"]]
        assert before == after

    def test_missing_embeddings_error(self):
        h = manual_harvest({0: [0]}, {"field": [0], "paper": []})
        with pytest.raises(DatasetError, match="no embeddings"):
            score_clustering(h, SurrogateSignals({}, {}))


class TestRandom:
    def test_deterministic(self):
        h = manual_harvest({0: [0]}, {"field": [1, 2, 3], "paper": []})
        a = score_random(h, 42).ranked["field"]
        b = score_random(h, 42).ranked["field"]
        assert a == b

    def test_scores_are_rank_placeholders(self):
        h = manual_harvest({0: [0]}, {"field": [1, 2, 3, 4], "paper": []})
        ranking = score_random(h, 1).ranked["field"]
        assert [s for _n, s in ranking] == [1.0, 0.75, 0.5, 0.25]

    def test_empty_set(self):
        h = manual_harvest({0: [0]}, {"field": [], "paper": []})
        assert score_random(h, 9).ranked["field"] == []

    def test_top_choice_uniform(self):
        h = manual_harvest({0: [0]}, {"field": [1, 2, 3], "paper": []})
        counts = {1: 0, 2: 0, 3: 0}
        for seed in range(10_000):
            counts[score_random(h, seed).ranked["field"][0][0]] += 1
        for c in counts.values():
            assert abs(c / 10_000 - 1 / 3) < 0.02


class TestChoose:
    def test_budget_exceeds_pool_warns(self, caplog):
        h = manual_harvest({0: [0]}, {"field": [0, 1], "paper": []})
        sel = score_random(h, 2)
        with caplog.at_level(logging.WARNING):
            choose(sel, {"field": 5, "paper": 1})
        assert len(sel.chosen["field"]) == 2
        assert "exceeds" in caplog.text

    def test_exclusion_slides_next_rank_in(self):
        h = manual_harvest({0: [0]}, {"paper": [0, 1, 2], "field": []})
        emb = {"paper": np.array([[1.0, 0.0], [1.0, 0.0], [0.5, 0.5]]), "field": np.zeros((0, 2))}
        sel = score_clustering(h, SurrogateSignals({}, emb))
        choose(sel, {"paper": 1}, exclude={"paper": {0}})
        assert list(sel.chosen["paper"]) == [1]


class TestSignalsIO:
    def test_roundtrip(self, toy_graph, tmp_path):
        s = fallback_signals(toy_graph)
        save_signals(s, tmp_path / "sig")
        s2 = load_signals(tmp_path / "sig", toy_graph)
        assert s2.attention == s.attention
        for t in toy_graph.node_counts:
            assert np.array_equal(s2.embeddings[t], s.embeddings[t])

    def test_missing_files(self, toy_graph, tmp_path):
        (tmp_path / "sig").mkdir()
        with pytest.raises(DatasetError, match="missing file attention.csv"):
            load_signals(tmp_path / "sig", toy_graph)

    def test_fallback_weights_normalized_per_destination(self, toy_graph):
        s = fallback_signals(toy_graph)
        sums = {}
        for (src, dst, layer), w in s.attention.items():
            if layer == 1:
                sums[dst] = sums.get(dst, 0.0) + w
        for total in sums.values():
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_fallback_embeddings_padded_unit_norm(self, toy_graph):
        s = fallback_signals(toy_graph)
        k = max(m.shape[1] for m in toy_graph.features.values())
        for t, z in s.embeddings.items():
            assert z.shape == (toy_graph.node_counts[t], k)
            norms = np.linalg.norm(z, axis=1)
            raw = np.linalg.norm(toy_graph.features[t], axis=1)
            assert np.allclose(norms[raw > 0], 1.0)
