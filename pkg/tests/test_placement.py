import random

import pytest

from kvswarm.clustering import Cluster, ClusterSet
from kvswarm.placement import (
    CacheScoreParams,
    build_dram_plan,
    cost_effectiveness,
    format_dram_plan,
    format_placement,
    parse_placement,
    place_clusters,
    select_hot_clusters,
)

PARAMS = CacheScoreParams(t_base=100.0, t_transfer=10.0)


def make_cs(member_lists, tau=0.5):
    clusters = [Cluster(id=i, medoid=m[0], members=list(m))
                for i, m in enumerate(member_lists)]
    n = max(e for m in member_lists for e in m) + 1
    return ClusterSet(clusters=clusters, tau=tau, n_entries=n)


def random_cs(rng, max_entries=24, max_clusters=6):
    n = rng.randint(1, max_entries)
    entries = list(range(n))
    clusters = []
    uncovered = set(entries)
    cid = 0
    while uncovered or not clusters:
        size = rng.randint(1, max(1, n // 2))
        members = rng.sample(entries, min(size, n))
        uncovered -= set(members)
        clusters.append(members)
        cid += 1
        if cid >= max_clusters and uncovered:
            clusters.append(sorted(uncovered))
            uncovered = set()
    return make_cs(clusters)


class TestPlaceClusters:
    def test_pointer_recurrence_first_cluster(self):
        cs = make_cs([[0, 1, 2, 3, 4, 5], [6, 7]])
        pm = place_clusters(cs, 4)
        assert [pm.locations[e][0].device for e in range(6)] == [0, 1, 2, 3, 0, 1]
        # pointer advanced by 6, so the second cluster starts at 6 mod 4 = 2
        assert pm.cluster_start[1] == 2
        assert pm.locations[6][0].device == 2
        assert pm.global_pointer == 8

    def test_single_device(self):
        cs = make_cs([[0, 1], [2, 3, 4]])
        pm = place_clusters(cs, 1)
        assert all(ds.device == 0 for locs in pm.locations.values() for ds in locs)

    def test_three_equal_clusters_three_disks(self):
        cs = make_cs([[0, 1, 2], [3, 4, 5], [6, 7, 8]])
        pm = place_clusters(cs, 3)
        assert pm.device_fill == [3, 3, 3]

    def test_per_cluster_balance(self):
        rng = random.Random(5)
        for _ in range(50):
            cs = random_cs(rng)
            n_disk = rng.randint(1, 5)
            pm = place_clusters(cs, n_disk)
            for c in cs.clusters:
                per_dev = [0] * n_disk
                start = pm.cluster_start[c.id]
                for k in range(c.size):
                    per_dev[(start + k) % n_disk] += 1
                assert max(per_dev) - min(per_dev) <= 1

    def test_pointer_equals_total_size(self):
        rng = random.Random(6)
        for _ in range(30):
            cs = random_cs(rng)
            pm = place_clusters(cs, rng.randint(1, 4))
            assert pm.global_pointer == sum(c.size for c in cs.clusters)

    def test_consecutive_members_consecutive_devices(self):
        cs = make_cs([[3, 1, 4, 1 + 4, 9, 2, 6]])
        pm = place_clusters(cs, 3)
        start = pm.cluster_start[0]
        for k, e in enumerate(cs.clusters[0].members):
            assert pm.locations[e][-1].device == (start + k) % 3

    def test_unbalanced_variant_starts_at_zero(self):
        cs = make_cs([[0, 1, 2], [3, 4], [5]])
        pm = place_clusters(cs, 4, round_robin=False)
        assert all(v == 0 for v in pm.cluster_start.values())

    def test_needs_a_device(self):
        with pytest.raises(ValueError):
            place_clusters(make_cs([[0]]), 0)


class TestCostEffectiveness:
    def test_direct_arithmetic(self):
        assert cost_effectiveness(10, 8, PARAMS) == pytest.approx(225.0)

    def test_zero_frequency(self):
        assert cost_effectiveness(0, 17, PARAMS) == 0.0

    def test_small_clusters_amortize_addressing(self):
        p = CacheScoreParams(t_base=100.0, t_transfer=1.0)
        assert cost_effectiveness(3, 1, p) == pytest.approx(3 * 101.0)
        assert cost_effectiveness(3, 100, p) == pytest.approx(3 * 2.0)
        assert cost_effectiveness(3, 1, p) > cost_effectiveness(3, 100, p)

    def test_rejects_empty_cluster(self):
        with pytest.raises(ValueError):
            cost_effectiveness(1, 0, PARAMS)


class TestSelectHotClusters:
    def test_zero_budget(self):
        cs = make_cs([[0, 1], [2]])
        assert select_hot_clusters(cs, {0: 5, 1: 5}, 0, PARAMS) == set()

    def test_greedy_by_score(self):
        cs = make_cs([[0, 1, 2, 3, 4, 5, 6, 7], [8, 9, 10, 11]])
        # scores: C0 = 10*(100+80)/8 = 225, C1 = 2*(100+40)/4 = 70
        hot = select_hot_clusters(cs, {0: 10, 1: 2}, 8, PARAMS)
        assert hot == {0}

    def test_equal_scores_lower_id(self):
        cs = make_cs([[0, 1], [2, 3]])
        hot = select_hot_clusters(cs, {0: 3, 1: 3}, 2, PARAMS)
        assert hot == {0}

    def test_skip_and_continue(self):
        # best-scoring cluster is too big; the scan keeps going
        cs = make_cs([[0, 1, 2, 3, 4], [5, 6]])
        hot = select_hot_clusters(cs, {0: 100, 1: 1}, 2, PARAMS)
        assert hot == {1}

    def test_budget_never_exceeded(self):
        rng = random.Random(7)
        for _ in range(30):
            cs = random_cs(rng)
            freqs = {c.id: rng.randint(0, 20) for c in cs.clusters}
            budget = rng.randint(0, cs.n_entries)
            hot = select_hot_clusters(cs, freqs, budget, PARAMS)
            assert sum(cs.clusters[c].size for c in hot) <= budget


class TestDramPlan:
    def test_window_capped_by_entry_count(self):
        cs = make_cs([list(range(100))])
        pm = place_clusters(cs, 4)
        plan = build_dram_plan(cs, pm, {}, 256, 0, PARAMS)
        assert plan.window == list(range(100))

    def test_medoid_index_complete(self):
        member_lists = [[i * 2, i * 2 + 1] for i in range(64)]
        cs = make_cs(member_lists)
        pm = place_clusters(cs, 4)
        plan = build_dram_plan(cs, pm, {}, 8, 0, PARAMS)
        assert len(plan.medoid_index) == 64
        for c in cs.clusters:
            medoid, start = plan.medoid_index[c.id]
            assert medoid == c.medoid
            assert start == pm.cluster_start[c.id]

    def test_window_is_most_recent(self):
        cs = make_cs([list(range(10))])
        pm = place_clusters(cs, 2)
        plan = build_dram_plan(cs, pm, {}, 3, 0, PARAMS)
        assert plan.window == [7, 8, 9]


class TestPlacementFormat:
    def test_round_trip_locations(self):
        cs = make_cs([[0, 1, 2], [2, 3]])
        pm = place_clusters(cs, 3)
        parsed = parse_placement(format_placement(pm, ["config cafe01234567"]))
        assert parsed.n_disk == 3
        assert parsed.locations == pm.locations

    def test_dram_plan_text_shape(self):
        cs = make_cs([[0, 1], [2]])
        pm = place_clusters(cs, 2)
        plan = build_dram_plan(cs, pm, {0: 1}, 2, 1, PARAMS)
        text = format_dram_plan(plan)
        assert text.startswith("kvdram 1\n")
        assert "medoid 0 entry=0 start=0" in text
        assert "window 1,2" in text

    def test_bad_header(self):
        with pytest.raises(ValueError):
            parse_placement("kvplace 2 3\n")
