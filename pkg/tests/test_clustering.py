import random

import numpy as np
import pytest

from kvswarm.clustering import (
    ClusterFormatError,
    ClusterSet,
    build_clusters,
    cluster_quality,
    coactivation_density,
    format_clusters,
    parse_clusters,
)
from kvswarm.trace import DistanceMatrix


def dist_from_pairs(n, pairs, default=1.0):
    d = np.full((n, n), default, dtype=np.float64)
    np.fill_diagonal(d, 0.0)
    for (i, j), v in pairs.items():
        d[i, j] = v
        d[j, i] = v
    return DistanceMatrix(n=n, dist=d)


def random_dist(rng, n):
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            # two decimals keep float comparisons in both implementations exact
            d[i, j] = d[j, i] = round(rng.random(), 2)
    return DistanceMatrix(n=n, dist=d)


def reference_clustering(n, dist, tau):
    """Independent, deliberately naive implementation of the same procedure."""
    rho = {e: sum(1 for j in range(n)
                  if j != e and dist.value(e, j) <= tau) for e in range(n)}
    queue = sorted(range(n), key=lambda e: (-rho[e], e))
    covered = [False] * n
    out = []
    for m in queue:
        if covered[m]:
            continue
        cands = sorted((e for e in range(n) if e != m and dist.value(m, e) <= tau),
                       key=lambda e: (dist.value(m, e), e))
        members = [m]
        for c in cands:
            avg = sum(dist.value(c, k) for k in members) / len(members)
            if avg <= tau:
                members.append(c)
        out.append((m, members))
        for e in members:
            covered[e] = True
        if all(covered):
            break
    return out


class TestDensity:
    def test_complete_within_radius(self):
        d = dist_from_pairs(3, {(0, 1): 0.2, (0, 2): 0.2, (1, 2): 0.2})
        rho = coactivation_density(d, 0.5)
        assert [rho[e] for e in range(3)] == [2, 2, 2]

    def test_empty_neighborhoods(self):
        d = dist_from_pairs(3, {})
        rho = coactivation_density(d, 0.5)
        assert [rho[e] for e in range(3)] == [0, 0, 0]

    def test_mixed(self):
        d = dist_from_pairs(3, {(0, 1): 0.3, (0, 2): 0.6, (1, 2): 0.4})
        rho = coactivation_density(d, 0.5)
        assert [rho[e] for e in range(3)] == [1, 2, 1]

    def test_tau_bounds(self):
        d = dist_from_pairs(2, {})
        with pytest.raises(ValueError):
            coactivation_density(d, 0.0)
        with pytest.raises(ValueError):
            coactivation_density(d, 1.0)


class TestBuildClusters:
    def test_single_clique(self):
        d = dist_from_pairs(4, {(i, j): 0.0 for i in range(4)
                                for j in range(i + 1, 4)})
        cs = build_clusters(range(4), d, 0.5)
        assert len(cs.clusters) == 1
        assert cs.clusters[0].medoid == 0
        assert sorted(cs.clusters[0].members) == [0, 1, 2, 3]

    def test_all_far_gives_singletons(self):
        d = dist_from_pairs(5, {})
        cs = build_clusters(range(5), d, 0.5)
        assert len(cs.clusters) == 5
        assert all(c.size == 1 for c in cs.clusters)

    def test_interleaved_replication(self):
        # A co-activates with both B and C while B and C rarely co-activate,
        # so A must be replicated into both clusters.
        a, b, c = 0, 1, 2
        d = dist_from_pairs(3, {(a, b): 0.1, (a, c): 0.1, (b, c): 0.9})
        cs = build_clusters(range(3), d, 0.3)
        member_sets = [set(cl.members) for cl in cs.clusters]
        assert {a, b} in member_sets and {a, c} in member_sets
        assert len(cs.replication[a]) == 2

    def test_coverage_invariant(self):
        rng = random.Random(7)
        for _ in range(20):
            n = rng.randint(2, 15)
            cs = build_clusters(range(n), random_dist(rng, n), 0.5)
            for e in range(n):
                assert cs.replication[e]

    def test_admission_audit(self):
        rng = random.Random(8)
        for _ in range(20):
            n = rng.randint(2, 12)
            d = random_dist(rng, n)
            cs = build_clusters(range(n), d, 0.5)
            for cl in cs.clusters:
                for k, (m, rec) in enumerate(zip(cl.members,
                                                 cl.admission_distances)):
                    if k == 0:
                        assert rec == 0.0
                        continue
                    assert rec <= 0.5 + 1e-12
                    assert rec == pytest.approx(
                        sum(d.value(m, p) for p in cl.members[:k]) / k)

    def test_medoid_density_non_increasing(self):
        rng = random.Random(9)
        for _ in range(20):
            n = rng.randint(3, 14)
            d = random_dist(rng, n)
            cs = build_clusters(range(n), d, 0.5)
            rho = coactivation_density(d, 0.5)
            densities = [rho[c.medoid] for c in cs.clusters]
            # covered entries are skipped, so the kept sequence stays sorted
            assert densities == sorted(densities, reverse=True)

    def test_determinism(self):
        rng = random.Random(10)
        d = random_dist(rng, 12)
        a = build_clusters(range(12), d, 0.4)
        b = build_clusters(range(12), d, 0.4)
        assert [(c.medoid, c.members) for c in a.clusters] == \
               [(c.medoid, c.members) for c in b.clusters]

    def test_reference_equivalence_sample(self):
        rng = random.Random(11)
        for _ in range(50):
            n = rng.randint(2, 10)
            d = random_dist(rng, n)
            tau = rng.choice([0.3, 0.5, 0.7])
            cs = build_clusters(range(n), d, tau)
            assert [(c.medoid, c.members) for c in cs.clusters] == \
                reference_clustering(n, d, tau)

    def test_max_replicas_cap(self):
        a, b, c = 0, 1, 2
        d = dist_from_pairs(3, {(a, b): 0.1, (a, c): 0.1, (b, c): 0.9})
        cs = build_clusters(range(3), d, 0.3, max_replicas=1)
        assert len(cs.replication[a]) == 1
        # every entry still covered
        for e in range(3):
            assert cs.replication[e]


class TestQuality:
    def test_singleton_zero(self):
        d = dist_from_pairs(3, {})
        cs = build_clusters(range(3), d, 0.5)
        assert all(v == 0.0 for v in cluster_quality(cs, d).values())

    def test_mean_arithmetic(self):
        d = dist_from_pairs(3, {(0, 1): 0.2, (0, 2): 0.4, (1, 2): 0.4})
        cs = build_clusters(range(3), d, 0.5)
        target = next(c for c in cs.clusters if c.size == 3)
        assert cluster_quality(cs, d)[target.id] == pytest.approx(0.3)


class TestClusterFormat:
    def test_round_trip(self):
        rng = random.Random(12)
        d = random_dist(rng, 9)
        cs = build_clusters(range(9), d, 0.5)
        parsed = parse_clusters(format_clusters(cs, ["config deadbeef0123"]))
        assert [(c.medoid, c.members) for c in parsed.clusters] == \
               [(c.medoid, c.members) for c in cs.clusters]
        assert parsed.tau == cs.tau
        assert parsed.replication == cs.replication

    @pytest.mark.parametrize("text", [
        "",
        "kvclust 2 0.5 3 1\ncluster 0 medoid=0 members=0\n",
        "kvclust 1 0.5 3 2\ncluster 0 medoid=0 members=0\n",
        "kvclust 1 0.5 3 1\ncluster 1 medoid=0 members=0\n",
        "kvclust 1 0.5 3 1\ncluster 0 medoid=1 members=0,1\n",
        "kvclust 1 0.5 3 1\ncluster 0 medoid=0 members=0,0\n",
    ])
    def test_strict_errors(self, text):
        with pytest.raises(ClusterFormatError):
            parse_clusters(text)
