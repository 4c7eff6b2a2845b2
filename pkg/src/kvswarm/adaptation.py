"""Online adaptation: windowed cluster assignment and cache maintenance.

A freshly decoded entry sits in the DRAM window for a fixed number of steps
while its co-occurrence with every cluster medoid is tallied; once the window
fills, the entry joins every cluster whose windowed distance beats the radius,
or becomes a singleton cluster if none does.  The DRAM cluster cache follows a
frequency-fed cost-effectiveness score with min-heap eviction.
"""
from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .clustering import Cluster, ClusterSet
from .placement import CacheScoreParams, DeviceSlot, PlacementMap, cost_effectiveness

ASSIGN_COACTIVATION = "coactivation"
ASSIGN_MIN_SIZE = "min_size"
ASSIGN_MIN_DIFF = "min_diff"
ASSIGN_POLICIES = (ASSIGN_COACTIVATION, ASSIGN_MIN_SIZE, ASSIGN_MIN_DIFF)


class WindowNotReady(RuntimeError):
    """The entry has not yet been observed for a full window of steps."""


@dataclass
class WindowStats:
    window_size: int
    medoid_cooccur: dict[tuple[int, int], int] = field(default_factory=dict)
    observed_steps: dict[int, int] = field(default_factory=dict)

    def record_step(self, pending: Iterable[int], activated: frozenset[int],
                    medoids: Mapping[int, int]) -> None:
        """Tally one step for all pending new entries."""
        active_medoid_clusters = [cid for cid, m in medoids.items() if m in activated]
        for e in pending:
            self.observed_steps[e] = self.observed_steps.get(e, 0) + 1
            if e in activated:
                for cid in active_medoid_clusters:
                    key = (e, cid)
                    self.medoid_cooccur[key] = self.medoid_cooccur.get(key, 0) + 1

    def is_ready(self, e_new: int) -> bool:
        return self.observed_steps.get(e_new, 0) >= self.window_size


def new_entry_distance(stats: WindowStats, e_new: int, cid: int) -> float:
    """Windowed distance 1 - cooccurrence/window_size."""
    if not stats.is_ready(e_new):
        raise WindowNotReady(f"entry {e_new} observed for fewer than "
                             f"{stats.window_size} steps")
    return 1.0 - stats.medoid_cooccur.get((e_new, cid), 0) / stats.window_size


def _join_cluster(e_new: int, cid: int, dist: float, cs: ClusterSet,
                  pm: PlacementMap) -> DeviceSlot:
    slot = pm.append_to_cluster(cid, e_new)
    cluster = cs.clusters[cid]
    cluster.members.append(e_new)
    cluster.admission_distances.append(dist)
    cs.replication.setdefault(e_new, []).append(cid)
    return slot


def _new_singleton(e_new: int, cs: ClusterSet, pm: PlacementMap) -> tuple[int, DeviceSlot]:
    cid = len(cs.clusters)
    cs.clusters.append(Cluster(id=cid, medoid=e_new, members=[e_new],
                               admission_distances=[0.0]))
    cs.replication.setdefault(e_new, []).append(cid)
    slot = pm.start_cluster(cid, e_new)
    return cid, slot


def assign_new_entry(e_new: int, stats: WindowStats, cs: ClusterSet,
                     pm: PlacementMap, tau: float) -> list[tuple[int, DeviceSlot]]:
    """Join every cluster with windowed distance strictly below tau.

    Falls back to a fresh singleton cluster when none qualifies, keeping the
    full-coverage invariant.
    """
    joined: list[tuple[int, DeviceSlot]] = []
    for c in cs.clusters:
        d = new_entry_distance(stats, e_new, c.id)
        if d < tau:
            joined.append((c.id, _join_cluster(e_new, c.id, d, cs, pm)))
    if not joined:
        joined.append(_new_singleton(e_new, cs, pm))
    return joined


def assign_min_size(e_new: int, cs: ClusterSet, pm: PlacementMap) -> list[tuple[int, DeviceSlot]]:
    """Baseline: always join the currently smallest cluster."""
    target = min(cs.clusters, key=lambda c: (c.size, c.id))
    return [(target.id, _join_cluster(e_new, target.id, 1.0, cs, pm))]


def assign_min_diff(e_new: int, stats: WindowStats, cs: ClusterSet,
                    pm: PlacementMap) -> list[tuple[int, DeviceSlot]]:
    """Baseline: always join the cluster with the nearest medoid, radius or not."""
    dists = {c.id: new_entry_distance(stats, e_new, c.id) for c in cs.clusters}
    target = min(cs.clusters, key=lambda c: (dists[c.id], c.id))
    return [(target.id, _join_cluster(e_new, target.id, dists[target.id], cs, pm))]


# --- cluster cache -----------------------------------------------------------


@dataclass
class CacheState:
    freq: dict[int, int] = field(default_factory=dict)
    resident: set[int] = field(default_factory=set)

    def score(self, cid: int, size: int, params: CacheScoreParams) -> float:
        # freq may drift negative; the score clamps at zero so a cold streak
        # cannot permanently blacklist a cluster.
        return cost_effectiveness(max(self.freq.get(cid, 0), 0), size, params)


def update_frequencies(state: CacheState, activated: Iterable[int],
                       resident: Iterable[int]) -> CacheState:
    activated = set(activated)
    for cid in activated:
        state.freq[cid] = state.freq.get(cid, 0) + 1
    for cid in set(resident) - activated:
        state.freq[cid] = state.freq.get(cid, 0) - 1
    return state


def cache_replace(state: CacheState, candidates: Iterable[int], budget: int,
                  params: CacheScoreParams, sizes: Mapping[int, int],
                  ) -> tuple[list[int], list[int]]:
    """Admit high-score candidates, evicting from the score min-heap.

    Returns (admitted, evicted) cluster ids.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    admitted: list[int] = []
    evicted: list[int] = []
    used = sum(sizes[c] for c in state.resident)
    heap = [(state.score(c, sizes[c], params), c) for c in sorted(state.resident)]
    heapq.heapify(heap)

    ordered = sorted(set(candidates),
                     key=lambda c: (-state.score(c, sizes[c], params), c))
    for cand in ordered:
        if cand in state.resident:
            continue
        size = sizes[cand]
        if size > budget:
            continue
        cand_score = state.score(cand, size, params)
        if used + size <= budget:
            state.resident.add(cand)
            heapq.heappush(heap, (cand_score, cand))
            used += size
            admitted.append(cand)
            continue
        # Pop the cheapest residents while they score below the candidate and
        # space is still missing; commit only if enough was freed.
        victims = []
        freed_used = used
        while heap and freed_used + size > budget:
            score, cid = heap[0]
            if score >= cand_score:
                break
            heapq.heappop(heap)
            victims.append((score, cid))
            freed_used -= sizes[cid]
        if freed_used + size <= budget:
            for _, cid in victims:
                state.resident.discard(cid)
                evicted.append(cid)
            used = freed_used + size
            state.resident.add(cand)
            heapq.heappush(heap, (cand_score, cand))
            admitted.append(cand)
        else:
            for item in victims:
                heapq.heappush(heap, item)
    return admitted, evicted


class LruClusterCache:
    """Recency-only cluster cache used as the comparison baseline."""

    def __init__(self, budget_entries: int):
        self.budget = budget_entries
        self._order: OrderedDict[int, int] = OrderedDict()  # cid -> size
        self._used = 0

    @property
    def resident(self) -> set[int]:
        return set(self._order)

    def access(self, activated: Iterable[int], sizes: Mapping[int, int]) -> int:
        """Touch/admit the activated clusters; returns the hit count."""
        hits = 0
        for cid in sorted(activated):
            if cid in self._order:
                hits += 1
                self._order.move_to_end(cid)
                continue
            size = sizes[cid]
            if size > self.budget:
                continue
            while self._used + size > self.budget:
                _, evicted_size = self._order.popitem(last=False)
                self._used -= evicted_size
            self._order[cid] = size
            self._used += size
        return hits


def replay_cost_effectiveness_cache(stream: Iterable[Iterable[int]],
                                    sizes: Mapping[int, int], budget: int,
                                    params: CacheScoreParams,
                                    initial_freqs: Mapping[int, int] | None = None,
                                    ) -> float:
    """Hit rate of the score-driven cache over an activation stream."""
    state = CacheState(freq=dict(initial_freqs or {}))
    hits = 0
    total = 0
    for activated in stream:
        activated = set(activated)
        total += len(activated)
        hits += len(activated & state.resident)
        update_frequencies(state, activated, state.resident)
        cache_replace(state, activated, budget, params, sizes)
    return hits / total if total else 0.0


def replay_lru_cache(stream: Iterable[Iterable[int]], sizes: Mapping[int, int],
                     budget: int) -> float:
    cache = LruClusterCache(budget)
    hits = 0
    total = 0
    for activated in stream:
        activated = set(activated)
        total += len(activated)
        hits += len(activated & cache.resident)
        cache.access(activated, sizes)
    return hits / total if total else 0.0


# --- decode-time maintenance driver -----------------------------------------


class ClusterMaintainer:
    """Tracks in-window new entries and applies the assignment policy."""

    def __init__(self, cs: ClusterSet, pm: PlacementMap, window_size: int,
                 tau: float, policy: str = ASSIGN_COACTIVATION):
        if policy not in ASSIGN_POLICIES:
            raise ValueError(f"unknown assignment policy {policy!r}")
        self.cs = cs
        self.pm = pm
        self.tau = tau
        self.policy = policy
        self.stats = WindowStats(window_size=window_size)
        self._pending: list[int] = []
        self.assignments: dict[int, list[int]] = {}

    @property
    def pending(self) -> list[int]:
        return list(self._pending)

    def add_entries(self, entries: Iterable[int]) -> None:
        self._pending.extend(entries)

    def observe(self, activated: frozenset[int]) -> list[int]:
        """Record one step; returns entries that matured and were assigned."""
        if not self._pending:
            return []
        self.stats.record_step(self._pending, activated, self.cs.medoid_of())
        matured = [e for e in self._pending if self.stats.is_ready(e)]
        for e in matured:
            if self.policy == ASSIGN_COACTIVATION:
                joined = assign_new_entry(e, self.stats, self.cs, self.pm, self.tau)
            elif self.policy == ASSIGN_MIN_SIZE:
                joined = assign_min_size(e, self.cs, self.pm)
            else:
                joined = assign_min_diff(e, self.stats, self.cs, self.pm)
            self.assignments[e] = [cid for cid, _ in joined]
        self._pending = [e for e in self._pending if e not in self.assignments]
        return matured
