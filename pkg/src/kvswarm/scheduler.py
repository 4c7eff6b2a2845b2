"""Retrieval scheduling: cluster merge, per-device buckets, batches.

The balanced policy sorts pending entries by ascending replication factor, so
entries with no routing freedom claim their device first, then routes each
replicated entry to the lightest bucket among the devices that hold a copy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .clustering import ClusterSet
from .placement import PlacementMap

MODE_SWARM = "swarm"
MODE_STATIC = "static"
MODE_NO_BALANCE = "no_balance"
MODE_NO_DEDUP = "no_dedup"

BALANCED_MODES = (MODE_SWARM, MODE_NO_DEDUP)
FIRST_REPLICA_MODES = (MODE_STATIC, MODE_NO_BALANCE)


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalRequest:
    activated_clusters: frozenset[int]
    dram_resident: frozenset[int]


@dataclass
class IoPlan:
    buckets: list[list[int]]              # per device, assignment order
    batches: list[list[tuple[int, int]]]  # rounds of (device, entry)


def merge_activated(req: RetrievalRequest, cs: ClusterSet) -> set[int]:
    """Union of the activated clusters' members, minus what DRAM already has."""
    merged: set[int] = set()
    for cid in req.activated_clusters:
        if cid < 0 or cid >= len(cs.clusters):
            raise SchedulingError(f"unknown cluster id {cid}")
        merged.update(cs.clusters[cid].members)
    return merged - set(req.dram_resident)


def schedule(e_io: Iterable[int], pm: PlacementMap, mode: str = MODE_SWARM) -> IoPlan:
    """Assign entries to device buckets and form submission batches.

    ``e_io`` may contain duplicates (the no-dedup baselines pass the raw
    concatenation of activated clusters); each occurrence is routed
    independently.
    """
    buckets: list[list[int]] = [[] for _ in range(pm.n_disk)]
    entries = list(e_io)
    for e in entries:
        if not pm.locations.get(e):
            raise SchedulingError(f"entry {e} has no replica in the placement")

    if mode in BALANCED_MODES:
        entries.sort(key=lambda e: (len(pm.locations[e]), e))
        for e in entries:
            devs = pm.replica_devices(e)
            target = min(devs, key=lambda d: (len(buckets[d]), d))
            buckets[target].append(e)
    elif mode in FIRST_REPLICA_MODES:
        for e in sorted(entries):
            buckets[pm.locations[e][0].device].append(e)
    else:
        raise SchedulingError(f"unknown scheduling mode {mode!r}")

    depth = max((len(b) for b in buckets), default=0)
    batches = []
    for round_idx in range(depth):
        batch = [(d, b[round_idx]) for d, b in enumerate(buckets) if round_idx < len(b)]
        batches.append(batch)
    return IoPlan(buckets=buckets, batches=batches)


def max_load(plan: IoPlan) -> int:
    return max((len(b) for b in plan.buckets), default=0)


def dump_plan(plan: IoPlan) -> str:
    lines = []
    for d, bucket in enumerate(plan.buckets):
        ids = ",".join(str(e) for e in bucket) if bucket else "-"
        lines.append(f"bucket {d}: {ids}")
    return "\n".join(lines) + "\n"
