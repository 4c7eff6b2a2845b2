"""Two-tier placement: round-robin cluster striping on devices, DRAM plan.

Each cluster starts at the device selected by a global pointer and wraps its
members around the device ring, so every cluster's entries spread as evenly as
possible.  DRAM keeps the medoid index, a sliding window of recent entries and
the clusters with the best cost-effectiveness score.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .clustering import ClusterSet


@dataclass(frozen=True)
class DeviceSlot:
    device: int
    slot: int


@dataclass
class PlacementMap:
    n_disk: int
    locations: dict[int, list[DeviceSlot]]
    cluster_start: dict[int, int]
    cluster_sizes: dict[int, int]
    global_pointer: int
    device_fill: list[int]

    def replica_devices(self, entry: int) -> list[int]:
        return [ds.device for ds in self.locations[entry]]

    def append_to_cluster(self, cid: int, entry: int) -> DeviceSlot:
        """Continue a cluster's stripe with one more entry."""
        device = (self.cluster_start[cid] + self.cluster_sizes[cid]) % self.n_disk
        slot = DeviceSlot(device=device, slot=self.device_fill[device])
        self.device_fill[device] += 1
        self.cluster_sizes[cid] += 1
        self.locations.setdefault(entry, []).append(slot)
        return slot

    def start_cluster(self, cid: int, entry: int) -> DeviceSlot:
        """Place a brand-new singleton cluster via the global pointer."""
        start = self.global_pointer % self.n_disk
        self.cluster_start[cid] = start
        self.cluster_sizes[cid] = 0
        self.global_pointer += 1
        slot = DeviceSlot(device=start, slot=self.device_fill[start])
        self.device_fill[start] += 1
        self.cluster_sizes[cid] = 1
        self.locations.setdefault(entry, []).append(slot)
        return slot


def place_clusters(cs: ClusterSet, n_disk: int, round_robin: bool = True) -> PlacementMap:
    """Stripe every cluster across the device ring.

    With ``round_robin`` off, every cluster starts at device 0 (the unbalanced
    placement baseline); the pointer still advances so sizes stay recorded.
    """
    if n_disk < 1:
        raise ValueError("need at least one device")
    locations: dict[int, list[DeviceSlot]] = {}
    cluster_start: dict[int, int] = {}
    cluster_sizes: dict[int, int] = {}
    device_fill = [0] * n_disk
    pointer = 0
    for c in sorted(cs.clusters, key=lambda c: c.id):
        start = pointer % n_disk if round_robin else 0
        cluster_start[c.id] = start
        cluster_sizes[c.id] = c.size
        for k, entry in enumerate(c.members):
            dev = (start + k) % n_disk
            slot = DeviceSlot(device=dev, slot=device_fill[dev])
            device_fill[dev] += 1
            locations.setdefault(entry, []).append(slot)
        pointer += c.size
    return PlacementMap(
        n_disk=n_disk,
        locations=locations,
        cluster_start=cluster_start,
        cluster_sizes=cluster_sizes,
        global_pointer=pointer,
        device_fill=device_fill,
    )


@dataclass
class CacheScoreParams:
    t_base: float      # device addressing latency, microseconds
    t_transfer: float  # per-entry transfer cost, microseconds

    def __post_init__(self):
        if self.t_base <= 0 or self.t_transfer <= 0:
            raise ValueError("latency parameters must be positive")


def cost_effectiveness(f_i: int, s_i: int, p: CacheScoreParams) -> float:
    """Activation frequency weighted by amortized per-entry retrieval cost."""
    if s_i < 1:
        raise ValueError("cluster size must be at least 1")
    if f_i < 0:
        raise ValueError("activation count must be non-negative")
    return f_i * (p.t_base + s_i * p.t_transfer) / s_i


def select_hot_clusters(
    cs: ClusterSet,
    freqs: Mapping[int, int],
    budget_entries: int,
    p: CacheScoreParams,
) -> set[int]:
    """Greedy admission by descending score; clusters that do not fit are
    skipped and the scan continues."""
    if budget_entries < 0:
        raise ValueError("budget must be non-negative")
    scored = sorted(
        cs.clusters,
        key=lambda c: (-cost_effectiveness(max(freqs.get(c.id, 0), 0), c.size, p), c.id),
    )
    hot: set[int] = set()
    used = 0
    for c in scored:
        if used + c.size <= budget_entries:
            hot.add(c.id)
            used += c.size
    return hot


@dataclass
class DramPlan:
    medoid_index: dict[int, tuple[int, int]]  # cluster id -> (medoid, start device)
    window_capacity: int
    window: list[int]
    hot_cache: set[int]
    cache_budget_entries: int

    def medoid_entries(self) -> set[int]:
        return {m for m, _ in self.medoid_index.values()}


def build_dram_plan(
    cs: ClusterSet,
    pm: PlacementMap,
    freqs: Mapping[int, int],
    window_capacity: int,
    budget_entries: int,
    params: CacheScoreParams,
) -> DramPlan:
    n = cs.n_entries
    window = list(range(max(0, n - window_capacity), n))
    medoid_index = {c.id: (c.medoid, pm.cluster_start[c.id]) for c in cs.clusters}
    hot = select_hot_clusters(cs, freqs, budget_entries, params)
    return DramPlan(
        medoid_index=medoid_index,
        window_capacity=window_capacity,
        window=window,
        hot_cache=hot,
        cache_budget_entries=budget_entries,
    )


# --- KVPLACE v1 text format --------------------------------------------------


def format_placement(pm: PlacementMap, header_comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"kvplace 1 {pm.n_disk}")
    for entry in sorted(pm.locations):
        reps = ",".join(f"{ds.device}:{ds.slot}" for ds in pm.locations[entry])
        lines.append(f"entry {entry} replicas={reps}")
    return "\n".join(lines) + "\n"


def parse_placement(text: str) -> PlacementMap:
    """Rebuild entry locations from KVPLACE text.

    Cluster bookkeeping (starts, sizes, pointer) is not part of the file; a
    parsed map supports scheduling and export, not further adaptation.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty placement file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "kvplace" or head[1] != "1":
        raise ValueError(f"bad header: {lines[0]!r}")
    n_disk = int(head[2])
    locations: dict[int, list[DeviceSlot]] = {}
    device_fill = [0] * n_disk
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 3 or parts[0] != "entry" or not parts[2].startswith("replicas="):
            raise ValueError(f"bad placement line: {line!r}")
        entry = int(parts[1])
        slots = []
        for token in parts[2][9:].split(","):
            dev_s, slot_s = token.split(":")
            dev, slot = int(dev_s), int(slot_s)
            slots.append(DeviceSlot(device=dev, slot=slot))
            device_fill[dev] = max(device_fill[dev], slot + 1)
        locations[entry] = slots
    return PlacementMap(
        n_disk=n_disk,
        locations=locations,
        cluster_start={},
        cluster_sizes={},
        global_pointer=0,
        device_fill=device_fill,
    )


def format_dram_plan(plan: DramPlan, header_comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append("kvdram 1")
    for cid in sorted(plan.medoid_index):
        medoid, start = plan.medoid_index[cid]
        lines.append(f"medoid {cid} entry={medoid} start={start}")
    win = ",".join(str(e) for e in plan.window) if plan.window else "-"
    lines.append(f"window {win}")
    hot = ",".join(str(c) for c in sorted(plan.hot_cache)) if plan.hot_cache else "-"
    lines.append(f"hot {hot}")
    return "\n".join(lines) + "\n"


def write_placement(path, pm: PlacementMap, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_placement(pm, header_comments))


def write_dram_plan(path, plan: DramPlan, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_dram_plan(plan, header_comments))
