"""Deterministic multi-device storage model and the per-step retrieval loop.

Device time for a bucket of k entries is one addressing charge plus the larger
of the byte-transfer and request-rate costs, so the model shows the same
IOPS-bound to bandwidth-bound transition real devices do.  A step's I/O time is
the slowest device (devices run in parallel).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from . import scheduler as sched
from .adaptation import (CacheState, ClusterMaintainer, cache_replace,
                         update_frequencies)
from .clustering import ClusterSet
from .placement import (CacheScoreParams, DramPlan, PlacementMap,
                        build_dram_plan, place_clusters)
from .trace import ActivationTrace

MODE_SWARM = sched.MODE_SWARM
MODE_STATIC = sched.MODE_STATIC
MODE_NO_BALANCE = sched.MODE_NO_BALANCE
MODE_NO_DEDUP = sched.MODE_NO_DEDUP
MODE_NO_CLUSTER = "no_cluster"
MODES = (MODE_SWARM, MODE_STATIC, MODE_NO_BALANCE, MODE_NO_DEDUP, MODE_NO_CLUSTER)

SELECT_MEDOID = "medoid"
SELECT_ORACLE = "oracle"


@dataclass(frozen=True)
class DeviceModel:
    bandwidth: float  # bytes / second, sustained
    iops_cap: float   # requests / second
    t_base: float     # addressing latency per submission, microseconds

    def __post_init__(self):
        if min(self.bandwidth, self.iops_cap, self.t_base) <= 0:
            raise ValueError("device parameters must be positive")


# Presets for the two device classes used in the comparisons.
PM9A3 = DeviceModel(bandwidth=6.9e9, iops_cap=1.1e6, t_base=100.0)
OPTANE_900P = DeviceModel(bandwidth=2.5e9, iops_cap=0.55e6, t_base=100.0)


@dataclass(frozen=True)
class SimConfig:
    n_disk: int
    device: DeviceModel
    entry_size: int
    mode: str = MODE_SWARM
    addressing: str = "per_step"  # or "per_entry"

    def __post_init__(self):
        if self.entry_size <= 0:
            raise ValueError("entry_size must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.addressing not in ("per_step", "per_entry"):
            raise ValueError(f"unknown addressing {self.addressing!r}")

    def per_entry_cost_us(self) -> float:
        return max(self.entry_size / self.device.bandwidth,
                   1.0 / self.device.iops_cap) * 1e6


@dataclass
class StepMetrics:
    io_time: float            # microseconds
    io_volume: int            # bytes
    per_device_entries: list[int]
    cache_hits: int
    effective_bandwidth: float  # bytes / second


def simulate_step(plan: sched.IoPlan, cfg: SimConfig, cache_hits: int = 0) -> StepMetrics:
    per_device = [len(b) for b in plan.buckets]
    if len(per_device) < cfg.n_disk:
        per_device = per_device + [0] * (cfg.n_disk - len(per_device))
    elif len(per_device) > cfg.n_disk:
        raise ValueError("plan uses more devices than the config declares")
    cost = cfg.per_entry_cost_us()
    io_time = 0.0
    for k in per_device:
        if k == 0:
            continue
        base = cfg.device.t_base * (k if cfg.addressing == "per_entry" else 1)
        io_time = max(io_time, base + k * cost)
    io_volume = sum(per_device) * cfg.entry_size
    eff_bw = io_volume / io_time * 1e6 if io_time > 0 else 0.0
    return StepMetrics(io_time=io_time, io_volume=io_volume,
                       per_device_entries=per_device, cache_hits=cache_hits,
                       effective_bandwidth=eff_bw)


def summarize(metrics: list[StepMetrics]) -> dict:
    times = np.array([m.io_time for m in metrics], dtype=np.float64)
    total_volume = int(sum(m.io_volume for m in metrics))
    total_time = float(times.sum())
    return {
        "steps": len(metrics),
        "mean_io_time_us": float(times.mean()) if len(times) else 0.0,
        "p50_io_time_us": float(np.percentile(times, 50)) if len(times) else 0.0,
        "p99_io_time_us": float(np.percentile(times, 99)) if len(times) else 0.0,
        "max_io_time_us": float(times.max()) if len(times) else 0.0,
        "total_io_time_us": total_time,
        "total_io_volume_bytes": total_volume,
        "mean_effective_bw_bytes_per_s": (total_volume / total_time * 1e6
                                          if total_time > 0 else 0.0),
        "total_cache_hits": int(sum(m.cache_hits for m in metrics)),
    }


@dataclass
class RunPolicies:
    selection: str = SELECT_MEDOID
    assignment: str | None = None     # None disables decode-time maintenance
    assign_tau: float | None = None   # defaults to the cluster set's tau
    adapt_cache: bool = True
    initial_freqs: Mapping[int, int] | None = None


@dataclass
class RunResult:
    metrics: list[StepMetrics]
    summary: dict
    clusters: ClusterSet | None
    cache_state: CacheState | None
    maintainer: ClusterMaintainer | None


def select_activated(activated: frozenset[int], cs: ClusterSet, selection: str) -> set[int]:
    if selection == SELECT_MEDOID:
        return {c.id for c in cs.clusters if c.medoid in activated}
    if selection == SELECT_ORACLE:
        hit: set[int] = set()
        for e in activated:
            hit.update(cs.replication.get(e, ()))
        return hit
    raise ValueError(f"unknown selection mode {selection!r}")


def cluster_activation_counts(trace: ActivationTrace, cs: ClusterSet,
                              selection: str = SELECT_MEDOID) -> dict[int, int]:
    """Offline per-cluster activation frequencies from a profiling trace."""
    counts = {c.id: 0 for c in cs.clusters}
    for step in trace.steps:
        for cid in select_activated(step.activated, cs, selection):
            counts[cid] += 1
    return counts


def run_workload(trace: ActivationTrace, cs: ClusterSet | None,
                 pm: PlacementMap | None, dram: DramPlan | None,
                 cfg: SimConfig, policies: RunPolicies | None = None) -> RunResult:
    """Drive select -> merge -> schedule -> simulate -> adapt over a trace."""
    policies = policies or RunPolicies()

    if cfg.mode == MODE_NO_CLUSTER:
        return _run_no_cluster(trace, cfg)
    if cs is None or pm is None or dram is None:
        raise ValueError("clustered modes need clusters, placement and a DRAM plan")

    sizes = cs.sizes()
    state = CacheState(freq=dict(policies.initial_freqs or {}),
                       resident=set(dram.hot_cache))
    params = CacheScoreParams(t_base=cfg.device.t_base,
                              t_transfer=cfg.per_entry_cost_us())
    window = list(dram.window)
    maintainer = None
    if policies.assignment is not None:
        tau = policies.assign_tau if policies.assign_tau is not None else cs.tau
        maintainer = ClusterMaintainer(cs, pm, dram.window_capacity, tau,
                                       policy=policies.assignment)

    metrics: list[StepMetrics] = []
    activated_total = 0
    for step in trace.steps:
        if step.new_entries:
            window.extend(step.new_entries)
            del window[:max(0, len(window) - dram.window_capacity)]
            if maintainer is not None:
                maintainer.add_entries(step.new_entries)

        activated_clusters = select_activated(step.activated, cs, policies.selection)
        activated_total += len(activated_clusters)
        hot_entries: set[int] = set()
        for cid in state.resident:
            hot_entries.update(cs.clusters[cid].members)
        resident = dram.medoid_entries() | set(window) | hot_entries
        if maintainer is not None:
            resident.update(maintainer.pending)
        cache_hits = len(activated_clusters & state.resident)

        if cfg.mode in (MODE_SWARM, MODE_NO_BALANCE):
            req = sched.RetrievalRequest(frozenset(activated_clusters),
                                         frozenset(resident))
            e_io: Iterable[int] = sched.merge_activated(req, cs)
        else:  # static / no_dedup keep duplicates across activated clusters
            e_io = [e for cid in sorted(activated_clusters)
                    for e in cs.clusters[cid].members if e not in resident]

        plan = sched.schedule(e_io, pm, mode=cfg.mode)
        metrics.append(simulate_step(plan, cfg, cache_hits=cache_hits))

        if policies.adapt_cache:
            update_frequencies(state, activated_clusters, state.resident)
            cache_replace(state, activated_clusters, dram.cache_budget_entries,
                          params, sizes)
            sizes = cs.sizes()  # assignment below may grow clusters
        if maintainer is not None:
            maintainer.observe(step.activated)
            sizes = cs.sizes()

    summary = summarize(metrics)
    summary["activated_cluster_total"] = activated_total
    summary["cache_hit_rate"] = (summary["total_cache_hits"] / activated_total
                                 if activated_total else 0.0)
    return RunResult(metrics=metrics, summary=summary, clusters=cs,
                     cache_state=state, maintainer=maintainer)


def _run_no_cluster(trace: ActivationTrace, cfg: SimConfig) -> RunResult:
    """Baseline without clustering, caching or dedup: every activated entry is
    fetched from its statically striped home device."""
    metrics = []
    for step in trace.steps:
        buckets: list[list[int]] = [[] for _ in range(cfg.n_disk)]
        for e in sorted(step.activated):
            buckets[e % cfg.n_disk].append(e)
        plan = sched.IoPlan(buckets=buckets, batches=[])
        metrics.append(simulate_step(plan, cfg))
    summary = summarize(metrics)
    summary["activated_cluster_total"] = 0
    summary["cache_hit_rate"] = 0.0
    return RunResult(metrics=metrics, summary=summary, clusters=None,
                     cache_state=None, maintainer=None)


def run_mode(trace: ActivationTrace, cs: ClusterSet | None, cfg: SimConfig,
             window_capacity: int = 0, cache_budget_entries: int = 0,
             policies: RunPolicies | None = None,
             profile_trace: ActivationTrace | None = None) -> RunResult:
    """Build the mode-appropriate placement and DRAM plan, then run.

    ``no_balance`` gets the unbalanced placement (every cluster starting at
    device 0); the other clustered modes share the round-robin layout.
    Offline frequencies feeding the hot-cluster cache come from
    ``profile_trace`` (default: the workload trace itself).
    """
    policies = policies or RunPolicies()
    if cfg.mode == MODE_NO_CLUSTER:
        return run_workload(trace, None, None, None, cfg, policies)
    if cs is None:
        raise ValueError("clustered modes need a cluster set")
    cs_run = copy.deepcopy(cs)
    pm = place_clusters(cs_run, cfg.n_disk,
                        round_robin=(cfg.mode != MODE_NO_BALANCE))
    params = CacheScoreParams(t_base=cfg.device.t_base,
                              t_transfer=cfg.per_entry_cost_us())
    if policies.initial_freqs is None:
        freq_trace = profile_trace if profile_trace is not None else trace
        freqs = cluster_activation_counts(freq_trace, cs_run, policies.selection)
        policies = replace(policies, initial_freqs=freqs)
    dram = build_dram_plan(cs_run, pm, policies.initial_freqs, window_capacity,
                           cache_budget_entries, params)
    return run_workload(trace, cs_run, pm, dram, cfg, policies)
