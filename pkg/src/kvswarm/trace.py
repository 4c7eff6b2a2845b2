"""Activation traces and pairwise co-activation statistics.

An activation trace records, per decoding step, which KV entries the sparse
attention selected.  From the trace we derive the co-occurrence counts, the
co-activation probability and the pairwise distance matrix that drives
clustering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Above this entry count the adjacency switches to a pair->count map.
DENSE_LIMIT = 16384


class TraceError(ValueError):
    """Malformed trace data or KVTRACE text."""


class ZeroDenominator(ValueError):
    """Co-activation statistics requested from an all-zero adjacency matrix."""


@dataclass(frozen=True)
class ActivationStep:
    """One decoding step: the activated entry set and any fresh entries."""

    activated: frozenset[int]
    new_entries: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "activated", frozenset(self.activated))
        object.__setattr__(self, "new_entries", tuple(self.new_entries))


@dataclass(frozen=True)
class ActivationTrace:
    """Ordered activation steps over entries 0..entry_count-1.

    ``entry_count`` is the final count, i.e. after all appends recorded in the
    steps' ``new_entries``.  Fresh ids must be consecutive continuations of the
    running entry count.
    """

    entry_count: int
    steps: tuple[ActivationStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        total_new = sum(len(s.new_entries) for s in self.steps)
        running = self.entry_count - total_new
        if running < 0:
            raise TraceError("more new entries than entry_count")
        for idx, step in enumerate(self.steps):
            for e in step.new_entries:
                if e != running:
                    raise TraceError(
                        f"step {idx}: new entry {e} is not consecutive "
                        f"(expected {running})"
                    )
                running += 1
            for e in step.activated:
                if not 0 <= e < running:
                    raise TraceError(f"step {idx}: activated id {e} out of range")

    @property
    def initial_entry_count(self) -> int:
        return self.entry_count - sum(len(s.new_entries) for s in self.steps)


def slice_trace(trace: ActivationTrace, stop: int) -> ActivationTrace:
    """Prefix of the first ``stop`` steps, with entry_count adjusted."""
    steps = trace.steps[:stop]
    count = trace.initial_entry_count + sum(len(s.new_entries) for s in steps)
    return ActivationTrace(entry_count=count, steps=steps)


@dataclass
class AdjacencyMatrix:
    """Symmetric co-occurrence counts with a zero diagonal.

    Dense (ndarray) for n <= DENSE_LIMIT, otherwise a map keyed by (i, j) with
    i < j.  Behavior is identical either way.
    """

    n: int
    counts: np.ndarray | None = None
    pair_counts: dict[tuple[int, int], int] | None = None
    _total_ordered: int = field(default=-1, repr=False)

    def count(self, i: int, j: int) -> int:
        if i == j:
            return 0
        if self.counts is not None:
            return int(self.counts[i, j])
        key = (i, j) if i < j else (j, i)
        return self.pair_counts.get(key, 0)

    def total_ordered(self) -> int:
        """Sum of counts over all ordered pairs (the double sum over i != j)."""
        if self._total_ordered < 0:
            if self.counts is not None:
                self._total_ordered = int(self.counts.sum())
            else:
                self._total_ordered = 2 * sum(self.pair_counts.values())
        return self._total_ordered

    def max_pair(self) -> int:
        if self.counts is not None:
            return int(self.counts.max()) if self.n else 0
        return max(self.pair_counts.values(), default=0)

    def row(self, i: int) -> np.ndarray:
        if self.counts is not None:
            return self.counts[i]
        out = np.zeros(self.n, dtype=np.int64)
        for (a, b), c in self.pair_counts.items():
            if a == i:
                out[b] = c
            elif b == i:
                out[a] = c
        return out


def build_adjacency(trace: ActivationTrace, dense_limit: int = DENSE_LIMIT) -> AdjacencyMatrix:
    """Count, for every entry pair, the steps in which both were activated."""
    n = trace.entry_count
    if n == 0:
        raise TraceError("trace declares zero entries")
    if n <= dense_limit:
        # One indicator row per step; the gram matrix is exactly the pair counts.
        s = np.zeros((len(trace.steps), n), dtype=np.float32)
        for k, step in enumerate(trace.steps):
            if step.activated:
                s[k, sorted(step.activated)] = 1.0
        counts = (s.T @ s).astype(np.int64)
        np.fill_diagonal(counts, 0)
        return AdjacencyMatrix(n=n, counts=counts)
    pairs: dict[tuple[int, int], int] = {}
    for step in trace.steps:
        act = sorted(step.activated)
        for a_idx, a in enumerate(act):
            for b in act[a_idx + 1:]:
                pairs[(a, b)] = pairs.get((a, b), 0) + 1
    return AdjacencyMatrix(n=n, pair_counts=pairs)


def coactivation_probability(adj: AdjacencyMatrix, i: int, j: int) -> float:
    """Pair count normalized by the ordered-pair grand total."""
    total = adj.total_ordered()
    if total == 0:
        raise ZeroDenominator("adjacency matrix is all-zero")
    return adj.count(i, j) / total


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances in [0, 1], zero diagonal."""

    n: int
    dist: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.dist[i]

    def value(self, i: int, j: int) -> float:
        return float(self.dist[i, j])


class SparseDistanceMatrix:
    """Lazy distance view over a sparse adjacency (absent pairs -> 1.0)."""

    def __init__(self, adj: AdjacencyMatrix, denom: int):
        self.n = adj.n
        self._adj = adj
        self._denom = denom

    def row(self, i: int) -> np.ndarray:
        d = 1.0 - self._adj.row(i).astype(np.float64) / self._denom
        d[i] = 0.0
        return d

    def value(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return 1.0 - self._adj.count(i, j) / self._denom


NORMALIZATIONS = ("global", "row-max")


def build_distance_matrix(adj: AdjacencyMatrix, normalization: str = "global"):
    """Distances d = 1 - P.

    ``global`` divides pair counts by the ordered-pair grand total.  ``row-max``
    divides by the largest pair count instead; it is an extension (not part of
    the probability model) that keeps distances spread out when the entry count
    is large and the global total would flatten everything toward 1.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    if normalization == "global":
        denom = adj.total_ordered()
    else:
        denom = adj.max_pair()
    if denom == 0:
        raise ZeroDenominator("adjacency matrix is all-zero")
    if adj.counts is None:
        return SparseDistanceMatrix(adj, denom)
    dist = 1.0 - adj.counts.astype(np.float64) / denom
    np.clip(dist, 0.0, 1.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(n=adj.n, dist=dist)


# --- KVTRACE v1 text format -------------------------------------------------
#
# kvtrace 1 <entry_count>
# step <idx> new=<comma-ids or -> act=<comma-ids or ->
#
# Lines starting with '#' and blank lines are ignored (used for the config
# hash stamp); everything else is parsed strictly.


def _fmt_ids(ids: Iterable[int]) -> str:
    ids = sorted(ids)
    return ",".join(str(i) for i in ids) if ids else "-"


def _parse_ids(text: str, what: str) -> list[int]:
    if text == "-":
        return []
    try:
        ids = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise TraceError(f"bad {what} id list: {text!r}") from exc
    if len(set(ids)) != len(ids):
        raise TraceError(f"duplicate ids in {what}: {text!r}")
    return ids


def format_trace(trace: ActivationTrace, header_comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"kvtrace 1 {trace.entry_count}")
    for idx, step in enumerate(trace.steps):
        new = ",".join(str(e) for e in step.new_entries) if step.new_entries else "-"
        lines.append(f"step {idx} new={new} act={_fmt_ids(step.activated)}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> ActivationTrace:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise TraceError("empty trace file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "kvtrace" or head[1] != "1":
        raise TraceError(f"bad header: {lines[0]!r}")
    entry_count = int(head[2])
    steps = []
    for expected, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != 4 or parts[0] != "step":
            raise TraceError(f"bad step line: {line!r}")
        if int(parts[1]) != expected:
            raise TraceError(f"step index {parts[1]} out of order (expected {expected})")
        if not parts[2].startswith("new=") or not parts[3].startswith("act="):
            raise TraceError(f"unknown fields in step line: {line!r}")
        new = _parse_ids(parts[2][4:], "new")
        act = _parse_ids(parts[3][4:], "act")
        steps.append(ActivationStep(activated=frozenset(act), new_entries=tuple(new)))
    return ActivationTrace(entry_count=entry_count, steps=tuple(steps))


def write_trace(path, trace: ActivationTrace, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_trace(trace, header_comments))


def read_trace(path) -> ActivationTrace:
    with open(path) as fh:
        return parse_trace(fh.read())
