"""Density-ordered medoid clustering with controlled replication.

Medoids are picked in descending co-activation density; each cluster then
greedily absorbs the medoid's radius neighborhood, admitting a candidate only
while its average distance to the members already present stays within the
radius.  Entries covered by earlier clusters stay eligible as candidates, which
is what creates replicas of strongly shared entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ClusterFormatError(ValueError):
    """Malformed KVCLUST text."""


@dataclass
class Cluster:
    id: int
    medoid: int
    members: list[int]
    # Average member distance at admission time, aligned with members
    # (0.0 for the medoid itself); kept for audit.
    admission_distances: list[float] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    tau: float
    n_entries: int
    replication: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.replication:
            self.replication = {}
            for c in self.clusters:
                for e in c.members:
                    self.replication.setdefault(e, []).append(c.id)

    def cluster(self, cid: int) -> Cluster:
        return self.clusters[cid]

    def sizes(self) -> dict[int, int]:
        return {c.id: c.size for c in self.clusters}

    def medoid_of(self) -> dict[int, int]:
        return {c.id: c.medoid for c in self.clusters}


@dataclass
class DensityTable:
    rho: np.ndarray

    def __getitem__(self, e: int) -> int:
        return int(self.rho[e])


def coactivation_density(dist, tau: float) -> DensityTable:
    """Per entry, the number of other entries within radius tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    n = dist.n
    rho = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = dist.row(i)
        rho[i] = int(np.count_nonzero(row <= tau)) - 1  # drop the zero diagonal
    return DensityTable(rho=rho)


def build_clusters(
    entries: Sequence[int],
    dist,
    tau: float,
    max_replicas: int | None = None,
) -> ClusterSet:
    """Cover all entries with medoid-anchored clusters; replicas allowed.

    Ties break toward the lower entry id both in the medoid queue (equal
    density) and in the candidate queue (equal distance), so the result is
    fully deterministic.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    entries = list(entries)
    entry_set = np.zeros(dist.n, dtype=bool)
    entry_set[entries] = True

    rho = np.zeros(dist.n, dtype=np.int64)
    for e in entries:
        row = dist.row(e)
        rho[e] = int(np.count_nonzero((row <= tau) & entry_set)) - 1

    medoid_queue = sorted(entries, key=lambda e: (-rho[e], e))
    covered = np.zeros(dist.n, dtype=bool)
    replicas: dict[int, int] = {}
    clusters: list[Cluster] = []

    for m in medoid_queue:
        if covered[m]:
            continue
        row_m = dist.row(m)
        candidates = [e for e in entries if e != m and row_m[e] <= tau]
        candidates.sort(key=lambda e: (row_m[e], e))
        members = [m]
        admitted = [0.0]
        member_dist_sum = np.array(row_m, dtype=np.float64, copy=True)
        for c in candidates:
            if max_replicas is not None and replicas.get(c, 0) >= max_replicas:
                continue
            avg = member_dist_sum[c] / len(members)
            if avg <= tau:
                members.append(c)
                admitted.append(float(avg))
                member_dist_sum += dist.row(c)
        cid = len(clusters)
        clusters.append(Cluster(id=cid, medoid=m, members=members,
                                admission_distances=admitted))
        for e in members:
            replicas[e] = replicas.get(e, 0) + 1
        covered[members] = True
        if covered[entries].all():
            break

    return ClusterSet(clusters=clusters, tau=tau, n_entries=len(entries))


def cluster_quality(cs: ClusterSet, dist) -> dict[int, float]:
    """Mean member-to-medoid distance per cluster (0 for singletons)."""
    quality = {}
    for c in cs.clusters:
        others = [e for e in c.members if e != c.medoid]
        if not others:
            quality[c.id] = 0.0
        else:
            row = dist.row(c.medoid)
            quality[c.id] = float(np.mean([row[e] for e in others]))
    return quality


# --- KVCLUST v1 text format --------------------------------------------------
#
# kvclust 1 <tau> <n_entries> <n_clusters>
# cluster <id> medoid=<id> members=<comma-ids>


def format_clusters(cs: ClusterSet, header_comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append(f"kvclust 1 {cs.tau!r} {cs.n_entries} {len(cs.clusters)}")
    for c in cs.clusters:
        members = ",".join(str(e) for e in c.members)
        lines.append(f"cluster {c.id} medoid={c.medoid} members={members}")
    return "\n".join(lines) + "\n"


def parse_clusters(text: str) -> ClusterSet:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ClusterFormatError("empty cluster file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "kvclust" or head[1] != "1":
        raise ClusterFormatError(f"bad header: {lines[0]!r}")
    tau = float(head[2])
    n_entries = int(head[3])
    n_clusters = int(head[4])
    clusters = []
    for line in lines[1:]:
        parts = line.split()
        if (len(parts) != 4 or parts[0] != "cluster"
                or not parts[2].startswith("medoid=")
                or not parts[3].startswith("members=")):
            raise ClusterFormatError(f"bad cluster line: {line!r}")
        cid = int(parts[1])
        if cid != len(clusters):
            raise ClusterFormatError(f"cluster id {cid} out of order")
        medoid = int(parts[2][7:])
        members = [int(t) for t in parts[3][8:].split(",")]
        if members[0] != medoid or len(set(members)) != len(members):
            raise ClusterFormatError(f"inconsistent members in: {line!r}")
        clusters.append(Cluster(id=cid, medoid=medoid, members=members))
    if len(clusters) != n_clusters:
        raise ClusterFormatError("cluster count mismatch with header")
    return ClusterSet(clusters=clusters, tau=tau, n_entries=n_entries)


def write_clusters(path, cs: ClusterSet, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_clusters(cs, header_comments))


def read_clusters(path) -> ClusterSet:
    with open(path) as fh:
        return parse_clusters(fh.read())
