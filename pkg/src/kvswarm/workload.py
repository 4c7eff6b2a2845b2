"""Synthetic activation traces with planted co-activation groups.

Groups are contiguous entry blocks; adjacent groups can share boundary entries
so the interleaved pattern that demands replication actually occurs.  Each step
draws one or two groups from the popularity distribution, activates their
members up to the sparsity budget and sprinkles in uniform noise.  Decode steps
append fresh entries affiliated with the step's primary group.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .clustering import ClusterSet
from .trace import ActivationStep, ActivationTrace

POPULARITY_ZIPF = "zipf"
POPULARITY_UNIFORM = "uniform"


@dataclass(frozen=True)
class PlantedSpec:
    n_entries: int
    n_groups: int
    group_overlap: float = 0.0    # fraction of a group shared with its neighbor
    sparsity: float = 0.10        # activated fraction of current entries
    noise: float = 0.0            # probability an activated entry is random
    steps: int = 256
    decode_steps: int = 0         # trailing steps that each append one entry
    seed: int = 0
    popularity: str = POPULARITY_ZIPF
    zipf_exponent: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must be in (0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if self.n_groups > self.n_entries or self.n_groups < 1:
            raise ValueError("need 1 <= n_groups <= n_entries")
        if self.decode_steps > self.steps:
            raise ValueError("decode_steps cannot exceed steps")
        if self.popularity not in (POPULARITY_ZIPF, POPULARITY_UNIFORM):
            raise ValueError(f"unknown popularity {self.popularity!r}")


@dataclass
class PlantedWorkload:
    spec: PlantedSpec
    trace: ActivationTrace
    groups: list[list[int]]           # final membership, decode entries included
    affiliations: dict[int, int] = field(default_factory=dict)  # new entry -> group


def _base_groups(spec: PlantedSpec) -> list[list[int]]:
    base = spec.n_entries // spec.n_groups
    bounds = [round(g * spec.n_entries / spec.n_groups) for g in range(spec.n_groups + 1)]
    shared = round(spec.group_overlap * base)
    groups = []
    for g in range(spec.n_groups):
        members = list(range(bounds[g], bounds[g + 1]))
        if g > 0 and shared:
            members = list(range(bounds[g] - shared, bounds[g])) + members
        groups.append(members)
    return groups


def generate(spec: PlantedSpec) -> PlantedWorkload:
    rng = random.Random(spec.seed)
    groups = _base_groups(spec)
    weights = (
        [1.0 / (g + 1) ** spec.zipf_exponent for g in range(spec.n_groups)]
        if spec.popularity == POPULARITY_ZIPF
        else [1.0] * spec.n_groups
    )
    affiliations: dict[int, int] = {}
    current_n = spec.n_entries
    steps = []
    decode_from = spec.steps - spec.decode_steps
    for t in range(spec.steps):
        budget = max(1, round(spec.sparsity * current_n))
        primary = rng.choices(range(spec.n_groups), weights=weights)[0]
        pool = list(groups[primary])
        picked = [primary]
        if len(pool) < budget and spec.n_groups > 1:
            second = primary
            while second == primary:
                second = rng.choices(range(spec.n_groups), weights=weights)[0]
            seen = set(pool)
            pool += [e for e in groups[second] if e not in seen]
            picked.append(second)
        if len(pool) > budget:
            activated = set(rng.sample(pool, budget))
        else:
            activated = set(pool)
        if spec.noise:
            for e in sorted(activated):
                if rng.random() < spec.noise:
                    activated.discard(e)
                    for _ in range(8):
                        repl = rng.randrange(current_n)
                        if repl not in activated:
                            activated.add(repl)
                            break
        new_entries = ()
        if t >= decode_from:
            fresh = current_n
            groups[primary].append(fresh)
            affiliations[fresh] = primary
            activated.add(fresh)
            new_entries = (fresh,)
            current_n += 1
        steps.append(ActivationStep(activated=frozenset(activated),
                                    new_entries=new_entries))
    trace = ActivationTrace(entry_count=current_n, steps=tuple(steps))
    return PlantedWorkload(spec=spec, trace=trace, groups=groups,
                           affiliations=affiliations)


def group_agreement(groups: Sequence[Sequence[int]], cs: ClusterSet) -> float:
    """Symmetric mean best-Jaccard between planted groups and clusters."""
    g_sets = [set(g) for g in groups]
    c_sets = [set(c.members) for c in cs.clusters]
    if not g_sets or not c_sets:
        return 0.0

    def best(a: set[int], others: list[set[int]]) -> float:
        return max(len(a & b) / len(a | b) for b in others)

    g_side = sum(best(g, c_sets) for g in g_sets) / len(g_sets)
    c_side = sum(best(c, g_sets) for c in c_sets) / len(c_sets)
    return (g_side + c_side) / 2.0


# --- ground-truth sidecar ----------------------------------------------------


def format_groups(groups: Sequence[Sequence[int]],
                  header_comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in header_comments]
    for gid, members in enumerate(groups):
        ids = ",".join(str(e) for e in members)
        lines.append(f"group {gid} members={ids}")
    return "\n".join(lines) + "\n"


def parse_groups(text: str) -> list[list[int]]:
    groups = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] != "group" or not parts[2].startswith("members="):
            raise ValueError(f"bad group line: {line!r}")
        if int(parts[1]) != len(groups):
            raise ValueError(f"group id out of order in: {line!r}")
        groups.append([int(t) for t in parts[2][8:].split(",")])
    return groups


def write_groups(path, groups: Sequence[Sequence[int]],
                 header_comments: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        fh.write(format_groups(groups, header_comments))
