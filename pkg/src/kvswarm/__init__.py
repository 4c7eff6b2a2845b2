"""Co-activation-aware KV-cache offloading across multiple simulated SSDs."""

from .trace import (ActivationStep, ActivationTrace, AdjacencyMatrix,
                    DistanceMatrix, ZeroDenominator, build_adjacency,
                    build_distance_matrix, coactivation_probability)
from .clustering import (Cluster, ClusterSet, build_clusters,
                         cluster_quality, coactivation_density)
from .placement import (CacheScoreParams, DeviceSlot, DramPlan, PlacementMap,
                        build_dram_plan, cost_effectiveness, place_clusters,
                        select_hot_clusters)
from .scheduler import (IoPlan, RetrievalRequest, max_load, merge_activated,
                        schedule)
from .adaptation import (CacheState, WindowStats, assign_new_entry,
                         cache_replace, new_entry_distance, update_frequencies)
from .simulator import (DeviceModel, RunPolicies, SimConfig, StepMetrics,
                        run_mode, run_workload, simulate_step, summarize)
from .workload import PlantedSpec, generate, group_agreement

__version__ = "0.1.0"
