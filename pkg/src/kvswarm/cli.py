"""Command-line pipeline: generate, cluster, place, simulate, report.

Every command stamps its outputs with a hash of the effective configuration,
so identical invocations are byte-identical and sweep results land in
per-config run directories.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path

from . import clustering, placement, simulator, trace as trace_mod, workload
from .placement import CacheScoreParams
from .simulator import MODES, DeviceModel, RunPolicies, SimConfig

ENV_SEED = "KVSWARM_SEED"


class UsageError(ValueError):
    pass


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _seed(args_seed: int) -> int:
    env = os.environ.get(ENV_SEED)
    return int(env) if env is not None else args_seed


def _parse_int_list(text: str) -> list[int]:
    """Accept '4', '1,2,4' or '1..8'."""
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _parse_float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",")]


# --- gen ----------------------------------------------------------------------


def cmd_gen(args) -> int:
    spec = workload.PlantedSpec(
        n_entries=args.entries,
        n_groups=args.groups,
        group_overlap=args.overlap,
        sparsity=args.sparsity,
        noise=args.noise,
        steps=args.steps,
        decode_steps=args.decode_steps,
        seed=_seed(args.seed),
        popularity=args.popularity,
        zipf_exponent=args.zipf_exponent,
    )
    params = {"cmd": "gen", **{k: getattr(spec, k) for k in (
        "n_entries", "n_groups", "group_overlap", "sparsity", "noise",
        "steps", "decode_steps", "seed", "popularity", "zipf_exponent")}}
    digest = config_hash(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    generated = workload.generate(spec)
    stamp = [f"config {digest}"]
    trace_mod.write_trace(out / "trace.kvtrace", generated.trace, stamp)
    workload.write_groups(out / "groups.txt", generated.groups, stamp)
    print(f"config {digest}")
    print(f"trace {out / 'trace.kvtrace'} entries={generated.trace.entry_count} "
          f"steps={len(generated.trace.steps)}")
    return 0


# --- cluster --------------------------------------------------------------------


def cmd_cluster(args) -> int:
    if not 0.0 < args.tau < 1.0:
        raise UsageError("--tau must lie strictly inside (0, 1)")
    tr = trace_mod.read_trace(args.trace)
    if not tr.steps:
        raise UsageError("trace has no steps")
    params = {"cmd": "cluster", "trace": Path(args.trace).name, "tau": args.tau,
              "normalization": args.normalization, "max_replicas": args.max_replicas,
              "profile_steps": args.profile_steps}
    digest = config_hash(params)
    if args.profile_steps:
        tr = trace_mod.slice_trace(tr, args.profile_steps)
    try:
        adj = trace_mod.build_adjacency(tr)
        dist = trace_mod.build_distance_matrix(adj, normalization=args.normalization)
    except trace_mod.ZeroDenominator:
        raise UsageError("trace has no co-activations; profile more steps")
    cs = clustering.build_clusters(range(tr.entry_count), dist, args.tau,
                                   max_replicas=args.max_replicas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clustering.write_clusters(out / "clusters.kvclust", cs, [f"config {digest}"])
    quality = clustering.cluster_quality(cs, dist)
    replicated = sum(1 for ids in cs.replication.values() if len(ids) > 1)
    mean_q = sum(quality.values()) / len(quality) if quality else 0.0
    print(f"config {digest}")
    print(f"clusters={len(cs.clusters)} replicated_entries={replicated} "
          f"mean_quality={mean_q:.6f}")
    return 0


# --- place ----------------------------------------------------------------------


def cmd_place(args) -> int:
    cs = clustering.read_clusters(args.clusters)
    params = {"cmd": "place", "clusters": Path(args.clusters).name,
              "disks": args.disks, "window": args.window, "budget": args.budget,
              "t_base": args.t_base, "t_transfer": args.t_transfer}
    digest = config_hash(params)
    pm = placement.place_clusters(cs, args.disks)
    score_params = CacheScoreParams(t_base=args.t_base, t_transfer=args.t_transfer)
    freqs = {}
    if args.trace:
        tr = trace_mod.read_trace(args.trace)
        freqs = simulator.cluster_activation_counts(tr, cs)
    plan = placement.build_dram_plan(cs, pm, freqs, args.window, args.budget,
                                     score_params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = [f"config {digest}"]
    placement.write_placement(out / "placement.kvplace", pm, stamp)
    placement.write_dram_plan(out / "dram.txt", plan, stamp)
    print(f"config {digest}")
    print(f"devices={args.disks} entries={len(pm.locations)} "
          f"hot_clusters={len(plan.hot_cache)}")
    return 0


# --- simulate --------------------------------------------------------------------


_PLANTED_KEYS = {
    "entries": ("n_entries", int),
    "groups": ("n_groups", int),
    "overlap": ("group_overlap", float),
    "sparsity": ("sparsity", float),
    "noise": ("noise", float),
    "steps": ("steps", int),
    "decode": ("decode_steps", int),
    "seed": ("seed", int),
    "popularity": ("popularity", str),
    "zipf": ("zipf_exponent", float),
}


def _parse_planted(text: str, seed: int) -> workload.PlantedSpec:
    kwargs = {"seed": seed}
    for token in text.split(","):
        if "=" not in token:
            raise UsageError(f"bad planted token {token!r}")
        key, value = token.split("=", 1)
        if key not in _PLANTED_KEYS:
            raise UsageError(f"unknown planted key {key!r}")
        name, cast = _PLANTED_KEYS[key]
        kwargs[name] = cast(value)
    if "n_entries" not in kwargs or "n_groups" not in kwargs:
        raise UsageError("planted spec needs at least entries= and groups=")
    return workload.PlantedSpec(**kwargs)


def _write_csv(path: Path, metrics) -> None:
    lines = ["step,io_time_us,io_volume_bytes,max_device_entries,"
             "min_device_entries,cache_hits,effective_bw_bytes_per_s"]
    for i, m in enumerate(metrics):
        lines.append(
            f"{i},{m.io_time:.3f},{m.io_volume},{max(m.per_device_entries)},"
            f"{min(m.per_device_entries)},{m.cache_hits},"
            f"{m.effective_bandwidth:.3f}"
        )
    path.write_text("\n".join(lines) + "\n")


def _write_line_svg(path: Path, series: dict[str, list[float]], title: str) -> None:
    """Minimal line chart; one polyline per named series."""
    width, height, pad = 640, 360, 40
    all_vals = [v for vs in series.values() for v in vs] or [0.0]
    vmax = max(all_vals) or 1.0
    n = max(len(vs) for vs in series.values())
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<text x="{pad}" y="20" font-size="14">{title}</text>']
    for idx, (name, vs) in enumerate(sorted(series.items())):
        pts = []
        for i, v in enumerate(vs):
            x = pad + (width - 2 * pad) * (i / max(n - 1, 1))
            y = height - pad - (height - 2 * pad) * (v / vmax)
            pts.append(f"{x:.1f},{y:.1f}")
        color = colors[idx % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{pad}" y="{35 + 15 * idx}" font-size="12" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _run_combo(combo: dict) -> str:
    """Run every requested mode for one (disks, sparsity, ...) configuration."""
    digest = combo["hash"]
    out = Path(combo["out"]) / digest
    out.mkdir(parents=True, exist_ok=True)

    if combo.get("planted"):
        spec = workload.PlantedSpec(**combo["planted"])
        generated = workload.generate(spec)
        tr = generated.trace
    else:
        tr = trace_mod.parse_trace(combo["trace_text"])
    if combo.get("clusters_text"):
        cs = clustering.parse_clusters(combo["clusters_text"])
    else:
        profile = (trace_mod.slice_trace(tr, combo["profile_steps"])
                   if combo.get("profile_steps") else tr)
        adj = trace_mod.build_adjacency(profile)
        dist = trace_mod.build_distance_matrix(adj, combo["normalization"])
        cs = clustering.build_clusters(range(profile.entry_count), dist,
                                       combo["tau"])

    device = DeviceModel(bandwidth=combo["bandwidth"], iops_cap=combo["iops"],
                         t_base=combo["t_base"])
    summaries = {}
    for mode in combo["modes"]:
        cfg = SimConfig(n_disk=combo["disks"], device=device,
                        entry_size=combo["entry_size"], mode=mode,
                        addressing=combo["addressing"])
        policies = RunPolicies(selection=combo["selection"],
                               assignment=combo["assignment"],
                               assign_tau=combo["tau_assign"])
        result = simulator.run_mode(
            tr, None if mode == simulator.MODE_NO_CLUSTER else cs, cfg,
            window_capacity=combo["window"],
            cache_budget_entries=combo["budget"],
            policies=policies)
        _write_csv(out / f"mode_{mode}.csv", result.metrics)
        summaries[mode] = result.summary

    comparison_lines = ["mode,mean_io_time_us,total_io_volume_bytes,"
                        "mean_effective_bw_bytes_per_s,io_time_ratio,volume_ratio"]
    base = summaries.get(simulator.MODE_SWARM)
    for mode in combo["modes"]:
        s = summaries[mode]
        tr_ratio = (s["mean_io_time_us"] / base["mean_io_time_us"]
                    if base and base["mean_io_time_us"] else float("nan"))
        vol_ratio = (s["total_io_volume_bytes"] / base["total_io_volume_bytes"]
                     if base and base["total_io_volume_bytes"] else float("nan"))
        comparison_lines.append(
            f"{mode},{s['mean_io_time_us']:.3f},{s['total_io_volume_bytes']},"
            f"{s['mean_effective_bw_bytes_per_s']:.3f},{tr_ratio:.4f},"
            f"{vol_ratio:.4f}")
    (out / "comparison.csv").write_text("\n".join(comparison_lines) + "\n")
    payload = {"config": {k: v for k, v in combo.items()
                          if k not in ("trace_text", "clusters_text", "out",
                                       "hash")},
               "config_hash": digest, "modes": summaries}
    (out / "summary.json").write_text(json.dumps(payload, sort_keys=True,
                                                 indent=2) + "\n")
    if combo.get("emit_plots"):
        series = {}
        for mode in combo["modes"]:
            text = (out / f"mode_{mode}.csv").read_text().splitlines()[1:]
            series[mode] = [float(line.split(",")[1]) for line in text]
        _write_line_svg(out / "plot_io_time.svg", series, "per-step I/O time (us)")
    return digest


def cmd_simulate(args) -> int:
    if args.planted is None and args.trace is None:
        raise UsageError("need --trace or --planted")
    if args.sparsity is not None and args.planted is None:
        raise UsageError("--sparsity sweep requires --planted")
    modes = args.modes.split(",")
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m!r}")
    seed = _seed(args.seed)
    disk_values = _parse_int_list(args.disks)
    sparsity_values = (_parse_float_list(args.sparsity)
                       if args.sparsity is not None else [None])

    trace_text = Path(args.trace).read_text() if args.trace else None
    clusters_text = Path(args.clusters).read_text() if args.clusters else None
    if clusters_text is None and trace_text is not None and args.tau is None:
        raise UsageError("clustering a raw trace needs --tau (or pass --clusters)")
    if args.planted and args.tau is None:
        raise UsageError("--planted needs --tau for the clustering stage")

    combos = []
    for sparsity in sparsity_values:
        for disks in disk_values:
            combo = {
                "out": args.out,
                "modes": modes,
                "disks": disks,
                "entry_size": args.entry_size,
                "bandwidth": args.bandwidth,
                "iops": args.iops,
                "t_base": args.t_base,
                "addressing": args.addressing,
                "selection": args.selection,
                "assignment": args.assignment,
                "tau_assign": args.tau_assign,
                "window": args.window,
                "budget": args.budget,
                "tau": args.tau,
                "normalization": args.normalization,
                "profile_steps": args.profile_steps,
                "seed": seed,
                "emit_plots": args.emit_plots,
            }
            if args.planted:
                spec = _parse_planted(args.planted, seed)
                if sparsity is not None:
                    spec = workload.PlantedSpec(
                        **{**spec.__dict__, "sparsity": sparsity})
                combo["planted"] = spec.__dict__.copy()
            else:
                combo["trace"] = Path(args.trace).name
                combo["trace_text"] = trace_text
            if clusters_text is not None:
                combo["clusters"] = Path(args.clusters).name
                combo["clusters_text"] = clusters_text
            hashable = {k: v for k, v in combo.items()
                        if k not in ("trace_text", "clusters_text", "out")}
            combo["hash"] = config_hash(hashable)
            combos.append(combo)

    if args.jobs > 1 and len(combos) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            digests = list(pool.map(_run_combo, combos))
    else:
        digests = [_run_combo(c) for c in combos]
    for combo, digest in zip(combos, digests):
        print(f"run {digest} disks={combo['disks']}"
              + (f" sparsity={combo['planted']['sparsity']}" if combo.get("planted") else ""))
    return 0


# --- report ----------------------------------------------------------------------


def cmd_report(args) -> int:
    rows = []
    for run_dir in sorted(args.runs):
        summary_path = Path(run_dir) / "summary.json"
        if not summary_path.exists():
            raise UsageError(f"{run_dir} has no summary.json")
        payload = json.loads(summary_path.read_text())
        for mode in sorted(payload["modes"]):
            s = payload["modes"][mode]
            rows.append({
                "run": payload["config_hash"],
                "disks": payload["config"]["disks"],
                "mode": mode,
                "mean_io_time_us": s["mean_io_time_us"],
                "total_io_volume_bytes": s["total_io_volume_bytes"],
                "mean_effective_bw_bytes_per_s": s["mean_effective_bw_bytes_per_s"],
                "cache_hit_rate": s.get("cache_hit_rate", 0.0),
            })
    header = ("run,disks,mode,mean_io_time_us,total_io_volume_bytes,"
              "mean_effective_bw_bytes_per_s,cache_hit_rate")
    lines = [header]
    for r in rows:
        lines.append(f"{r['run']},{r['disks']},{r['mode']},"
                     f"{r['mean_io_time_us']:.3f},{r['total_io_volume_bytes']},"
                     f"{r['mean_effective_bw_bytes_per_s']:.3f},"
                     f"{r['cache_hit_rate']:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.csv").write_text(text)
    print(text, end="")
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvswarm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a planted activation trace")
    p.add_argument("--entries", type=int, required=True)
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--sparsity", type=float, default=0.10)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--decode-steps", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--popularity", choices=("zipf", "uniform"), default="zipf")
    p.add_argument("--zipf-exponent", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("cluster", help="cluster a trace into co-activation groups")
    p.add_argument("--trace", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--normalization", choices=trace_mod.NORMALIZATIONS,
                   default="global")
    p.add_argument("--max-replicas", type=int, default=None)
    p.add_argument("--profile-steps", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("place", help="stripe clusters across devices")
    p.add_argument("--clusters", required=True)
    p.add_argument("--disks", type=int, required=True)
    p.add_argument("--window", type=int, default=256)
    p.add_argument("--budget", type=int, default=0)
    p.add_argument("--trace", default=None,
                   help="optional trace for offline activation frequencies")
    p.add_argument("--t-base", type=float, default=100.0)
    p.add_argument("--t-transfer", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("simulate", help="run retrieval modes over a workload")
    p.add_argument("--trace", default=None)
    p.add_argument("--clusters", default=None)
    p.add_argument("--planted", default=None,
                   help="inline planted spec, e.g. entries=512,groups=8,steps=256")
    p.add_argument("--modes", default="swarm")
    p.add_argument("--disks", default="4", help="count, list or range (1..8)")
    p.add_argument("--sparsity", default=None,
                   help="sweep values (with --planted), e.g. 0.02,0.05,0.1")
    p.add_argument("--entry-size", type=int, default=20480)
    p.add_argument("--bandwidth", type=float, default=6.9e9)
    p.add_argument("--iops", type=float, default=1.1e6)
    p.add_argument("--t-base", type=float, default=100.0)
    p.add_argument("--addressing", choices=("per_step", "per_entry"),
                   default="per_step")
    p.add_argument("--selection", choices=("medoid", "oracle"), default="medoid")
    p.add_argument("--assignment", choices=(None, "coactivation", "min_size",
                                            "min_diff"), default=None)
    p.add_argument("--tau-assign", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--normalization", choices=trace_mod.NORMALIZATIONS,
                   default="global")
    p.add_argument("--profile-steps", type=int, default=None)
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--budget", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-plots", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge run summaries into one table")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def _inject_config_file(argv: list[str]) -> list[str]:
    """Expand --config FILE into leading key=value options (flags override)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = argv[idx + 1]
    rest = argv[:idx] + argv[idx + 2:]
    injected = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"bad config line: {line!r}")
        key, value = line.split("=", 1)
        injected.extend([f"--{key.strip()}", value.strip()])
    # after the subcommand token, before explicit flags
    return rest[:1] + injected + rest[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _inject_config_file(argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (trace_mod.TraceError, clustering.ClusterFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
