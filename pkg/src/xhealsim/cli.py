"""Command-line front end.

Subcommands:

* ``gen``     materialize a seeded adversarial trace file
* ``run``     replay a trace (or drive an adaptive strategy online)
              through the healer, verifying every bound at checkpoints
* ``verify``  re-check a state snapshot's internal coherence and metrics
* ``report``  summarize one or more CSV report files

Exit codes: 0 all checks passed, 1 an invariant was violated, 2 usage,
I/O, or parse errors.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .adversary import (
    AdversaryError,
    Strategy,
    Trace,
    decode_trace,
    encode_trace,
    gen_trace,
    initial_graph,
    next_event,
    validate_trace,
)
from .engine import Cloud, FAULTS, Healer, InvalidEvent, coherence_errors
from .expander import CloudTopology, ExpanderConfig, ExpanderError, TopologyKind
from .graph import CloudKind, EdgeRecord, GraphError, edge_key
from .metrics import MetricsReport, evaluate

SNAPSHOT_VERSION = 1

REPORT_COLUMNS = [
    "t", "n_alive", "connected_shadow", "connected_live", "connectivity_ok",
    "edge_preservation_ok", "degree_slack_min", "degree_violations",
    "density_violations", "density_ub_violations", "expansion_live",
    "expansion_shadow", "expansion_ok", "lambda2_live", "max_stretch",
    "stretch_bound", "stretch_ok", "events", "inserts", "deletes",
    "branch_all_black", "branch_primary", "branch_secondary", "clouds_built",
    "clouds_rebuilt", "merges", "bridges_borrowed", "free_node_misses",
    "edges_created", "edges_reused", "edges_deleted",
]


@dataclass
class RunConfig:
    kappa: int = 6
    alpha_target: Fraction = Fraction(1)
    exact_limit: int = 20
    max_retries: int = 64
    seed: int = 0
    checkpoint_every: int = 10
    density_samples: int = 100
    stretch_pairs: int = 200
    stretch_constant: int = 4

    def __post_init__(self) -> None:
        for name in ("checkpoint_every", "density_samples", "stretch_pairs",
                     "stretch_constant"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def expander(self) -> ExpanderConfig:
        return ExpanderConfig(kappa=self.kappa, alpha_target=self.alpha_target,
                              exact_limit=self.exact_limit, max_retries=self.max_retries)


def _fmt_fraction(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def _fmt_cell(value) -> str:
    if value is None:
        return "skipped"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return _fmt_fraction(value)
    if isinstance(value, float):
        return f"{value:.9f}"
    return str(value)


def report_row(report: MetricsReport) -> list[str]:
    base = [report.t, report.n_alive, report.connected_shadow,
            report.connected_live, report.connectivity_ok,
            report.edge_preservation_ok, report.degree_slack_min,
            report.degree_violations, report.density_violations,
            report.density_ub_violations, report.expansion_live,
            report.expansion_shadow, report.expansion_ok, report.lambda2_live,
            report.max_stretch, report.stretch_bound, report.stretch_ok]
    counters = report.repair_counters
    base.extend(counters[name] for name in REPORT_COLUMNS[len(base):])
    return [_fmt_cell(v) for v in base]


def render_report_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for rep in reports:
        writer.writerow(report_row(rep))
    return buf.getvalue()


# -- simulation drivers ----------------------------------------------------


def run_trace(trace: Trace, cfg: RunConfig, fault: str | None = None
              ) -> tuple[Healer, list[MetricsReport]]:
    """Replay a trace, evaluating all metrics at every checkpoint."""
    validate_trace(trace)
    rng = random.Random(f"{cfg.seed}/engine")
    healer = Healer.from_initial(trace.initial_nodes, trace.initial_edges,
                                 cfg.expander(), rng, fault=fault)
    reports = [_checkpoint(healer, 0, cfg)]
    total = len(trace.events)
    for t, event in enumerate(trace.events, start=1):
        healer.handle_event(event)
        if t % cfg.checkpoint_every == 0 or t == total:
            reports.append(_checkpoint(healer, t, cfg))
    return healer, reports


def run_adaptive(strategy: Strategy, n0: int, steps: int, cfg: RunConfig,
                 fault: str | None = None
                 ) -> tuple[Healer, list[MetricsReport], Trace]:
    """Drive a strategy online against live state, recording the trace."""
    rng_trace = random.Random(f"{cfg.seed}/trace")
    nodes, edges = initial_graph(n0, rng_trace)
    rng_engine = random.Random(f"{cfg.seed}/engine")
    healer = Healer.from_initial(nodes, edges, cfg.expander(), rng_engine, fault=fault)
    rng_adv = random.Random(f"{cfg.seed}/adversary")
    params = {"insert_fraction": strategy.insert_fraction,
              "insert_degree": strategy.insert_degree, "n0": n0, "steps": steps}
    trace = Trace(cfg.kappa, cfg.seed, strategy.name, params, nodes, edges)
    reports = [_checkpoint(healer, 0, cfg)]
    for t in range(1, steps + 1):
        event = next_event(strategy, healer, rng_adv)
        trace.events.append(event)
        healer.handle_event(event)
        if t % cfg.checkpoint_every == 0 or t == steps:
            reports.append(_checkpoint(healer, t, cfg))
    return healer, reports, trace


def _checkpoint(healer: Healer, t: int, cfg: RunConfig) -> MetricsReport:
    return evaluate(healer, t, cfg.seed,
                    density_samples=cfg.density_samples,
                    stretch_pairs=cfg.stretch_pairs,
                    stretch_constant=cfg.stretch_constant,
                    exact_limit=cfg.exact_limit)


# -- snapshots --------------------------------------------------------------


def snapshot_state(healer: Healer, seed: int) -> dict:
    """Versioned JSON-ready dump of the full healer state."""
    edges = []
    for rec in sorted(healer.graph.edges(), key=lambda r: r.key):
        edges.append({
            "u": rec.u, "v": rec.v,
            "colors": sorted(rec.colors),
            "kinds": {str(c): k.value for c, k in sorted(rec.kinds.items())},
            "marked": rec.marked,
        })
    clouds = []
    for cid in sorted(healer.registry.clouds):
        cloud = healer.registry.clouds[cid]
        clouds.append({
            "id": cid,
            "kind": cloud.kind.value,
            "members": sorted(cloud.members),
            "topology": {
                "kind": cloud.topology.kind.value,
                "members": list(cloud.topology.members),
                "edges": [[u, v] for u, v in cloud.topology.edge_list],
                "kappa": cloud.topology.kappa,
                "certified": _fmt_fraction(cloud.topology.certified_expansion),
            },
        })
    return {
        "v": SNAPSHOT_VERSION,
        "seed": seed,
        "config": {
            "kappa": healer.cfg.kappa,
            "alpha_target": _fmt_fraction(healer.cfg.alpha_target),
            "exact_limit": healer.cfg.exact_limit,
            "max_retries": healer.cfg.max_retries,
        },
        "next_cloud_id": healer.next_cloud_id,
        "nodes": sorted(healer.graph.node_set),
        "edges": edges,
        "shadow": {
            "nodes": sorted(healer.shadow.nodes),
            "edges": sorted([u, v] for u, v in healer.shadow.edges),
            "alive": sorted(healer.shadow.alive),
        },
        "clouds": clouds,
        "bridges": sorted([f, c, node] for (f, c), node in healer.registry.bridges.items()),
        "duty": sorted([node, f] for node, f in healer.registry.duty.items()),
        "last_black_neighbors": sorted(healer.last_black_neighbors),
        "counters": healer.counters.as_dict(),
    }


def load_snapshot(data: dict) -> tuple[Healer, int]:
    """Rebuild a Healer from a snapshot dict.  Raises ValueError on
    structural problems; semantic damage surfaces in coherence checks."""
    if data.get("v") != SNAPSHOT_VERSION:
        raise ValueError(f"snapshot version {data.get('v')!r} not supported")
    cfg = ExpanderConfig(
        kappa=int(data["config"]["kappa"]),
        alpha_target=Fraction(data["config"]["alpha_target"]),
        exact_limit=int(data["config"]["exact_limit"]),
        max_retries=int(data["config"]["max_retries"]),
    )
    seed = int(data["seed"])
    healer = Healer(cfg, random.Random(f"{seed}/engine"))
    for v in data["shadow"]["nodes"]:
        healer.shadow.nodes.add(int(v))
        healer.shadow._adj[int(v)] = set()
    for u, v in data["shadow"]["edges"]:
        healer.shadow.edges.add(edge_key(int(u), int(v)))
        healer.shadow._adj[int(u)].add(int(v))
        healer.shadow._adj[int(v)].add(int(u))
    healer.shadow.alive = {int(v) for v in data["shadow"]["alive"]}
    for v in data["nodes"]:
        healer.graph.add_node(int(v))
    for rec in data["edges"]:
        u, v = int(rec["u"]), int(rec["v"])
        record = EdgeRecord(
            *edge_key(u, v),
            colors={int(c) for c in rec["colors"]},
            kinds={int(c): CloudKind(k) for c, k in rec["kinds"].items()},
            marked=bool(rec["marked"]),
        )
        healer.graph._edges[record.key] = record
        healer.graph._adj[u].add(v)
        healer.graph._adj[v].add(u)
    for entry in data["clouds"]:
        topo = entry["topology"]
        topology = CloudTopology(
            kind=TopologyKind(topo["kind"]),
            members=tuple(int(m) for m in topo["members"]),
            edge_list=[edge_key(int(u), int(v)) for u, v in topo["edges"]],
            kappa=int(topo["kappa"]),
            certified_expansion=Fraction(topo["certified"]),
        )
        cloud = Cloud(int(entry["id"]), CloudKind(entry["kind"]),
                      {int(m) for m in entry["members"]}, topology)
        healer.registry.put(cloud)
    for f, c, node in data["bridges"]:
        healer.registry.bridges[(int(f), int(c))] = int(node)
    for node, f in data["duty"]:
        healer.registry.duty[int(node)] = int(f)
    healer.next_cloud_id = int(data["next_cloud_id"])
    healer.last_black_neighbors = {int(v) for v in data.get("last_black_neighbors", [])}
    for name, value in data["counters"].items():
        setattr(healer.counters, name, int(value))
    return healer, seed


# -- subcommands -------------------------------------------------------------


def _add_run_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kappa", type=int, default=6)
    parser.add_argument("--alpha-target", type=Fraction, default=Fraction(1),
                        metavar="P/Q")
    parser.add_argument("--exact-limit", type=int, default=20)
    parser.add_argument("--max-retries", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--checkpoint-every", type=int, default=10)
    parser.add_argument("--density-samples", type=int, default=100)
    parser.add_argument("--stretch-pairs", type=int, default=200)
    parser.add_argument("--stretch-constant", type=int, default=4)


def _run_config(args: argparse.Namespace, seed: int | None = None) -> RunConfig:
    return RunConfig(
        kappa=args.kappa, alpha_target=args.alpha_target,
        exact_limit=args.exact_limit, max_retries=args.max_retries,
        seed=args.seed if seed is None else seed,
        checkpoint_every=args.checkpoint_every,
        density_samples=args.density_samples,
        stretch_pairs=args.stretch_pairs,
        stretch_constant=args.stretch_constant,
    )


def cmd_gen(args: argparse.Namespace) -> int:
    strategy = Strategy(args.strategy, insert_fraction=args.insert_fraction,
                        insert_degree=args.insert_degree)
    trace = gen_trace(strategy, args.n0, args.steps, args.seed,
                      kappa=args.kappa, extra_edge_frac=args.extra_edge_frac)
    text = encode_trace(trace)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


def _run_one_seed(args: argparse.Namespace, seed: int) -> tuple[int, list[str]]:
    cfg = _run_config(args, seed)
    if args.trace:
        trace = decode_trace(Path(args.trace).read_text(encoding="utf-8"))
        if args.kappa_from_trace:
            cfg.kappa = trace.kappa
        healer, reports = run_trace(trace, cfg, fault=args.fault)
        recorded = trace
    else:
        strategy = Strategy(args.strategy, insert_fraction=args.insert_fraction,
                            insert_degree=args.insert_degree)
        healer, reports, recorded = run_adaptive(strategy, args.n0, args.steps,
                                                 cfg, fault=args.fault)
    if args.record:
        Path(_expand_seed(args.record, seed)).write_text(
            encode_trace(recorded), encoding="utf-8")
    if args.snapshot:
        payload = json.dumps(snapshot_state(healer, seed), sort_keys=True, indent=0)
        Path(_expand_seed(args.snapshot, seed)).write_text(payload, encoding="utf-8")
    csv_text = render_report_csv(reports)
    if args.out == "-":
        sys.stdout.write(csv_text)
    else:
        Path(_expand_seed(args.out, seed)).write_text(csv_text, encoding="utf-8")
    violations = [line for rep in reports for line in rep.violation_detail]
    coherence = coherence_errors(healer)
    violations.extend(f"coherence: {err}" for err in coherence)
    return (1 if violations else 0), violations


def _expand_seed(path: str, seed: int) -> str:
    return path.replace("{seed}", str(seed))


def cmd_run(args: argparse.Namespace) -> int:
    if bool(args.trace) == bool(args.strategy):
        print("run needs exactly one of --trace or --strategy", file=sys.stderr)
        return 2
    seeds = [args.seed]
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
        if len(seeds) > 1 and args.out != "-" and "{seed}" not in args.out:
            print("multiple seeds need '{seed}' in --out", file=sys.stderr)
            return 2
    results: list[tuple[int, list[str]]] = []
    if args.jobs > 1 and len(seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_seed_worker,
                                    [(vars(args), s) for s in seeds]))
    else:
        for seed in seeds:
            results.append(_run_one_seed(args, seed))
    worst = 0
    for (code, violations), seed in zip(results, seeds):
        for line in violations:
            print(f"seed {seed}: VIOLATION {line}", file=sys.stderr)
        worst = max(worst, code)
    return worst


def _run_seed_worker(packed: tuple[dict, int]) -> tuple[int, list[str]]:
    arg_dict, seed = packed
    return _run_one_seed(argparse.Namespace(**arg_dict), seed)


def cmd_verify(args: argparse.Namespace) -> int:
    path = Path(args.snapshot)
    if not path.exists():
        print(f"snapshot {path} not found", file=sys.stderr)
        return 2
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        healer, seed = load_snapshot(data)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"malformed snapshot: {exc}", file=sys.stderr)
        return 2
    problems = coherence_errors(healer)
    report = evaluate(healer, healer.counters.events, seed)
    problems.extend(report.violation_detail)
    if args.trace:
        problems.extend(_replay_mismatch(args, healer, seed))
    for line in problems:
        print(f"VIOLATION {line}", file=sys.stderr)
    if not problems:
        print(f"snapshot coherent: {report.n_alive} alive nodes, "
              f"{healer.graph.edge_count()} edges, "
              f"{len(healer.registry.clouds)} clouds")
    return 1 if problems else 0


def _replay_mismatch(args: argparse.Namespace, healer: Healer, seed: int) -> list[str]:
    trace = decode_trace(Path(args.trace).read_text(encoding="utf-8"))
    cfg = RunConfig(kappa=healer.cfg.kappa, alpha_target=healer.cfg.alpha_target,
                    exact_limit=healer.cfg.exact_limit,
                    max_retries=healer.cfg.max_retries, seed=seed)
    replayed, _ = run_trace(trace, cfg)
    problems = []
    want = {rec.key: (frozenset(rec.colors)) for rec in replayed.graph.edges()}
    have = {rec.key: (frozenset(rec.colors)) for rec in healer.graph.edges()}
    if want != have:
        problems.append("replayed trace does not reproduce the snapshot's edges")
    if replayed.counters.as_dict() != healer.counters.as_dict():
        problems.append("replayed trace does not reproduce the snapshot's counters")
    return problems


def cmd_report(args: argparse.Namespace) -> int:
    code = 0
    for path_str in sorted(args.reports):
        path = Path(path_str)
        try:
            with path.open(newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
        if not rows:
            print(f"{path}: empty report", file=sys.stderr)
            return 2
        print(f"== {path}")
        final = rows[-1]
        slacks = [int(r["degree_slack_min"]) for r in rows
                  if r["degree_slack_min"] != "skipped"]
        stretches = [Fraction(r["max_stretch"]) for r in rows
                     if r["max_stretch"] != "skipped"]
        print(f"  checkpoints: {len(rows)}  final t={final['t']} "
              f"n_alive={final['n_alive']}")
        print(f"  min degree slack: {min(slacks) if slacks else 'n/a'}")
        print(f"  max stretch: {max(stretches) if stretches else 'n/a'}")
        traj = [f"t={r['t']}:{r['expansion_live']}|{r['expansion_shadow']}"
                for r in rows if r["expansion_live"] != "skipped"]
        print(f"  expansion (live|baseline): {' '.join(traj) if traj else 'skipped'}")
        print(f"  merges: {final['merges']}  clouds built: {final['clouds_built']} "
              f"rebuilt: {final['clouds_rebuilt']}")
        bad = [r["t"] for r in rows if _row_dirty(r)]
        if bad:
            code = 1
            print(f"  VIOLATIONS at t: {', '.join(bad)}")
    return code


def _row_dirty(row: dict[str, str]) -> bool:
    return (row["edge_preservation_ok"] == "false"
            or row["connectivity_ok"] == "false"
            or row["degree_violations"] != "0"
            or row["density_violations"] != "0"
            or row["density_ub_violations"] != "0"
            or row["expansion_ok"] == "false"
            or row["stretch_ok"] == "false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xhealsim",
        description="Self-healing overlay simulator with exact bound verification")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a trace file")
    gen.add_argument("--strategy", required=True)
    gen.add_argument("--n0", type=int, required=True)
    gen.add_argument("--steps", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--kappa", type=int, default=6)
    gen.add_argument("--insert-fraction", type=float, default=0.4)
    gen.add_argument("--insert-degree", type=int, default=4)
    gen.add_argument("--extra-edge-frac", type=float, default=0.5)
    gen.add_argument("-o", "--out", default="-")
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="replay a trace or run a strategy online")
    run.add_argument("--trace")
    run.add_argument("--strategy")
    run.add_argument("--n0", type=int, default=50)
    run.add_argument("--steps", type=int, default=100)
    run.add_argument("--insert-fraction", type=float, default=0.4)
    run.add_argument("--insert-degree", type=int, default=4)
    run.add_argument("--kappa-from-trace", action="store_true",
                     help="take kappa from the trace header instead of --kappa")
    run.add_argument("--fault", choices=FAULTS)
    run.add_argument("--record", help="write the realized trace here")
    run.add_argument("--snapshot", help="write the final state here")
    run.add_argument("--seeds", help="comma-separated seed list")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("-o", "--out", default="-")
    _add_run_config_flags(run)
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="re-check a state snapshot")
    verify.add_argument("--snapshot", required=True)
    verify.add_argument("--trace", help="also replay this trace and compare")
    verify.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="summarize CSV report files")
    rep.add_argument("reports", nargs="+")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AdversaryError, ExpanderError, GraphError, InvalidEvent,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
