"""Command-line entry point: simulate, infer, trace-analyze, diff, report.

Every stage reads and writes plain files so any stage can be fed real
data instead of simulator output.  The default output directory comes
from ``$BGPM_OUT`` (falling back to ``./bgpm-out``).
"""

from __future__ import annotations

import argparse
import csv
import importlib.util
import io
import json
import logging
import os
import re
import sys
import tempfile
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Asn, BgpmError, IxpDirectory, parse_ip, parse_prefix, query_target
from .ecmp import Protocol
from .inference import (
    TABLE_HEADER,
    CaseCatalog,
    CatalogEntry,
    Census,
    Connectivity,
    FixtureLookingGlass,
    PlanError,
    SimulatedLookingGlass,
    aggregate_stats,
    change_summary,
    classify_connectivity,
    diff_cases,
    execute_plan,
    plan_queries,
    read_census,
    write_census,
)
from .lg import is_not_existing, parse_summary_table
from .sim.topology import build_topology, load_config
from .sim.traceroute import DEFAULT_START, TICK_SECONDS, TraceRecord, campaign
from .traces import (
    DelaySeries,
    ValidatedPath,
    build_routing_map,
    classify_allocation,
    classify_faras,
    coverage_check,
    delay_stats,
    read_dns,
    stats_to_csv,
    validate_path,
)

log = logging.getLogger("bgpmlab")

OUT_ENV = "BGPM_OUT"
DEFAULT_OUT = "bgpm-out"


class UsageError(BgpmError):
    pass


# ------------------------------------------------------------------ helpers


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def write_atomic(path: Path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


class _AtomicStream:
    """Line-by-line writer for large outputs, committed by rename on close."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self.tmp = tempfile.mkstemp(prefix=f".{self.path.name}.", dir=self.path.parent)
        self.fh = os.fdopen(fd, "w", newline="")

    def __enter__(self):
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.tmp, self.path)
        else:
            Path(self.tmp).unlink(missing_ok=True)


def parse_interval(text: str) -> int:
    """``15m``, ``900s``, ``1h`` or a bare number of seconds."""
    m = re.fullmatch(r"\s*(\d+)\s*([smh]?)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"bad interval {text!r}")
    return int(m.group(1)) * {"": 1, "s": 1, "m": 60, "h": 3600}[m.group(2)]


def tick_count(days: float, interval: int) -> int:
    return int(round(days * 86400 / interval))


def case_slug(case) -> str:
    text = f"{case.near_br.name}_{case.far_as.number}_{case.dst_prefix}"
    return re.sub(r"[^A-Za-z0-9.-]", "_", text)


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)  # role -> Path or None
    seed: Optional[int] = None
    out: Path = field(default_factory=default_out)
    flags: dict = field(default_factory=dict)

    def check(self, required=()) -> None:
        for role in required:
            if self.inputs.get(role) is None:
                raise UsageError(f"{self.subcommand}: --{role} is required")
        for role, path in self.inputs.items():
            if path is not None and not Path(path).exists():
                raise UsageError(f"{self.subcommand}: {role} path {path} does not exist")


def _from_dir(args, role: str, name: str) -> Optional[Path]:
    explicit = getattr(args, role.replace("-", "_"), None)
    if explicit is not None:
        return Path(explicit)
    base = getattr(args, "input", None)
    if base is not None and (Path(base) / name).exists():
        return Path(base) / name
    return None


# ----------------------------------------------------------------- simulate


def cmd_simulate(cfg: RunConfig) -> dict:
    cfg.check(["config"])
    config = load_config(cfg.inputs["config"])
    if cfg.seed is not None:
        config["seed"] = cfg.seed
    topo = build_topology(config)
    out = cfg.out
    lg = SimulatedLookingGlass(topo)

    # looking-glass corpus: summary plus one routes answer per eligible neighbor prefix
    from .inference import write_fixture_corpus, probe_eligible

    targets = {}
    for rn in topo.border_routers():
        neighbors = {s.neighbor_as for s in topo.sessions.get(rn, ())}
        targets[rn] = [query_target(p) for p, a in topo.prefixes.items()
                       if a in neighbors and probe_eligible(p)]
    lg_dir = out / "lg"
    if lg_dir.exists():
        for old in lg_dir.glob("*.lg"):
            old.unlink()
    n_fixtures = write_fixture_corpus(lg, topo.border_routers(), targets, lg_dir)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prefix", "asn"])
    for p, a in topo.prefixes.items():
        w.writerow([p, a.number])
    write_atomic(out / "prefixes.csv", buf.getvalue())

    census = {a: Census(a, n, r) for a, (n, r) in topo.census().items()}
    write_atomic(out / "census.csv", _census_text(census))
    write_atomic(out / "ixps.json", json.dumps(topo.ixps.to_records(), indent=1) + "\n")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ip", "name"])
    for ip in sorted(topo.dns, key=lambda x: (x.version, int(x))):
        w.writerow([ip, topo.dns[ip]])
    write_atomic(out / "dns.csv", buf.getvalue())

    truth = CaseCatalog([CatalogEntry(c, classify_connectivity(c, topo.ixps), 0)
                         for c in topo.planted_cases])
    write_atomic(out / "ground_truth.jsonl", truth.to_jsonl())

    interval = cfg.flags["interval"]
    ticks = tick_count(cfg.flags["days"], interval)
    protocols = [Protocol(p.upper()) for p in cfg.flags["protocols"]]
    n_traces = 0
    if not cfg.flags.get("no_traces"):
        with _AtomicStream(out / "traces.jsonl") as fh:
            for case in topo.planted_cases:
                sources = [ip for ip, s in topo.sources.items() if s.router == case.near_br.name]
                for rec in campaign(topo, case.dst_prefix, sources, protocols, ticks,
                                    DEFAULT_START, interval):
                    fh.write(rec.to_json())
                    fh.write("\n")
                    n_traces += 1
    manifest = {
        "topology": topo.name,
        "seed": topo.seed,
        "ticks": ticks,
        "interval_seconds": interval,
        "start": DEFAULT_START,
        "protocols": [p.value for p in protocols],
        "lg_fixtures": n_fixtures,
        "traces": n_traces,
        "planted_cases": len(topo.planted_cases),
    }
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _census_text(census) -> str:
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "c.csv"
        write_census(census, p)
        return p.read_text()


# -------------------------------------------------------------------- infer


def read_prefixes(path: Path) -> dict:
    out = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[Asn(int(row["asn"]))].append(parse_prefix(row["prefix"]))
    return dict(out)


def cmd_infer(cfg: RunConfig) -> dict:
    cfg.check(["corpus"])
    lg = FixtureLookingGlass(cfg.inputs["corpus"])
    prefixes = read_prefixes(cfg.inputs["prefixes"]) if cfg.inputs.get("prefixes") else {}
    directory = IxpDirectory()
    if cfg.inputs.get("ixps"):
        directory = IxpDirectory.from_records(json.loads(Path(cfg.inputs["ixps"]).read_text()))

    summaries, local_as = {}, set()
    for router in lg.routers():
        text = lg.summary(router)
        if text is None or is_not_existing(text):
            continue
        table = parse_summary_table(text)
        summaries[router] = list(table.rows)
        local_as.add(table.local_as)
    near_as = Asn(cfg.flags["near_as"]) if cfg.flags.get("near_as") else None
    if near_as is None:
        if len(local_as) > 1:
            raise UsageError("corpus spans several local ASes; pass --near-as")
        near_as = local_as.pop() if local_as else None

    catalog = CaseCatalog()
    routers = lg.routers(near_as) if near_as is not None else []
    if routers:
        use_summaries = summaries if summaries and not cfg.flags.get("no_summary") else None
        try:
            plan = plan_queries(near_as, routers, prefixes, summaries=use_summaries,
                                budget=cfg.flags.get("budget"))
            catalog = execute_plan(plan, lg, directory, exhaustive=cfg.flags.get("exhaustive", False))
        except PlanError as exc:
            log.warning("nothing to plan: %s", exc)
    else:
        log.warning("corpus holds no routers to query")

    out = cfg.out
    write_atomic(out / "catalog.jsonl", catalog.to_jsonl())
    if catalog.cursor is not None:
        write_atomic(out / "catalog.cursor", f"{catalog.cursor}\n")

    report = {"cases": len(catalog), "queries": catalog.queries, "stats": []}
    lines = [TABLE_HEADER]
    census = read_census(cfg.inputs["census"]) if cfg.inputs.get("census") else {}
    try:
        stats = aggregate_stats(catalog, census)
        report["stats"] = [s.to_dict() for s in stats.values()]
        lines += [s.row() for s in stats.values()]
    except KeyError as exc:
        log.warning("census lacks totals (%s); ratios omitted", exc)
        lines += [f"{len(catalog)} cases; ratios omitted (no census)"]
    write_atomic(out / "stats.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    write_atomic(out / "report.txt", "\n".join(lines) + "\n")
    return report


# ------------------------------------------------------------ trace-analyze


def _analyze_case(entry_json: str, records: list, dns: dict, out: str, plots: bool) -> dict:
    entry = CatalogEntry.from_json(entry_json)
    case = entry.case
    cdir = Path(out) / "cases" / case_slug(case)
    groups: dict = defaultdict(list)  # (src, proto) -> [ValidatedPath]
    rejections: dict = defaultdict(int)
    for line in records:
        rec = TraceRecord.from_json(line)
        res = validate_path(rec, case, dns)
        if isinstance(res, ValidatedPath):
            groups[(rec.probe.src, rec.probe.protocol)].append(res)
        else:
            rejections[res.value] += 1

    result = {"case": str(case), "slug": case_slug(case), "rejections": dict(rejections),
              "coverage": {}, "allocation": {}, "faras": None, "skipped": False}
    maps_by: dict = {}
    failed = 0
    for (src, proto), vps in sorted(groups.items(), key=lambda kv: (int(kv[0][0]), kv[0][1].value)):
        by_time = defaultdict(list)
        for vp in vps:
            by_time[vp.trace.probe.time].append(vp)
        maps = []
        for t in sorted(by_time):
            rep = coverage_check(by_time[t], case, t)
            if not rep.passed:
                failed += 1
                continue
            maps.append(build_routing_map(by_time[t], case))
        result["coverage"][f"{src}/{proto.value}"] = {
            "times": len(by_time), "passed": len(maps),
            "min_reachable": min(len({v.trace.probe.dst for v in g}) for g in by_time.values()),
        }
        if maps:
            maps_by[(src, proto)] = maps
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["time", "dst_ip", "link_index", "far_ip"])
            for m in maps:
                for dst in sorted(m.assignment, key=int):
                    w.writerow([m.time, dst, case.links.index(m.assignment[dst]), m.assignment[dst]])
            write_atomic(cdir / f"maps_{src}_{proto.value}.csv", buf.getvalue())

    if not maps_by:
        result["skipped"] = True
        write_atomic(cdir / "summary.json", json.dumps(result, indent=1, sort_keys=True) + "\n")
        return result

    by_proto = defaultdict(list)
    for (src, proto), maps in maps_by.items():
        by_proto[proto].append(maps)
    for proto, per_src in sorted(by_proto.items(), key=lambda kv: kv[0].value):
        other = per_src[1] if len(per_src) > 1 else None
        result["allocation"][proto.value] = classify_allocation(per_src[0], other).value
    first_maps = next(iter(maps_by.values()))
    result["faras"] = classify_faras(first_maps[0]).value

    for proto in sorted(by_proto, key=lambda p: p.value):
        series = DelaySeries()
        for (src, p), vps in groups.items():
            if p is proto:
                for vp in sorted(vps, key=lambda v: (v.trace.probe.time, int(v.trace.probe.dst))):
                    series.add(vp)
        if not len(series):
            continue
        tag = proto.value
        write_atomic(cdir / f"delays_{tag}.csv", series.to_csv())
        by_time = delay_stats(series, "time")
        by_dst = delay_stats(series, "dst")
        write_atomic(cdir / f"delay_by_time_{tag}.csv", stats_to_csv(by_time, "time"))
        write_atomic(cdir / f"delay_by_dst_{tag}.csv", stats_to_csv(by_dst, "dst"))
        vals = series.values()
        result.setdefault("delay", {})[tag] = {
            "samples": len(series),
            "median_ms": float(np.median(vals)),
        }
        if plots:
            from .plots import plot_delay_histogram, plot_delay_timeseries

            plot_delay_histogram(series, cdir / f"delay_hist_{tag}.svg")
            plot_delay_timeseries(by_time, cdir / f"delay_series_{tag}.svg")
    if plots:
        from .plots import plot_routing_maps

        for (src, proto), maps in maps_by.items():
            plot_routing_maps(maps[:8], cdir / f"maps_{src}_{proto.value}.svg")
    write_atomic(cdir / "summary.json", json.dumps(result, indent=1, sort_keys=True) + "\n")
    return result


def cmd_trace_analyze(cfg: RunConfig) -> dict:
    cfg.check(["traces", "catalog", "dns"])
    catalog = CaseCatalog.load(cfg.inputs["catalog"])
    with open(cfg.inputs["dns"], newline="") as fh:
        dns = read_dns(fh)
    # bucket raw lines by case prefix so workers only parse their own traces
    buckets = {e.case.key: [] for e in catalog}
    prefixes = [(e.case.dst_prefix, e.case.key) for e in catalog]
    with open(cfg.inputs["traces"]) as fh:
        for line in fh:
            if not line.strip():
                continue
            m = re.search(r'"dst":\s*"([^"]+)"', line)
            dst = parse_ip(m.group(1)) if m else TraceRecord.from_json(line).probe.dst
            for pfx, key in prefixes:
                if dst.version == pfx.version and dst in pfx:
                    buckets[key].append(line)
    jobs = max(1, int(cfg.flags.get("jobs", 1)))
    plots = not cfg.flags.get("no_plots", False)
    if plots and importlib.util.find_spec("matplotlib") is None:
        log.warning("matplotlib is not installed; skipping plots (pip install 'artifact[plots]')")
        plots = False
    args = [(e.to_json(), buckets[e.case.key], dns, str(cfg.out), plots) for e in catalog]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyze_case, *zip(*args)))
    else:
        results = [_analyze_case(*a) for a in args]
    summary = {"cases": results,
               "skipped": sum(1 for r in results if r["skipped"])}
    write_atomic(cfg.out / "analysis.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


# --------------------------------------------------------------------- diff


def cmd_diff(cfg: RunConfig) -> dict:
    cfg.check(["catalog", "corpus"])
    old = CaseCatalog.load(cfg.inputs["catalog"])
    lg = FixtureLookingGlass(cfg.inputs["corpus"])
    records = diff_cases(old, lg)
    lines = "".join(json.dumps({"case": str(r.case), "outcome": r.outcome.value}) + "\n" for r in records)
    write_atomic(cfg.out / "changes.jsonl", lines)
    summary = change_summary(records)
    write_atomic(cfg.out / "changes_summary.json", json.dumps(summary, indent=1) + "\n")
    return summary


# ------------------------------------------------------------------- report


def render_report(stats: Optional[dict], changes: Optional[dict], analysis: Optional[dict]) -> str:
    lines = []
    if stats is not None:
        lines.append("Deployment")
        lines.append(TABLE_HEADER)
        for s in stats.get("stats", []):
            split = "/".join(f"{s['split'].get(c.value, 0):,}" for c in Connectivity)
            lines.append(
                f"{s['near_as']:>8} | {s['cases']:>6,} | {split:>14} | {s['total_neighbors']:>6,} | "
                f"{s['bgpm_neighbors']:>5,} | {s['neighbor_ratio']:6.1%} | {s['total_routers']:>5,} | "
                f"{s['bgpm_routers']:>4,} | {s['router_ratio']:6.1%}"
            )
            hist = ", ".join(f"{k} links: {v}" for k, v in s["link_histogram"].items())
            lines.append(f"         link counts: {hist}")
        if not stats.get("stats"):
            lines.append(f"{stats.get('cases', 0)} cases (no census ratios)")
    if changes is not None:
        total = changes["total"] or 1
        lines.append("")
        lines.append("Revisit")
        lines.append(f"  remaining              {changes['remaining']:>6} ({changes['remaining'] / total:.1%})")
        lines.append(f"  disappeared or changed {changes['disappeared_or_changed']:>6} "
                     f"({changes['disappeared_or_changed'] / total:.1%})")
        for k, v in changes.items():
            if k not in ("total", "remaining", "disappeared_or_changed"):
                lines.append(f"    {k:<24} {v:>6}")
    if analysis is not None:
        lines.append("")
        lines.append("Traceroute analysis")
        for r in analysis["cases"]:
            if r["skipped"]:
                lines.append(f"  {r['case']}: skipped (coverage)")
                continue
            alloc = ", ".join(f"{p}={k}" for p, k in r["allocation"].items())
            lines.append(f"  {r['case']}: {alloc}; farside {r['faras']}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig) -> str:
    cfg.check()
    loaded = {}
    for role in ("stats", "changes", "analysis"):
        p = cfg.inputs.get(role)
        loaded[role] = json.loads(Path(p).read_text()) if p else None
    if not any(loaded.values()):
        raise UsageError("report: nothing to report; pass --stats, --changes or --analysis")
    text = render_report(loaded["stats"], loaded["changes"], loaded["analysis"])
    write_atomic(cfg.out / "summary.txt", text)
    return text


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgpmlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--input", type=Path, default=None,
                        help="directory holding earlier stage outputs")

    s = sub.add_parser("simulate", help="build a topology and write LG corpus and traces")
    common(s)
    s.add_argument("--config", type=Path, help="topology JSON (default: bundled demo)")
    s.add_argument("--seed", type=int)
    s.add_argument("--days", type=float, default=1.0)
    s.add_argument("--interval", type=parse_interval, default=TICK_SECONDS)
    s.add_argument("--protocols", default="ICMP,UDP")
    s.add_argument("--no-traces", action="store_true")

    s = sub.add_parser("infer", help="query an LG corpus and catalog BGP-M cases")
    common(s)
    s.add_argument("--corpus", type=Path)
    s.add_argument("--prefixes", type=Path)
    s.add_argument("--ixps", type=Path)
    s.add_argument("--census", type=Path)
    s.add_argument("--near-as", type=int)
    s.add_argument("--budget", type=int)
    s.add_argument("--exhaustive", action="store_true")
    s.add_argument("--no-summary", action="store_true", help="plan every neighbor, ignoring summaries")

    s = sub.add_parser("trace-analyze", help="routing maps, allocation, farside and delay per case")
    common(s)
    s.add_argument("--traces", type=Path)
    s.add_argument("--catalog", type=Path)
    s.add_argument("--dns", type=Path)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("diff", help="revisit cataloged cases against a new corpus")
    common(s)
    s.add_argument("--catalog", type=Path)
    s.add_argument("--corpus", type=Path)

    s = sub.add_parser("report", help="render text tables from stage outputs")
    common(s)
    s.add_argument("--stats", type=Path)
    s.add_argument("--changes", type=Path)
    s.add_argument("--analysis", type=Path)
    return p


def _bundled_demo() -> Path:
    from importlib.resources import files

    return Path(str(files("bgpmlab") / "data" / "demo_topology.json"))


def run_config(args) -> RunConfig:
    out = args.out if args.out is not None else default_out()
    sc = args.subcommand
    if sc == "simulate":
        return RunConfig(sc, {"config": args.config or _bundled_demo()}, args.seed, out, {
            "days": args.days, "interval": args.interval,
            "protocols": [x for x in args.protocols.split(",") if x],
            "no_traces": args.no_traces,
        })
    if sc == "infer":
        return RunConfig(sc, {
            "corpus": _from_dir(args, "corpus", "lg"),
            "prefixes": _from_dir(args, "prefixes", "prefixes.csv"),
            "ixps": _from_dir(args, "ixps", "ixps.json"),
            "census": _from_dir(args, "census", "census.csv"),
        }, None, out, {"near_as": args.near_as, "budget": args.budget,
                       "exhaustive": args.exhaustive, "no_summary": args.no_summary})
    if sc == "trace-analyze":
        return RunConfig(sc, {
            "traces": _from_dir(args, "traces", "traces.jsonl"),
            "catalog": _from_dir(args, "catalog", "catalog.jsonl"),
            "dns": _from_dir(args, "dns", "dns.csv"),
        }, None, out, {"jobs": args.jobs, "no_plots": args.no_plots})
    if sc == "diff":
        return RunConfig(sc, {
            "catalog": _from_dir(args, "catalog", "catalog.jsonl"),
            "corpus": _from_dir(args, "corpus", "lg"),
        }, None, out)
    return RunConfig(sc, {
        "stats": _from_dir(args, "stats", "stats.json"),
        "changes": _from_dir(args, "changes", "changes_summary.json"),
        "analysis": _from_dir(args, "analysis", "analysis.json"),
    }, None, out)


COMMANDS = {
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "trace-analyze": cmd_trace_analyze,
    "diff": cmd_diff,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = run_config(args)
        result = COMMANDS[cfg.subcommand](cfg)
    except (BgpmError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, str):
        sys.stdout.write(result)
    else:
        print(json.dumps(_brief(cfg.subcommand, result), sort_keys=True))
    return 0


def _brief(sub: str, result: dict) -> dict:
    if sub == "trace-analyze":
        return {"cases": len(result["cases"]), "skipped": result["skipped"]}
    return result


if __name__ == "__main__":
    sys.exit(main())
