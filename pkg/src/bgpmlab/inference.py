"""Looking-glass measurement pipeline: planning, case discovery, statistics, revisits."""

from __future__ import annotations

import csv
import enum
import json
import logging
import re
import time as _time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Protocol as TypingProtocol, Union

from .core import (
    Asn,
    BgpmCase,
    BgpmError,
    IpAddress,
    IxpDirectory,
    Prefix,
    RouterId,
    ip_in_directory,
    parse_ip,
    parse_prefix,
    query_target,
)
from .lg import (
    LgParseError,
    SummaryRow,
    detect_multipath,
    inspect_multipath,
    is_no_routes,
    is_not_existing,
    multi_session_neighbors,
    parse_fixture,
    parse_routes_detail,
    render_fixture,
    render_not_existing,
    render_routes_detail,
    render_summary,
    NO_ROUTES,
)
from .bgp import Flag

log = logging.getLogger(__name__)


class LgTransportError(BgpmError):
    """The looking glass did not answer."""


class LookingGlass(TypingProtocol):
    def routes(self, router: str, ip: IpAddress) -> str: ...

    def summary(self, router: str) -> Optional[str]: ...


class SimulatedLookingGlass:
    """Answers queries straight from a simulated topology."""

    def __init__(self, topo):
        from .sim.topology import NOT_EXISTING, lg_snapshot

        self._topo = topo
        self._snapshot = lg_snapshot
        self._missing = NOT_EXISTING

    def routers(self, asn: Optional[Asn] = None) -> list[str]:
        return self._topo.border_routers(asn)

    def routes(self, router: str, ip: IpAddress) -> str:
        view = self._snapshot(self._topo, router)
        if view is self._missing:
            return render_not_existing(router)
        return render_routes_detail(view, ip)

    def summary(self, router: str) -> Optional[str]:
        view = self._snapshot(self._topo, router)
        if view is self._missing:
            return render_not_existing(router)
        return render_summary(view)


class FixtureLookingGlass:
    """Replays ``.lg`` fixture files from a directory tree.

    A ``routes`` query with no stored response is answered with the
    ``No routes`` text; any query to a router absent from the corpus gets
    the ``Not existing`` text.
    """

    def __init__(self, root: Union[str, Path]):
        self._responses: dict = {}
        self._routers: dict = {}  # name -> local AS number or None
        for path in sorted(Path(root).rglob("*.lg")):
            router, command, arg, body = parse_fixture(path.read_text())
            self._responses[(router, command, arg)] = body
            self._routers.setdefault(router, None)
            if command == "summary" and not is_not_existing(body):
                m = re.search(r"Local AS Number:\s*(\d+)", body)
                if m:
                    self._routers[router] = int(m.group(1))

    def routers(self, asn: Optional[Asn] = None) -> list[str]:
        return [r for r, a in self._routers.items() if asn is None or a in (None, asn.number)]

    def routes(self, router: str, ip: IpAddress) -> str:
        if router not in self._routers:
            return render_not_existing(router)
        return self._responses.get((router, "routes", str(ip)), NO_ROUTES.format(ip=ip) + "\n")

    def summary(self, router: str) -> Optional[str]:
        if router not in self._routers:
            return render_not_existing(router)
        return self._responses.get((router, "summary", "-"))


class CountingLookingGlass:
    """Wraps a looking glass and records every ``routes`` query."""

    def __init__(self, inner):
        self.inner = inner
        self.log: list = []  # (router, ip)

    def routes(self, router: str, ip: IpAddress) -> str:
        self.log.append((router, ip))
        return self.inner.routes(router, ip)

    def summary(self, router: str) -> Optional[str]:
        return self.inner.summary(router)

    def count(self, router: Optional[str] = None, targets: Optional[Iterable] = None) -> int:
        wanted = set(targets) if targets is not None else None
        return sum(
            1 for r, ip in self.log
            if (router is None or r == router) and (wanted is None or ip in wanted)
        )


def write_fixture_corpus(lg, routers: Iterable[str], targets: Mapping[str, Iterable[IpAddress]],
                         root: Union[str, Path]) -> int:
    """Dump ``summary`` for each router and ``routes`` for its targets as ``.lg`` files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    n = 0
    for router in routers:
        files = [("summary", "-", lg.summary(router))]
        files += [("routes", str(ip), lg.routes(router, ip)) for ip in targets.get(router, ())]
        for command, arg, body in files:
            if body is None or (command == "routes" and is_no_routes(body)):
                continue
            safe = re.sub(r"[^A-Za-z0-9.-]", "_", f"{router}__{command}__{arg}")
            (root / f"{safe}.lg").write_text(render_fixture(router, command, arg, body))
            n += 1
    return n


# ------------------------------------------------------------------ planning


def derive_neighbors_from_rib(as_paths: Iterable[Iterable], near_as: Asn) -> set:
    """ASes adjacent to ``near_as`` on any AS path, with prepending collapsed."""
    out = set()
    for path in as_paths:
        collapsed = []
        for a in path:
            a = a if isinstance(a, Asn) else Asn(int(a))
            if not collapsed or collapsed[-1] != a:
                collapsed.append(a)
        for i, a in enumerate(collapsed):
            if a == near_as:
                if i > 0:
                    out.add(collapsed[i - 1])
                if i + 1 < len(collapsed):
                    out.add(collapsed[i + 1])
    out.discard(near_as)
    return out


def probe_eligible(prefix: Prefix) -> bool:
    return (prefix.version, prefix.prefixlen) in ((4, 24), (6, 48))


@dataclass(frozen=True)
class NeighborPlan:
    neighbor_as: Asn
    targets: tuple


@dataclass(frozen=True)
class RouterPlan:
    router: RouterId
    neighbors: tuple


@dataclass(frozen=True)
class QueryPlan:
    near_as: Asn
    routers: tuple
    budget: Optional[int] = None
    rate_limit: Optional[float] = None  # queries per second

    def steps(self) -> list[tuple]:
        """Flattened (router, neighbor, target) sequence in execution order."""
        return [
            (rp.router, np_.neighbor_as, t)
            for rp in self.routers for np_ in rp.neighbors for t in np_.targets
        ]


class PlanError(BgpmError, ValueError):
    pass


def plan_queries(
    near_as: Asn,
    routers: Iterable,
    neighbor_prefixes: Mapping[Asn, list],
    summaries: Optional[Mapping[str, list[SummaryRow]]] = None,
    neighbors: Optional[Iterable[Asn]] = None,
    budget: Optional[int] = None,
    rate_limit: Optional[float] = None,
) -> QueryPlan:
    """One X.Y.Z.1 (or X:Y:Z::1) target per eligible prefix of each planned neighbor.

    With ``summaries`` (router name -> rows) only neighbors holding two or
    more sessions at that router are planned; otherwise every neighbor in
    ``neighbors`` (default: all keys of ``neighbor_prefixes``).
    """
    routers = [r if isinstance(r, RouterId) else RouterId(str(r), near_as) for r in routers]
    if not routers:
        raise PlanError("no routers to plan for")
    fallback = list(neighbors) if neighbors is not None else list(neighbor_prefixes)
    plans = []
    for router in routers:
        if summaries is not None:
            candidates = multi_session_neighbors(summaries.get(router.name, []))
        else:
            candidates = sorted(set(fallback))
        nplans = []
        for asn in candidates:
            targets = tuple(query_target(p) for p in neighbor_prefixes.get(asn, ()) if probe_eligible(p))
            if targets:
                nplans.append(NeighborPlan(asn, targets))
        plans.append(RouterPlan(router, tuple(nplans)))
    return QueryPlan(near_as, tuple(plans), budget, rate_limit)


# ----------------------------------------------------------------- catalogue


class Connectivity(str, enum.Enum):
    IXP = "IXP"
    DIRECT = "Direct"
    HYBRID = "Hybrid"


def classify_connectivity(case: BgpmCase, directory: IxpDirectory) -> Connectivity:
    hits = [ip_in_directory(ip, directory) is not None for ip in case.far_ips]
    if all(hits):
        return Connectivity.IXP
    if not any(hits):
        return Connectivity.DIRECT
    return Connectivity.HYBRID


@dataclass(frozen=True)
class CatalogEntry:
    case: BgpmCase
    connectivity: Connectivity
    discovered_at: int = 0

    @property
    def link_count(self) -> int:
        return len(self.case.far_ips)

    def to_json(self) -> str:
        c = self.case
        return json.dumps({
            "near_as": c.near_as.number,
            "near_br": c.near_br.name,
            "far_as": c.far_as.number,
            "dst_prefix": str(c.dst_prefix),
            "far_ips": [str(ip) for ip in c.links],
            "link_count": self.link_count,
            "connectivity": self.connectivity.value,
            "discovered_at": self.discovered_at,
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "CatalogEntry":
        d = json.loads(line)
        near_as = Asn(int(d["near_as"]))
        case = BgpmCase(
            near_as,
            RouterId(d["near_br"], near_as),
            Asn(int(d["far_as"])),
            parse_prefix(d["dst_prefix"]),
            frozenset(parse_ip(ip) for ip in d["far_ips"]),
        )
        return cls(case, Connectivity(d.get("connectivity", "Direct")), int(d.get("discovered_at", 0)))


@dataclass
class CaseCatalog:
    entries: list = field(default_factory=list)
    cursor: Optional[int] = None  # set when a run stopped early
    queries: int = 0

    def __post_init__(self):
        self._keys = set()
        entries, self.entries = self.entries, []
        for e in entries:
            self.add(e)

    def add(self, entry: CatalogEntry) -> bool:
        if entry.case.key in self._keys:
            return False
        self._keys.add(entry.case.key)
        self.entries.append(entry)
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def cases(self) -> list:
        return [e.case for e in self.entries]

    @property
    def complete(self) -> bool:
        return self.cursor is None

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "CaseCatalog":
        return cls([CatalogEntry.from_json(l) for l in text.splitlines() if l.strip()])

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CaseCatalog":
        return cls.from_jsonl(Path(path).read_text())


def execute_plan(
    plan: QueryPlan,
    lg,
    directory: Optional[IxpDirectory] = None,
    exhaustive: bool = False,
    cursor: int = 0,
    catalog: Optional[CaseCatalog] = None,
    sleep: Callable[[float], None] = _time.sleep,
) -> CaseCatalog:
    """Query targets in plan order, stopping per (router, neighbor) at the first case.

    A transport failure returns the partial catalog with ``cursor`` set to
    the step to resume from; pass both back in to continue.
    """
    directory = directory or IxpDirectory()
    catalog = catalog if catalog is not None else CaseCatalog()
    steps = plan.steps()
    done = {(e.case.near_br.name, e.case.far_as) for e in catalog} if not exhaustive else set()
    catalog.cursor = None
    for i in range(cursor, len(steps)):
        router, neighbor, target = steps[i]
        if (router.name, neighbor) in done:
            continue
        if plan.budget is not None and catalog.queries >= plan.budget:
            catalog.cursor = i
            log.warning("query budget of %d exhausted at step %d", plan.budget, i)
            break
        if plan.rate_limit and catalog.queries:
            sleep(1.0 / plan.rate_limit)
        try:
            text = lg.routes(router.name, target)
        except (LgTransportError, OSError) as exc:
            catalog.cursor = i
            log.warning("looking glass failed at step %d (%s); resume from there", i, exc)
            break
        catalog.queries += 1
        if is_not_existing(text) or is_no_routes(text):
            continue
        try:
            evidence = detect_multipath(parse_routes_detail(text))
        except LgParseError as exc:
            log.warning("unparseable response from %s for %s: %s", router.name, target, exc)
            continue
        if evidence is None:
            continue
        case = BgpmCase(plan.near_as, router, evidence.far_as, evidence.dst_prefix,
                        evidence.next_hops)
        catalog.add(CatalogEntry(case, classify_connectivity(case, directory), catalog.queries))
        if not exhaustive:
            done.add((router.name, neighbor))
    return catalog


# -------------------------------------------------------------------- revisit


class Outcome(str, enum.Enum):
    EXACTLY_SAME = "ExactlySame"
    INCREASED_LINKS = "IncreasedLinks"
    SAME_COUNT_DIFFERENT_LINKS = "SameCountDifferentLinks"
    ROUTER_NOT_EXISTING = "RouterNotExisting"
    NO_ROUTES = "NoRoutes"
    NO_MULTIPATH_FLAG = "NoMultipathFlag"
    NO_EBGP_FLAG = "NoEbgpFlag"
    OTHER_CHANGE = "OtherChange"


REMAINING = (Outcome.EXACTLY_SAME, Outcome.INCREASED_LINKS, Outcome.SAME_COUNT_DIFFERENT_LINKS)


@dataclass(frozen=True)
class ChangeRecord:
    case: BgpmCase
    outcome: Outcome


def classify_change(case: BgpmCase, text: str) -> Outcome:
    if is_not_existing(text):
        return Outcome.ROUTER_NOT_EXISTING
    if is_no_routes(text):
        return Outcome.NO_ROUTES
    try:
        routes = parse_routes_detail(text)
    except LgParseError:
        return Outcome.OTHER_CHANGE
    if not routes:
        return Outcome.NO_ROUTES
    if not any(p.has(Flag.EBGP) for p in routes):
        return Outcome.NO_EBGP_FLAG
    if not any(p.has(Flag.MULTIPATH) for p in routes):
        return Outcome.NO_MULTIPATH_FLAG
    ev = inspect_multipath(routes)
    if not ev.positive or ev.far_as != case.far_as or ev.dst_prefix != case.dst_prefix:
        return Outcome.OTHER_CHANGE
    if ev.next_hops == case.far_ips:
        return Outcome.EXACTLY_SAME
    if len(ev.next_hops) > len(case.far_ips):
        return Outcome.INCREASED_LINKS
    if len(ev.next_hops) == len(case.far_ips):
        return Outcome.SAME_COUNT_DIFFERENT_LINKS
    return Outcome.OTHER_CHANGE


def diff_cases(old: Iterable, lg) -> list[ChangeRecord]:
    """Re-query every old case and place it in the revisit taxonomy."""
    out = []
    for item in old:
        case = item.case if isinstance(item, CatalogEntry) else item
        text = lg.routes(case.near_br.name, query_target(case.dst_prefix))
        out.append(ChangeRecord(case, classify_change(case, text)))
    return out


def change_summary(records: Iterable[ChangeRecord]) -> dict:
    counts = Counter(r.outcome for r in records)
    remaining = sum(counts[o] for o in REMAINING)
    total = sum(counts.values())
    return {
        "total": total,
        "remaining": remaining,
        "disappeared_or_changed": total - remaining,
        **{o.value: counts.get(o, 0) for o in Outcome},
    }


# ----------------------------------------------------------------- statistics


@dataclass(frozen=True)
class Census:
    near_as: Asn
    total_neighbors: int
    total_routers: int
    rank: Optional[str] = None


class CensusError(BgpmError, KeyError):
    pass


def read_census(path: Union[str, Path]) -> dict:
    """CSV with columns near_as,total_neighbors,total_routers[,rank]."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            asn = Asn(int(row["near_as"]))
            out[asn] = Census(asn, int(row["total_neighbors"]), int(row["total_routers"]),
                              row.get("rank") or None)
    return out


def write_census(census: Mapping, path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["near_as", "total_neighbors", "total_routers", "rank"])
        for asn in sorted(census):
            c = census[asn]
            w.writerow([asn.number, c.total_neighbors, c.total_routers, c.rank or ""])


@dataclass(frozen=True)
class DeploymentStats:
    near_as: Asn
    cases: int
    split: dict  # Connectivity -> count
    total_neighbors: int
    bgpm_neighbors: int
    total_routers: int
    bgpm_routers: int
    link_histogram: dict  # link count -> cases

    @property
    def neighbor_ratio(self) -> float:
        return self.bgpm_neighbors / self.total_neighbors if self.total_neighbors else 0.0

    @property
    def router_ratio(self) -> float:
        return self.bgpm_routers / self.total_routers if self.total_routers else 0.0

    @property
    def split_text(self) -> str:
        return "/".join(f"{self.split.get(c, 0):,}" for c in Connectivity)

    def row(self) -> str:
        return (
            f"{self.near_as.number:>8} | {self.cases:>6,} | {self.split_text:>14} | "
            f"{self.total_neighbors:>6,} | {self.bgpm_neighbors:>5,} | {self.neighbor_ratio:6.1%} | "
            f"{self.total_routers:>5,} | {self.bgpm_routers:>4,} | {self.router_ratio:6.1%}"
        )

    def to_dict(self) -> dict:
        return {
            "near_as": self.near_as.number,
            "cases": self.cases,
            "split": {c.value: self.split.get(c, 0) for c in Connectivity},
            "total_neighbors": self.total_neighbors,
            "bgpm_neighbors": self.bgpm_neighbors,
            "neighbor_ratio": round(self.neighbor_ratio, 6),
            "total_routers": self.total_routers,
            "bgpm_routers": self.bgpm_routers,
            "router_ratio": round(self.router_ratio, 6),
            "link_histogram": {str(k): v for k, v in sorted(self.link_histogram.items())},
        }


TABLE_HEADER = (
    f"{'AS':>8} | {'cases':>6} | {'IXP/Dir/Hybrid':>14} | {'neigh':>6} | {'BGPM':>5} | {'ratio':>6} | "
    f"{'rtrs':>5} | {'BGPM':>4} | {'ratio':>6}"
)


def aggregate_stats(catalog: Iterable, census: Mapping) -> dict:
    """Per-NearAS deployment statistics; ``census`` maps Asn -> Census."""
    by_as: dict = {}
    for e in catalog:
        by_as.setdefault(e.case.near_as, []).append(e)
    out = {}
    for asn, entries in sorted(by_as.items()):
        if asn not in census:
            raise CensusError(f"census has no totals for {asn}")
        c = census[asn]
        out[asn] = DeploymentStats(
            near_as=asn,
            cases=len(entries),
            split=dict(Counter(e.connectivity for e in entries)),
            total_neighbors=c.total_neighbors,
            bgpm_neighbors=len({e.case.far_as for e in entries}),
            total_routers=c.total_routers,
            bgpm_routers=len({e.case.near_br.name for e in entries}),
            link_histogram=dict(Counter(e.link_count for e in entries)),
        )
    return out


# ------------------------------------------------------------------ locations


@dataclass(frozen=True)
class Location:
    code: str
    country: str
    region: str


UNKNOWN_LOCATION = Location("", "Unknown", "Unknown")

# IATA-style site codes used in router names -> (country, region)
SITE_CODES = {
    "ash": ("United States", "North America"), "atl": ("United States", "North America"),
    "bos": ("United States", "North America"), "chi": ("United States", "North America"),
    "dal": ("United States", "North America"), "den": ("United States", "North America"),
    "fmt": ("United States", "North America"), "lax": ("United States", "North America"),
    "mia": ("United States", "North America"), "nyc": ("United States", "North America"),
    "pao": ("United States", "North America"), "phx": ("United States", "North America"),
    "sea": ("United States", "North America"), "sjc": ("United States", "North America"),
    "ewr": ("United States", "North America"), "kcm": ("United States", "North America"),
    "tor": ("Canada", "North America"), "mtl": ("Canada", "North America"),
    "van": ("Canada", "North America"), "yyc": ("Canada", "North America"),
    "wpg": ("Canada", "North America"), "cal": ("Canada", "North America"),
    "fra": ("Germany", "Europe"), "ber": ("Germany", "Europe"), "dus": ("Germany", "Europe"),
    "muc": ("Germany", "Europe"), "ham": ("Germany", "Europe"),
    "lon": ("United Kingdom", "Europe"), "man": ("United Kingdom", "Europe"),
    "par": ("France", "Europe"), "mrs": ("France", "Europe"),
    "ams": ("Netherlands", "Europe"), "bru": ("Belgium", "Europe"), "zrh": ("Switzerland", "Europe"),
    "mil": ("Italy", "Europe"), "mad": ("Spain", "Europe"), "sto": ("Sweden", "Europe"),
    "waw": ("Poland", "Europe"), "prg": ("Czech Republic", "Europe"), "vie": ("Austria", "Europe"),
    "hkg": ("Hong Kong", "Asia"), "tyo": ("Japan", "Asia"), "sin": ("Singapore", "Asia"),
    "sel": ("South Korea", "Asia"), "tpe": ("Taiwan", "Asia"), "bom": ("India", "Asia"),
    "syd": ("Australia", "Other"), "akl": ("New Zealand", "Other"), "jnb": ("South Africa", "Other"),
    "sao": ("Brazil", "Other"), "bog": ("Colombia", "Other"), "mex": ("Mexico", "North America"),
}

_ROUTER_NAME = re.compile(r"^[a-z]+\d*\.([a-z]+)\d*\.", re.IGNORECASE)


def router_location(name: Union[str, RouterId]) -> Location:
    """Site code, country and region from a ``coreN.<code>N.domain`` router name."""
    text = name.name if isinstance(name, RouterId) else name
    m = _ROUTER_NAME.match(text)
    if not m:
        return UNKNOWN_LOCATION
    code = m.group(1).lower()
    country, region = SITE_CODES.get(code, ("Unknown", "Unknown"))
    return Location(code, country, region)
