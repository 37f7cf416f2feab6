"""Topology configuration, RIB construction and router snapshots.

A topology config is a JSON document::

    {
      "name": "demo", "seed": 1,
      "ases":    [{"asn": 6939, "name": "HE", "role": "transit", "internal": "100.64.0.0/24"}],
      "routers": [{"name": "core1.tyo1.he.net", "asn": 6939, "router_id": "72.52.92.1",
                   "ecmp": true, "max_paths": 4, "algorithm": "include-ports",
                   "ingress": ["216.218.200.1"]}],
      "links":   [{"name": "BL-1", "near_router": "...", "far_router": "...",
                   "near_ip": "...", "far_ip": "...", "bandwidth_gbps": 100, "base_ms": 0}],
      "ixps":    [{"name": "JPIX TOKYO", "prefixes": ["210.171.224.0/23"]}],
      "prefixes": [{"prefix": "160.18.2.0/24", "asn": 2907}],
      "cases":   [{"router": "...", "prefix": "160.18.2.0/24", "links": ["BL-1", "BL-2"],
                   "faras": "split", "learned_via": "ebgp"}],
      "sources": [{"ip": "209.51.186.5", "router": "...", "ingress": "...", "intra_hops": [...]}],
      "unreachable": ["160.18.2.1"],
      "delay": {"queue_median_ms": 28.0, ...}
    }

Only ``ases``, ``routers`` and ``links`` are required.  See README for the
meaning of every field.
"""

from __future__ import annotations

import enum
import ipaddress
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..bgp import (
    LearnedVia,
    Origin,
    RouteEntry,
    RouterConfig,
    RoutingTable,
    check_bgpm_conditions,
    select_multipath,
)
from ..core import (
    Asn,
    BgpmCase,
    BgpmError,
    BorderLink,
    IpAddress,
    IxpDirectory,
    Prefix,
    RouterId,
    ordered_links,
    parse_ip,
    parse_prefix,
)
from ..ecmp import Algorithm, EcmpPolicy, RoundRobinState, salt_for
from .delay import DelayModel, uniforms


class ConfigError(BgpmError, ValueError):
    """Invalid topology config; the message names the offending location."""


class AsRole(str, enum.Enum):
    TRANSIT = "transit"
    STUB = "stub"
    CONTENT = "content"


class FarasKind(str, enum.Enum):
    SPLIT_PER_LINK = "split"
    PARALLEL = "parallel"
    MERGE = "merge"
    COMPLEX = "complex"
    UNRESPONSIVE = "unresponsive"


@dataclass(frozen=True)
class FarasPattern:
    """Intra-FarAS forwarding after each border link.

    ``internal_hop_plan[i]`` lists the alternative hop chains behind link
    ``i`` (in canonical link order); ``None`` marks a silent hop.
    """

    kind: FarasKind
    internal_hop_plan: tuple

    def __post_init__(self):
        if self.kind is FarasKind.UNRESPONSIVE:
            if not any(h is None for branches in self.internal_hop_plan
                       for chain in branches for h in chain):
                raise ValueError("unresponsive pattern needs a silent hop")


@dataclass(frozen=True)
class AsInfo:
    asn: Asn
    name: str
    role: AsRole
    internal: Prefix


@dataclass
class Router:
    id: RouterId
    router_id: IpAddress
    ecmp: bool
    max_paths: int
    policy: EcmpPolicy
    ingress: list

    @property
    def name(self) -> str:
        return self.id.name


@dataclass(frozen=True)
class Session:
    neighbor_ip: IpAddress
    neighbor_as: Asn
    state: str
    uptime_seconds: int


@dataclass(frozen=True)
class Source:
    ip: IpAddress
    router: str
    ingress: IpAddress
    intra_hops: tuple


@dataclass(frozen=True)
class RouterView:
    """Read-only state of one router as exposed by a looking glass."""

    router: RouterId
    router_id: IpAddress
    sessions: tuple
    table: RoutingTable

    @property
    def local_as(self) -> Asn:
        return self.router.owner


class _NotExisting:
    def __repr__(self):
        return "NOT_EXISTING"


NOT_EXISTING = _NotExisting()


@dataclass
class Topology:
    name: str
    seed: int
    ases: dict
    routers: dict
    links: list
    link_names: dict
    ixps: IxpDirectory
    prefixes: dict  # Prefix -> origin Asn, in config order
    planted_cases: list
    faras_patterns: dict  # case.key -> FarasPattern
    rib: dict  # router name -> RoutingTable
    sessions: dict  # router name -> tuple[Session]
    learned: dict  # router name -> list[RouteEntry]
    sources: dict
    unreachable: frozenset
    delay: DelayModel
    dns: dict  # ip -> router name
    rr_state: dict = field(default_factory=dict)

    def router(self, name: str) -> Router:
        return self.routers[name]

    def link(self, near_router: str, far_ip: IpAddress) -> BorderLink:
        for l in self.links:
            if l.near_router.name == near_router and l.far_ip == far_ip:
                return l
        raise KeyError((near_router, far_ip))

    def case_for(self, router: str, prefix: Prefix) -> Optional[BgpmCase]:
        for c in self.planted_cases:
            if c.near_br.name == router and c.dst_prefix == prefix:
                return c
        return None

    def prefixes_of(self, asn: Asn) -> list:
        return [p for p, owner in self.prefixes.items() if owner == asn]

    def border_routers(self, asn: Optional[Asn] = None) -> list:
        names = []
        for l in self.links:
            r = l.near_router
            if (asn is None or r.owner == asn) and r.name not in names:
                names.append(r.name)
        return names

    def router_config(self, name: str) -> RouterConfig:
        r = self.routers[name]
        links = [l for l in self.links if l.near_router.name == name]
        return RouterConfig(r.id, r.ecmp, r.max_paths, links, self.learned.get(name, []))

    def census(self) -> dict:
        """Neighbor and border-router totals per AS owning border routers."""
        out = {}
        for l in self.links:
            asn = l.near_router.owner
            entry = out.setdefault(asn, {"neighbors": set(), "routers": set()})
            entry["neighbors"].add(l.far_router.owner)
            entry["routers"].add(l.near_router.name)
        return {a: (len(e["neighbors"]), len(e["routers"])) for a, e in out.items()}


def lg_snapshot(topo: Topology, router: Union[str, RouterId]):
    """Looking-glass view of ``router`` or ``NOT_EXISTING``."""
    name = router.name if isinstance(router, RouterId) else router
    r = topo.routers.get(name)
    if r is None:
        return NOT_EXISTING
    return RouterView(
        router=r.id,
        router_id=r.router_id,
        sessions=tuple(topo.sessions.get(name, ())),
        table=topo.rib.get(name, RoutingTable()).copy(),
    )


# ---------------------------------------------------------------- config IO


def load_config(path: Union[str, Path]) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


class _Pool:
    """Sequential address allocator over one prefix."""

    def __init__(self, prefix: Prefix):
        self.prefix = prefix
        self.next = 1

    def take(self) -> IpAddress:
        if self.next >= self.prefix.num_addresses - 1:
            raise ConfigError(f"address pool {self.prefix} exhausted")
        ip = self.prefix.network_address + self.next
        self.next += 1
        return ip


def _default_internal(index: int, version: int) -> Prefix:
    if version == 6:
        return ipaddress.ip_network(f"fd00:{index:x}::/64")
    return ipaddress.ip_network(f"100.{64 + index // 256}.{index % 256}.0/24")


def _get(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return obj[key]


def _ip(text, where: str) -> IpAddress:
    try:
        return parse_ip(str(text))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _prefix(text, where: str) -> Prefix:
    try:
        return parse_prefix(str(text))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _minutes(*parts, lo: int, hi: int) -> int:
    (u,) = uniforms(*parts, count=1)
    return 60 * (lo + int(u * (hi - lo)))


def build_topology(config: dict) -> Topology:
    """Validate ``config`` and populate every border router's RIB."""
    seed = int(config.get("seed", 0))
    name = str(config.get("name", "topology"))

    ases = {}
    for i, a in enumerate(_get(config, "ases", "config")):
        where = f"ases[{i}]"
        asn = Asn(int(_get(a, "asn", where)))
        if asn in ases:
            raise ConfigError(f"{where}: duplicate {asn}")
        internal = _prefix(a["internal"], where) if "internal" in a else _default_internal(i, 4)
        try:
            role = AsRole(a.get("role", "stub"))
        except ValueError as exc:
            raise ConfigError(f"{where}: unknown role {a.get('role')!r}") from exc
        ases[asn] = AsInfo(asn, str(a.get("name", asn)), role, internal)
    pools = {asn: _Pool(info.internal) for asn, info in ases.items()}
    pools6 = {asn: _Pool(_default_internal(i, 6)) for i, asn in enumerate(ases)}

    def pool_for(asn: Asn, version: int) -> _Pool:
        return pools6[asn] if version == 6 and pools[asn].prefix.version == 4 else pools[asn]

    routers = {}
    for i, r in enumerate(_get(config, "routers", "config")):
        where = f"routers[{i}]"
        rname = str(_get(r, "name", where))
        asn = Asn(int(_get(r, "asn", where)))
        if asn not in ases:
            raise ConfigError(f"{where}: router {rname!r} references undeclared {asn}")
        if rname in routers:
            raise ConfigError(f"{where}: duplicate router {rname!r}")
        try:
            algo = Algorithm(r.get("algorithm", Algorithm.INCLUDE_PORTS.value))
        except ValueError as exc:
            raise ConfigError(f"{where}: unknown ECMP algorithm {r.get('algorithm')!r}") from exc
        policy = EcmpPolicy(algo, seed, int(r.get("salt", salt_for(rname))))
        rid = _ip(r["router_id"], where) if "router_id" in r else pool_for(asn, 4).take()
        ingress = [_ip(x, f"{where}.ingress") for x in r.get("ingress", [])]
        if not ingress:
            ingress = [pool_for(asn, 4).take()]
        max_paths = int(r.get("max_paths", 4))
        if max_paths < 1:
            raise ConfigError(f"{where}: max_paths must be positive")
        routers[rname] = Router(
            RouterId(rname, asn), rid, bool(r.get("ecmp", True)), max_paths, policy, ingress
        )

    delay = DelayModel.from_dict({**config.get("delay", {}), "seed": seed})
    links, link_names = [], {}
    for i, l in enumerate(_get(config, "links", "config")):
        where = f"links[{i}]"
        lname = str(l.get("name", f"link{i}"))
        ends = []
        for end in ("near_router", "far_router"):
            rn = _get(l, end, where)
            if rn not in routers:
                raise ConfigError(f"{where}: unknown {end} {rn!r}")
            ends.append(routers[rn].id)
        try:
            bl = BorderLink(
                _ip(_get(l, "near_ip", where), where),
                _ip(_get(l, "far_ip", where), where),
                ends[0],
                ends[1],
                l.get("bandwidth_gbps"),
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if lname in link_names:
            raise ConfigError(f"{where}: duplicate link name {lname!r}")
        links.append(bl)
        link_names[lname] = bl
        delay.register(bl, float(l.get("base_ms", 0.0)))

    try:
        ixps = IxpDirectory.from_records(config.get("ixps", []))
    except ValueError as exc:
        raise ConfigError(f"ixps: {exc}") from exc

    prefixes = {}
    for i, p in enumerate(config.get("prefixes", [])):
        where = f"prefixes[{i}]"
        pfx = _prefix(_get(p, "prefix", where), where)
        asn = Asn(int(_get(p, "asn", where)))
        if asn not in ases:
            raise ConfigError(f"{where}: prefix {pfx} originated by undeclared {asn}")
        if pfx in prefixes:
            raise ConfigError(f"{where}: duplicate prefix {pfx}")
        prefixes[pfx] = asn

    # planted case specs, keyed by (router, prefix)
    specs = {}
    for i, c in enumerate(config.get("cases", [])):
        where = f"cases[{i}]"
        rn = _get(c, "router", where)
        if rn not in routers:
            raise ConfigError(f"{where}: unknown router {rn!r}")
        pfx = _prefix(_get(c, "prefix", where), where)
        if pfx not in prefixes:
            raise ConfigError(f"{where}: prefix {pfx} is not declared")
        case_links = []
        for ln in _get(c, "links", where):
            if ln not in link_names:
                raise ConfigError(f"{where}: unknown link {ln!r}")
            bl = link_names[ln]
            if bl.near_router.name != rn:
                raise ConfigError(f"{where}: link {ln!r} does not start at {rn!r}")
            if bl.far_router.owner != prefixes[pfx]:
                raise ConfigError(f"{where}: link {ln!r} does not reach {prefixes[pfx]}")
            case_links.append(bl)
        try:
            kind = FarasKind(c.get("faras", FarasKind.PARALLEL.value))
            via = LearnedVia[str(c.get("learned_via", "ebgp")).upper()]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if (rn, pfx) in specs:
            raise ConfigError(f"{where}: second case for {rn} {pfx}")
        specs[(rn, pfx)] = (where, case_links, kind, via)

    # RIBs and sessions
    rib, learned, sessions = {}, {}, {}
    for rn in dict.fromkeys(l.near_router.name for l in links):
        r = routers[rn]
        own = [l for l in links if l.near_router.name == rn]
        by_neighbor: dict = {}
        for l in own:
            by_neighbor.setdefault(l.far_router.owner, []).append(l)
        seen_ips, sess = set(), []
        for l in own:
            if l.far_ip not in seen_ips:
                seen_ips.add(l.far_ip)
                up = _minutes("uptime", seed, rn, l.far_ip, lo=60, hi=60 * 24 * 400)
                sess.append(Session(l.far_ip, l.far_router.owner, "ESTAB", up))
        sessions[rn] = tuple(sess)
        table, routes_here = RoutingTable(), []
        for pfx, origin in prefixes.items():
            nlinks = by_neighbor.get(origin)
            if not nlinks:
                continue
            spec = specs.get((rn, pfx))
            in_case = {l.far_ip for l in spec[1]} if spec else set()
            via = spec[3] if spec else LearnedVia.EBGP
            routes, used = [], set()
            for k, l in enumerate(nlinks):
                if l.far_ip in used or l.far_ip.version != pfx.version:
                    continue
                used.add(l.far_ip)
                if spec:
                    med = 0 if l.far_ip in in_case else 100 + k
                else:
                    med = k
                routes.append(RouteEntry(
                    dst_prefix=pfx,
                    next_hop=l.far_ip,
                    local_pref=100,
                    as_path=(origin,),
                    origin=Origin.IGP,
                    med=med,
                    learned_via=via,
                    igp_metric=0,
                    peer_router_id=routers[l.far_router.name].router_id,
                    age_seconds=_minutes("age", seed, rn, pfx, lo=10, hi=60 * 24 * 200),
                ))
            if not routes:
                continue
            routes_here.extend(routes)
            table.install(select_multipath(routes, r.max_paths if r.ecmp else 1))
        rib[rn] = table
        learned[rn] = routes_here

    planted, patterns = [], {}
    for (rn, pfx), (where, case_links, kind, via) in specs.items():
        r = routers[rn]
        far_as = prefixes[pfx]
        cfg = RouterConfig(r.id, r.ecmp, r.max_paths,
                           [l for l in links if l.near_router.name == rn], learned.get(rn, []))
        check = check_bgpm_conditions(cfg, far_as, pfx)
        if not check.ok:
            raise ConfigError(f"{where}: condition {check.failed} violated: {check.reason}")
        group = rib[rn][pfx]
        far_ips = frozenset(l.far_ip for l in case_links)
        if set(group.next_hops) != far_ips:
            raise ConfigError(
                f"{where}: installed next hops {sorted(map(str, group.next_hops))} differ from "
                f"planted links (max_paths={r.max_paths})"
            )
        case = BgpmCase(r.id.owner, r.id, far_as, pfx, far_ips)
        planted.append(case)
        patterns[case.key] = make_pattern(kind, len(far_ips), pool_for(far_as, pfx.version))

    sources = {}
    for i, s in enumerate(config.get("sources", [])):
        where = f"sources[{i}]"
        ip = _ip(_get(s, "ip", where), where)
        rn = _get(s, "router", where)
        if rn not in routers:
            raise ConfigError(f"{where}: unknown router {rn!r}")
        r = routers[rn]
        ingress = _ip(s["ingress"], where) if "ingress" in s else r.ingress[0]
        if ingress not in r.ingress:
            raise ConfigError(f"{where}: {ingress} is not an ingress address of {rn}")
        if "intra_hops" in s:
            intra = tuple(_ip(h, where) for h in s["intra_hops"])
        else:
            pool = pool_for(r.id.owner, 4)
            intra = (pool.take(), pool.take())
        sources[ip] = Source(ip, rn, ingress, intra)

    unreachable = frozenset(_ip(x, "unreachable") for x in config.get("unreachable", []))

    dns = {}
    for r in routers.values():
        for ip in r.ingress:
            dns[ip] = r.name
    for l in links:
        dns.setdefault(l.near_ip, l.near_router.name)
        dns.setdefault(l.far_ip, l.far_router.name)

    return Topology(
        name=name,
        seed=seed,
        ases=ases,
        routers=routers,
        links=links,
        link_names=link_names,
        ixps=ixps,
        prefixes=prefixes,
        planted_cases=planted,
        faras_patterns=patterns,
        rib=rib,
        sessions=sessions,
        learned=learned,
        sources=sources,
        unreachable=unreachable,
        delay=delay,
        dns=dns,
        rr_state={rn: RoundRobinState() for rn in routers},
    )


def make_pattern(kind: FarasKind, n_links: int, pool) -> FarasPattern:
    """Allocate hop addresses from ``pool`` for a FarAS pattern of ``kind``."""
    take = pool.take
    if kind is FarasKind.SPLIT_PER_LINK:
        plan = tuple(((take(),), (take(),)) for _ in range(n_links))
    elif kind is FarasKind.PARALLEL:
        plan = tuple(((take(), take()),) for _ in range(n_links))
    elif kind is FarasKind.MERGE:
        common = (take(), take())
        plan = tuple(((take(),) + common,) for _ in range(n_links))
        # every link first crosses its own hop, then the shared tail
    elif kind is FarasKind.COMPLEX:
        a, b = take(), take()
        plan = ((( a,), (b,)),) + tuple(((take(), b),) for _ in range(n_links - 1))
    else:
        plan = tuple(((take(), None),) for _ in range(n_links))
    return FarasPattern(kind, plan)


def topology_from_file(path: Union[str, Path]) -> Topology:
    return build_topology(load_config(path))


__all__ = [
    "AsRole", "ConfigError", "FarasKind", "FarasPattern", "NOT_EXISTING", "Router",
    "RouterView", "Session", "Source", "Topology", "build_topology", "lg_snapshot",
    "load_config", "make_pattern", "ordered_links", "topology_from_file",
]
