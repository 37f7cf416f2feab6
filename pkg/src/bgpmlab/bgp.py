"""BGP routes, best-path comparison and multipath group selection."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional

from .core import Asn, BgpmError, BorderLink, IpAddress, Prefix, RouterId


class Origin(enum.IntEnum):
    IGP = 0
    EGP = 1
    INCOMPLETE = 2


class LearnedVia(enum.IntEnum):
    # eBGP is preferred, so it sorts first
    EBGP = 0
    IBGP = 1


class Flag(str, enum.Enum):
    """Status codes of a looking-glass route listing."""

    AGGREGATE = "A"
    BEST = "B"
    NOT_INSTALLED_BEST = "b"
    CONFED_EBGP = "C"
    DAMPED = "D"
    EBGP = "E"
    HISTORY = "H"
    IBGP = "I"
    LOCAL = "L"
    MULTIPATH = "M"
    NOT_INSTALLED_MULTIPATH = "m"
    SUPPRESSED = "S"
    FILTERED = "F"
    STALE = "s"


# Rendering order of status characters.
STATUS_ORDER = "BbMmEICADHLSFs"


class RouteError(BgpmError):
    pass


@dataclass(frozen=True)
class RouteEntry:
    dst_prefix: Prefix
    next_hop: IpAddress
    local_pref: int
    as_path: tuple
    origin: Origin
    med: int
    learned_via: LearnedVia
    igp_metric: int
    peer_router_id: IpAddress
    age_seconds: int = 0
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "as_path", tuple(self.as_path))
        object.__setattr__(self, "origin", Origin(self.origin))
        object.__setattr__(self, "learned_via", LearnedVia(self.learned_via))
        if self.learned_via is LearnedVia.EBGP and not self.as_path:
            raise RouteError("eBGP route with empty AS path")
        if self.age_seconds < 0:
            raise RouteError("negative route age")
        # The E/I status characters always mirror how the route was learned.
        flags = {Flag(f) for f in self.flags} - {Flag.EBGP, Flag.IBGP}
        flags.add(Flag.EBGP if self.learned_via is LearnedVia.EBGP else Flag.IBGP)
        object.__setattr__(self, "flags", frozenset(flags))

    @property
    def neighbor_as(self) -> Optional[Asn]:
        return self.as_path[0] if self.as_path else None

    @property
    def status(self) -> str:
        chars = {f.value for f in self.flags}
        return "".join(c for c in STATUS_ORDER if c in chars)

    def with_flags(self, *extra: Flag) -> "RouteEntry":
        return replace(self, flags=self.flags | set(extra))


def six_attributes(route: RouteEntry) -> tuple:
    """The attributes a multipath member must share with the best path."""
    return (
        route.local_pref,
        route.as_path,
        route.origin,
        route.med,
        route.learned_via,
        route.igp_metric,
    )


def equal_on_six(a: RouteEntry, b: RouteEntry) -> bool:
    return six_attributes(a) == six_attributes(b)


def preference_key(route: RouteEntry) -> tuple:
    """Sort key; smaller is better. Mirrors the seven selection rules in order."""
    return (
        -route.local_pref,
        len(route.as_path),
        route.origin,
        route.med,
        route.learned_via,
        route.igp_metric,
        int(route.peer_router_id),
    )


class Comparison(NamedTuple):
    winner: int  # -1: a better, 1: b better, 0: tie
    rule: Optional[int]  # 1-based rule that decided, None for a full tie


def compare_routes(a: RouteEntry, b: RouteEntry) -> Comparison:
    """Compare two routes for the same prefix rule by rule."""
    if a.dst_prefix != b.dst_prefix:
        raise RouteError(f"cannot compare routes for {a.dst_prefix} and {b.dst_prefix}")
    for rule, (x, y) in enumerate(zip(preference_key(a), preference_key(b)), start=1):
        if x != y:
            return Comparison(-1 if x < y else 1, rule)
    return Comparison(0, None)


@dataclass(frozen=True)
class MultipathGroup:
    """Routes installed for one prefix; ``members[0]`` is the best path."""

    best: RouteEntry
    members: tuple

    @property
    def dst_prefix(self) -> Prefix:
        return self.best.dst_prefix

    @property
    def next_hops(self) -> tuple:
        return tuple(r.next_hop for r in self.members)

    @property
    def is_multipath(self) -> bool:
        return len(self.members) >= 2


def select_multipath(routes: Iterable[RouteEntry], max_paths: int) -> MultipathGroup:
    """Pick the best route and every route tying it on the first six rules.

    Ties are admitted only with distinct next hops and are truncated to
    ``max_paths`` keeping the lowest peer router IDs.
    """
    routes = list(routes)
    if not routes:
        raise RouteError("no routes to select from")
    if max_paths < 1:
        raise RouteError("max_paths must be positive")
    prefixes = {r.dst_prefix for r in routes}
    if len(prefixes) != 1:
        raise RouteError(f"routes span several prefixes: {sorted(map(str, prefixes))}")

    def order(r):
        return (preference_key(r), int(r.next_hop))

    best = min(routes, key=order)
    members, seen = [], set()
    for r in sorted(routes, key=order):
        if equal_on_six(r, best) and r.next_hop not in seen:
            seen.add(r.next_hop)
            members.append(r)
    members = members[:max_paths]

    clean = [replace(r, flags=r.flags - {Flag.BEST, Flag.MULTIPATH}) for r in members]
    if len(clean) >= 2:
        clean = [r.with_flags(Flag.MULTIPATH) for r in clean]
    clean[0] = clean[0].with_flags(Flag.BEST)
    return MultipathGroup(best=clean[0], members=tuple(clean))


class RoutingTable:
    """Installed multipath groups, one per prefix."""

    def __init__(self, groups: Iterable[MultipathGroup] = ()):
        self._groups: dict = {}
        for g in groups:
            self.install(g)

    def install(self, group: MultipathGroup) -> "RoutingTable":
        self._groups[group.dst_prefix] = group
        return self

    def __len__(self) -> int:
        return len(self._groups)

    def __contains__(self, prefix) -> bool:
        return prefix in self._groups

    def __getitem__(self, prefix: Prefix) -> MultipathGroup:
        return self._groups[prefix]

    def __iter__(self):
        return iter(self._groups.values())

    def prefixes(self) -> list:
        return list(self._groups)

    def lookup(self, ip: IpAddress) -> Optional[MultipathGroup]:
        """Longest-prefix match."""
        best = None
        for prefix, group in self._groups.items():
            if prefix.version == ip.version and ip in prefix:
                if best is None or prefix.prefixlen > best.dst_prefix.prefixlen:
                    best = group
        return best

    def copy(self) -> "RoutingTable":
        return RoutingTable(self._groups.values())


def install(table: RoutingTable, group: MultipathGroup) -> RoutingTable:
    return table.install(group)


@dataclass
class RouterConfig:
    """What a border router knows when deciding whether BGP-M can apply."""

    router: RouterId
    ecmp: bool
    max_paths: int
    links: list
    learned: list

    def links_to(self, neighbor: Asn) -> list[BorderLink]:
        return [l for l in self.links if l.far_router.owner == neighbor]


class ConditionCheck(NamedTuple):
    ok: bool
    failed: Optional[int]
    reason: str


class UnknownNeighbor(BgpmError, KeyError):
    pass


def check_bgpm_conditions(config: RouterConfig, neighbor: Asn, prefix: Prefix) -> ConditionCheck:
    """Evaluate the four deployment conditions in order; report the first failure."""
    links = config.links_to(neighbor)
    if not links:
        raise UnknownNeighbor(f"{config.router} has no links to {neighbor}")
    if not config.ecmp:
        return ConditionCheck(False, 1, "ECMP not supported")
    far_ips = {l.far_ip for l in links}
    if len(far_ips) < 2:
        return ConditionCheck(False, 2, f"only one border link to {neighbor}")
    learned = [
        r for r in config.learned if r.dst_prefix == prefix and r.next_hop in far_ips
    ]
    if len({r.next_hop for r in learned}) < 2:
        return ConditionCheck(False, 3, f"fewer than two routes to {prefix} via distinct links")
    group = select_multipath(learned, max_paths=len(learned))
    if not group.is_multipath:
        return ConditionCheck(False, 4, "routes differ on the first six attributes")
    return ConditionCheck(True, None, "all conditions hold")
