"""Rendering and parsing of looking-glass responses.

Two commands are modelled, in the Cisco-style layout used by the HE looking
glass.  ``summary``::

    BGP4 Summary
      Router ID: 72.52.92.15   Local AS Number: 6939
      Number of Neighbors Configured: 2
      Neighbor Address                        AS#         State   Time
      198.32.181.46                           19752       ESTAB   40d3h2m

``routes`` (``show ip bgp routes detail <ip>``)::

    Number of BGP Routes matching display condition : 2
    Status A:AGGREGATE B:BEST b:NOT-INSTALLED-BEST C:CONFED_EBGP D:DAMPED
           E:EBGP H:HISTORY I:IBGP L:LOCAL M:MULTIPATH m:NOT-INSTALLED-MULTIPATH
           S:SUPPRESSED F:FILTERED s:STALE
    1       Prefix: 142.46.150.0/24,  Status: BME,  Age: 15d3h22m
             NEXT_HOP: 198.32.181.46, Metric: 0,  Learned from Peer: 142.46.1.1 (19752)
              LOCAL_PREF: 100,  MED: 0,  ORIGIN: igp,  Weight: 0
             AS_PATH: 19752

``Metric`` carries the IGP metric and ``MED`` the multi-exit discriminator.
Parsers are token based, so extra spacing and trailing blank lines are
accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .bgp import Flag, LearnedVia, Origin, RouteEntry, six_attributes
from .core import Asn, BgpmError, IpAddress, Prefix, parse_ip, parse_prefix

SUMMARY_TITLE = "BGP4 Summary"
SUMMARY_COLUMNS = "  Neighbor Address                        AS#         State   Time"
ROUTES_LEGEND = (
    "Status A:AGGREGATE B:BEST b:NOT-INSTALLED-BEST C:CONFED_EBGP D:DAMPED\n"
    "       E:EBGP H:HISTORY I:IBGP L:LOCAL M:MULTIPATH m:NOT-INSTALLED-MULTIPATH\n"
    "       S:SUPPRESSED F:FILTERED s:STALE"
)
NO_ROUTES = "% No routes for {ip}"
NOT_EXISTING_TEXT = "% Router {name} Not existing"
FIXTURE_HEADER = "# lg-fixture v1 {router} {command} {arg}"
METRIC_FIELD = "igp_metric"


class LgParseError(BgpmError, ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# ------------------------------------------------------------------ durations


def render_duration(seconds: int) -> str:
    """``DdHhMm`` text; seconds below a minute are dropped."""
    minutes = seconds // 60
    d, rem = divmod(minutes, 24 * 60)
    h, m = divmod(rem, 60)
    return f"{d}d{h}h{m}m"


_DURATION = re.compile(r"^(?:(\d+)d)?(?:(\d+)h)?(?:(\d+)m)?(?:(\d+)s)?$")


def parse_duration(text: str) -> int:
    m = _DURATION.match(text.strip())
    if not m or not any(m.groups()):
        raise ValueError(f"bad duration {text!r}")
    d, h, mi, s = (int(g) if g else 0 for g in m.groups())
    return ((d * 24 + h) * 60 + mi) * 60 + s


# -------------------------------------------------------------------- summary


@dataclass(frozen=True)
class SummaryRow:
    neighbor_ip: IpAddress
    neighbor_as: Asn
    state: str
    uptime: int  # seconds


@dataclass(frozen=True)
class SummaryTable:
    router_id: IpAddress
    local_as: Asn
    rows: tuple


def render_summary(view) -> str:
    """Neighbor table of a router view (or a parsed ``SummaryTable``)."""
    if isinstance(view, SummaryTable):
        router_id, local_as, rows = view.router_id, view.local_as, view.rows
    else:
        router_id, local_as = view.router_id, view.local_as
        rows = [SummaryRow(s.neighbor_ip, s.neighbor_as, s.state, s.uptime_seconds)
                for s in view.sessions]
    lines = [
        SUMMARY_TITLE,
        f"  Router ID: {router_id}   Local AS Number: {local_as.number}",
        f"  Number of Neighbors Configured: {len(rows)}",
        SUMMARY_COLUMNS,
    ]
    for r in rows:
        lines.append(
            f"  {str(r.neighbor_ip):<39} {r.neighbor_as.number:<11} {r.state:<7} "
            f"{render_duration(r.uptime)}"
        )
    return "\n".join(lines) + "\n"


_ROUTER_ID = re.compile(r"Router ID:\s*(\S+)\s+Local AS Number:\s*(\d+)")


def parse_summary_table(text: str) -> SummaryTable:
    lines = text.splitlines()
    router_id = local_as = None
    rows, in_rows = [], False
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        m = _ROUTER_ID.search(line)
        if m:
            try:
                router_id, local_as = parse_ip(m.group(1)), Asn(int(m.group(2)))
            except ValueError as exc:
                raise LgParseError(no, str(exc)) from exc
            continue
        if line.startswith("Neighbor Address"):
            in_rows = True
            continue
        if not in_rows:
            continue
        tokens = line.split()
        if len(tokens) != 4:
            raise LgParseError(no, f"expected 4 columns, found {len(tokens)}")
        try:
            rows.append(SummaryRow(parse_ip(tokens[0]), Asn(int(tokens[1])), tokens[2],
                                   parse_duration(tokens[3])))
        except ValueError as exc:
            raise LgParseError(no, f"bad summary row: {exc}") from exc
    if router_id is None:
        raise LgParseError(1, "missing Router ID line")
    return SummaryTable(router_id, local_as, tuple(rows))


def parse_summary(text: str) -> list[SummaryRow]:
    return list(parse_summary_table(text).rows)


def multi_session_neighbors(rows: list[SummaryRow]) -> list[Asn]:
    """Neighbor ASes reachable over two or more session addresses, in table order."""
    seen: dict = {}
    for r in rows:
        seen.setdefault(r.neighbor_as, set()).add(r.neighbor_ip)
    return [asn for asn, ips in seen.items() if len(ips) >= 2]


# --------------------------------------------------------------------- routes


@dataclass(frozen=True)
class ParsedRoute:
    route: RouteEntry
    raw_flags: str
    neighbor_as: Optional[Asn] = None
    metric_field: str = METRIC_FIELD

    @property
    def last_update_age(self) -> int:
        return self.route.age_seconds

    def has(self, flag: Flag) -> bool:
        return flag.value in self.raw_flags


def _render_block(index: int, r: RouteEntry) -> list[str]:
    peer = f"{r.peer_router_id}"
    if r.as_path:
        peer += f" ({r.as_path[0].number})"
    path = " ".join(str(a.number) for a in r.as_path)
    return [
        f"{index:<8}Prefix: {r.dst_prefix},  Status: {r.status},  Age: {render_duration(r.age_seconds)}",
        f"         NEXT_HOP: {r.next_hop}, Metric: {r.igp_metric},  Learned from Peer: {peer}",
        f"          LOCAL_PREF: {r.local_pref},  MED: {r.med},  ORIGIN: {r.origin.name.lower()},  Weight: 0",
        f"         AS_PATH: {path}".rstrip(),
    ]


def render_route_list(routes: list[RouteEntry], dst: IpAddress) -> str:
    if not routes:
        return NO_ROUTES.format(ip=dst) + "\n"
    lines = [f"Number of BGP Routes matching display condition : {len(routes)}", ROUTES_LEGEND]
    for i, r in enumerate(routes, start=1):
        lines.extend(_render_block(i, r))
    return "\n".join(lines) + "\n"


def render_routes_detail(view, dst: IpAddress) -> str:
    """Installed paths covering ``dst`` at the viewed router."""
    group = view.table.lookup(dst)
    return render_route_list(list(group.members) if group else [], dst)


def render_not_existing(router_name: str) -> str:
    return NOT_EXISTING_TEXT.format(name=router_name) + "\n"


def is_not_existing(text: str) -> bool:
    return "Not existing" in text and text.lstrip().startswith("%")


def is_no_routes(text: str) -> bool:
    return text.lstrip().startswith("% No routes")


_BLOCK = re.compile(r"^(\d+)\s+Prefix:\s*(\S+?),\s*Status:\s*(\S*?),\s*Age:\s*(\S+)$")
_NEXT_HOP = re.compile(r"^NEXT_HOP:\s*(\S+?),\s*Metric:\s*(\d+),\s*Learned from Peer:\s*(\S+)(?:\s*\((\d+)\))?$")
_ATTRS = re.compile(r"^LOCAL_PREF:\s*(\d+),\s*MED:\s*(\d+),\s*ORIGIN:\s*(\w+),\s*Weight:\s*(\d+)$")
_AS_PATH = re.compile(r"^AS_PATH:(.*)$")
_KNOWN_FLAGS = {f.value for f in Flag}


def parse_routes_detail(text: str) -> list[ParsedRoute]:
    if is_no_routes(text):
        return []
    if is_not_existing(text):
        raise LgParseError(1, "router does not exist")
    blocks: list[dict] = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _BLOCK.match(line)
        if m:
            blocks.append({"no": no, "prefix": m.group(2), "status": m.group(3), "age": m.group(4)})
            continue
        if not blocks:
            continue  # preamble and legend
        cur = blocks[-1]
        if m := _NEXT_HOP.match(line):
            cur.update(next_hop=m.group(1), metric=m.group(2), peer=m.group(3), peer_as=m.group(4))
        elif m := _ATTRS.match(line):
            cur.update(local_pref=m.group(1), med=m.group(2), origin=m.group(3))
        elif m := _AS_PATH.match(line):
            cur["as_path"] = m.group(1).split()
        else:
            raise LgParseError(no, f"unrecognised line {line!r}")

    out = []
    for b in blocks:
        no = b["no"]
        unknown = set(b["status"]) - _KNOWN_FLAGS
        if unknown:
            raise LgParseError(no, f"unknown status flag(s) {''.join(sorted(unknown))!r}")
        if "next_hop" not in b:
            raise LgParseError(no, "path without NEXT_HOP")
        for key in ("local_pref", "as_path"):
            if key not in b:
                raise LgParseError(no, f"path without {key.upper()}")
        try:
            via = LearnedVia.IBGP if "I" in b["status"] else LearnedVia.EBGP
            if "E" not in b["status"] and "I" not in b["status"]:
                via = LearnedVia.IBGP
            flags = frozenset(Flag(c) for c in b["status"])
            route = RouteEntry(
                dst_prefix=parse_prefix(b["prefix"]),
                next_hop=parse_ip(b["next_hop"]),
                local_pref=int(b["local_pref"]),
                as_path=tuple(Asn(int(a)) for a in b["as_path"]),
                origin=Origin[b["origin"].upper()],
                med=int(b["med"]),
                learned_via=via,
                igp_metric=int(b["metric"]),
                peer_router_id=parse_ip(b["peer"]),
                age_seconds=parse_duration(b["age"]),
                flags=flags,
            )
        except (ValueError, KeyError) as exc:
            raise LgParseError(no, f"bad path attributes: {exc}") from exc
        peer_as = Asn(int(b["peer_as"])) if b.get("peer_as") else None
        out.append(ParsedRoute(route, b["status"], peer_as))
    return out


# ------------------------------------------------------------------- evidence


@dataclass(frozen=True)
class BgpmEvidence:
    dst_prefix: Optional[Prefix]
    far_as: Optional[Asn]
    next_hops: frozenset = field(default_factory=frozenset)
    attributes_equal: bool = False

    @property
    def positive(self) -> bool:
        return self.attributes_equal and len(self.next_hops) >= 2


def inspect_multipath(routes: list[ParsedRoute]) -> BgpmEvidence:
    """Collect the M+E paths and report whether they amount to BGP-M."""
    mp = [p for p in routes if p.has(Flag.MULTIPATH) and p.has(Flag.EBGP)]
    if not mp:
        return BgpmEvidence(None, None)
    hops = frozenset(p.route.next_hop for p in mp)
    first = mp[0].route
    equal = (
        len(hops) == len(mp)
        and all(six_attributes(p.route) == six_attributes(first) for p in mp)
        and all(p.route.dst_prefix == first.dst_prefix for p in mp)
    )
    return BgpmEvidence(first.dst_prefix, first.neighbor_as, hops, equal)


def detect_multipath(routes: list[ParsedRoute]) -> Optional[BgpmEvidence]:
    ev = inspect_multipath(routes)
    return ev if ev.positive else None


# ------------------------------------------------------------------- fixtures


def render_fixture(router: str, command: str, arg: str, body: str) -> str:
    return FIXTURE_HEADER.format(router=router, command=command, arg=arg) + "\n" + body


def parse_fixture(text: str) -> tuple[str, str, str, str]:
    """Split a ``.lg`` file into (router, command, arg, body)."""
    header, _, body = text.partition("\n")
    parts = header.split()
    if len(parts) != 6 or parts[:3] != ["#", "lg-fixture", "v1"]:
        raise LgParseError(1, f"bad fixture header {header!r}")
    return parts[3], parts[4], parts[5], body


def read_fixture(path: Union[str, Path]) -> tuple[str, str, str, str]:
    return parse_fixture(Path(path).read_text())
