"""Traceroute-side analysis of known BGP-M cases.

Path validation against a case, routing maps, load-balancer and FarAS
pattern classification, link delays and their order statistics.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Union

import numpy as np

from .core import BgpmCase, BgpmError, IpAddress, RouterId, parse_ip
from .sim.traceroute import TraceRecord

COVERAGE_THRESHOLD = 250

NameOracle = Union[Mapping, Callable[[IpAddress], Optional[str]]]


class Rejection(str, enum.Enum):
    NO_FAR_IP = "NoFarIp"
    WRONG_NEAR_BR = "WrongNearBr"
    UNRESOLVABLE_PREDECESSOR = "UnresolvablePredecessor"


@dataclass(frozen=True)
class ValidatedPath:
    trace: TraceRecord
    matched_far_ip: IpAddress
    near_ip: IpAddress
    near_br: RouterId
    case: Optional[BgpmCase] = None

    @property
    def far_index(self) -> int:
        return self.trace.ips.index(self.matched_far_ip)

    @property
    def downstream(self) -> tuple:
        """Hops after the far IP, without the destination's own reply."""
        hops = self.trace.ips[self.far_index + 1:]
        if hops and hops[-1] == self.trace.probe.dst:
            hops = hops[:-1]
        return tuple(hops)


def _resolve(dns: NameOracle, ip: IpAddress) -> Optional[str]:
    if callable(dns):
        return dns(ip)
    return dns.get(ip)


def validate_path(
    trace: TraceRecord, case: BgpmCase, dns: NameOracle
) -> Union[ValidatedPath, Rejection]:
    """Keep a trace only if it crosses a case far IP right after the case's NearBR."""
    ips = trace.ips
    idx = next((i for i, ip in enumerate(ips) if ip is not None and ip in case.far_ips), None)
    if idx is None:
        return Rejection.NO_FAR_IP
    pred = ips[idx - 1] if idx > 0 else None
    name = _resolve(dns, pred) if pred is not None else None
    if name is None:
        return Rejection.UNRESOLVABLE_PREDECESSOR
    if name != case.near_br.name:
        return Rejection.WRONG_NEAR_BR
    return ValidatedPath(trace, ips[idx], pred, case.near_br, case)


def read_dns(fh) -> dict:
    """``ip,name`` CSV rows into a lookup table."""
    return {parse_ip(row["ip"]): row["name"] for row in csv.DictReader(fh)}


# --------------------------------------------------------------- routing maps


@dataclass
class RoutingMap:
    case: BgpmCase
    time: Optional[int]
    assignment: dict = field(default_factory=dict)  # dst -> far ip
    downstream: dict = field(default_factory=dict)  # dst -> hop tuple
    conflicts: list = field(default_factory=list)

    def link_vector(self, dsts: Iterable) -> list[int]:
        links = self.case.links
        return [links.index(self.assignment[d]) for d in dsts]

    def counts(self) -> dict:
        return Counter(self.assignment.values())

    def __len__(self) -> int:
        return len(self.assignment)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dst_ip", "link_index", "far_ip", "downstream"])
        links = self.case.links
        for dst in sorted(self.assignment, key=int):
            far = self.assignment[dst]
            hops = " ".join("*" if h is None else str(h) for h in self.downstream.get(dst, ()))
            w.writerow([dst, links.index(far), far, hops])
        return buf.getvalue()


class MapError(BgpmError, ValueError):
    pass


def build_routing_map(validated: Iterable[ValidatedPath], case: Optional[BgpmCase] = None) -> RoutingMap:
    """dst -> far IP over one case and measurement time; later traces win duplicates."""
    validated = sorted(validated, key=lambda v: v.trace.probe.time)
    if case is None and validated:
        case = validated[0].case
    if any(v.case is not None and v.case != case for v in validated):
        raise MapError("paths belong to different cases")
    times = {v.trace.probe.time for v in validated}
    if len(times) > 1:
        raise MapError(f"paths span {len(times)} measurement times")
    rmap = RoutingMap(case, times.pop() if times else None)
    for v in validated:
        dst = v.trace.probe.dst
        if dst in rmap.assignment:
            rmap.conflicts.append(dst)
        rmap.assignment[dst] = v.matched_far_ip
        rmap.downstream[dst] = v.downstream
    return rmap


class AllocationKind(str, enum.Enum):
    PER_SESSION_UNIVERSAL = "PerSessionUniversal"
    PER_FLOW_INCLUDE_PORTS = "PerFlowIncludePorts"
    ROUND_ROBIN_LIKE = "RoundRobinLike"
    UNKNOWN = "Unknown"


def _blocks_of_four(dsts: list, vec: list[int]) -> bool:
    """Destinations in each aligned run of four share a link; neighbouring runs alternate."""
    blocks: dict = {}
    for d, v in zip(dsts, vec):
        blocks.setdefault(int(d) >> 2, set()).add(v)
    if any(len(s) != 1 for s in blocks.values()):
        return False
    keys = sorted(blocks)
    seq = [next(iter(blocks[k])) for k in keys]
    return all(
        a != b for k1, k2, a, b in zip(keys, keys[1:], seq, seq[1:]) if k2 == k1 + 1
    )


def _alternates(vec: list[int]) -> bool:
    return len(vec) >= 4 and all(a != b for a, b in zip(vec, vec[1:]))


def _balanced(vec: list[int], n_links: int) -> bool:
    """Every link within three binomial standard deviations of an even share."""
    n = len(vec)
    p = 1.0 / n_links
    tol = 3 * math.sqrt(n * p * (1 - p))
    counts = Counter(vec)
    return all(abs(counts.get(i, 0) - n * p) <= tol for i in range(n_links))


def classify_allocation(
    maps: list[RoutingMap], other_source: Optional[list[RoutingMap]] = None
) -> AllocationKind:
    """Infer the NearBR's ECMP behaviour from maps at two or more times.

    ``other_source`` holds maps from a second probe source, if any.
    """
    if not maps:
        return AllocationKind.UNKNOWN
    all_maps = maps + list(other_source or [])
    used = set().union(*(set(m.assignment.values()) for m in all_maps))
    n_links = len(maps[0].case.far_ips)
    if len(used) < 2 or n_links < 2:
        return AllocationKind.UNKNOWN
    common = set(maps[0].assignment)
    for m in all_maps[1:]:
        common &= set(m.assignment)
    dsts = sorted(common, key=int)
    if len(dsts) < 8:
        return AllocationKind.UNKNOWN
    vecs = [m.link_vector(dsts) for m in maps]

    if all(_alternates(v) for v in vecs):
        return AllocationKind.ROUND_ROBIN_LIKE
    stable = all(v == vecs[0] for v in vecs[1:])
    if stable and len(maps) >= 2:
        if n_links != 2 or not _blocks_of_four(dsts, vecs[0]):
            return AllocationKind.UNKNOWN
        for m in other_source or []:
            v = m.link_vector(dsts)
            if v != vecs[0] and v != [1 - x for x in vecs[0]]:
                return AllocationKind.UNKNOWN
        return AllocationKind.PER_SESSION_UNIVERSAL
    if not stable and all(_balanced(v, n_links) for v in vecs):
        return AllocationKind.PER_FLOW_INCLUDE_PORTS
    return AllocationKind.UNKNOWN


class FarasCategory(str, enum.Enum):
    SPLIT_PER_LINK = "SplitPerLink"
    PARALLEL = "Parallel"
    MERGE = "Merge"
    COMPLEX = "Complex"
    UNRESPONSIVE = "Unresponsive"


def classify_faras(rmap: RoutingMap) -> FarasCategory:
    """Categorise routing inside the FarAS from downstream hops per border link."""
    per_link: dict = defaultdict(set)
    for dst, far in rmap.assignment.items():
        per_link[far].add(tuple(rmap.downstream.get(dst, ())))
    paths = [p for ps in per_link.values() for p in ps]
    if any(h is None for p in paths for h in p):
        return FarasCategory.UNRESPONSIVE
    if len(per_link) >= 2 and all(len(ps) >= 2 for ps in per_link.values()):
        return FarasCategory.SPLIT_PER_LINK
    if paths and all(paths):
        common = set(paths[0]).intersection(*paths[1:])
        if common and len(per_link) >= 2:
            return FarasCategory.MERGE
    hop_sets = [set().union(*ps) for ps in per_link.values()]
    disjoint = all(
        not (a & b) for i, a in enumerate(hop_sets) for b in hop_sets[i + 1:]
    )
    if len(per_link) >= 2 and disjoint:
        return FarasCategory.PARALLEL
    return FarasCategory.COMPLEX


# --------------------------------------------------------------------- delays


class LinkDelay(NamedTuple):
    ms: float
    clamped: bool


class DelayError(BgpmError, ValueError):
    pass


def link_delay(vp: ValidatedPath) -> LinkDelay:
    """Min far-IP RTT minus min near-IP RTT, clamped at zero."""
    hops = vp.trace.hops
    far = hops[vp.far_index]
    near = hops[vp.far_index - 1]
    if not far.rtts or not near.rtts:
        raise DelayError(f"missing RTT samples on {vp.trace.probe.dst} trace")
    d = min(far.rtts) - min(near.rtts)
    if d < 0:
        return LinkDelay(0.0, True)
    return LinkDelay(d, False)


@dataclass(frozen=True)
class DelaySample:
    far_ip: IpAddress
    time: int
    dst: IpAddress
    ms: float
    clamped: bool = False


@dataclass
class DelaySeries:
    samples: list = field(default_factory=list)

    def add(self, vp: ValidatedPath) -> Optional[DelaySample]:
        try:
            d = link_delay(vp)
        except DelayError:
            return None
        s = DelaySample(vp.matched_far_ip, vp.trace.probe.time, vp.trace.probe.dst, d.ms, d.clamped)
        self.samples.append(s)
        return s

    def __len__(self) -> int:
        return len(self.samples)

    def values(self, far_ip: Optional[IpAddress] = None) -> np.ndarray:
        return np.array([s.ms for s in self.samples if far_ip is None or s.far_ip == far_ip])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["far_ip", "time", "dst_ip", "delay_ms", "clamped"])
        for s in self.samples:
            w.writerow([s.far_ip, s.time, s.dst, repr(s.ms), int(s.clamped)])
        return buf.getvalue()


class GroupStats(NamedTuple):
    median: float
    p25: float
    p75: float
    count: int


def delay_stats(series: DelaySeries, group_by: str) -> dict:
    """Median and quartiles per (far IP, time) or (far IP, dst)."""
    if group_by not in ("time", "dst"):
        raise ValueError("group_by must be 'time' or 'dst'")
    if not series.samples:
        raise DelayError("empty delay series")
    groups: dict = defaultdict(list)
    for s in series.samples:
        groups[(s.far_ip, getattr(s, group_by))].append(s.ms)
    out = {}
    for key in sorted(groups, key=lambda k: (int(k[0]), int(k[1]))):
        vals = np.asarray(groups[key])
        p25, med, p75 = np.percentile(vals, [25, 50, 75])
        out[key] = GroupStats(float(med), float(p25), float(p75), len(vals))
    return out


def stats_to_csv(stats: Mapping, group_by: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["far_ip", group_by, "median_ms", "p25_ms", "p75_ms", "count"])
    for (far, key), g in stats.items():
        w.writerow([far, key, f"{g.median:.6f}", f"{g.p25:.6f}", f"{g.p75:.6f}", g.count])
    return buf.getvalue()


# ------------------------------------------------------------------- coverage


@dataclass(frozen=True)
class CoverageReport:
    case: BgpmCase
    time: Optional[int]
    reachable: int

    @property
    def passed(self) -> bool:
        return self.reachable >= COVERAGE_THRESHOLD


def coverage_check(validated: Iterable[ValidatedPath], case: BgpmCase,
                   time: Optional[int] = None) -> CoverageReport:
    dsts = {v.trace.probe.dst for v in validated}
    return CoverageReport(case, time, len(dsts))
