"""Paris-traceroute emulation over a built topology, and the trace JSON format.

Each record is one JSON object per line::

    {"timestamp": 1623772800, "src": "209.51.186.5", "dst": "160.18.2.9",
     "proto": "ICMP", "paris_id": 16,
     "hops": [{"ttl": 1, "ip": "100.64.0.3", "rtts": [0.9, 1.1, 0.8]}, ...]}

Silent hops carry ``"ip": null`` and an empty ``rtts`` list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from ..core import BgpmError, IpAddress, enumerate_probe_targets, ordered_links, parse_ip
from ..ecmp import Protocol, flow_key, select_link
from .delay import DelayModel, packet_jitter, sample_link_delay, uniforms
from .topology import Topology

TICK_SECONDS = 15 * 60
# 2021-06-16 00:00 in Hong Kong
DEFAULT_START = 1623772800
TRAILING_SILENT_HOPS = 3


@dataclass(frozen=True)
class ProbeSpec:
    src: IpAddress
    dst: IpAddress
    protocol: Protocol = Protocol.ICMP
    time: int = DEFAULT_START
    packets_per_hop: int = 3
    paris_variation: int = 16

    def __post_init__(self):
        if self.packets_per_hop < 1:
            raise ValueError("packets_per_hop must be at least 1")
        object.__setattr__(self, "protocol", Protocol(self.protocol))


@dataclass(frozen=True)
class Hop:
    ttl: int
    ip: Optional[IpAddress]
    rtts: tuple = ()


@dataclass(frozen=True)
class TraceRecord:
    probe: ProbeSpec
    hops: tuple

    def __post_init__(self):
        ttls = [h.ttl for h in self.hops]
        if any(b <= a for a, b in zip(ttls, ttls[1:])):
            raise ValueError("hop TTLs must strictly increase")
        if any(r < 0 for h in self.hops for r in h.rtts):
            raise ValueError("negative RTT")

    @property
    def ips(self) -> list:
        return [h.ip for h in self.hops]

    def to_json(self) -> str:
        p = self.probe
        return json.dumps({
            "timestamp": p.time,
            "src": str(p.src),
            "dst": str(p.dst),
            "proto": p.protocol.value,
            "paris_id": p.paris_variation,
            "hops": [
                {"ttl": h.ttl, "ip": None if h.ip is None else str(h.ip), "rtts": list(h.rtts)}
                for h in self.hops
            ],
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TraceRecord":
        d = json.loads(line)
        hops = tuple(
            Hop(h["ttl"], None if h["ip"] is None else parse_ip(h["ip"]), tuple(h["rtts"]))
            for h in d["hops"]
        )
        packets = max((len(h.rtts) for h in hops), default=3) or 3
        probe = ProbeSpec(parse_ip(d["src"]), parse_ip(d["dst"]), Protocol(d["proto"]),
                          int(d["timestamp"]), packets, int(d.get("paris_id", 16)))
        return cls(probe, hops)


class UnknownSource(BgpmError, KeyError):
    pass


def tick_time(tick: int, start: int = DEFAULT_START, interval: int = TICK_SECONDS) -> int:
    return start + tick * interval


def _branch(topo: Topology, branches: tuple, link_index: int, dst: IpAddress) -> tuple:
    if len(branches) == 1:
        return branches[0]
    (u,) = uniforms("farbranch", topo.seed, link_index, dst, count=1)
    return branches[int(u * len(branches))]


def chosen_far_ip(topo: Topology, probe: ProbeSpec) -> Optional[IpAddress]:
    """Far IP the source's border router sends this probe's flow to."""
    src = topo.sources.get(probe.src)
    if src is None:
        raise UnknownSource(f"{probe.src} is not a configured probe source")
    if probe.dst in topo.unreachable:
        return None
    group = topo.rib.get(src.router)
    group = group.lookup(probe.dst) if group is not None else None
    if group is None:
        return None
    links = ordered_links(group.next_hops)
    router = topo.routers[src.router]
    key = flow_key(probe.src, probe.dst, probe.protocol, topo.seed, probe.time)
    return links[select_link(key, len(links), router.policy, topo.rr_state[src.router])]


def run_traceroute(
    topo: Topology, probe: ProbeSpec, delays: Optional[DelayModel] = None
) -> TraceRecord:
    """One Paris traceroute: a single flow key, hence one path for every TTL."""
    delays = delays or topo.delay
    src = topo.sources.get(probe.src)
    if src is None:
        raise UnknownSource(f"{probe.src} is not a configured probe source")
    nonce = (probe.src, probe.dst, probe.protocol.value, probe.time)
    jitter = packet_jitter(delays, nonce, probe.packets_per_hop)

    path: list = []  # (ip or None, cumulative one-way-equivalent ms)
    cum = 0.0
    for ip in src.intra_hops + (src.ingress,):
        cum += delays.hop_ms
        path.append((ip, cum))

    far_ip = chosen_far_ip(topo, probe)
    if far_ip is None:
        path.extend((None, None) for _ in range(TRAILING_SILENT_HOPS))
    else:
        link = topo.link(src.router, far_ip)
        cum += sample_link_delay(delays, link, probe.time, nonce=(probe.dst, probe.protocol.value))
        path.append((far_ip, cum))
        group = topo.rib[src.router].lookup(probe.dst)
        case = topo.case_for(src.router, group.dst_prefix)
        if case is not None:
            idx = case.links.index(far_ip)
            plan = topo.faras_patterns[case.key].internal_hop_plan[idx]
            for ip in _branch(topo, plan, idx, probe.dst):
                if ip is None:
                    path.append((None, None))
                else:
                    cum += delays.hop_ms
                    path.append((ip, cum))
        cum += delays.hop_ms
        path.append((probe.dst, cum))

    hops = tuple(
        Hop(ttl, ip, () if ip is None else tuple(t + j for j in jitter))
        for ttl, (ip, t) in enumerate(path, start=1)
    )
    return TraceRecord(probe, hops)


def campaign(
    topo: Topology,
    prefix,
    sources: Iterable[IpAddress],
    protocols: Iterable[Protocol],
    ticks: int,
    start: int = DEFAULT_START,
    interval: int = TICK_SECONDS,
) -> Iterator[TraceRecord]:
    """Probe all 254 targets of ``prefix`` from each source at each tick."""
    targets = enumerate_probe_targets(prefix)
    for tick in range(ticks):
        t = tick_time(tick, start, interval)
        for proto in protocols:
            for src in sources:
                for dst in targets:
                    yield run_traceroute(topo, ProbeSpec(src, dst, Protocol(proto), t))


def write_traces(records: Iterable[TraceRecord], fh) -> int:
    n = 0
    for rec in records:
        fh.write(rec.to_json())
        fh.write("\n")
        n += 1
    return n


def read_traces(fh) -> Iterator[TraceRecord]:
    for line in fh:
        if line.strip():
            yield TraceRecord.from_json(line)
