"""ECMP next-hop selection: hash-threshold, universal, include-ports, round robin."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass, field
from typing import Optional

from .core import BgpmCase, BgpmError, IpAddress, enumerate_probe_targets

HASH_SPACE = 1 << 16


class Protocol(str, enum.Enum):
    ICMP = "ICMP"
    UDP = "UDP"
    TCP = "TCP"


class Algorithm(str, enum.Enum):
    HASH_THRESHOLD = "hash-threshold"
    UNIVERSAL = "universal"
    INCLUDE_PORTS = "include-ports"
    ROUND_ROBIN = "round-robin"


@dataclass(frozen=True)
class FlowKey:
    src: IpAddress
    dst: IpAddress
    protocol: Protocol = Protocol.ICMP
    src_port: Optional[int] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        has_ports = self.src_port is not None and self.dst_port is not None
        if (self.protocol is Protocol.ICMP) == has_ports:
            raise ValueError(f"{self.protocol.value} flow key with wrong port fields")
        for port in (self.src_port, self.dst_port):
            if port is not None and not 0 <= port < 65536:
                raise ValueError(f"port {port} out of range")

    def serialize(self, with_ports: bool = True) -> bytes:
        parts = [self.src.packed, self.dst.packed]
        if with_ports:
            parts.append(self.protocol.value.encode())
            if self.src_port is not None:
                parts.append(self.src_port.to_bytes(2, "big") + self.dst_port.to_bytes(2, "big"))
        return b"|".join(parts)


@dataclass(frozen=True)
class EcmpPolicy:
    algorithm: Algorithm = Algorithm.INCLUDE_PORTS
    seed: int = 0
    router_salt: int = 0


def salt_for(name: str) -> int:
    """A stable 64-bit per-router salt derived from its name."""
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "big")


def keyed_hash(data: bytes, policy: EcmpPolicy, bits: int = 16) -> int:
    key = (policy.seed % 2**64).to_bytes(8, "big") + (policy.router_salt % 2**64).to_bytes(8, "big")
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "big") >> (64 - bits)


def region_of(value: int, n_links: int) -> int:
    """Index of the hash-threshold region holding ``value``.

    [0, 2^16) is cut into ``n_links`` contiguous regions; the remainder is
    spread one slot each over the leftmost regions.
    """
    size, extra = divmod(HASH_SPACE, n_links)
    boundary = extra * (size + 1)
    if value < boundary:
        return value // (size + 1)
    return extra + (value - boundary) // size


def hash_threshold_select(key: FlowKey, n_links: int, policy: EcmpPolicy) -> int:
    if n_links < 1:
        raise ValueError("n_links must be positive")
    return region_of(keyed_hash(key.serialize(), policy), n_links)


def source_parity(src: IpAddress, policy: EcmpPolicy) -> int:
    return keyed_hash(b"src|" + src.packed, policy, bits=1)


def universal_select(src: IpAddress, dst: IpAddress, n_links: int, policy: EcmpPolicy) -> int:
    """Address-only selection modelled on the observed Cisco behaviour.

    With two links the choice is bit 2 of the destination's last octet
    (runs of four) XOR a keyed per-source parity, which leaves exactly two
    possible, mutually complementary maps over a prefix.
    """
    if n_links != 2:
        addr_key = FlowKey(src, dst, Protocol.ICMP)
        return region_of(keyed_hash(addr_key.serialize(with_ports=False), policy), n_links)
    block = (dst.packed[-1] >> 2) & 1
    return block ^ source_parity(src, policy)


def include_ports_select(key: FlowKey, n_links: int, policy: EcmpPolicy) -> int:
    if key.src_port is None:
        raise ValueError("include-ports selection needs a flow key with ports")
    return hash_threshold_select(key, n_links, policy)


def round_robin_next(counter: int, n_links: int) -> tuple[int, int]:
    if n_links < 1:
        raise ValueError("n_links must be positive")
    return counter % n_links, counter + 1


@dataclass
class RoundRobinState:
    counter: int = 0

    def next(self, n_links: int) -> int:
        index, self.counter = round_robin_next(self.counter, n_links)
        return index


def select_link(
    key: FlowKey, n_links: int, policy: EcmpPolicy, rr: Optional[RoundRobinState] = None
) -> int:
    """Dispatch on the router's configured algorithm.

    Address-only traffic (ICMP) under include-ports falls back to the
    universal hash since there are no ports to include.
    """
    algo = policy.algorithm
    if algo is Algorithm.ROUND_ROBIN:
        if rr is None:
            raise BgpmError("round-robin selection needs router state")
        return rr.next(n_links)
    if algo is Algorithm.HASH_THRESHOLD:
        return hash_threshold_select(key, n_links, policy)
    if algo is Algorithm.INCLUDE_PORTS and key.src_port is not None:
        return include_ports_select(key, n_links, policy)
    return universal_select(key.src, key.dst, n_links, policy)


def probe_ports(seed: int, src: IpAddress, dst: IpAddress, time: int) -> tuple[int, int]:
    """Pseudo-random UDP ports for one traceroute session to ``dst`` at ``time``.

    Held constant across TTLs of the session (Paris semantics).
    """
    data = b"ports|%d|%d|" % (seed, time) + src.packed + dst.packed
    v = int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")
    src_port = 1024 + (v & 0xFFFF) % (65536 - 1024)
    dst_port = 33434 + (v >> 16) % 1024
    return src_port, dst_port


def flow_key(src: IpAddress, dst: IpAddress, protocol: Protocol, seed: int, time: int) -> FlowKey:
    if protocol is Protocol.ICMP:
        return FlowKey(src, dst, Protocol.ICMP)
    sport, dport = probe_ports(seed, src, dst, time)
    return FlowKey(src, dst, protocol, sport, dport)


@dataclass
class AllocationMap:
    case: BgpmCase
    time: int
    assignment: dict = field(default_factory=dict)  # dst -> link index

    def __post_init__(self):
        n = len(self.case.far_ips)
        for dst, idx in self.assignment.items():
            if dst not in self.case.dst_prefix:
                raise ValueError(f"{dst} outside {self.case.dst_prefix}")
            if not 0 <= idx < n:
                raise ValueError(f"link index {idx} out of range")

    def far_ip(self, dst: IpAddress) -> IpAddress:
        return self.case.links[self.assignment[dst]]

    def counts(self) -> list[int]:
        out = [0] * len(self.case.far_ips)
        for idx in self.assignment.values():
            out[idx] += 1
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dst_ip", "link_index", "far_ip"])
        for dst in sorted(self.assignment, key=int):
            w.writerow([dst, self.assignment[dst], self.far_ip(dst)])
        return buf.getvalue()


def build_allocation_map(
    case: BgpmCase,
    src: IpAddress,
    protocol: Protocol,
    time: int,
    policy: EcmpPolicy,
    targets: Optional[list] = None,
) -> AllocationMap:
    """Predicted destination -> link map for probes from ``src`` at ``time``."""
    if targets is None:
        targets = enumerate_probe_targets(case.dst_prefix)
    n = len(case.far_ips)
    rr = RoundRobinState()
    assignment = {}
    for dst in targets:
        key = flow_key(src, dst, protocol, policy.seed, time)
        assignment[dst] = select_link(key, n, policy, rr)
    return AllocationMap(case=case, time=time, assignment=assignment)
