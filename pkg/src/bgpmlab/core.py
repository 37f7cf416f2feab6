"""Address-family-aware value types shared across the package."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

IpAddress = Union[ipaddress.IPv4Address, ipaddress.IPv6Address]
Prefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]

PROBE_TARGETS = 254


class BgpmError(Exception):
    """Base class for errors raised by this package."""


class PrefixError(BgpmError, ValueError):
    pass


def parse_ip(text: str) -> IpAddress:
    try:
        return ipaddress.ip_address(text.strip())
    except ValueError as exc:
        raise PrefixError(f"malformed address {text!r}") from exc


def parse_prefix(text: str) -> Prefix:
    """Parse ``"<addr>/<len>"``, masking host bits to zero.

    >>> str(parse_prefix("23.67.36.7/24"))
    '23.67.36.0/24'
    """
    if "/" not in text:
        raise PrefixError(f"missing length in prefix {text!r}")
    addr, _, length = text.strip().partition("/")
    ip = parse_ip(addr)
    if not length.isdigit():
        raise PrefixError(f"malformed prefix length in {text!r}")
    if int(length) > ip.max_prefixlen:
        raise PrefixError(f"prefix length {length} out of range for {addr}")
    return ipaddress.ip_network(f"{ip}/{int(length)}", strict=False)


def render_prefix(prefix: Prefix) -> str:
    return str(prefix)


def family(obj: Union[IpAddress, Prefix]) -> int:
    return obj.version


def probe_target(prefix: Prefix, index: int) -> IpAddress:
    """Address ``index`` (1-based) inside ``prefix``: X.Y.Z.<index> or X:Y:Z::<index>."""
    return prefix.network_address + index


def enumerate_probe_targets(prefix: Prefix) -> list[IpAddress]:
    """The 254 traceroute targets of a /24 (.1-.254) or /48 (::1-::fe)."""
    if (prefix.version, prefix.prefixlen) not in ((4, 24), (6, 48)):
        raise PrefixError(f"unsupported prefix length for probing: {prefix}")
    return [probe_target(prefix, i) for i in range(1, PROBE_TARGETS + 1)]


def query_target(prefix: Prefix) -> IpAddress:
    """The single address queried per prefix at a looking glass."""
    return probe_target(prefix, 1)


@dataclass(frozen=True, order=True)
class Asn:
    number: int

    def __post_init__(self):
        if not 0 < self.number < 2**32:
            raise ValueError(f"invalid AS number {self.number}")

    def __str__(self) -> str:
        return f"AS{self.number}"


@dataclass(frozen=True, order=True)
class RouterId:
    """A named router, e.g. ``core1.tor1.he.net`` owned by AS6939."""

    name: str
    owner: Asn

    def __post_init__(self):
        if not self.name:
            raise ValueError("router name must be nonempty")

    @property
    def short(self) -> str:
        # core1.tor1.he.net -> tor1
        labels = self.name.split(".")
        return labels[1] if len(labels) > 2 else self.name

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class BorderLink:
    near_ip: IpAddress
    far_ip: IpAddress
    near_router: RouterId
    far_router: RouterId
    bandwidth_gbps: Optional[float] = None

    def __post_init__(self):
        if self.near_ip.version != self.far_ip.version:
            raise ValueError("border link endpoints differ in address family")
        if self.near_router.owner == self.far_router.owner:
            raise ValueError("border link must join two different ASes")
        if self.bandwidth_gbps is not None and self.bandwidth_gbps <= 0:
            raise ValueError("bandwidth must be positive")


def ordered_links(far_ips: Iterable[IpAddress]) -> tuple[IpAddress, ...]:
    """Canonical link order of a case: far IPs ascending. Link indices refer to it."""
    return tuple(sorted(far_ips, key=int))


@dataclass(frozen=True)
class BgpmCase:
    """One BGP-M deployment: <NearAS, NearBR, FarAS, DstPrfx> and its far IPs."""

    near_as: Asn
    near_br: RouterId
    far_as: Asn
    dst_prefix: Prefix
    far_ips: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "far_ips", frozenset(self.far_ips))
        if self.near_br.owner != self.near_as:
            raise ValueError(f"{self.near_br} is not owned by {self.near_as}")
        if len(self.far_ips) < 2:
            raise ValueError("a BGP-M case needs at least two far IPs")
        if any(ip.version != self.dst_prefix.version for ip in self.far_ips):
            raise ValueError("far IPs and destination prefix differ in family")

    @property
    def key(self) -> tuple:
        return (self.near_as, self.near_br.name, self.far_as, self.dst_prefix)

    @property
    def links(self) -> tuple[IpAddress, ...]:
        return ordered_links(self.far_ips)

    def __str__(self) -> str:
        return f"<{self.near_as}, {self.near_br.short}, {self.far_as}, {self.dst_prefix}>"


@dataclass(frozen=True)
class IxpDirectory:
    """IXP names with the peering-LAN prefixes that belong to them."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple((name, frozenset(prefixes)) for name, prefixes in self.entries)
        for name, prefixes in entries:
            plist = sorted(prefixes, key=lambda p: (p.version, int(p.network_address)))
            for a, b in zip(plist, plist[1:]):
                if a.version == b.version and a.overlaps(b):
                    raise ValueError(f"overlapping prefixes {a} and {b} in IXP {name!r}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "IxpDirectory":
        return cls(tuple((r["name"], [parse_prefix(p) for p in r["prefixes"]]) for r in records))

    def to_records(self) -> list[dict]:
        return [
            {"name": name, "prefixes": sorted((str(p) for p in prefixes))}
            for name, prefixes in self.entries
        ]


def ip_in_directory(ip: IpAddress, directory: IxpDirectory) -> Optional[str]:
    """Name of the IXP whose peering LAN contains ``ip``, if any."""
    for name, prefixes in directory.entries:
        for prefix in prefixes:
            if prefix.version == ip.version and ip in prefix:
                return name
    return None
