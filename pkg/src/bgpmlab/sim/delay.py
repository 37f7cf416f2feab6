"""Queuing-delay model for border links.

Draws are derived by hashing (seed, link, time, nonce), so any sample can be
regenerated independently of the order in which samples are requested.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from statistics import NormalDist

from ..core import BgpmError, BorderLink

_STD_NORMAL = NormalDist()


class UnknownLink(BgpmError, KeyError):
    pass


@dataclass
class DelayModel:
    """Per-link base delay plus a capped log-normal queue and rare spikes.

    Defaults put the median near 28 ms with well over 95% of draws below
    340 ms; spikes reach into seconds.
    """

    base_ms: dict = field(default_factory=dict)  # (near router name, far ip) -> ms
    queue_median_ms: float = 28.0
    queue_sigma: float = 0.5
    queue_cap_ms: float = 300.0
    spike_probability: float = 0.01
    spike_median_ms: float = 1500.0
    spike_sigma: float = 0.8
    hop_ms: float = 0.4
    jitter_ms: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("queue_median_ms", "queue_sigma", "queue_cap_ms", "spike_median_ms",
                     "spike_sigma", "hop_ms", "jitter_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if any(v < 0 for v in self.base_ms.values()):
            raise ValueError("base delays must be nonnegative")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError("spike_probability must lie in [0, 1]")

    def register(self, link: BorderLink, base_ms: float = 0.0) -> None:
        if base_ms < 0:
            raise ValueError("base delay must be nonnegative")
        self.base_ms[link_key(link)] = base_ms

    @classmethod
    def from_dict(cls, data: dict) -> "DelayModel":
        known = {f for f in cls.__dataclass_fields__ if f != "base_ms"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown delay parameters: {sorted(unknown)}")
        return cls(**data)


def link_key(link: BorderLink) -> tuple:
    return (link.near_router.name, str(link.far_ip))


def uniforms(*parts, count: int = 4) -> list[float]:
    """``count`` uniforms in (0, 1) determined by ``parts``."""
    data = "|".join(str(p) for p in parts).encode()
    digest = hashlib.blake2b(data, digest_size=8 * count).digest()
    return [
        (int.from_bytes(digest[8 * i: 8 * i + 8], "big") + 0.5) / 2**64 for i in range(count)
    ]


def _lognormal(median: float, sigma: float, u: float) -> float:
    if median <= 0:
        return 0.0
    return median * math.exp(sigma * _STD_NORMAL.inv_cdf(u))


def sample_link_delay(model: DelayModel, link: BorderLink, time: int, nonce=0) -> float:
    """Border-link delay in ms for one probe crossing ``link`` at ``time``."""
    key = link_key(link)
    if key not in model.base_ms:
        raise UnknownLink(f"no delay parameters for link {key}")
    u_queue, u_spike, u_size, _ = uniforms("delay", model.seed, *key, time, nonce)
    delay = model.base_ms[key]
    delay += min(_lognormal(model.queue_median_ms, model.queue_sigma, u_queue), model.queue_cap_ms)
    if u_spike < model.spike_probability:
        delay += _lognormal(model.spike_median_ms, model.spike_sigma, u_size)
    return delay


def packet_jitter(model: DelayModel, nonce, packets: int) -> list[float]:
    """Per-packet RTT offsets shared by every hop of one traceroute session."""
    us = uniforms("jitter", model.seed, nonce, count=max(packets, 1))
    return [u * model.jitter_ms for u in us[:packets]]
