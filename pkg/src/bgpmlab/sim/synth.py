"""Seeded generator of topology configs with planted BGP-M cases."""

from __future__ import annotations

import random
from typing import Optional

SITES = ["tor", "par", "ams", "fra", "hkg", "tyo", "lon", "sjc", "nyc", "chi", "sea", "sin"]
FARAS_KINDS = ["split", "parallel", "merge", "complex", "unresponsive"]
CONNECTIVITY = ["IXP", "Direct", "Hybrid"]


class _Addr:
    def __init__(self):
        self.direct = 0
        self.prefix = 0

    def direct_pair(self) -> tuple[str, str]:
        # one /30 per direct link out of 203.0.0.0/8-ish space
        i = self.direct
        self.direct += 1
        base = 4 * i
        a, b, c = (base >> 16) & 0xFF, (base >> 8) & 0xFF, base & 0xFF
        return f"203.{a}.{b}.{c + 1}", f"203.{a}.{b}.{c + 2}"

    def dst_prefix(self) -> str:
        i = self.prefix
        self.prefix += 1
        return f"23.{64 + i // 256}.{i % 256}.0/24"


def random_topology_config(
    seed: int,
    n_routers: int = 5,
    n_cases: int = 25,
    max_prefixes: int = 5,
    extra_neighbors: int = 10,
    near_asn: int = 6939,
    faras: Optional[str] = None,
) -> dict:
    """A JSON-ready topology config with ``n_cases`` planted cases.

    Link counts cycle through 2/3/4 and connectivity through
    IXP/Direct/Hybrid so every mix is represented.  Each case sits on a
    random position among its neighbor's prefixes.  ``extra_neighbors``
    adds multi-link neighbors whose routes never tie and single-link
    neighbors that the summary-driven plan skips.
    """
    rng = random.Random(seed)
    addr = _Addr()
    routers = [f"core1.{SITES[i % len(SITES)]}{1 + i // len(SITES)}.he.net" for i in range(n_routers)]
    cfg: dict = {
        "name": f"synthetic-{seed}",
        "seed": seed,
        "ases": [{"asn": near_asn, "name": "NearAS", "role": "transit"}],
        "routers": [],
        "links": [],
        "ixps": [],
        "prefixes": [],
        "cases": [],
        "sources": [],
    }
    for i, name in enumerate(routers):
        cfg["routers"].append({
            "name": name, "asn": near_asn, "router_id": f"72.52.{i}.1",
            "ecmp": True, "max_paths": 4, "algorithm": "include-ports",
            "ingress": [f"184.105.{i}.1", f"184.105.{i}.2"],
        })
        cfg["sources"].append({"ip": f"209.51.{i}.5", "router": name, "ingress": f"184.105.{i}.1"})
    # one IXP per router site
    ixp_hosts = {}
    for i, name in enumerate(routers):
        cfg["ixps"].append({"name": f"IX-{name.split('.')[1].upper()}", "prefixes": [f"185.1.{i}.0/24"]})
        ixp_hosts[name] = (i, 1)

    def ixp_pair(router: str) -> tuple[str, str]:
        i, n = ixp_hosts[router]
        ixp_hosts[router] = (i, n + 2)
        return f"185.1.{i}.{n}", f"185.1.{i}.{n + 1}"

    next_asn = [64512]
    link_no = [0]

    def new_neighbor(role: str) -> int:
        asn = next_asn[0]
        next_asn[0] += 1
        cfg["ases"].append({"asn": asn, "name": f"N{asn}", "role": role})
        far = f"br1.as{asn}.net"
        cfg["routers"].append({"name": far, "asn": asn, "router_id": f"10.{asn % 256}.{asn // 256 % 256}.1"})
        npfx = rng.randint(1, max_prefixes)
        for _ in range(npfx):
            cfg["prefixes"].append({"prefix": addr.dst_prefix(), "asn": asn})
        return asn

    def add_link(router: str, asn: int, kind: str) -> str:
        link_no[0] += 1
        lname = f"L{link_no[0]}"
        near_ip, far_ip = ixp_pair(router) if kind == "ixp" else addr.direct_pair()
        cfg["links"].append({
            "name": lname, "near_router": router, "far_router": f"br1.as{asn}.net",
            "near_ip": near_ip, "far_ip": far_ip, "bandwidth_gbps": rng.choice([10, 100]),
        })
        return lname

    def prefixes_of(asn: int) -> list[str]:
        return [p["prefix"] for p in cfg["prefixes"] if p["asn"] == asn]

    used_pairs = set()
    for c in range(n_cases):
        router = routers[c % n_routers]
        nlinks = 2 + c % 3
        conn = CONNECTIVITY[(c // 3) % 3]
        asn = None
        # now and then plant at an existing neighbor seen at another router
        if c >= n_routers and rng.random() < 0.3:
            candidates = [a["asn"] for a in cfg["ases"][1:] if (router, a["asn"]) not in used_pairs]
            if candidates:
                asn = rng.choice(candidates)
        if asn is None:
            asn = new_neighbor(rng.choice(["stub", "content", "transit"]))
        used_pairs.add((router, asn))
        kinds = {"IXP": ["ixp"] * nlinks, "Direct": ["direct"] * nlinks,
                 "Hybrid": ["ixp"] + ["direct"] * (nlinks - 1)}[conn]
        links = [add_link(router, asn, k) for k in kinds]
        cfg["cases"].append({
            "router": router,
            "prefix": rng.choice(prefixes_of(asn)),
            "links": links,
            "faras": faras or FARAS_KINDS[c % len(FARAS_KINDS)],
        })

    for e in range(extra_neighbors):
        router = routers[e % n_routers]
        asn = new_neighbor("stub")
        for _ in range(1 if e % 2 else 2):
            add_link(router, asn, "direct")
    return cfg


def kth_prefix_config(k: int, n_prefixes: int = 5, n_links: int = 2, seed: int = 0,
                      near_router: str = "core1.tor1.he.net") -> dict:
    """One router, one multi-link neighbor with ``n_prefixes`` /24s; the case sits on the k-th."""
    if not 1 <= k <= n_prefixes:
        raise ValueError("k must lie in 1..n_prefixes")
    far = "br1.as64500.net"
    prefixes = [f"23.{64 + i // 256}.{i % 256}.0/24" for i in range(n_prefixes)]
    links = [{"name": f"L{i}", "near_router": near_router, "far_router": far,
              "near_ip": f"203.0.{i}.1", "far_ip": f"203.0.{i}.2"} for i in range(n_links)]
    return {
        "name": f"kth-{k}-of-{n_prefixes}",
        "seed": seed,
        "ases": [{"asn": 6939, "role": "transit"}, {"asn": 64500, "role": "stub"}],
        "routers": [{"name": near_router, "asn": 6939, "router_id": "72.52.0.1",
                     "ingress": ["184.105.0.1"]},
                    {"name": far, "asn": 64500, "router_id": "10.1.0.1"}],
        "links": links,
        "prefixes": [{"prefix": p, "asn": 64500} for p in prefixes],
        "cases": [{"router": near_router, "prefix": prefixes[k - 1],
                   "links": [l["name"] for l in links]}],
        "sources": [{"ip": "209.51.0.5", "router": near_router}],
    }
