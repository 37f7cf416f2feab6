"""Regenerate the bundled data files under src/bgpmlab/data.

Run from the repository root: ``python3 tools/make_fixtures.py``.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from bgpmlab.core import Asn, BgpmCase, IxpDirectory, RouterId, parse_ip, parse_prefix
from bgpmlab.ecmp import EcmpPolicy, salt_for, source_parity
from bgpmlab.inference import (
    SITE_CODES,
    CaseCatalog,
    CatalogEntry,
    Census,
    SimulatedLookingGlass,
    classify_connectivity,
    write_census,
)
from bgpmlab.lg import render_fixture
from bgpmlab.sim import build_topology

DATA = Path(__file__).resolve().parent.parent / "src" / "bgpmlab" / "data"
TOR1 = "core1.tor1.he.net"


def demo_config() -> dict:
    seed = 1
    cfg = {
        "name": "demo-tor1",
        "seed": seed,
        "ases": [
            {"asn": 6939, "name": "Hurricane Electric", "role": "transit"},
            {"asn": 19752, "name": "AS19752", "role": "stub"},
            {"asn": 812, "name": "AS812", "role": "transit"},
            {"asn": 13768, "name": "AS13768", "role": "stub"},
            {"asn": 6327, "name": "AS6327", "role": "transit"},
        ],
        "routers": [
            {"name": TOR1, "asn": 6939, "router_id": "216.66.84.1", "ecmp": True,
             "max_paths": 4, "algorithm": "include-ports",
             "ingress": ["184.105.80.1", "184.105.80.2"]},
            {"name": "br1.tor.as19752.net", "asn": 19752, "router_id": "142.46.0.1"},
            {"name": "br2.tor.as19752.net", "asn": 19752, "router_id": "142.46.0.2"},
            {"name": "br1.tor.as812.net", "asn": 812, "router_id": "24.156.0.1"},
            {"name": "br1.tor.as13768.net", "asn": 13768, "router_id": "66.185.0.1"},
            {"name": "br1.tor.as6327.net", "asn": 6327, "router_id": "64.59.0.1"},
        ],
        "links": [
            {"name": "BL-1", "near_router": TOR1, "far_router": "br1.tor.as19752.net",
             "near_ip": "198.32.181.10", "far_ip": "198.32.181.46", "bandwidth_gbps": 10},
            {"name": "BL-2", "near_router": TOR1, "far_router": "br2.tor.as19752.net",
             "near_ip": "206.108.34.10", "far_ip": "206.108.34.48", "bandwidth_gbps": 10},
            {"name": "BL-3", "near_router": TOR1, "far_router": "br1.tor.as812.net",
             "near_ip": "206.108.34.11", "far_ip": "206.108.34.60", "bandwidth_gbps": 100},
            {"name": "BL-4", "near_router": TOR1, "far_router": "br1.tor.as812.net",
             "near_ip": "184.105.81.1", "far_ip": "184.105.81.2", "bandwidth_gbps": 100},
            {"name": "BL-5", "near_router": TOR1, "far_router": "br1.tor.as13768.net",
             "near_ip": "206.108.34.12", "far_ip": "206.108.34.77", "bandwidth_gbps": 10},
            {"name": "BL-6", "near_router": TOR1, "far_router": "br1.tor.as6327.net",
             "near_ip": "184.105.81.5", "far_ip": "184.105.81.6", "bandwidth_gbps": 100},
        ],
        "ixps": [{"name": "TorIX", "prefixes": ["206.108.34.0/23"]}],
        "prefixes": [
            {"prefix": "142.46.150.0/24", "asn": 19752},
            {"prefix": "24.156.128.0/24", "asn": 812},
            {"prefix": "66.185.80.0/24", "asn": 13768},
            {"prefix": "64.59.128.0/24", "asn": 6327},
        ],
        "cases": [
            {"router": TOR1, "prefix": "142.46.150.0/24", "links": ["BL-1", "BL-2"],
             "faras": "split"},
        ],
        "sources": [],
    }
    # two probe sources whose keyed parities differ at tor1
    policy = EcmpPolicy(seed=seed, router_salt=salt_for(TOR1))
    picked = {}
    for host in range(2, 250):
        ip = parse_ip(f"209.51.186.{host}")
        picked.setdefault(source_parity(ip, policy), ip)
        if len(picked) == 2:
            break
    for ingress, parity in zip(("184.105.80.1", "184.105.80.2"), (0, 1)):
        cfg["sources"].append({"ip": str(picked[parity]), "router": TOR1, "ingress": ingress})
    return cfg


def write_demo() -> None:
    cfg = demo_config()
    (DATA / "demo_topology.json").write_text(json.dumps(cfg, indent=2) + "\n")
    topo = build_topology(cfg)
    lg = SimulatedLookingGlass(topo)
    fx = DATA / "fixtures"
    fx.mkdir(parents=True, exist_ok=True)
    (fx / "tor1_summary.lg").write_text(render_fixture(TOR1, "summary", "-", lg.summary(TOR1)))
    target = "142.46.150.1"
    (fx / "tor1_routes.lg").write_text(
        render_fixture(TOR1, "routes", target, lg.routes(TOR1, parse_ip(target))))


# HE IPv4 deployment totals the fixture is built to match
HE = Asn(6939)
HE_CASES = 1088
HE_SPLIT = {"IXP": 1006, "Direct": 68, "Hybrid": 14}
HE_LINKS = {2: 911, 3: 92, 4: 85}
HE_NEIGHBORS, HE_BGPM_NEIGHBORS = 5868, 611
HE_ROUTERS, HE_BGPM_ROUTERS = 112, 69


def he_fixture(seed: int = 2020):
    rng = random.Random(seed)
    codes = sorted(SITE_CODES)
    routers = [f"core{1 + i // len(codes)}.{codes[i % len(codes)]}1.he.net"
               for i in range(HE_BGPM_ROUTERS)]
    neighbors = [Asn(10000 + 7 * i) for i in range(HE_BGPM_NEIGHBORS)]
    ixps = [{"name": f"IX-{c.upper()}", "prefixes": [f"198.{18 + i // 200}.{i % 200}.0/24"]}
            for i, c in enumerate(codes[:40])]
    directory = IxpDirectory.from_records(ixps)

    conn = [k for k, n in HE_SPLIT.items() for _ in range(n)]
    links = [k for k, n in HE_LINKS.items() for _ in range(n)]
    rng.shuffle(conn)
    rng.shuffle(links)
    # every router and neighbor appears at least once; pairs are distinct
    pairs, seen = [], set()
    for i in range(HE_CASES):
        r = routers[i] if i < len(routers) else rng.choice(routers)
        n = neighbors[i] if i < len(neighbors) else rng.choice(neighbors)
        while (r, n) in seen:
            n = rng.choice(neighbors)
        seen.add((r, n))
        pairs.append((r, n))
    ixp_next = [1] * len(ixps)
    direct_next = [0]

    def ixp_ip():
        k = rng.randrange(len(ixps))
        net = parse_prefix(ixps[k]["prefixes"][0])
        ip = net.network_address + ixp_next[k]
        ixp_next[k] += 1
        return ip

    def direct_ip():
        direct_next[0] += 1
        n = direct_next[0]
        return parse_ip(f"203.{n // 256 % 256}.{n % 256}.2")

    cat = CaseCatalog()
    for i, ((rname, far_as), c, k) in enumerate(zip(pairs, conn, links)):
        kinds = {"IXP": [ixp_ip] * k, "Direct": [direct_ip] * k,
                 "Hybrid": [ixp_ip] + [direct_ip] * (k - 1)}[c]
        far_ips = frozenset(f() for f in kinds)
        case = BgpmCase(HE, RouterId(rname, HE), far_as,
                        parse_prefix(f"{20 + i // 65536}.{i // 256 % 256}.{i % 256}.0/24"), far_ips)
        conn_measured = classify_connectivity(case, directory)
        assert conn_measured.value == c
        cat.add(CatalogEntry(case, conn_measured, i + 1))
    return cat, ixps


def write_he() -> None:
    cat, ixps = he_fixture()
    fx = DATA / "fixtures"
    (fx / "he_catalog.jsonl").write_text(cat.to_jsonl())
    (fx / "he_ixps.json").write_text(json.dumps(ixps, indent=1) + "\n")
    write_census({HE: Census(HE, HE_NEIGHBORS, HE_ROUTERS, "7")}, fx / "he_census.csv")


if __name__ == "__main__":
    write_demo()
    write_he()
