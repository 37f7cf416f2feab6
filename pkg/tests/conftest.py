import copy
import json
from importlib.resources import files
from pathlib import Path

import pytest
from hypothesis import strategies as st

from bgpmlab.bgp import LearnedVia, Origin, RouteEntry
from bgpmlab.core import Asn, parse_ip, parse_prefix
from bgpmlab.sim import build_topology

DATA = Path(str(files("bgpmlab") / "data"))
FIXTURES = DATA / "fixtures"


def route(prefix="142.46.150.0/24", next_hop="198.32.181.46", local_pref=100, as_path=(19752,),
          origin=Origin.IGP, med=0, via=LearnedVia.EBGP, igp=0, router_id="10.0.0.1", age=0):
    return RouteEntry(
        dst_prefix=parse_prefix(prefix),
        next_hop=parse_ip(next_hop),
        local_pref=local_pref,
        as_path=tuple(Asn(a) for a in as_path),
        origin=origin,
        med=med,
        learned_via=via,
        igp_metric=igp,
        peer_router_id=parse_ip(router_id),
        age_seconds=age,
    )


PREFIX = parse_prefix("142.46.150.0/24")


@st.composite
def routes_st(draw, prefix=PREFIX, small=True):
    """Random eBGP/iBGP routes for one prefix; small domains make ties common."""
    pick = (lambda lo, hi: st.integers(lo, hi)) if small else (lambda lo, hi: st.integers(0, 2**31))
    path_len = draw(st.integers(1, 3))
    via = draw(st.sampled_from(list(LearnedVia)))
    return RouteEntry(
        dst_prefix=prefix,
        next_hop=parse_ip(f"198.51.100.{draw(st.integers(1, 8))}"),
        local_pref=draw(st.sampled_from([100, 150, 200]) if small else pick(0, 0)),
        as_path=tuple(Asn(draw(st.integers(64500, 64502))) for _ in range(path_len)),
        origin=draw(st.sampled_from(list(Origin))),
        med=draw(pick(0, 2)),
        learned_via=via,
        igp_metric=draw(pick(0, 2)),
        peer_router_id=parse_ip(f"10.0.0.{draw(st.integers(1, 6))}"),
        age_seconds=60 * draw(st.integers(0, 10**6)),
    )


@pytest.fixture(scope="session")
def demo_config():
    return json.loads((DATA / "demo_topology.json").read_text())


@pytest.fixture
def demo_cfg(demo_config):
    return copy.deepcopy(demo_config)


@pytest.fixture(scope="session")
def demo_topo(demo_config):
    return build_topology(copy.deepcopy(demo_config))


# criterion number -> (title, passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
