import itertools
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgpmlab.bgp import (
    Flag,
    LearnedVia,
    Origin,
    RouteError,
    RouterConfig,
    RoutingTable,
    UnknownNeighbor,
    check_bgpm_conditions,
    compare_routes,
    equal_on_six,
    install,
    select_multipath,
)
from bgpmlab.core import Asn, BorderLink, RouterId, parse_ip, parse_prefix

from conftest import route, routes_st


def oracle_compare(a, b):
    """Rule-by-rule comparison written out longhand. -1 means a wins."""
    if a.local_pref != b.local_pref:
        return -1 if a.local_pref > b.local_pref else 1
    if len(a.as_path) != len(b.as_path):
        return -1 if len(a.as_path) < len(b.as_path) else 1
    rank = {Origin.IGP: 0, Origin.EGP: 1, Origin.INCOMPLETE: 2}
    if rank[a.origin] != rank[b.origin]:
        return -1 if rank[a.origin] < rank[b.origin] else 1
    if a.med != b.med:
        return -1 if a.med < b.med else 1
    if a.learned_via != b.learned_via:
        return -1 if a.learned_via is LearnedVia.EBGP else 1
    if a.igp_metric != b.igp_metric:
        return -1 if a.igp_metric < b.igp_metric else 1
    ra, rb = a.peer_router_id.packed, b.peer_router_id.packed
    if ra != rb:
        return -1 if ra < rb else 1
    return 0


class TestCompareRoutes:
    def test_local_pref_wins(self):
        c = compare_routes(route(local_pref=200), route(local_pref=100))
        assert c.winner == -1 and c.rule == 1

    def test_reflexive(self):
        r = route()
        assert compare_routes(r, r).winner == 0
        assert compare_routes(r, r).rule is None

    def test_origin(self):
        c = compare_routes(route(origin=Origin.IGP), route(origin=Origin.INCOMPLETE))
        assert c.winner == -1 and c.rule == 3

    def test_ebgp_before_ibgp(self):
        c = compare_routes(route(via=LearnedVia.IBGP), route(via=LearnedVia.EBGP))
        assert c.winner == 1 and c.rule == 5

    def test_router_id_tiebreak(self):
        c = compare_routes(route(router_id="10.0.0.9"), route(router_id="10.0.0.10"))
        assert c.winner == -1 and c.rule == 7

    def test_mismatched_prefix(self):
        with pytest.raises(RouteError):
            compare_routes(route(), route(prefix="10.0.0.0/24"))

    @settings(max_examples=300)
    @given(routes_st(), routes_st())
    def test_agrees_with_oracle(self, a, b):
        assert compare_routes(a, b).winner == oracle_compare(a, b)

    @given(routes_st(), routes_st())
    def test_antisymmetric(self, a, b):
        assert compare_routes(a, b).winner == -compare_routes(b, a).winner

    @given(routes_st(), routes_st(), routes_st())
    def test_transitive(self, a, b, c):
        if compare_routes(a, b).winner <= 0 and compare_routes(b, c).winner <= 0:
            assert compare_routes(a, c).winner <= 0


def _two_tor1_routes():
    return [
        route(next_hop="198.32.181.46", router_id="142.46.0.1"),
        route(next_hop="206.108.34.48", router_id="142.46.0.2"),
    ]


def oracle_members(routes, best):
    """Largest set of routes equal to ``best`` on six attributes with distinct next hops."""
    best_size = 0
    for k in range(1, len(routes) + 1):
        for combo in itertools.combinations(routes, k):
            if all(equal_on_six(r, best) for r in combo) and len({r.next_hop for r in combo}) == k:
                best_size = k
    return best_size


class TestSelectMultipath:
    def test_tor1_pair(self):
        g = select_multipath(_two_tor1_routes(), max_paths=2)
        assert len(g.members) == 2
        assert all(Flag.MULTIPATH in r.flags and Flag.EBGP in r.flags for r in g.members)
        assert g.best.status == "BME"
        assert g.members[1].status == "ME"

    def test_max_paths_one(self):
        g = select_multipath(_two_tor1_routes(), max_paths=1)
        assert len(g.members) == 1
        assert Flag.MULTIPATH not in g.best.flags

    def test_three_equal_routes(self):
        routes = [route(next_hop=f"203.0.113.{i}", router_id=f"10.0.0.{i}") for i in (1, 2, 3)]
        g = select_multipath(routes, max_paths=4)
        assert len(g.members) == oracle_members(routes, g.best) == 3

    def test_truncation_keeps_lowest_router_ids(self):
        routes = [route(next_hop=f"203.0.113.{i}", router_id=f"10.0.0.{10 - i}") for i in range(1, 6)]
        g = select_multipath(routes, max_paths=2)
        assert [str(r.peer_router_id) for r in g.members] == ["10.0.0.5", "10.0.0.6"]

    def test_errors(self):
        with pytest.raises(RouteError):
            select_multipath([], 2)
        with pytest.raises(RouteError):
            select_multipath([route(), route(prefix="10.0.0.0/24")], 2)

    @settings(max_examples=300)
    @given(st.lists(routes_st(), min_size=1, max_size=6), st.integers(1, 4))
    def test_group_properties(self, routes, max_paths):
        g = select_multipath(routes, max_paths)
        # best beats or ties everything
        assert all(oracle_compare(g.best, r) <= 0 for r in routes)
        assert 1 <= len(g.members) <= max_paths
        assert len({r.next_hop for r in g.members}) == len(g.members)
        assert all(equal_on_six(m, g.best) for m in g.members)
        assert (Flag.MULTIPATH in g.best.flags) == (len(g.members) >= 2)
        assert len(g.members) == min(max_paths, oracle_members(routes, g.best))

    @given(st.lists(routes_st(), min_size=1, max_size=6), st.integers(2, 5))
    def test_local_pref_scaling_keeps_best(self, routes, k):
        g = select_multipath(routes, 1)
        scaled = [replace(r, local_pref=r.local_pref * k) for r in routes]
        h = select_multipath(scaled, 1)
        assert (h.best.next_hop, h.best.peer_router_id) == (g.best.next_hop, g.best.peer_router_id)


class TestRoutingTable:
    def test_install(self):
        t = RoutingTable()
        g = select_multipath([route()], 1)
        install(t, g)
        assert len(t) == 1
        install(t, select_multipath(_two_tor1_routes(), 2))
        assert len(t) == 1 and t[g.dst_prefix].is_multipath

    def test_install_many(self):
        t = RoutingTable()
        for i in range(1088):
            p = f"20.{i // 256}.{i % 256}.0/24"
            install(t, select_multipath([route(prefix=p)], 1))
        assert len(t) == 1088

    def test_longest_prefix_match(self):
        t = RoutingTable([select_multipath([route(prefix="10.0.0.0/8")], 1),
                          select_multipath([route(prefix="10.1.0.0/16")], 1)])
        assert t.lookup(parse_ip("10.1.2.3")).dst_prefix == parse_prefix("10.1.0.0/16")
        assert t.lookup(parse_ip("10.2.2.3")).dst_prefix == parse_prefix("10.0.0.0/8")
        assert t.lookup(parse_ip("11.0.0.1")) is None


HE, FAR = Asn(6939), Asn(19752)
TOR1 = RouterId("core1.tor1.he.net", HE)


def _config(ecmp=True, n_links=2, meds=(0, 0)):
    links = [BorderLink(parse_ip(f"206.108.34.{10 + i}"), parse_ip(f"206.108.34.{48 + i}"), TOR1,
                        RouterId(f"br{i}", FAR)) for i in range(n_links)]
    learned = [route(next_hop=str(l.far_ip), med=m, router_id=f"142.46.0.{i + 1}")
               for i, (l, m) in enumerate(zip(links, meds))]
    return RouterConfig(TOR1, ecmp, 4, links, learned)


class TestConditions:
    PFX = parse_prefix("142.46.150.0/24")

    def test_all_hold(self):
        assert check_bgpm_conditions(_config(), FAR, self.PFX).ok

    def test_ecmp_disabled(self):
        c = check_bgpm_conditions(_config(ecmp=False), FAR, self.PFX)
        assert not c.ok and c.failed == 1

    def test_single_link(self):
        c = check_bgpm_conditions(_config(n_links=1, meds=(0,)), FAR, self.PFX)
        assert c.failed == 2

    def test_single_route(self):
        cfg = _config()
        cfg.learned = cfg.learned[:1]
        assert check_bgpm_conditions(cfg, FAR, self.PFX).failed == 3

    def test_med_differs(self):
        cfg = _config(meds=(0, 5))
        c = check_bgpm_conditions(cfg, FAR, self.PFX)
        assert c.failed == 4
        # oracle: select_multipath over the same routes gives a singleton
        assert not select_multipath(cfg.learned, 4).is_multipath

    def test_unknown_neighbor(self):
        with pytest.raises(UnknownNeighbor):
            check_bgpm_conditions(_config(), Asn(1), self.PFX)
