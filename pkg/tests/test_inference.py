import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgpmlab.core import Asn, BgpmCase, IxpDirectory, RouterId, parse_ip, parse_prefix, query_target
from bgpmlab.inference import (
    TABLE_HEADER,
    CaseCatalog,
    CatalogEntry,
    Census,
    CensusError,
    Connectivity,
    FixtureLookingGlass,
    LgTransportError,
    Outcome,
    PlanError,
    SimulatedLookingGlass,
    aggregate_stats,
    change_summary,
    classify_change,
    classify_connectivity,
    derive_neighbors_from_rib,
    diff_cases,
    execute_plan,
    plan_queries,
    read_census,
    router_location,
    write_census,
    write_fixture_corpus,
)
from bgpmlab.lg import parse_summary, render_not_existing
from bgpmlab.sim import build_topology, kth_prefix_config, random_topology_config

from conftest import FIXTURES
from topos import discover, mutation_fixture

HE = Asn(6939)
TOR1 = "core1.tor1.he.net"


def case_at(router="core1.tor1.he.net", far=19752, prefix="142.46.150.0/24",
            ips=("198.32.181.46", "206.108.34.48")):
    return BgpmCase(HE, RouterId(router, HE), Asn(far), parse_prefix(prefix),
                    frozenset(parse_ip(i) for i in ips))


class FlakyLookingGlass:
    """Raises a transport error on the n-th routes query (1-based)."""

    def __init__(self, inner, fail_at):
        self.inner, self.fail_at, self.calls = inner, fail_at, 0

    def routes(self, router, ip):
        self.calls += 1
        if self.calls == self.fail_at:
            raise LgTransportError("timeout")
        return self.inner.routes(router, ip)

    def summary(self, router):
        return self.inner.summary(router)


class TestNeighbors:
    def test_adjacent_both_sides(self):
        paths = [[3356, 6939, 19752], [6939, 812, 13768], [174, 3356]]
        assert derive_neighbors_from_rib(paths, HE) == {Asn(3356), Asn(19752), Asn(812)}

    def test_prepending_collapsed(self):
        assert derive_neighbors_from_rib([[6939, 6939, 6939, 2907, 2907]], HE) == {Asn(2907)}

    def test_absent(self):
        assert derive_neighbors_from_rib([[1, 2, 3]], HE) == set()


class TestPlan:
    def test_one_target_per_slash24(self):
        pfx = {Asn(19752): [parse_prefix(p) for p in ("142.46.150.0/24", "142.46.151.0/24", "142.46.152.0/24")]}
        plan = plan_queries(HE, [TOR1], pfx)
        targets = [t for _, _, t in plan.steps()]
        assert targets == [parse_ip(f"142.46.{x}.1") for x in (150, 151, 152)]

    def test_skips_non_probeable_lengths(self):
        pfx = {Asn(1): [parse_prefix("10.0.0.0/16"), parse_prefix("10.1.0.0/24"),
                        parse_prefix("2001:db8:1::/48"), parse_prefix("2001:db8::/32")]}
        targets = [t for _, _, t in plan_queries(HE, [TOR1], pfx).steps()]
        assert targets == [parse_ip("10.1.0.1"), parse_ip("2001:db8:1::1")]

    def test_summary_filters_single_session(self):
        summary = parse_summary((FIXTURES / "tor1_summary.lg").read_text().split("\n", 1)[1])
        pfx = {Asn(19752): [parse_prefix("142.46.150.0/24")], Asn(13768): [parse_prefix("24.156.128.0/24")]}
        plan = plan_queries(HE, [TOR1], pfx, summaries={TOR1: summary})
        assert {n for _, n, _ in plan.steps()} == {Asn(19752)}

    def test_no_routers(self):
        with pytest.raises(PlanError):
            plan_queries(HE, [], {})

    def test_neighbor_without_prefixes_dropped(self):
        plan = plan_queries(HE, [TOR1], {}, neighbors=[Asn(5)])
        assert plan.steps() == []


class TestExecute:
    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
    def test_stops_at_kth_prefix(self, k):
        topo = build_topology(kth_prefix_config(k))
        catalog, lg, plan = discover(topo)
        assert len(plan.steps()) == 5
        assert lg.count() == k == catalog.queries
        assert catalog.cases == topo.planted_cases

    def test_exhaustive_queries_all(self):
        topo = build_topology(kth_prefix_config(2))
        catalog, lg, plan = discover(topo, exhaustive=True)
        assert lg.count() == 5 and len(catalog) == 1

    def test_tor1_corpus(self):
        lg = FixtureLookingGlass(FIXTURES)
        summary = parse_summary(lg.summary(TOR1))
        plan = plan_queries(HE, lg.routers(HE), {Asn(19752): [parse_prefix("142.46.150.0/24")]},
                            summaries={TOR1: summary})
        catalog = execute_plan(plan, lg)
        assert [str(c) for c in catalog.cases] == ["<AS6939, tor1, AS19752, 142.46.150.0/24>"]
        assert catalog.entries[0].link_count == 2

    def test_no_cases(self):
        cfg = kth_prefix_config(1)
        cfg["cases"] = []
        catalog, lg, _ = discover(build_topology(cfg))
        assert len(catalog) == 0 and lg.count() == 5

    def test_transport_failure_resumes(self):
        topo = build_topology(random_topology_config(2))
        full, _, plan = discover(topo)
        inner = SimulatedLookingGlass(topo)
        flaky = FlakyLookingGlass(inner, fail_at=7)
        partial = execute_plan(plan, flaky, topo.ixps)
        assert partial.cursor is not None and not partial.complete
        assert partial.queries == 6
        resumed = execute_plan(plan, inner, topo.ixps, cursor=partial.cursor, catalog=partial)
        assert resumed.complete
        assert set(resumed.cases) == set(full.cases)
        assert resumed.queries == full.queries

    def test_budget(self):
        topo = build_topology(random_topology_config(2))
        catalog, lg, _ = discover(topo, budget=3)
        assert lg.count() == 3 and catalog.cursor is not None

    def test_rate_limit_sleeps(self):
        topo = build_topology(kth_prefix_config(4))
        _, _, plan = discover(topo)
        plan = type(plan)(plan.near_as, plan.routers, None, 2.0)
        slept = []
        execute_plan(plan, SimulatedLookingGlass(topo), sleep=slept.append)
        assert slept == [0.5] * 3

    def test_unknown_router_skipped(self):
        class Gone:
            def routes(self, router, ip):
                return render_not_existing(router)
        plan = plan_queries(HE, ["core1.xyz1.he.net"], {Asn(1): [parse_prefix("10.0.0.0/24")]})
        assert len(execute_plan(plan, Gone())) == 0

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10**6))
    def test_sound_and_complete(self, seed):
        topo = build_topology(random_topology_config(seed))
        catalog, _, _ = discover(topo)
        assert set(catalog.cases) == set(topo.planted_cases)

    def test_corpus_round_trip(self, tmp_path):
        topo = build_topology(random_topology_config(5))
        lg = SimulatedLookingGlass(topo)
        targets = {r: [query_target(p) for p in topo.prefixes] for r in topo.border_routers()}
        write_fixture_corpus(lg, topo.border_routers(), targets, tmp_path)
        replay = FixtureLookingGlass(tmp_path)
        for r in topo.border_routers():
            assert replay.summary(r) == lg.summary(r)
            for t in targets[r]:
                assert replay.routes(r, t) == lg.routes(r, t)


class TestConnectivity:
    DIR = IxpDirectory.from_records([{"name": "TorIX", "prefixes": ["206.108.34.0/23"]},
                                     {"name": "SIX", "prefixes": ["198.32.180.0/22"]}])

    def test_kinds(self):
        assert classify_connectivity(case_at(), self.DIR) is Connectivity.IXP
        assert classify_connectivity(case_at(ips=("10.0.0.2", "10.0.0.6")), self.DIR) is Connectivity.DIRECT
        assert classify_connectivity(case_at(ips=("10.0.0.2", "206.108.34.48")), self.DIR) is Connectivity.HYBRID

    def test_matches_synth_plan(self):
        cfg = random_topology_config(9)
        topo = build_topology(cfg)
        for i, c in enumerate(topo.planted_cases):
            assert classify_connectivity(c, topo.ixps).value == ["IXP", "Direct", "Hybrid"][(i // 3) % 3]


class TestCatalog:
    def test_json_round_trip(self):
        e = CatalogEntry(case_at(), Connectivity.IXP, 4)
        assert CatalogEntry.from_json(e.to_json()) == e

    def test_dedup(self):
        cat = CaseCatalog()
        assert cat.add(CatalogEntry(case_at(), Connectivity.IXP))
        assert not cat.add(CatalogEntry(case_at(), Connectivity.IXP, 9))
        assert len(cat) == 1

    def test_save_load(self, tmp_path):
        cat = CaseCatalog([CatalogEntry(case_at(), Connectivity.IXP, 1),
                           CatalogEntry(case_at(prefix="142.46.151.0/24"), Connectivity.HYBRID, 2)])
        cat.save(tmp_path / "c.jsonl")
        assert CaseCatalog.load(tmp_path / "c.jsonl").entries == cat.entries


class TestDiff:
    def test_not_existing(self):
        assert classify_change(case_at(), render_not_existing(TOR1)) is Outcome.ROUTER_NOT_EXISTING

    def test_no_routes(self):
        assert classify_change(case_at(), "% No routes for 142.46.150.1\n") is Outcome.NO_ROUTES

    def test_fixture_unchanged(self):
        lg = FixtureLookingGlass(FIXTURES)
        assert diff_cases([case_at()], lg)[0].outcome is Outcome.EXACTLY_SAME

    def test_fewer_links_is_other(self):
        three = case_at(ips=("198.32.181.46", "206.108.34.48", "10.9.9.9"))
        text = (FIXTURES / "tor1_routes.lg").read_text().split("\n", 1)[1]
        assert classify_change(three, text) is Outcome.OTHER_CHANGE

    def test_far_as_change_is_other(self):
        text = (FIXTURES / "tor1_routes.lg").read_text().split("\n", 1)[1]
        assert classify_change(case_at(far=812), text) is Outcome.OTHER_CHANGE

    @pytest.mark.parametrize("seed", [0, 1])
    def test_mutations(self, seed):
        before, after, expected = mutation_fixture(seed)
        old = build_topology(before).planted_cases
        records = diff_cases(old, SimulatedLookingGlass(build_topology(after)))
        got = {(r.case.near_br.name, str(r.case.dst_prefix)): r.outcome.value for r in records}
        assert got == expected

    def test_summary_totals(self):
        before, after, expected = mutation_fixture(0)
        records = diff_cases(build_topology(before).planted_cases,
                             SimulatedLookingGlass(build_topology(after)))
        s = change_summary(records)
        want = Counter(expected.values())
        assert s["total"] == 20
        assert s["remaining"] == want["ExactlySame"] + want["IncreasedLinks"] + want["SameCountDifferentLinks"]
        assert s["remaining"] + s["disappeared_or_changed"] == s["total"]
        assert all(s[o.value] == want[o.value] for o in Outcome)


def random_catalog(rng):
    entries = []
    for i in range(rng.randint(1, 60)):
        near = Asn(rng.choice([6939, 3356]))
        n = rng.randint(2, 4)
        case = BgpmCase(near, RouterId(f"core1.r{rng.randint(1, 8)}.net", near), Asn(rng.randint(1, 20)),
                        parse_prefix(f"23.{i // 256}.{i % 256}.0/24"),
                        frozenset(parse_ip(f"10.{i}.{k}.1") for k in range(n)))
        entries.append(CatalogEntry(case, rng.choice(list(Connectivity))))
    return entries


class TestStats:
    CENSUS = {Asn(6939): Census(Asn(6939), 100, 20), Asn(3356): Census(Asn(3356), 50, 10)}

    @settings(max_examples=50)
    @given(st.integers(0, 2**32))
    def test_aggregate_matches_recount(self, seed):
        entries = random_catalog(random.Random(seed))
        stats = aggregate_stats(entries, self.CENSUS)
        for asn, s in stats.items():
            mine = [e for e in entries if e.case.near_as == asn]
            assert s.cases == len(mine) == sum(s.split.values()) == sum(s.link_histogram.values())
            assert s.bgpm_neighbors == len({e.case.far_as for e in mine})
            assert s.bgpm_routers == len({e.case.near_br for e in mine})
            assert s.neighbor_ratio == s.bgpm_neighbors / self.CENSUS[asn].total_neighbors

    def test_missing_census(self):
        with pytest.raises(CensusError):
            aggregate_stats([CatalogEntry(case_at(), Connectivity.IXP)], {})

    def test_he_fixture(self):
        catalog = CaseCatalog.load(FIXTURES / "he_catalog.jsonl")
        s = aggregate_stats(catalog, read_census(FIXTURES / "he_census.csv"))[HE]
        assert s.split_text == "1,006/68/14"
        assert round(s.neighbor_ratio * 100, 1) == 10.4
        assert round(s.router_ratio * 100, 1) == 61.6
        assert TABLE_HEADER.count("|") == s.row().count("|")

    def test_census_round_trip(self, tmp_path):
        write_census(self.CENSUS, tmp_path / "c.csv")
        assert read_census(tmp_path / "c.csv") == self.CENSUS


class TestLocation:
    def test_known(self):
        assert router_location("core1.tor1.he.net").country == "Canada"
        loc = router_location(RouterId("core3.hkg1.he.net", HE))
        assert (loc.code, loc.country, loc.region) == ("hkg", "Hong Kong", "Asia")

    def test_unknown(self):
        assert router_location("router7").country == "Unknown"
        assert router_location("core1.zzz1.he.net").region == "Unknown"
