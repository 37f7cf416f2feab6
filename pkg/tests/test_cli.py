import argparse
import json
import shutil
import subprocess
import sys
from collections import Counter

import pytest

from bgpmlab.cli import case_slug, main, parse_interval, tick_count, write_atomic
from bgpmlab.inference import CaseCatalog
from bgpmlab.sim import random_topology_config

from conftest import FIXTURES
from topos import mutation_fixture

pytest.importorskip("matplotlib")


def run(*argv):
    return main([str(a) for a in argv])


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> infer -> trace-analyze -> diff -> report on the bundled demo, 12 ticks."""
    root = tmp_path_factory.mktemp("demo")
    sim, inf, ana, dif, rep = (root / n for n in ("sim", "infer", "analysis", "diff", "report"))
    assert run("simulate", "--days", "0.125", "--out", sim) == 0
    assert run("infer", "--input", sim, "--out", inf) == 0
    assert run("trace-analyze", "--traces", sim / "traces.jsonl", "--catalog", inf / "catalog.jsonl",
               "--dns", sim / "dns.csv", "--out", ana) == 0
    assert run("diff", "--catalog", inf / "catalog.jsonl", "--corpus", sim / "lg", "--out", dif) == 0
    assert run("report", "--stats", inf / "stats.json", "--changes", dif / "changes_summary.json",
               "--analysis", ana / "analysis.json", "--out", rep) == 0
    return {"sim": sim, "infer": inf, "analysis": ana, "diff": dif, "report": rep}


class TestHelpers:
    def test_interval(self):
        assert parse_interval("15m") == 900
        assert parse_interval("2h") == 7200
        assert parse_interval("900") == 900
        with pytest.raises(argparse.ArgumentTypeError):
            parse_interval("soon")

    def test_ticks(self):
        assert tick_count(3, 900) == 288
        assert tick_count(1, 900) == 96

    def test_atomic_write(self, tmp_path):
        p = write_atomic(tmp_path / "a" / "b.txt", "x\n")
        assert p.read_text() == "x\n"
        assert [f.name for f in p.parent.iterdir()] == ["b.txt"]


class TestSimulate:
    def test_demo_outputs(self, pipeline):
        sim = pipeline["sim"]
        truth = CaseCatalog.load(sim / "ground_truth.jsonl")
        assert [str(c) for c in truth.cases] == ["<AS6939, tor1, AS19752, 142.46.150.0/24>"]
        manifest = json.loads((sim / "manifest.json").read_text())
        assert manifest["ticks"] == 12
        assert manifest["traces"] == 12 * 2 * 2 * 254
        assert sum(1 for _ in open(sim / "traces.jsonl")) == manifest["traces"]
        assert (sim / "dns.csv").read_text().startswith("ip,name\n")

    def test_three_days(self, tmp_path):
        assert run("simulate", "--days", "3", "--no-traces", "--out", tmp_path) == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["ticks"] == 288
        assert not (tmp_path / "traces.jsonl").exists()

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert run("simulate", "--days", "0.01", "--seed", "4", "--out", tmp_path / name) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run("simulate", "--config", bad, "--out", tmp_path / "o") == 2


class TestInfer:
    def test_recovers_ground_truth(self, pipeline):
        got = CaseCatalog.load(pipeline["infer"] / "catalog.jsonl")
        truth = CaseCatalog.load(pipeline["sim"] / "ground_truth.jsonl")
        assert set(got.cases) == set(truth.cases)
        assert [e.connectivity for e in got] == [e.connectivity for e in truth]
        assert not (pipeline["infer"] / "catalog.cursor").exists()
        stats = json.loads((pipeline["infer"] / "stats.json").read_text())
        assert stats["stats"][0]["split"] == {"IXP": 0, "Direct": 0, "Hybrid": 1}

    def test_fixture_corpus(self, tmp_path):
        corpus = tmp_path / "lg"
        corpus.mkdir()
        for name in ("tor1_summary.lg", "tor1_routes.lg"):
            shutil.copy(FIXTURES / name, corpus)
        (tmp_path / "prefixes.csv").write_text("prefix,asn\n142.46.150.0/24,19752\n24.156.128.0/24,13768\n")
        assert run("infer", "--corpus", corpus, "--prefixes", tmp_path / "prefixes.csv", "--out", tmp_path / "o") == 0
        cat = CaseCatalog.load(tmp_path / "o" / "catalog.jsonl")
        assert [str(c) for c in cat.cases] == ["<AS6939, tor1, AS19752, 142.46.150.0/24>"]
        assert "ratios omitted" in (tmp_path / "o" / "report.txt").read_text()

    def test_empty_corpus(self, tmp_path):
        (tmp_path / "lg").mkdir()
        assert run("infer", "--corpus", tmp_path / "lg", "--out", tmp_path / "o") == 0
        assert (tmp_path / "o" / "catalog.jsonl").read_text() == ""

    def test_budget_leaves_cursor(self, pipeline, tmp_path):
        assert run("infer", "--input", pipeline["sim"], "--no-summary", "--budget", "1", "--out", tmp_path) == 0
        assert (tmp_path / "catalog.cursor").read_text().strip().isdigit()

    def test_missing_corpus(self, tmp_path):
        assert run("infer", "--corpus", tmp_path / "nope", "--out", tmp_path / "o") == 2

    def test_no_inputs(self, tmp_path):
        assert run("infer", "--out", tmp_path) == 2


class TestTraceAnalyze:
    def test_demo_classification(self, pipeline):
        (result,) = json.loads((pipeline["analysis"] / "analysis.json").read_text())["cases"]
        assert result["allocation"] == {"ICMP": "PerSessionUniversal", "UDP": "PerFlowIncludePorts"}
        assert result["faras"] == "SplitPerLink"
        assert not result["skipped"]
        cdir = pipeline["analysis"] / "cases" / result["slug"]
        assert {"summary.json", "delays_ICMP.csv", "delay_by_time_UDP.csv"} <= {p.name for p in cdir.iterdir()}
        assert any(p.suffix == ".svg" for p in cdir.iterdir())
        assert 20 <= result["delay"]["ICMP"]["median_ms"] <= 40

    def test_parallel_jobs_agree(self, tmp_path):
        cfg = write_json(tmp_path / "cfg.json", random_topology_config(1, n_routers=3, n_cases=3))
        sim = tmp_path / "sim"
        assert run("simulate", "--config", cfg, "--days", "0.02", "--out", sim) == 0
        shutil.copy(sim / "ground_truth.jsonl", sim / "catalog.jsonl")
        for jobs in ("1", "3"):
            assert run("trace-analyze", "--input", sim, "--jobs", jobs, "--no-plots", "--out", tmp_path / jobs) == 0
        a = json.loads((tmp_path / "1" / "analysis.json").read_text())
        assert len(a["cases"]) == 3
        assert a == json.loads((tmp_path / "3" / "analysis.json").read_text())

    def test_low_coverage_skipped(self, demo_cfg, tmp_path):
        demo_cfg["unreachable"] = [f"142.46.150.{h}" for h in range(1, 6)]
        cfg = write_json(tmp_path / "cfg.json", demo_cfg)
        sim = tmp_path / "sim"
        assert run("simulate", "--config", cfg, "--days", "0.02", "--protocols", "ICMP", "--out", sim) == 0
        shutil.copy(sim / "ground_truth.jsonl", sim / "catalog.jsonl")
        assert run("trace-analyze", "--input", sim, "--out", tmp_path / "a") == 0
        result = json.loads((tmp_path / "a" / "analysis.json").read_text())
        assert result["skipped"] == 1
        (case,) = result["cases"]
        assert all(c["min_reachable"] == 249 for c in case["coverage"].values())


class TestDiff:
    def test_unchanged(self, pipeline):
        summary = json.loads((pipeline["diff"] / "changes_summary.json").read_text())
        assert summary["ExactlySame"] == summary["total"] == 1

    def test_router_removed(self, pipeline, tmp_path):
        corpus = tmp_path / "lg"
        shutil.copytree(pipeline["sim"] / "lg", corpus)
        for f in corpus.glob("core1.tor1*"):
            f.unlink()
        assert run("diff", "--catalog", pipeline["infer"] / "catalog.jsonl", "--corpus", corpus,
                   "--out", tmp_path) == 0
        line = json.loads((tmp_path / "changes.jsonl").read_text())
        assert line["outcome"] == "RouterNotExisting"

    def test_mutation_counts(self, tmp_path):
        before, after, expected = mutation_fixture(3)
        for name, cfg in (("before", before), ("after", after)):
            path = write_json(tmp_path / f"{name}.json", cfg)
            assert run("simulate", "--config", path, "--no-traces", "--out", tmp_path / name) == 0
        assert run("infer", "--input", tmp_path / "before", "--out", tmp_path / "inf") == 0
        assert len(CaseCatalog.load(tmp_path / "inf" / "catalog.jsonl")) == len(expected)
        assert run("diff", "--catalog", tmp_path / "inf" / "catalog.jsonl", "--corpus", tmp_path / "after" / "lg",
                   "--out", tmp_path / "d") == 0
        summary = json.loads((tmp_path / "d" / "changes_summary.json").read_text())
        for outcome, n in Counter(expected.values()).items():
            assert summary[outcome] == n


class TestReport:
    def test_summary_text(self, pipeline, capsys):
        text = (pipeline["report"] / "summary.txt").read_text()
        assert "Deployment" in text and "Revisit" in text and "Traceroute analysis" in text
        assert "0/0/1" in text

    def test_nothing_to_report(self, tmp_path):
        assert run("report", "--out", tmp_path) == 2

    def test_module_entry_point(self, pipeline):
        proc = subprocess.run([sys.executable, "-m", "bgpmlab", "report", "--input", pipeline["infer"],
                               "--out", pipeline["report"]], capture_output=True, text=True)
        assert proc.returncode == 0 and "Deployment" in proc.stdout


def test_case_slug():
    from bgpmlab.core import Asn, BgpmCase, RouterId, parse_ip, parse_prefix
    he = Asn(6939)
    case = BgpmCase(he, RouterId("core1.tor1.he.net", he), Asn(19752), parse_prefix("142.46.150.0/24"),
                    {parse_ip("198.32.181.46"), parse_ip("206.108.34.48")})
    slug = case_slug(case)
    assert "/" not in slug and "19752" in slug
