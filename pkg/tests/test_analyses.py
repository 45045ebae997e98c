import json
import random
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repomine.analyses import (
    MAJOR,
    MINOR,
    REGISTRY,
    compute_ownership,
    ownership_records,
)
from repomine.engine import AnalysisDecl, StudyConfig, execute, plan
from repomine.extractors import ExtractorKind, ExtractorSpec, extract_git
from repomine.model import ActionKind, CommitRecord, SourceRef, assemble
from tests.helpers import ALICE, BOB, counts_model, random_model, replicate

A = AnalysisDecl
STANDARD = [
    A("commit-stats", "commit-stats"),
    A("item-activity", "item-activity"),
    A("ownership", "ownership", ("item-activity",)),
]
SUMMARY = A("ownership-summary", "ownership-summary")


def run(models, decls=STANDARD, post=(SUMMARY,), tmp_path=None, workers=1):
    cfg = StudyConfig(
        sources=[ExtractorSpec(ExtractorKind.MODEL_FILE, "-", m.source.name) for m in models],
        analyses=list(decls), post_processing=list(post), workers=workers,
        output_dir=str(tmp_path or "unused"))
    return execute(plan(cfg, REGISTRY), models, cfg, write_outputs=tmp_path is not None)


def classify_oracle(counts: dict[str, int], threshold="0.05"):
    """Exact rational oracle: share = k / total, MAJOR iff share >= threshold."""
    total = sum(counts.values())
    limit = Fraction(threshold)
    return {name: (k / total, MAJOR if Fraction(k, total) >= limit else MINOR) for name, k in counts.items()}


def by_name(records):
    return {r["name"]: (r["ownership"], r["classification"]) for r in records}


class TestCommitStats:
    def test_empty(self):
        report = run([counts_model({})], STANDARD[:1], post=())
        assert report.blackboard["src"]["commit-stats"]["totals"] == {"events": 0}

    def test_fixture(self, five_repo, tmp_path):
        model = extract_git(ExtractorSpec(ExtractorKind.GIT, str(five_repo.path), "fx"))
        run([model], STANDARD[:1], post=(), tmp_path=tmp_path)
        records = json.loads((tmp_path / "fx" / "commit-stats.json").read_text())["records"]
        assert [(r["name"], r["events"]) for r in records if r["record"] == "author"] == [("alice", 3), ("bob", 2)]
        assert records[-1] == {"record": "totals", "events": 5, "items": 2, "actions": 5}

    def test_multi_author_event_counts_once_per_author(self):
        m = assemble(SourceRef("s", "s", ""), [CommitRecord("x", (), (ALICE, BOB), 1, "", ((ActionKind.CREATE, "f"),))])
        report = run([m], STANDARD[:1], post=())
        assert report.ok


class TestItemActivity:
    def test_empty(self):
        report = run([counts_model({})], STANDARD[1:2], post=())
        assert report.blackboard["src"]["item-activity"] == {"per_author": [], "totals": {}}

    def test_counts(self):
        report = run([counts_model({"alice": 7, "bob": 2, "carol": 1})], STANDARD[1:2], post=())
        bb = report.blackboard["src"]["item-activity"]
        assert bb["totals"] == {"F": 10}
        assert {r["name"]: r["count"] for r in bb["per_author"]} == {"alice": 7.0, "bob": 2.0, "carol": 1.0}

    def test_rename_fixture(self, rename_repo, tmp_path):
        model = extract_git(ExtractorSpec(ExtractorKind.GIT, str(rename_repo.path), "rn"))
        run([model], STANDARD[1:2], post=(), tmp_path=tmp_path)
        records = json.loads((tmp_path / "rn" / "item-activity.json").read_text())["records"]
        items = {r["path"]: (r["CREATE"], r["EDIT"], r["DELETE"], r["total"]) for r in records if r["record"] == "item"}
        assert items == {"a.txt": (1, 0, 1, 2), "c.txt": (1, 0, 0, 1)}


class TestOwnership:
    def test_single_author(self):
        recs = compute_ownership(counts_model({"alice": 4}))
        assert by_name(recs) == {"alice": (1.0, MAJOR)}

    def test_inclusive_threshold_at_exactly_five_percent(self):
        recs = compute_ownership(counts_model({"big": 95, "edge": 5}))
        assert by_name(recs)["edge"] == (0.05, MAJOR)

    def test_sixty_thirty_one_five_four(self):
        counts = {"a": 60, "b": 31, "c": 5, "d": 4}
        expected = classify_oracle(counts)
        assert expected == {"a": (0.6, MAJOR), "b": (0.31, MAJOR), "c": (0.05, MAJOR), "d": (0.04, MINOR)}
        assert by_name(compute_ownership(counts_model(counts))) == expected

    def test_sort_order(self):
        m = assemble(SourceRef("s", "s", ""), [
            CommitRecord("1", (), (("zed", None),), 1, "", ((ActionKind.CREATE, "b"), (ActionKind.CREATE, "a"))),
            CommitRecord("2", ("1",), (("amy", None),), 2, "", ((ActionKind.EDIT, "a"),)),
            CommitRecord("3", ("2",), (("bo", None),), 3, "", ((ActionKind.EDIT, "a"),)),
            CommitRecord("4", ("3",), (("bo", None),), 4, "", ((ActionKind.EDIT, "a"),)),
        ])
        recs = compute_ownership(m)
        assert [(r["path"], r["name"]) for r in recs] == [("a", "bo"), ("a", "amy"), ("a", "zed"), ("b", "zed")]

    def test_threshold_param(self):
        report = run([counts_model({"a": 90, "b": 10})],
                     [STANDARD[1], A("own", "ownership", ("item-activity",), {"threshold": 0.2})], post=())
        recs = report.blackboard["src"]["own"]["records"]
        assert [r["classification"] for r in recs] == [MAJOR, MINOR]

    def test_bad_threshold(self):
        report = run([counts_model({"a": 1})],
                     [STANDARD[1], A("own", "ownership", ("item-activity",), {"threshold": 2})], post=())
        assert "BAD_PARAM" in report.record("src", "own").message

    def test_missing_dependency(self):
        report = run([counts_model({"a": 1})], [A("own", "ownership")], post=())
        rec = report.record("src", "own")
        assert rec.status == "FAILED" and "MISSING_DEPENDENCY_DATA" in rec.message

    def test_transitive_dependency_is_enough(self):
        decls = [STANDARD[1], A("mid", "commit-stats", ("item-activity",)), A("own", "ownership", ("mid",))]
        assert run([counts_model({"a": 1})], decls, post=()).ok

    def test_normalization_and_scale_invariance(self):
        rng = random.Random(31)
        for _ in range(40):
            m = random_model(rng)
            recs = compute_ownership(m)
            sums = {}
            for r in recs:
                sums[r["path"]] = sums.get(r["path"], 0.0) + r["ownership"]
            assert all(abs(s - 1.0) <= 1e-9 for s in sums.values())
            tripled = compute_ownership(replicate(m, 3))
            assert [(r["path"], r["name"], r["classification"]) for r in tripled] == \
                   [(r["path"], r["name"], r["classification"]) for r in recs]
            assert all(abs(x["ownership"] - y["ownership"]) <= 1e-12 for x, y in zip(tripled, recs))

    def test_blackboard_path_equals_direct(self):
        rng = random.Random(17)
        models = [replace(random_model(rng), source=SourceRef(f"r{i}", f"r{i}", "")) for i in range(5)]
        report = run(models, workers=3)
        for m in models:
            assert report.blackboard[m.source.name]["ownership"]["records"] == compute_ownership(m)

    def test_records_helper_skips_zero_counts(self):
        per = [{"path": "f", "name": "a", "email": None, "count": 0.0},
               {"path": "f", "name": "b", "email": None, "count": 2.0}]
        assert [r["name"] for r in ownership_records(per, {"f": 2})] == ["b"]


class TestOwnershipSummary:
    def summary(self, models):
        report = run(models)
        assert report.ok, [r.message for r in report.records]
        return report.blackboard

    def test_single_author_single_item(self):
        bb = self.summary([counts_model({"a": 1})])
        study = bb["_global"]["ownership-summary"]["summary"]
        assert (study["items"], study["mean_major"], study["mean_minor"]) == (1, 1.0, 0.0)

    def test_two_fixture_sources(self, tmp_path):
        models = [counts_model({"alice": 7, "bob": 2, "carol": 1}, name=n) for n in ("one", "two")]
        run(models, tmp_path=tmp_path)
        rows = json.loads((tmp_path / "_study" / "ownership-summary.json").read_text())["records"]
        per_source = [(r["source"], r["items"], r["mean_major"], r["mean_minor"]) for r in rows[:-1]]
        assert per_source == [("one", 1, 3.0, 0.0), ("two", 1, 3.0, 0.0)]
        assert rows[-1]["record"] == "study" and rows[-1]["items"] == 2 and rows[-1]["sources"] == 2

    def test_sixty_thirty_one_five_four(self):
        bb = self.summary([counts_model({"a": 60, "b": 31, "c": 5, "d": 4})])
        study = bb["_global"]["ownership-summary"]["summary"]
        assert (study["mean_major"], study["mean_minor"]) == (3.0, 1.0)

    def test_empty_source(self):
        study = self.summary([counts_model({})])["_global"]["ownership-summary"]["summary"]
        assert (study["items"], study["mean_major"], study["mean_minor"]) == (0, 0.0, 0.0)

    def test_missing_ownership(self):
        report = run([counts_model({"a": 1})], STANDARD[:2])
        post = report.records[-1]
        assert post.status == "FAILED" and "MISSING_DEPENDENCY_DATA" in post.message

    def test_ownership_failed_on_a_source(self):
        decls = STANDARD[:2] + [A("ownership", "ownership", ("item-activity",), {"threshold": -1})]
        post = run([counts_model({"a": 1})], decls).records[-1]
        assert post.status == "FAILED" and "MISSING_DEPENDENCY_DATA" in post.message


def test_registry_contents():
    assert sorted(REGISTRY) == ["commit-stats", "item-activity", "ownership", "ownership-summary"]


@pytest.mark.parametrize("workers", [1, 4])
def test_result_files_are_byte_identical_on_rerun(tmp_path, workers):
    rng = random.Random(40)
    models = [replace(random_model(rng), source=SourceRef(f"r{i}", f"r{i}", "")) for i in range(3)]
    run(models, tmp_path=tmp_path / "a", workers=workers)
    run(models, tmp_path=tmp_path / "b", workers=1)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.json"))
    assert len(files) == 3 * 3 + 1
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=8), st.integers(2, 5))
def test_ownership_properties(counts, times):
    named = {f"dev{i}": k for i, k in enumerate(counts)}
    model = counts_model(named)
    recs = compute_ownership(model)
    assert abs(sum(r["ownership"] for r in recs) - 1.0) <= 1e-9
    assert by_name(recs) == {n: v for n, v in classify_oracle(named).items()}
    scaled = compute_ownership(counts_model({n: k * times for n, k in named.items()}))
    assert {n: c for n, (_, c) in by_name(scaled).items()} == {n: c for n, (_, c) in by_name(recs).items()}
