"""Built-in analyses.

``commit-stats``, ``item-activity`` and ``ownership`` run per source;
``ownership-summary`` is the post-processing analysis. Ownership follows
the major/minor contributor rule: an author owning at least ``threshold``
(5% by default) of an item's actions is a major contributor of it, anyone
else who touched it is a minor one.

Records are plain dicts so they can go straight into result files and the
blackboard.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable, Mapping

from .engine import Analysis, AnalysisContext, PostProcessingAnalysis, StudyContext
from .errors import AnalysisError, BlackboardError
from .model import ActionKind, RepositoryModel, action_counts

MAJOR = "MAJOR"
MINOR = "MINOR"
DEFAULT_THRESHOLD = 0.05


def _author_key(name: str, email: str | None) -> tuple[str, str]:
    return (name, email or "")


class CommitStats(Analysis):
    kind = "commit-stats"

    def run(self, ctx: AnalysisContext) -> list:
        model = ctx.model
        per_author: Counter = Counter()
        for e in model.events:
            per_author.update(set(e.authors))
        authors = sorted(model.authors, key=lambda a: a.key)
        records = [
            {"record": "author", "name": a.name, "email": a.email, "events": per_author[a.id]}
            for a in authors
            if per_author[a.id]
        ]
        records.append({
            "record": "totals",
            "events": len(model.events),
            "items": len(model.items),
            "actions": len(model.actions),
        })
        ctx.blackboard.put("totals", {"events": len(model.events)})
        return records


def activity_maps(model: RepositoryModel) -> tuple[list[dict], dict[str, int]]:
    """Weighted (item path, author) counts and item totals, keyed naturally."""
    weighted, totals = action_counts(model)
    items, authors = model.item_by_id, model.author_by_id
    per_author = []
    for (iid, aid), count in weighted.items():
        a = authors[aid]
        per_author.append({"path": items[iid].path, "name": a.name, "email": a.email, "count": count})
    per_author.sort(key=lambda r: (r["path"], _author_key(r["name"], r["email"])))
    return per_author, {items[iid].path: n for iid, n in sorted(totals.items(), key=lambda kv: items[kv[0]].path)}


class ItemActivity(Analysis):
    kind = "item-activity"

    def run(self, ctx: AnalysisContext) -> list:
        model = ctx.model
        by_kind: dict[str, Counter] = defaultdict(Counter)
        for x in model.actions:
            by_kind[x.item][x.kind] += 1
        per_author, totals = activity_maps(model)

        records = []
        for item in sorted(model.items, key=lambda i: i.path):
            counts = by_kind.get(item.id, Counter())
            row = {"record": "item", "path": item.path, "total": sum(counts.values())}
            row.update({k.value: counts[k] for k in ActionKind})
            records.append(row)
        records += [{"record": "author", **r} for r in per_author]

        ctx.blackboard.put("per_author", per_author)
        ctx.blackboard.put("totals", totals)
        return records


def ownership_records(
    per_author: Iterable[Mapping], totals: Mapping[str, int], threshold: float = DEFAULT_THRESHOLD
) -> list[dict]:
    """Classify every (item, author) pair with a nonzero weighted count.

    The threshold is inclusive: ownership equal to it is MAJOR. Records are
    sorted by item path, then descending ownership, then author.
    """
    out = []
    for r in per_author:
        if r["count"] <= 0:
            continue
        total = totals[r["path"]]
        share = r["count"] / total
        out.append({
            "path": r["path"],
            "name": r["name"],
            "email": r["email"],
            "contributions": r["count"],
            "ownership": share,
            "classification": MAJOR if share >= threshold else MINOR,
        })
    out.sort(key=lambda r: (r["path"], -r["ownership"], r["name"], r["email"] or ""))
    return out


def compute_ownership(model: RepositoryModel, threshold: float = DEFAULT_THRESHOLD) -> list[dict]:
    """Ownership straight from a model, without going through the blackboard."""
    per_author, totals = activity_maps(model)
    return ownership_records(per_author, totals, threshold)


class Ownership(Analysis):
    kind = "ownership"
    defaults = {"threshold": DEFAULT_THRESHOLD}

    def run(self, ctx: AnalysisContext) -> list:
        threshold = ctx.params["threshold"]
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not 0 <= threshold <= 1:
            raise AnalysisError("BAD_PARAM", f"threshold must be a number in [0, 1], got {threshold!r}")
        producer = ctx.producer_of(ItemActivity.kind)
        try:
            per_author = ctx.blackboard.get(producer, "per_author")
            totals = ctx.blackboard.get(producer, "totals")
        except BlackboardError as exc:
            if exc.code != "NOT_FOUND":
                raise
            raise AnalysisError("MISSING_DEPENDENCY_DATA", exc.message) from None
        records = ownership_records(per_author, totals, threshold)
        ctx.blackboard.put("records", records)
        return records


def summarize(records: Iterable[Mapping]) -> dict:
    """Item count and mean number of major/minor contributors per item."""
    major: Counter = Counter()
    minor: Counter = Counter()
    items = set()
    for r in records:
        items.add(r["path"])
        (major if r["classification"] == MAJOR else minor)[r["path"]] += 1
    n = len(items)
    return {
        "items": n,
        "major": sum(major.values()),
        "minor": sum(minor.values()),
        "mean_major": sum(major.values()) / n if n else 0.0,
        "mean_minor": sum(minor.values()) / n if n else 0.0,
    }


class OwnershipSummary(PostProcessingAnalysis):
    kind = "ownership-summary"
    # empty: use the study's only ownership analysis
    defaults = {"ownership": ""}

    def run(self, ctx: StudyContext) -> list:
        producer = ctx.params["ownership"]
        if not producer:
            candidates = sorted(n for n, k in ctx.analyses.items() if k == Ownership.kind)
            if len(candidates) != 1:
                raise AnalysisError(
                    "MISSING_DEPENDENCY_DATA",
                    f"need exactly one ownership analysis (set params.ownership), found {candidates}")
            producer = candidates[0]
        rows, every = [], []
        for src in ctx.sources:
            if not ctx.blackboard.has(src.name, producer, "records"):
                raise AnalysisError(
                    "MISSING_DEPENDENCY_DATA", f"no ownership records from {producer!r} for source {src.name!r}")
            records = ctx.blackboard.get(src.name, producer, "records")
            every += [{**r, "path": f"{src.name}\0{r['path']}"} for r in records]
            rows.append({"record": "source", "source": src.name, **summarize(records)})
        study = {"record": "study", "sources": len(rows), **summarize(every)}
        ctx.blackboard.put("summary", study)
        return rows + [study]


REGISTRY = {
    cls.kind: cls for cls in (CommitStats, ItemActivity, Ownership, OwnershipSummary)
}
