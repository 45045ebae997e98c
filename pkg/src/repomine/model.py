"""Unified, VCS-agnostic history model.

A :class:`RepositoryModel` is the complete history of one source: who
(:class:`Author`) changed what (:class:`Item`) in which revision
(:class:`Event`), one :class:`Action` per modified file. Events form a DAG
through their parent lists, so both linear and merge-heavy histories fit.

Models are immutable. Build them either directly (tests, custom extractors)
or through :func:`assemble`, which takes natural-key commit records and
assigns canonical ids so that two models describing the same history
compare equal.
"""

from __future__ import annotations

import enum
import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from .errors import ModelError


class ActionKind(str, enum.Enum):
    CREATE = "CREATE"
    EDIT = "EDIT"
    DELETE = "DELETE"


@dataclass(frozen=True)
class SourceRef:
    id: str
    name: str
    location: str = ""


@dataclass(frozen=True)
class Author:
    id: str
    name: str
    email: str | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.name, self.email or "")


@dataclass(frozen=True)
class Item:
    id: str
    path: str


@dataclass(frozen=True)
class Action:
    id: str
    event: str
    item: str
    kind: ActionKind
    ordinal: int


@dataclass(frozen=True)
class Event:
    id: str
    native_id: str
    parents: tuple[str, ...]
    authors: tuple[str, ...]
    timestamp: int
    message: str = ""
    actions: tuple[str, ...] = ()


@dataclass(frozen=True)
class RepositoryModel:
    source: SourceRef
    authors: tuple[Author, ...] = ()
    items: tuple[Item, ...] = ()
    events: tuple[Event, ...] = ()
    actions: tuple[Action, ...] = ()

    # Lookups assume unique ids; run validate() first on untrusted input.
    @cached_property
    def author_by_id(self) -> dict[str, Author]:
        return {a.id: a for a in self.authors}

    @cached_property
    def item_by_id(self) -> dict[str, Item]:
        return {i.id: i for i in self.items}

    @cached_property
    def event_by_id(self) -> dict[str, Event]:
        return {e.id: e for e in self.events}

    @cached_property
    def action_by_id(self) -> dict[str, Action]:
        return {a.id: a for a in self.actions}


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    offending_id: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.rule for v in self.violations}


def _path_problem(path: str) -> str | None:
    if not path:
        return "empty path"
    if path.startswith("/"):
        return "leading '/'"
    if "\\" in path:
        return "backslash separator"
    if any(part in ("", ".", "..") for part in path.split("/")):
        return "non-normalized segment"
    return None


def _kahn(
    nodes: Sequence[Hashable],
    parents: Callable[[Hashable], Iterable[Hashable]],
    sort_key: Callable[[Hashable], tuple],
) -> tuple[list, list]:
    """Topological sort, smallest ``sort_key`` first among ready nodes.

    Parents outside ``nodes`` are ignored. Returns ``(ordered, leftover)``;
    ``leftover`` is nonempty iff the parent relation has a cycle.
    """
    known = set(nodes)
    pending = {}
    children = defaultdict(list)
    for n in nodes:
        ps = {p for p in parents(n) if p in known}
        pending[n] = len(ps)
        for p in ps:
            children[p].append(n)
    heap = [(sort_key(n), n) for n in nodes if pending[n] == 0]
    heapq.heapify(heap)
    ordered = []
    while heap:
        _, n = heapq.heappop(heap)
        ordered.append(n)
        for c in children[n]:
            pending[c] -= 1
            if pending[c] == 0:
                heapq.heappush(heap, (sort_key(c), c))
    done = set(ordered)
    leftover = sorted((n for n in nodes if n not in done), key=sort_key)
    return ordered, leftover


def _cycles_among(leftover: list, parents: Callable[[Hashable], Iterable[Hashable]]) -> list[list]:
    """Find distinct cycles among nodes Kahn could not emit.

    Every leftover node has a leftover parent, so walking parents from any of
    them must eventually revisit a node.
    """
    remaining = set(leftover)
    seen_in_cycle: set = set()
    cycles = []
    for start in leftover:
        if start in seen_in_cycle:
            continue
        path, index = [], {}
        node = start
        while node not in index and node not in seen_in_cycle:
            index[node] = len(path)
            path.append(node)
            node = next(p for p in parents(node) if p in remaining)
        if node in index:
            cycle = path[index[node]:]
            cycles.append(cycle)
            seen_in_cycle.update(cycle)
    return cycles


def validate(model: RepositoryModel) -> ValidationReport:
    """Check a model for every structural rule; never raises."""
    out: list[Violation] = []

    def dup_ids(objs, what):
        counts = Counter(o.id for o in objs)
        for oid, n in counts.items():
            if n > 1:
                out.append(Violation("DUPLICATE_ID", f"{what} id {oid!r} used {n} times", oid))
        return {o.id: o for o in objs}

    authors = dup_ids(model.authors, "author")
    items = dup_ids(model.items, "item")
    events = dup_ids(model.events, "event")
    actions = dup_ids(model.actions, "action")

    seen_keys: dict[tuple[str, str], str] = {}
    for a in model.authors:
        if not a.name:
            out.append(Violation("EMPTY_NAME", "author name is empty", a.id))
        if a.key in seen_keys and seen_keys[a.key] != a.id:
            out.append(Violation("DUPLICATE_AUTHOR", f"author {a.name} <{a.email}> listed twice", a.id))
        seen_keys.setdefault(a.key, a.id)

    seen_paths: dict[str, str] = {}
    for i in model.items:
        problem = _path_problem(i.path)
        if problem:
            out.append(Violation("BAD_PATH", f"item path {i.path!r}: {problem}", i.id))
        if i.path in seen_paths and seen_paths[i.path] != i.id:
            out.append(Violation("DUPLICATE_PATH", f"path {i.path!r} used by two items", i.id))
        seen_paths.setdefault(i.path, i.id)

    seen_native: dict[str, str] = {}
    listed_by: dict[str, list[str]] = defaultdict(list)
    for e in model.events:
        if e.native_id in seen_native and seen_native[e.native_id] != e.id:
            out.append(Violation("DUPLICATE_NATIVE_ID", f"native id {e.native_id!r} used twice", e.id))
        seen_native.setdefault(e.native_id, e.id)
        if not e.authors:
            out.append(Violation("EMPTY_AUTHORS", "event has no authors", e.id))
        if len(set(e.authors)) != len(e.authors):
            out.append(Violation("DUPLICATE_EVENT_AUTHOR", "event lists an author twice", e.id))
        for aid in e.authors:
            if aid not in authors:
                out.append(Violation("DANGLING_REF", f"event author {aid!r} does not exist", e.id))
        for p in e.parents:
            if p not in events:
                out.append(Violation("DANGLING_REF", f"parent event {p!r} does not exist", e.id))
        if len(set(e.parents)) != len(e.parents):
            out.append(Violation("DUPLICATE_PARENT", "event lists a parent twice", e.id))
        for xid in e.actions:
            listed_by[xid].append(e.id)
            if xid not in actions:
                out.append(Violation("DANGLING_REF", f"action {xid!r} does not exist", e.id))

    ordinals: dict[str, Counter] = defaultdict(Counter)
    for x in model.actions:
        if x.item not in items:
            out.append(Violation("DANGLING_REF", f"action item {x.item!r} does not exist", x.id))
        if x.event not in events:
            out.append(Violation("DANGLING_REF", f"action event {x.event!r} does not exist", x.id))
        if not isinstance(x.kind, ActionKind):
            out.append(Violation("BAD_KIND", f"unknown action kind {x.kind!r}", x.id))
        if not isinstance(x.ordinal, int) or x.ordinal < 0:
            out.append(Violation("BAD_ORDINAL", f"ordinal {x.ordinal!r} is not a nonnegative integer", x.id))
        ordinals[x.event][x.ordinal] += 1
        owners = listed_by.get(x.id, [])
        if len(owners) != 1:
            out.append(Violation(
                "ACTION_OWNERSHIP", f"action listed by {len(owners)} events, expected exactly 1", x.id))
        elif owners[0] != x.event:
            out.append(Violation(
                "ACTION_OWNERSHIP", f"action names event {x.event!r} but is listed by {owners[0]!r}", x.id))
    for eid, counts in ordinals.items():
        for ordinal, n in counts.items():
            if n > 1:
                out.append(Violation("DUPLICATE_ORDINAL", f"ordinal {ordinal} used {n} times", eid))

    def parents_of(eid):
        return events[eid].parents

    _, leftover = _kahn(list(events), parents_of, lambda eid: (eid,))
    for cycle in _cycles_among(leftover, parents_of):
        members = ", ".join(cycle)
        out.append(Violation("CYCLE", f"parent relation is cyclic: {members}", min(cycle)))

    return ValidationReport(tuple(out))


def _event_sort_key(e: Event) -> tuple:
    return (e.timestamp, e.native_id, e.id)


def topo_order(model: RepositoryModel) -> list[str]:
    """Event ids with every parent before its children.

    Among events that are ready at the same time the one with the smallest
    ``(timestamp, native_id)`` goes first, which makes the order unique.
    """
    by_id = model.event_by_id
    ordered, leftover = _kahn(
        list(by_id), lambda eid: by_id[eid].parents, lambda eid: _event_sort_key(by_id[eid]))
    if leftover:
        raise ModelError("CYCLE", f"parent relation is cyclic among {', '.join(leftover)}")
    return ordered


def action_counts(model: RepositoryModel) -> tuple[dict[tuple[str, str], float], dict[str, int]]:
    """Weighted (item, author) action counts and per-item totals.

    Each action is split evenly over the k authors of its event (1/k each),
    so the weights for one item always add up to its action total. Sums are
    kept as exact fractions and only converted to float at the end.
    """
    exact: dict[tuple[str, str], Fraction] = defaultdict(Fraction)
    totals: dict[str, int] = defaultdict(int)
    events = model.event_by_id
    for x in model.actions:
        authors = events[x.event].authors
        share = Fraction(1, len(authors))
        for aid in authors:
            exact[(x.item, aid)] += share
        totals[x.item] += 1
    return {k: float(v) for k, v in exact.items()}, dict(totals)


# --- construction from natural keys ---------------------------------------


@dataclass(frozen=True)
class CommitRecord:
    """One revision described purely by natural keys (no model ids)."""

    native_id: str
    parents: tuple[str, ...]
    authors: tuple[tuple[str, str | None], ...]
    timestamp: int
    message: str = ""
    changes: tuple[tuple[ActionKind, str], ...] = field(default=())


def assemble(
    source: SourceRef,
    commits: Iterable[CommitRecord],
    *,
    authors: Iterable[tuple[str, str | None]] = (),
    paths: Iterable[str] = (),
) -> RepositoryModel:
    """Build a model with canonical ids from natural-key commit records.

    Authors are numbered by (name, email), items by path and events by
    topological order, so equal histories produce equal models regardless
    of the order records arrive in. ``authors`` and ``paths`` declare extra
    authors and items that no commit references. Parents that name no known commit are
    kept as-is and will show up as dangling references in validate().
    A cyclic parent relation does not raise here; cyclic events are
    appended in (timestamp, native_id) order for validate() to report.
    """
    commits = list(commits)
    by_native = {c.native_id: c for c in commits}
    ordered, leftover = _kahn(
        list(by_native),
        lambda n: by_native[n].parents,
        lambda n: (by_native[n].timestamp, n),
    )
    ordered += leftover

    author_keys = sorted({(n, e) for c in commits for n, e in c.authors} | set(authors), key=lambda k: (k[0], k[1] or ""))
    author_ids = {k: f"a{i}" for i, k in enumerate(author_keys)}
    paths = sorted({p for c in commits for _, p in c.changes} | set(paths))
    item_ids = {p: f"i{i}" for i, p in enumerate(paths)}
    event_ids = {n: f"e{i}" for i, n in enumerate(ordered)}

    events, actions = [], []
    for native in ordered:
        c = by_native[native]
        eid = event_ids[native]
        xids = []
        for ordinal, (kind, path) in enumerate(c.changes):
            xid = f"{eid}.{ordinal}"
            actions.append(Action(xid, eid, item_ids[path], ActionKind(kind), ordinal))
            xids.append(xid)
        events.append(Event(
            id=eid,
            native_id=native,
            parents=tuple(event_ids.get(p, p) for p in c.parents),
            authors=tuple(author_ids[a] for a in c.authors),
            timestamp=c.timestamp,
            message=c.message,
            actions=tuple(xids),
        ))
    return RepositoryModel(
        source=source,
        authors=tuple(Author(author_ids[k], k[0], k[1]) for k in author_keys),
        items=tuple(Item(item_ids[p], p) for p in paths),
        events=tuple(events),
        actions=tuple(actions),
    )


def to_commit_records(model: RepositoryModel) -> list[CommitRecord]:
    """Inverse of :func:`assemble`: express a model through natural keys only."""
    authors = model.author_by_id
    items = model.item_by_id
    events = model.event_by_id
    actions = model.action_by_id
    records = []
    for e in model.events:
        xs = sorted((actions[x] for x in e.actions), key=lambda x: x.ordinal)
        records.append(CommitRecord(
            native_id=e.native_id,
            parents=tuple(events[p].native_id for p in e.parents),
            authors=tuple((authors[a].name, authors[a].email) for a in e.authors),
            timestamp=e.timestamp,
            message=e.message,
            changes=tuple((x.kind, items[x.item].path) for x in xs),
        ))
    return records


def natural_key(model: RepositoryModel) -> tuple:
    """A hashable value that is equal for models differing only in ids."""
    records = sorted(to_commit_records(model), key=lambda c: c.native_id)
    return (
        (model.source.name, model.source.location),
        tuple(sorted((a.name, a.email or "", a.email is None) for a in model.authors)),
        tuple(sorted(i.path for i in model.items)),
        tuple(
            (c.native_id, c.parents, c.authors, c.timestamp, c.message,
             tuple((k.value, p) for k, p in c.changes))
            for c in records
        ),
    )


def summary_counts(model: RepositoryModel) -> Mapping[str, int]:
    return {"events": len(model.events), "items": len(model.items), "authors": len(model.authors)}
