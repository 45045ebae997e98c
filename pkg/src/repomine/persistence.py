"""Canonical model files.

A model file is one JSON document with sorted keys, no insignificant
whitespace and a single trailing newline. Arrays are in canonical order
(authors by name/email, items by path, events topologically) and ids are
never written: events reference parents by native id, actions reference
items by path and authors are written inline as ``{"name", "email"}``. The
same history therefore always serializes to the same bytes.
"""

from __future__ import annotations

import json
import os
from typing import Any

import jsonschema

from .errors import RepomineError, SchemaError
from .model import (
    ActionKind,
    CommitRecord,
    RepositoryModel,
    SourceRef,
    ValidationReport,
    assemble,
    to_commit_records,
    topo_order,
    validate,
)

FORMAT_VERSION = 1

_AUTHOR = {
    "type": "object",
    "properties": {"name": {"type": "string", "minLength": 1}, "email": {"type": ["string", "null"]}},
    "required": ["name", "email"],
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "format_version": {"type": "integer"},
        "source": {
            "type": "object",
            "properties": {"name": {"type": "string", "minLength": 1}, "location": {"type": "string"}},
            "required": ["name", "location"],
            "additionalProperties": False,
        },
        "authors": {"type": "array", "items": _AUTHOR},
        "items": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"path": {"type": "string", "minLength": 1}},
                "required": ["path"],
                "additionalProperties": False,
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "native_id": {"type": "string", "minLength": 1},
                    "parents": {"type": "array", "items": {"type": "string"}},
                    "authors": {"type": "array", "items": _AUTHOR, "minItems": 1},
                    "timestamp": {"type": "integer"},
                    "message": {"type": "string"},
                    "actions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "ordinal": {"type": "integer", "minimum": 0},
                                "kind": {"enum": [k.value for k in ActionKind]},
                                "item_path": {"type": "string", "minLength": 1},
                            },
                            "required": ["ordinal", "kind", "item_path"],
                            "additionalProperties": False,
                        },
                    },
                },
                "required": ["native_id", "parents", "authors", "timestamp", "message", "actions"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["format_version", "source", "authors", "items", "events"],
    "additionalProperties": False,
}


class InvalidModel(RepomineError):
    """A model (being saved or loaded) fails validate()."""

    def __init__(self, report: ValidationReport):
        self.report = report
        first = "; ".join(f"{v.rule} {v.offending_id}: {v.message}" for v in report.violations[:3])
        super().__init__("INVALID_MODEL", f"{len(report.violations)} violation(s): {first}")


def canonical_bytes(value: Any) -> bytes:
    """Canonical JSON encoding used for every file this package writes."""
    text = json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def _pointer(parts) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def model_to_document(model: RepositoryModel) -> dict:
    report = validate(model)
    if not report.ok:
        raise InvalidModel(report)
    records = {r.native_id: r for r in to_commit_records(model)}
    by_id = model.event_by_id

    def author_obj(pair):
        return {"name": pair[0], "email": pair[1]}

    events = []
    for eid in topo_order(model):
        r = records[by_id[eid].native_id]
        events.append({
            "native_id": r.native_id,
            "parents": list(r.parents),
            "authors": [author_obj(a) for a in r.authors],
            "timestamp": r.timestamp,
            "message": r.message,
            "actions": [
                {"ordinal": n, "kind": kind.value, "item_path": path}
                for n, (kind, path) in enumerate(r.changes)
            ],
        })
    authors = sorted(model.authors, key=lambda a: a.key)
    return {
        "format_version": FORMAT_VERSION,
        "source": {"name": model.source.name, "location": model.source.location},
        "authors": [{"name": a.name, "email": a.email} for a in authors],
        "items": [{"path": p} for p in sorted(i.path for i in model.items)],
        "events": events,
    }


def dumps_model(model: RepositoryModel) -> bytes:
    return canonical_bytes(model_to_document(model))


def save_model(model: RepositoryModel, path: str | os.PathLike) -> int:
    """Write ``model`` canonically to ``path``; returns the byte count."""
    data = dumps_model(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def document_to_model(doc: Any, *, check: bool = True) -> RepositoryModel:
    """Turn a parsed model document into a model.

    Structural and reference problems raise :class:`SchemaError` with a
    JSON pointer to the offending field. With ``check`` (the default) the
    result must also pass validate(), otherwise :class:`InvalidModel`.
    """
    if isinstance(doc, dict) and "format_version" in doc:
        version = doc["format_version"]
        if version != FORMAT_VERSION or isinstance(version, bool):
            raise SchemaError(
                f"format_version {version!r} is not supported (expected {FORMAT_VERSION})",
                where="/format_version", code="UNSUPPORTED_VERSION")
    errors = sorted(
        jsonschema.Draft202012Validator(MODEL_SCHEMA).iter_errors(doc),
        key=lambda e: list(map(str, e.absolute_path)),
    )
    if errors:
        err = errors[0]
        raise SchemaError(err.message, where=_pointer(err.absolute_path))

    def author_key(obj):
        return (obj["name"], obj["email"])

    declared_authors = set()
    for n, a in enumerate(doc["authors"]):
        if author_key(a) in declared_authors:
            raise SchemaError("duplicate author", where=_pointer(["authors", n]))
        declared_authors.add(author_key(a))
    paths = set()
    for n, i in enumerate(doc["items"]):
        if i["path"] in paths:
            raise SchemaError(f"duplicate item path {i['path']!r}", where=_pointer(["items", n]))
        paths.add(i["path"])
    natives = set()
    for n, e in enumerate(doc["events"]):
        if e["native_id"] in natives:
            raise SchemaError(f"duplicate native_id {e['native_id']!r}", where=_pointer(["events", n, "native_id"]))
        natives.add(e["native_id"])

    commits = []
    for n, e in enumerate(doc["events"]):
        for k, parent in enumerate(e["parents"]):
            if parent not in natives:
                raise SchemaError(f"unknown parent {parent!r}", where=_pointer(["events", n, "parents", k]))
        for k, a in enumerate(e["authors"]):
            if author_key(a) not in declared_authors:
                raise SchemaError("author not declared in /authors", where=_pointer(["events", n, "authors", k]))
        changes = []
        for k, x in enumerate(sorted(e["actions"], key=lambda x: x["ordinal"])):
            if x["ordinal"] != k:
                raise SchemaError(
                    "action ordinals must be 0..n-1 without gaps or repeats",
                    where=_pointer(["events", n, "actions"]))
            if x["item_path"] not in paths:
                idx = e["actions"].index(x)
                raise SchemaError(
                    f"unknown item {x['item_path']!r}", where=_pointer(["events", n, "actions", idx, "item_path"]))
            changes.append((ActionKind(x["kind"]), x["item_path"]))
        commits.append(CommitRecord(
            native_id=e["native_id"],
            parents=tuple(e["parents"]),
            authors=tuple(author_key(a) for a in e["authors"]),
            timestamp=e["timestamp"],
            message=e["message"],
            changes=tuple(changes),
        ))
    src = doc["source"]
    model = assemble(
        SourceRef(src["name"], src["name"], src["location"]),
        commits,
        authors=declared_authors,
        paths=paths,
    )
    if check:
        report = validate(model)
        if not report.ok:
            raise InvalidModel(report)
    return model


def loads_model(data: bytes | str, *, check: bool = True) -> RepositoryModel:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return document_to_model(doc, check=check)


def load_model(path: str | os.PathLike, *, check: bool = True) -> RepositoryModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read(), check=check)
