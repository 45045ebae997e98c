"""Source extractors: build a :class:`RepositoryModel` from a repository.

Git histories are read through the ``git`` command line with one fixed
``git log`` invocation; saved model files are loaded through
:mod:`repomine.persistence`.
"""

from __future__ import annotations

import enum
import os
import re
import subprocess
from dataclasses import dataclass, replace

from .errors import ExtractionError
from .model import ActionKind, CommitRecord, RepositoryModel, SourceRef, assemble
from .persistence import load_model


class ExtractorKind(str, enum.Enum):
    GIT = "git"
    MODEL_FILE = "model-file"


@dataclass(frozen=True)
class ExtractorSpec:
    kind: ExtractorKind
    location: str
    source_name: str = ""

    # Where to actually look on disk; differs from ``location`` when the
    # location is written relative to a config file.
    resolved: str | None = None

    @property
    def path(self) -> str:
        return self.resolved or self.location


@dataclass(frozen=True)
class RawCommitRecord:
    hash: str
    parent_hashes: tuple[str, ...]
    author_name: str
    author_email: str
    author_timestamp: int
    subject: str
    raw_changes: tuple[tuple[str, str], ...] = ()


LOG_FORMAT = "%x01%H%x1f%P%x1f%an%x1f%ae%x1f%at%x1f%s"
LOG_ARGS = ("log", "--all", "--topo-order", "--no-renames", "--raw", "--date=unix", f"--pretty=format:{LOG_FORMAT}")

_HASH = re.compile(r"[0-9a-f]{40}")
_RAW_LINE = re.compile(rb":(\d{6}) (\d{6}) ([0-9a-f.]+) ([0-9a-f.]+) ([AMDT])\t(.*)")
_STATUS = {"A": ActionKind.CREATE, "M": ActionKind.EDIT, "T": ActionKind.EDIT, "D": ActionKind.DELETE}
_ESCAPES = {b"a": 7, b"b": 8, b"t": 9, b"n": 10, b"v": 11, b"f": 12, b"r": 13, b'"': 34, b"\\": 92}


def _decode(data: bytes) -> str:
    return data.decode("utf-8", errors="replace")


def _unquote_path(raw: bytes) -> str:
    """Undo git's C-style quoting of unusual paths (``"dir/\\303\\251.txt"``)."""
    if not (raw.startswith(b'"') and raw.endswith(b'"') and len(raw) >= 2):
        return _decode(raw)
    body, out, i = raw[1:-1], bytearray(), 0
    while i < len(body):
        ch = body[i:i + 1]
        if ch != b"\\":
            out += ch
            i += 1
            continue
        nxt = body[i + 1:i + 2]
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif re.fullmatch(rb"[0-7]{3}", body[i + 1:i + 4]):
            out.append(int(body[i + 1:i + 4], 8))
            i += 4
        else:
            raise ValueError(f"bad escape in quoted path {raw!r}")
    return _decode(bytes(out))


def parse_git_log(output: bytes) -> list[RawCommitRecord]:
    """Parse the output of ``git log`` run with :data:`LOG_ARGS`."""
    commits: list[RawCommitRecord] = []
    current: dict | None = None

    def flush():
        if current is not None:
            commits.append(RawCommitRecord(raw_changes=tuple(current.pop("changes")), **current))

    offset = 0
    for line in output.split(b"\n"):
        line_offset = offset
        offset += len(line) + 1
        if not line:
            continue

        def fail(why: str):
            raise ExtractionError(
                "PARSE_ERROR", f"{why}: {line[:200]!r}", where=f"byte offset {line_offset}")

        if line.startswith(b"\x01"):
            flush()
            fields = line[1:].split(b"\x1f", 5)
            if len(fields) != 6:
                fail("commit header needs 6 fields")
            sha, parents, name, email, stamp, subject = (_decode(f) for f in fields)
            parent_list = tuple(parents.split())
            if not _HASH.fullmatch(sha) or not all(_HASH.fullmatch(p) for p in parent_list):
                fail("malformed commit hash")
            try:
                when = int(stamp)
            except ValueError:
                fail("malformed author timestamp")
            current = dict(
                hash=sha, parent_hashes=parent_list, author_name=name, author_email=email,
                author_timestamp=when, subject=subject, changes=[])
        elif line.startswith(b":"):
            m = _RAW_LINE.fullmatch(line)
            if m is None or current is None:
                fail("unexpected raw change line")
            try:
                path = _unquote_path(m.group(6))
            except ValueError as exc:
                fail(str(exc))
            current["changes"].append((m.group(5).decode("ascii"), path))
        else:
            fail("unexpected log line")
    flush()
    return commits


def _git(args: list[str], location: str) -> subprocess.CompletedProcess:
    try:
        return subprocess.run(["git", "-C", location, *args], capture_output=True, check=False)
    except FileNotFoundError:
        raise ExtractionError("TOOL_FAILURE", "git executable not found") from None


def _check_repository(location: str) -> None:
    if not os.path.isdir(location):
        raise ExtractionError("NOT_A_REPOSITORY", f"{location} is not a directory")
    probe = _git(["rev-parse", "--git-dir"], location)
    if probe.returncode != 0:
        raise ExtractionError(
            "NOT_A_REPOSITORY", f"{location} is not a git repository: {_decode(probe.stderr).strip()}")


def to_commit_record(raw: RawCommitRecord) -> CommitRecord:
    # Merge commits carry no actions: their changes are already recorded on
    # the branches being merged.
    changes = () if len(raw.parent_hashes) > 1 else tuple((_STATUS[s], p) for s, p in raw.raw_changes)
    return CommitRecord(
        native_id=raw.hash,
        parents=raw.parent_hashes,
        authors=((raw.author_name, raw.author_email),),
        timestamp=raw.author_timestamp,
        message=raw.subject,
        changes=changes,
    )


def extract_git(spec: ExtractorSpec) -> RepositoryModel:
    """Extract every commit reachable from any ref of a git repository."""
    _check_repository(spec.path)
    proc = _git(list(LOG_ARGS), spec.path)
    if proc.returncode != 0:
        raise ExtractionError(
            "TOOL_FAILURE", f"git log exited with {proc.returncode}: {_decode(proc.stderr).strip()}")
    raws = parse_git_log(proc.stdout)
    name = spec.source_name or os.path.basename(os.path.abspath(spec.path))
    return assemble(SourceRef(name, name, spec.location), (to_commit_record(r) for r in raws))


def extract_model_file(spec: ExtractorSpec) -> RepositoryModel:
    model = load_model(spec.path)
    if spec.source_name and spec.source_name != model.source.name:
        model = replace(model, source=replace(model.source, id=spec.source_name, name=spec.source_name))
    return model


def extract(spec: ExtractorSpec) -> RepositoryModel:
    if spec.kind == ExtractorKind.GIT:
        return extract_git(spec)
    if spec.kind == ExtractorKind.MODEL_FILE:
        return extract_model_file(spec)
    raise ValueError(f"unknown extractor kind {spec.kind!r}")


def item_content(spec: ExtractorSpec, event_native_id: str, item_path: str) -> bytes:
    """Exact bytes of ``item_path`` as of revision ``event_native_id``."""
    if spec.kind != ExtractorKind.GIT:
        raise ValueError("item_content needs a git source")
    _check_repository(spec.path)
    rev = _git(["rev-parse", "--verify", "--quiet", f"{event_native_id}^{{commit}}"], spec.path)
    if rev.returncode != 0:
        raise ExtractionError("NO_SUCH_REVISION", f"no revision {event_native_id!r} in {spec.location}")
    sha = _decode(rev.stdout).strip()
    kind = _git(["cat-file", "-t", f"{sha}:{item_path}"], spec.path)
    shown = _git(["show", f"{sha}:{item_path}"], spec.path) if kind.stdout.strip() == b"blob" else None
    if shown is None or shown.returncode != 0:
        raise ExtractionError(
            "NO_SUCH_PATH_AT_REVISION", f"{item_path!r} does not exist at {event_native_id}")
    return shown.stdout
