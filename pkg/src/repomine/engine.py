"""Study configuration, planning, the blackboard and the parallel scheduler.

A study runs a set of per-source analyses over every source, each one after
the analyses it depends on (on the same source) have finished, with at most
``workers`` executions in flight. When all of them are done the optional
post-processing analysis runs once over every source.

Analyses exchange data through a :class:`Blackboard`. Entries are
write-once and a reader may only address producers it (transitively)
depends on, so what an analysis sees never depends on scheduling.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import jsonschema

from .errors import AnalysisError, BlackboardError, PlanError, SchemaError
from .extractors import ExtractorKind, ExtractorSpec, extract
from .model import RepositoryModel, SourceRef
from .persistence import canonical_bytes, save_model

log = logging.getLogger(__name__)

GLOBAL = "_global"
STUDY_DIR = "_study"
MODELS_DIR = "_models"

_NAME = r"^[A-Za-z0-9][A-Za-z0-9._-]*$"
_SCALAR = {"type": ["string", "number", "boolean", "null"]}
_DECL = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "pattern": _NAME},
        "kind": {"type": "string", "minLength": 1},
        "depends_on": {"type": "array", "items": {"type": "string"}},
        "params": {"type": "object", "additionalProperties": _SCALAR},
    },
    "required": ["name", "kind"],
    "additionalProperties": False,
}
_POST_DECL = {**_DECL, "properties": {k: v for k, v in _DECL["properties"].items() if k != "depends_on"}}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "sources": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string", "pattern": _NAME},
                    "kind": {"enum": [k.value for k in ExtractorKind]},
                    "location": {"type": "string", "minLength": 1},
                },
                "required": ["name", "kind", "location"],
                "additionalProperties": False,
            },
        },
        "analyses": {"type": "array", "items": _DECL},
        "post_processing": {"oneOf": [_POST_DECL, {"type": "array", "items": _POST_DECL}]},
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string", "minLength": 1},
    },
    "required": ["sources", "analyses", "output_dir"],
    "additionalProperties": False,
}


# --- analysis plugin interfaces --------------------------------------------


class Analysis:
    """Base class for per-source analyses.

    Subclasses set ``kind`` and ``defaults`` and implement :meth:`run`,
    returning the records written to the analysis's result file.
    """

    kind: str = ""
    defaults: Mapping[str, Any] = {}

    def run(self, ctx: AnalysisContext) -> list:
        raise NotImplementedError


class PostProcessingAnalysis:
    """Base class for the study-level analysis that runs once at the end."""

    kind: str = ""
    defaults: Mapping[str, Any] = {}

    def run(self, ctx: StudyContext) -> list:
        raise NotImplementedError


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisDecl:
    name: str
    kind: str
    depends_on: tuple[str, ...] = ()
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class StudyConfig:
    sources: list[ExtractorSpec]
    analyses: list[AnalysisDecl]
    # More than one entry is a configuration error reported by plan().
    post_processing: list[AnalysisDecl] = field(default_factory=list)
    workers: int = 1
    output_dir: str = "output"


def _pairs_hook(pairs):
    out: dict = {}
    for key, value in pairs:
        if key in out:
            if key != "post_processing":
                raise SchemaError(f"duplicate key {key!r}")
            prev = out[key]
            out[key] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            out[key] = value
    return out


def _decl(obj: Mapping) -> AnalysisDecl:
    return AnalysisDecl(obj["name"], obj["kind"], tuple(obj.get("depends_on", ())), dict(obj.get("params", {})))


def parse_config(doc: Any, base_dir: str = ".") -> StudyConfig:
    """Build a :class:`StudyConfig` from a parsed config document.

    Relative source locations and ``output_dir`` are resolved against
    ``base_dir`` for disk access; the locations recorded in models stay as
    written.
    """
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = "/" + "/".join(map(str, err.absolute_path))
        raise SchemaError(err.message, where=where)
    post = doc.get("post_processing", [])
    post = post if isinstance(post, list) else [post]
    return StudyConfig(
        sources=[
            ExtractorSpec(ExtractorKind(s["kind"]), s["location"], s["name"],
                          resolved=os.path.join(base_dir, s["location"]))
            for s in doc["sources"]
        ],
        analyses=[_decl(a) for a in doc["analyses"]],
        post_processing=[_decl(p) for p in post],
        workers=doc.get("workers", 1),
        output_dir=os.path.join(base_dir, doc["output_dir"]),
    )


def load_config(path: str | os.PathLike) -> StudyConfig:
    try:
        with open(path, "rb") as fh:
            doc = json.loads(fh.read().decode("utf-8"), object_pairs_hook=_pairs_hook)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc, os.path.dirname(os.path.abspath(path)))


# --- planning ---------------------------------------------------------------


@dataclass(frozen=True)
class ExecutionPlan:
    stages: tuple[tuple[AnalysisDecl, ...], ...]
    post: AnalysisDecl | None
    # analysis or post name -> class implementing its kind
    implementations: Mapping[str, type]
    # analysis name -> every analysis it transitively depends on
    closure: Mapping[str, frozenset[str]]

    @property
    def analyses(self) -> list[AnalysisDecl]:
        return [d for stage in self.stages for d in stage]

    def stage_of(self, name: str) -> int:
        for n, stage in enumerate(self.stages):
            if any(d.name == name for d in stage):
                return n
        raise KeyError(name)


def _find_cycle(deps: Mapping[str, Sequence[str]]) -> list[str] | None:
    white, grey, black = 0, 1, 2
    color = dict.fromkeys(deps, white)
    stack: list[str] = []

    def visit(node):
        color[node] = grey
        stack.append(node)
        for d in sorted(deps[node]):
            if color[d] == grey:
                return stack[stack.index(d):]
            if color[d] == white:
                found = visit(d)
                if found:
                    return found
        stack.pop()
        color[node] = black
        return None

    for node in sorted(deps):
        if color[node] == white:
            found = visit(node)
            if found:
                return found
    return None


def plan(config: StudyConfig, registry: Mapping[str, type]) -> ExecutionPlan:
    """Check a study configuration and layer its analyses into stages.

    Each analysis sits one stage after its deepest dependency; analyses
    without dependencies are in stage 0. Raises :class:`PlanError` with
    code DUPLICATE_NAME, MULTIPLE_POST_PROCESSING, UNKNOWN_KIND,
    UNKNOWN_DEPENDENCY, UNKNOWN_PARAM or CYCLE.
    """
    seen_sources = set()
    for s in config.sources:
        if s.source_name in seen_sources:
            raise PlanError("DUPLICATE_NAME", f"source name {s.source_name!r} used twice")
        seen_sources.add(s.source_name)
    if len(config.post_processing) > 1:
        names = ", ".join(p.name for p in config.post_processing)
        raise PlanError("MULTIPLE_POST_PROCESSING", f"only one post-processing analysis allowed, got: {names}")
    if config.workers < 1:
        raise PlanError("BAD_WORKERS", f"workers must be >= 1, got {config.workers}")

    post = config.post_processing[0] if config.post_processing else None
    decls = {}
    for d in config.analyses + ([post] if post else []):
        if d.name in decls:
            raise PlanError("DUPLICATE_NAME", f"analysis name {d.name!r} used twice")
        decls[d.name] = d

    implementations = {}
    for d in decls.values():
        impl = registry.get(d.kind)
        wanted = PostProcessingAnalysis if d is post else Analysis
        if impl is None:
            raise PlanError("UNKNOWN_KIND", f"analysis {d.name!r} has unknown kind {d.kind!r}")
        if not issubclass(impl, wanted):
            role = "a post-processing" if d is post else "a per-source"
            raise PlanError("UNKNOWN_KIND", f"analysis {d.name!r}: kind {d.kind!r} is not {role} analysis")
        unknown = sorted(set(d.params) - set(impl.defaults))
        if unknown:
            raise PlanError("UNKNOWN_PARAM", f"analysis {d.name!r} has unknown params {unknown}")
        implementations[d.name] = impl

    deps = {d.name: d.depends_on for d in config.analyses}
    for name, ds in deps.items():
        for dep in ds:
            if dep not in deps:
                raise PlanError("UNKNOWN_DEPENDENCY", f"analysis {name!r} depends on unknown {dep!r}")
    cycle = _find_cycle(deps)
    if cycle:
        raise PlanError("CYCLE", f"dependency cycle among: {', '.join(sorted(cycle))}")

    stage: dict[str, int] = {}
    closure: dict[str, frozenset[str]] = {}

    def place(name):
        if name not in stage:
            stage[name] = 1 + max((place(d) for d in deps[name]), default=-1)
            closure[name] = frozenset(deps[name]).union(*(closure[d] for d in deps[name]))
        return stage[name]

    for name in sorted(deps):
        place(name)
    if post:
        closure[post.name] = frozenset(deps)
    depth = max(stage.values(), default=-1) + 1
    stages = tuple(
        tuple(sorted((decls[n] for n in deps if stage[n] == k), key=lambda d: d.name)) for k in range(depth)
    )
    return ExecutionPlan(stages, post, implementations, closure)


# --- blackboard ---------------------------------------------------------------


def _check_tree(value: Any, where: str = "") -> None:
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise BlackboardError("INVALID_VALUE", f"non-finite float at {where or '/'}")
        return
    if isinstance(value, list):
        for n, v in enumerate(value):
            _check_tree(v, f"{where}/{n}")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise BlackboardError("INVALID_VALUE", f"non-string key {k!r} at {where or '/'}")
            _check_tree(v, f"{where}/{k}")
        return
    raise BlackboardError("INVALID_VALUE", f"unsupported type {type(value).__name__} at {where or '/'}")


class Blackboard:
    """Write-once store keyed by (scope, producer, key).

    ``closure`` maps each reader to the producers it may read from. Values
    are copied on the way in and out, so neither side can mutate what the
    other sees.
    """

    def __init__(self, closure: Mapping[str, frozenset[str]]):
        self._closure = closure
        self._entries: dict[tuple[str, str, str], Any] = {}
        self._lock = threading.Lock()

    def put(self, scope: str, producer: str, key: str, value: Any) -> None:
        _check_tree(value)
        triple = (scope, producer, key)
        stored = copy.deepcopy(value)
        with self._lock:
            if triple in self._entries:
                raise BlackboardError("DUPLICATE_WRITE", f"{producer}/{key} already written in scope {scope}")
            self._entries[triple] = stored

    def get(self, scope: str, producer: str, key: str, *, reader: str) -> Any:
        if producer != reader and producer not in self._closure.get(reader, ()):
            raise BlackboardError(
                "UNDECLARED_DEPENDENCY", f"{reader!r} reads from {producer!r} without depending on it")
        with self._lock:
            try:
                value = self._entries[(scope, producer, key)]
            except KeyError:
                raise BlackboardError("NOT_FOUND", f"no entry {producer}/{key} in scope {scope}") from None
        return copy.deepcopy(value)

    def has(self, scope: str, producer: str, key: str) -> bool:
        with self._lock:
            return (scope, producer, key) in self._entries

    def snapshot(self) -> dict:
        """Everything stored, nested as ``{scope: {producer: {key: value}}}``."""
        out: dict = {}
        with self._lock:
            for (scope, producer, key), value in sorted(self._entries.items(), key=lambda kv: kv[0]):
                out.setdefault(scope, {}).setdefault(producer, {})[key] = copy.deepcopy(value)
        return out


class SourceBoard:
    """A per-source analysis's handle on the blackboard, bound to its scope."""

    def __init__(self, bb: Blackboard, scope: str, reader: str):
        self._bb, self.scope, self.reader = bb, scope, reader

    def put(self, key: str, value: Any) -> None:
        self._bb.put(self.scope, self.reader, key, value)

    def get(self, producer: str, key: str) -> Any:
        return self._bb.get(self.scope, producer, key, reader=self.reader)


class StudyBoard:
    """The post-processing analysis's handle: reads any scope, writes GLOBAL."""

    def __init__(self, bb: Blackboard, reader: str):
        self._bb, self.reader = bb, reader

    def put(self, key: str, value: Any) -> None:
        self._bb.put(GLOBAL, self.reader, key, value)

    def get(self, scope: str, producer: str, key: str) -> Any:
        return self._bb.get(scope, producer, key, reader=self.reader)

    def has(self, scope: str, producer: str, key: str) -> bool:
        return self._bb.has(scope, producer, key)


@dataclass
class AnalysisContext:
    name: str
    source: SourceRef
    model: RepositoryModel
    params: Mapping[str, Any]
    blackboard: SourceBoard
    # every analysis this one transitively depends on: name -> kind
    dependencies: Mapping[str, str]

    def producer_of(self, kind: str) -> str:
        """Name of the dependency of the given kind, for blackboard reads."""
        names = sorted(n for n, k in self.dependencies.items() if k == kind)
        if len(names) != 1:
            found = "none" if not names else ", ".join(names)
            raise AnalysisError(
                "MISSING_DEPENDENCY_DATA", f"{self.name!r} needs exactly one {kind!r} dependency, found {found}")
        return names[0]


@dataclass
class StudyContext:
    name: str
    sources: list[SourceRef]
    models: Mapping[str, RepositoryModel]
    params: Mapping[str, Any]
    blackboard: StudyBoard
    # every per-source analysis in the study: name -> kind
    analyses: Mapping[str, str]


# --- execution ----------------------------------------------------------------


@dataclass
class RunRecord:
    source: str
    analysis: str
    status: str = "PENDING"
    message: str = ""
    skipped: bool = False
    start: float | None = None
    end: float | None = None
    output: str | None = None

    @property
    def duration(self) -> float:
        if self.start is None or self.end is None:
            return 0.0
        return self.end - self.start


@dataclass
class StudyReport:
    records: list[RunRecord]
    max_in_flight: int
    wall_time: float
    blackboard: dict
    models: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status == "OK" for r in self.records)

    @property
    def manifest(self) -> list[str]:
        return self.models + [r.output for r in self.records if r.output]

    def record(self, source: str, analysis: str) -> RunRecord:
        return next(r for r in self.records if r.source == source and r.analysis == analysis)

    def table(self) -> str:
        rows = [("source", "analysis", "status", "ms", "output/message")]
        for r in self.records:
            detail = r.output or r.message
            rows.append((r.source, r.analysis, r.status, f"{r.duration * 1000:.1f}", detail))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row[:4], widths)) + "  " + row[4] for row in rows]
        return "\n".join(line.rstrip() for line in lines)


def _write_result(output_dir: str, folder: str, analysis: str, records: list) -> str:
    target = os.path.join(output_dir, folder)
    os.makedirs(target, exist_ok=True)
    path = os.path.join(target, f"{analysis}.json")
    with open(path, "wb") as fh:
        fh.write(canonical_bytes({"analysis": analysis, "source": folder, "records": records}))
    return path


def execute(
    plan: ExecutionPlan,
    models: Sequence[RepositoryModel],
    config: StudyConfig,
    *,
    write_outputs: bool = True,
) -> StudyReport:
    """Run every planned analysis on every model, then post-processing.

    A (source, analysis) pair starts only once all its dependencies on that
    source finished OK; if one fails its dependents on that source are
    reported FAILED (skipped) and every other source carries on. Only I/O
    errors while writing result files make this function raise.
    """
    if len(models) != len(config.sources):
        raise ValueError(f"{len(models)} models for {len(config.sources)} sources")
    decls = {d.name: d for d in plan.analyses}
    kinds = {d.name: d.kind for d in decls.values()}
    dependents: dict[str, list[str]] = {n: [] for n in decls}
    for d in decls.values():
        for dep in d.depends_on:
            dependents[dep].append(d.name)
    order = {d.name: (plan.stage_of(d.name), d.name) for d in decls.values()}

    bb = Blackboard(plan.closure)
    names = [m.source.name for m in models]
    records = {(s, n): RunRecord(names[s], n) for s in range(len(models)) for n in sorted(decls, key=order.get)}
    waiting = {(s, n): len(set(decls[n].depends_on)) for (s, n) in records}

    lock = threading.Lock()
    in_flight = 0
    peak = 0
    t0 = time.perf_counter()

    def run_one(s: int, name: str) -> None:
        nonlocal in_flight, peak
        rec = records[(s, name)]
        decl = decls[name]
        with lock:
            in_flight += 1
            peak = max(peak, in_flight)
        rec.start = time.perf_counter() - t0
        try:
            try:
                ctx = AnalysisContext(
                    name=name,
                    source=models[s].source,
                    model=models[s],
                    params={**plan.implementations[name].defaults, **decl.params},
                    blackboard=SourceBoard(bb, names[s], name),
                    dependencies={d: kinds[d] for d in plan.closure[name]},
                )
                result = plan.implementations[name]().run(ctx)
                _check_tree(result)
            except Exception as exc:  # analyses are plugin code; contain their failures
                log.warning("analysis %s failed on %s: %s", name, names[s], exc)
                rec.status, rec.message = "FAILED", f"{type(exc).__name__}: {exc}"
                return
            if write_outputs:
                rec.output = _write_result(config.output_dir, names[s], name, result)
            rec.status = "OK"
        finally:
            rec.end = time.perf_counter() - t0
            with lock:
                in_flight -= 1

    def skip_dependents(s: int, name: str) -> None:
        for child in dependents[name]:
            rec = records[(s, child)]
            if rec.status == "PENDING":
                rec.status, rec.skipped = "FAILED", True
                rec.message = f"skipped: dependency {name!r} failed"
                skip_dependents(s, child)

    with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="analysis") as pool:
        running: dict[Future, tuple[int, str]] = {}

        def submit(keys):
            for key in sorted(keys, key=lambda k: (k[0], order[k[1]])):
                running[pool.submit(run_one, *key)] = key

        submit([k for k, n in waiting.items() if n == 0])
        while running:
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            ready = []
            for fut in done:
                s, name = running.pop(fut)
                fut.result()  # re-raises OSError from result writing
                if records[(s, name)].status != "OK":
                    skip_dependents(s, name)
                    continue
                for child in set(dependents[name]):
                    waiting[(s, child)] -= 1
                    if waiting[(s, child)] == 0 and records[(s, child)].status == "PENDING":
                        ready.append((s, child))
            submit(ready)

    ordered = list(records.values())
    if plan.post is not None:
        ordered.append(_run_post(plan, models, config, bb, kinds, t0, write_outputs))
        peak = max(peak, 1)
    return StudyReport(ordered, peak, time.perf_counter() - t0, bb.snapshot())


def _run_post(plan, models, config, bb, kinds, t0, write_outputs) -> RunRecord:
    post = plan.post
    rec = RunRecord(STUDY_DIR, post.name)
    rec.start = time.perf_counter() - t0
    try:
        ctx = StudyContext(
            name=post.name,
            sources=[m.source for m in models],
            models={m.source.name: m for m in models},
            params={**plan.implementations[post.name].defaults, **post.params},
            blackboard=StudyBoard(bb, post.name),
            analyses=dict(kinds),
        )
        result = plan.implementations[post.name]().run(ctx)
        _check_tree(result)
    except Exception as exc:
        log.warning("post-processing %s failed: %s", post.name, exc)
        rec.status, rec.message = "FAILED", f"{type(exc).__name__}: {exc}"
    else:
        if write_outputs:
            rec.output = _write_result(config.output_dir, STUDY_DIR, post.name, result)
        rec.status = "OK"
    rec.end = time.perf_counter() - t0
    return rec


def extract_all(config: StudyConfig) -> list[RepositoryModel]:
    """Extract every configured source, up to ``workers`` at a time."""
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(extract, config.sources))


def run_study(config: StudyConfig, registry: Mapping[str, type] | None = None) -> StudyReport:
    """Plan, extract, save model files, execute. Planning errors come first."""
    if registry is None:
        from .analyses import REGISTRY as registry
    execution = plan(config, registry)
    models = extract_all(config)
    model_dir = os.path.join(config.output_dir, MODELS_DIR)
    os.makedirs(model_dir, exist_ok=True)
    saved = []
    for m in models:
        path = os.path.join(model_dir, f"{m.source.name}.json")
        save_model(m, path)
        saved.append(path)
    report = execute(execution, models, config)
    report.models = saved
    return report
