"""Fixture builders shared by the test modules."""

from __future__ import annotations

import os
import random
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path

from repomine.model import (
    ActionKind,
    CommitRecord,
    RepositoryModel,
    SourceRef,
    assemble,
)

ALICE = ("alice", "alice@example.com")
BOB = ("bob", "bob@example.com")

# Every commit's content, in script order. Timestamps are author = committer.
A_V1 = b"hello\n"
A_V2 = b"hello\nworld\n"
B_V1 = b"b one\n"
B_V2 = b"b one\nb two\n"


def git_env(who: tuple[str, str], when: int) -> dict:
    env = dict(os.environ)
    env.update({
        "GIT_CONFIG_GLOBAL": os.devnull,
        "GIT_CONFIG_NOSYSTEM": "1",
        "GIT_AUTHOR_NAME": who[0],
        "GIT_AUTHOR_EMAIL": who[1],
        "GIT_COMMITTER_NAME": who[0],
        "GIT_COMMITTER_EMAIL": who[1],
        "GIT_AUTHOR_DATE": f"@{when} +0000",
        "GIT_COMMITTER_DATE": f"@{when} +0000",
    })
    return env


class Repo:
    def __init__(self, path: Path):
        self.path = path
        self.hashes: dict[str, str] = {}
        path.mkdir(parents=True, exist_ok=True)
        self.git(["init", "-q", "-b", "main"], ALICE, 0)

    def git(self, args, who=ALICE, when=0, check=True) -> subprocess.CompletedProcess:
        return subprocess.run(["git", *args], cwd=self.path, env=git_env(who, when),
                              capture_output=True, check=check)

    def write(self, name: str, data: bytes) -> None:
        (self.path / name).write_bytes(data)

    def commit(self, label: str, who, when: int) -> str:
        self.git(["add", "-A"], who, when)
        self.git(["commit", "-q", "--allow-empty", "-m", label], who, when)
        sha = self.git(["rev-parse", "HEAD"]).stdout.decode().strip()
        self.hashes[label] = sha
        return sha


T0 = 1_700_000_000


def make_five_commit_repo(path: Path) -> Repo:
    """c1 adds a.txt; c2 edits a.txt, adds b.txt; c3 (branch) edits b.txt;
    c4 (main) deletes b.txt; c5 merges the branch into main keeping b.txt deleted."""
    repo = Repo(path)
    repo.write("a.txt", A_V1)
    repo.commit("c1", ALICE, T0 + 100)
    repo.write("a.txt", A_V2)
    repo.write("b.txt", B_V1)
    repo.commit("c2", ALICE, T0 + 200)
    repo.git(["checkout", "-q", "-b", "feature"])
    repo.write("b.txt", B_V2)
    repo.commit("c3", BOB, T0 + 300)
    repo.git(["checkout", "-q", "main"])
    (path / "b.txt").unlink()
    repo.commit("c4", ALICE, T0 + 400)
    repo.git(["merge", "-q", "--no-commit", "feature"], BOB, T0 + 500, check=False)
    repo.git(["rm", "-q", "--ignore-unmatch", "b.txt"], BOB, T0 + 500)
    repo.commit("c5", BOB, T0 + 500)
    return repo


def expected_five_commit_model(repo: Repo, name: str = "fixture", location: str | None = None) -> RepositoryModel:
    """The model written by hand from the fixture script above."""
    h = repo.hashes
    C, E, D = ActionKind.CREATE, ActionKind.EDIT, ActionKind.DELETE
    commits = [
        CommitRecord(h["c1"], (), (ALICE,), T0 + 100, "c1", ((C, "a.txt"),)),
        CommitRecord(h["c2"], (h["c1"],), (ALICE,), T0 + 200, "c2", ((E, "a.txt"), (C, "b.txt"))),
        CommitRecord(h["c3"], (h["c2"],), (BOB,), T0 + 300, "c3", ((E, "b.txt"),)),
        CommitRecord(h["c4"], (h["c2"],), (ALICE,), T0 + 400, "c4", ((D, "b.txt"),)),
        CommitRecord(h["c5"], (h["c4"], h["c3"]), (BOB,), T0 + 500, "c5", ()),
    ]
    loc = str(repo.path) if location is None else location
    return assemble(SourceRef(name, name, loc), commits)


def make_rename_repo(path: Path) -> Repo:
    repo = Repo(path)
    repo.write("a.txt", A_V1)
    repo.commit("r1", ALICE, T0 + 100)
    repo.git(["mv", "a.txt", "c.txt"])
    repo.commit("r2", ALICE, T0 + 200)
    return repo


# --- synthetic models ---------------------------------------------------------


def history(counts: dict[str, int], path: str = "F") -> list[CommitRecord]:
    """Single-author commits: ``counts[name]`` EDIT actions on ``path`` each."""
    commits, n, parent = [], 0, ()
    for name, k in counts.items():
        for _ in range(k):
            sha = f"{n:040x}"
            kind = ActionKind.CREATE if n == 0 else ActionKind.EDIT
            commits.append(CommitRecord(sha, parent, ((name, f"{name}@example.com"),), T0 + n, "", ((kind, path),)))
            parent, n = (sha,), n + 1
    return commits


def counts_model(counts: dict[str, int], path: str = "F", name: str = "src") -> RepositoryModel:
    return assemble(SourceRef(name, name, ""), history(counts, path))


def random_commits(rng: random.Random, max_events: int = 50, max_authors: int = 10,
                   max_paths: int = 12, multi_author: bool = True) -> list[CommitRecord]:
    authors = [(f"dev{i}", rng.choice([f"dev{i}@example.com", None])) for i in range(rng.randint(1, max_authors))]
    paths = [f"src/m{i}.py" if i % 3 else f"f{i}.txt" for i in range(rng.randint(1, max_paths))]
    commits: list[CommitRecord] = []
    for n in range(rng.randint(0, max_events)):
        sha = "%040x" % rng.getrandbits(160)
        k_par = min(len(commits), rng.choice([0, 1, 1, 1, 2]) if commits else 0)
        parents = tuple(c.native_id for c in rng.sample(commits, k_par))
        k_auth = rng.randint(1, min(3, len(authors))) if multi_author else 1
        who = tuple(rng.sample(authors, k_auth))
        touched = rng.sample(paths, rng.randint(0, min(4, len(paths))))
        changes = tuple((rng.choice(list(ActionKind)), p) for p in touched)
        commits.append(CommitRecord(sha, parents, who, T0 + rng.randint(0, 10_000), f"m{n}", changes))
    return commits


def random_model(rng: random.Random, **kw) -> RepositoryModel:
    return assemble(SourceRef("rnd", "rnd", "somewhere"), random_commits(rng, **kw))


def relabel(model: RepositoryModel, rng: random.Random) -> RepositoryModel:
    """Same history with different, shuffled ids and collection orders."""
    def fresh(objs, prefix):
        ids = [f"{prefix}{n}" for n in range(len(objs))]
        rng.shuffle(ids)
        return dict(zip((o.id for o in objs), ids))

    am, im, em, xm = (fresh(model.authors, "A"), fresh(model.items, "I"),
                      fresh(model.events, "E"), fresh(model.actions, "X"))
    authors = [replace(a, id=am[a.id]) for a in model.authors]
    items = [replace(i, id=im[i.id]) for i in model.items]
    events = [replace(e, id=em[e.id], parents=tuple(em[p] for p in e.parents),
                      authors=tuple(am[a] for a in e.authors), actions=tuple(xm[x] for x in e.actions))
              for e in model.events]
    actions = [replace(x, id=xm[x.id], event=em[x.event], item=im[x.item]) for x in model.actions]
    for seq in (authors, items, events, actions):
        rng.shuffle(seq)
    return RepositoryModel(model.source, tuple(authors), tuple(items), tuple(events), tuple(actions))


def replicate(model: RepositoryModel, times: int) -> RepositoryModel:
    """Every action repeated ``times`` times, as extra single-purpose commits."""
    from repomine.model import to_commit_records

    out = []
    for c in to_commit_records(model):
        out.append(c)
        for r in range(1, times):
            out.append(replace(c, native_id=f"{c.native_id}-{r}", parents=(c.native_id,)))
    return assemble(model.source, out)
