"""Shared test machinery: brute-force state queries and the random soak engine."""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass, field

from vfsafs import (
    ROOT_INO,
    Afs,
    ErrorCode,
    FaultPlan,
    FsError,
    Meta,
    Mode,
    PreconditionError,
    SeekWhence,
    Shadow,
    UserContext,
    Vfs,
    check_all,
)

NAMES = ("a", "b", "c")
MAX_DEPTH = 3
# Restrictive modes are kept rare so most of the tree stays reachable.
FILE_PERMS = (0o644,) * 4 + (0o666, 0o600, 0o444, 0o200)
DIR_PERMS = (0o777,) * 6 + (0o755, 0o775, 0o700, 0o555, 0o311)
ROOT = UserContext(0, frozenset({0}))
USERS = (ROOT,) * 4 + (UserContext(1, frozenset({1})), UserContext(2, frozenset({0, 2})))


def resolve(state, path):
    """Follow ``path`` through the raw state; None if any step is missing."""
    ino = ROOT_INO
    for name in path:
        d = state.dirs.get(ino)
        if d is None or name not in d.entries:
            return None
        ino = d.entries[name]
    return ino


def inbound(state, ino):
    return sum(t == ino for d in state.dirs.values() for t in d.entries.values())


def all_paths(state):
    """Every path reachable from the root, root first."""
    out, todo = [], [((), ROOT_INO)]
    while todo:
        path, ino = todo.pop()
        out.append(path)
        d = state.dirs.get(ino)
        if d is not None:
            todo.extend((path + (name,), t) for name, t in sorted(d.entries.items()))
    return out


def snapshot(vfs):
    return copy.deepcopy((vfs.afs.state, vfs.handles))


@dataclass
class SoakStats:
    steps: int = 0
    violations: list = field(default_factory=list)
    precondition_failures: list = field(default_factory=list)
    oracle_mismatches: list = field(default_factory=list)
    reads_checked: int = 0
    results: dict = field(default_factory=dict)


class Soak:
    """Drives random VFS operations and checks every step against the shadow model."""

    def __init__(self, seed: int, plan: FaultPlan, page_size: int = 4):
        self.rng = random.Random(seed)
        self.page_size = page_size
        self.afs = Afs(page_size, plan, root_meta=Meta(0, 0, 0o777))
        self.vfs = Vfs(self.afs)
        self.shadow = Shadow()
        self.shadow.sync(self.afs.state)
        self.stats = SoakStats()

    # generation

    def _path(self, kind=None):
        """A path biased toward existing nodes of ``kind`` ("file", "dir", "new" or any)."""
        r, state = self.rng, self.afs.state
        if r.random() < 0.75:
            paths = all_paths(state)
            if kind == "new":
                parent = r.choice([p for p in paths if len(p) < MAX_DEPTH and resolve(state, p) in state.dirs])
                return parent + (r.choice(NAMES),)
            if kind is not None:
                store = state.files if kind == "file" else state.dirs
                paths = [p for p in paths if resolve(state, p) in store] or paths
            return r.choice(paths)
        depth = r.choice((1, 1, 2, 2, 2, 3)) if r.random() > 0.03 else 0
        return tuple(r.choice(NAMES) for _ in range(depth))

    def _fd(self):
        if self.vfs.handles and self.rng.random() < 0.85:
            return self.rng.choice(sorted(self.vfs.handles))
        return self.rng.choice((0, 1, 2, 3, 7))

    def _meta(self, perms):
        return Meta(self.vfs.user.uid, min(self.vfs.user.gids), self.rng.choice(perms))

    def random_op(self):
        r = self.rng
        op = r.choices(
            ("create", "mkdir", "rmdir", "link", "unlink", "rename", "open", "close", "seek",
             "read", "write", "truncate", "getattr", "setattr", "readdir", "user"),
            weights=(8, 4, 3, 3, 4, 4, 10, 5, 4, 10, 12, 3, 2, 1, 2, 2),
        )[0]
        if op == "create":
            return op, (self._path("new"), self._meta(FILE_PERMS))
        if op == "mkdir":
            return op, (self._path("new"), self._meta(DIR_PERMS))
        if op in ("rmdir", "readdir"):
            return op, (self._path("dir"),)
        if op in ("unlink", "getattr"):
            return op, (self._path("file"),)
        if op == "link":
            return op, (self._path("file"), self._path("new"))
        if op == "rename":
            return op, (self._path(), self._path(r.choice(("new", "file", "dir"))))
        if op == "open":
            return op, (self._path("file"), r.choice(list(Mode)))
        if op == "close":
            return op, (self._fd(),)
        if op == "seek":
            whence = r.choice(list(SeekWhence))
            return op, (self._fd(), r.randint(-6, 24), whence)
        if op == "read":
            return op, (self._fd(), r.randint(0, 14))
        if op == "write":
            n = r.choice((0, 1, 2, 3, 4, 5, 7, 9, 12))
            return op, (self._fd(), bytes(r.randint(1, 255) for _ in range(n)))
        if op == "truncate":
            return op, (self._path("file"), r.randint(-1, 24))
        if op == "setattr":
            path = self._path()
            isdir = resolve(self.afs.state, path) in self.afs.state.dirs
            return op, (path, self._meta(DIR_PERMS if isdir else FILE_PERMS))
        return op, (r.choice(USERS),)

    # execution

    def run_op(self, op, args):
        """Apply one operation; returns (code, result)."""
        if op == "user":
            self.vfs.user = args[0]
            return ErrorCode.ESUCCESS, None
        try:
            return ErrorCode.ESUCCESS, getattr(self.vfs, op)(*args)
        except FsError as exc:
            return exc.code, None

    def step(self, op=None, args=None, check=True):
        if op is None:
            op, args = self.random_op()
        vfs, state, shadow = self.vfs, self.afs.state, self.shadow
        shadow.sync(state)
        handle = vfs.handles.get(args[0]) if op in ("read", "write") else None
        pos_before = handle.pos if handle else None
        trunc_ino = resolve(state, args[0]) if op == "truncate" else None
        fired_before = len(self.afs.faults.fired)
        try:
            code, result = self.run_op(op, args)
        except PreconditionError as exc:
            self.stats.precondition_failures.append((self.stats.steps, op, args, str(exc)))
            raise
        faulted = len(self.afs.faults.fired) > fired_before
        self.stats.steps += 1
        self.stats.results[(op, code)] = self.stats.results.get((op, code), 0) + 1

        if op == "write" and handle is not None:
            if code is ErrorCode.ESUCCESS:
                if result:
                    shadow.write(handle.ino, pos_before, args[1][:result])
                if handle.pos != pos_before + result:
                    self._mismatch(op, args, f"pos {handle.pos} != {pos_before} + {result}")
                if not faulted and result != len(args[1]):
                    self._mismatch(op, args, f"short write {result} without a fault")
            elif handle.pos != pos_before:
                self._mismatch(op, args, "failed write moved the position")
        elif op == "read" and handle is not None:
            if code is ErrorCode.ESUCCESS:
                self.stats.reads_checked += 1
                expect = shadow.slice(handle.ino, pos_before, len(result))
                if result != expect:
                    self._mismatch(op, args, f"read {result.hex()} != shadow {expect.hex()}")
                full = max(0, min(args[1], len(shadow.content[handle.ino]) - pos_before))
                if not faulted and len(result) != full:
                    self._mismatch(op, args, f"read {len(result)} bytes, expected {full}")
                if handle.pos != pos_before + len(result):
                    self._mismatch(op, args, "position not advanced by the read count")
            elif handle.pos != pos_before:
                self._mismatch(op, args, "failed read moved the position")
        elif op == "truncate" and code is ErrorCode.ESUCCESS:
            shadow.truncate(trunc_ino, args[1])

        if check:
            shadow.sync(state)
            found = check_all(state, vfs.handles, page_size=self.page_size)
            found += shadow.compare(state, self.page_size)
            if found:
                self.stats.violations.append((self.stats.steps, op, args, [str(v) for v in found]))
        return op, args, code

    def _mismatch(self, op, args, detail):
        self.stats.oracle_mismatches.append((self.stats.steps, op, args, detail))
