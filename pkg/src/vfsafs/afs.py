"""Abstract file-system interface with an in-memory reference implementation.

The state is two disjoint stores keyed by inode number: ``dirs`` holds
directories (metadata plus a name -> inode map) and ``files`` holds regular
files (metadata, byte size and a sparse page map). Every operation checks
its precondition first, then asks the fault plan whether to fail, then
applies its state change. A failed precondition raises
:class:`PreconditionError`; an injected fault raises :class:`FsError` with
the state untouched.
"""

from __future__ import annotations

import copy
import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import FsError, PreconditionError
from .faults import FaultPlan

ROOT_INO = 1
DEFAULT_PAGE_SIZE = 4096

_OWNER, _GROUP, _OTHER = 6, 3, 0
_R, _W, _X = 4, 2, 1


@dataclass(frozen=True)
class Meta:
    """Ownership plus the nine rwx permission bits (e.g. ``0o644``)."""

    owner: int = 0
    group: int = 0
    perms: int = 0o755

    def __post_init__(self):
        if not 0 <= self.perms <= 0o777:
            raise ValueError(f"perms out of range: {self.perms:#o}")


@dataclass(frozen=True)
class UserContext:
    """The subject of permission checks."""

    uid: int = 0
    gids: frozenset[int] = frozenset({0})


ROOT_USER = UserContext()


def _allowed(user: UserContext, meta: Meta, bit: int) -> bool:
    if user.uid == meta.owner:
        shift = _OWNER
    elif meta.group in user.gids:
        shift = _GROUP
    else:
        shift = _OTHER
    return bool(meta.perms >> shift & bit)


def may_read(user: UserContext, meta: Meta) -> bool:
    return _allowed(user, meta, _R)


def may_write(user: UserContext, meta: Meta) -> bool:
    return _allowed(user, meta, _W)


def may_exec(user: UserContext, meta: Meta) -> bool:
    return _allowed(user, meta, _X)


def valid_name(name: object) -> bool:
    return isinstance(name, str) and name != "" and "/" not in name and "\0" not in name


@dataclass(frozen=True)
class Dentry:
    """A named edge. ``target is None`` marks a negative dentry (name absent)."""

    name: str
    target: int | None = None

    @property
    def positive(self) -> bool:
        return self.target is not None


@dataclass(frozen=True)
class Inode:
    """Snapshot of a node's attributes; ``size`` counts entries for directories."""

    ino: int
    meta: Meta
    isdir: bool
    nlink: int
    size: int


@dataclass
class Dir:
    meta: Meta
    entries: dict[str, int] = field(default_factory=dict)


@dataclass
class File:
    meta: Meta
    size: int = 0
    pages: dict[int, bytes] = field(default_factory=dict)


@dataclass
class AfsState:
    dirs: dict[int, Dir] = field(default_factory=dict)
    files: dict[int, File] = field(default_factory=dict)

    @classmethod
    def fresh(cls, root_meta: Meta = Meta()) -> AfsState:
        return cls(dirs={ROOT_INO: Dir(root_meta)})

    def allocated(self, ino: int) -> bool:
        return ino in self.dirs or ino in self.files

    def copy(self) -> AfsState:
        return copy.deepcopy(self)


def name_key(name: str) -> bytes:
    """Sort key ordering names by their UTF-8 byte values."""
    return name.encode("utf-8", "surrogatepass")


def _require(cond: bool, op: str, what: str) -> None:
    if not cond:
        raise PreconditionError(f"afs_{op}: {what}")


class Afs:
    """The reference AFS. Single-threaded; callers serialize access.

    ``calls`` counts how often each operation passed its precondition.
    """

    def __init__(
        self,
        page_size: int = DEFAULT_PAGE_SIZE,
        faults: FaultPlan | None = None,
        state: AfsState | None = None,
        root_meta: Meta = Meta(),
    ) -> None:
        if page_size < 1:
            raise ValueError("page_size must be positive")
        self.page_size = page_size
        self.faults = faults if faults is not None else FaultPlan()
        self.state = state if state is not None else AfsState.fresh(root_meta)
        self.calls: Counter[str] = Counter()

    def _enter(self, op: str) -> None:
        self.calls[op] += 1
        err = self.faults.next_fault(op)
        if err is not None:
            raise FsError(err, f"injected fault in afs_{op}")

    def _dir(self, ino: int, op: str) -> Dir:
        d = self.state.dirs.get(ino)
        _require(d is not None, op, f"{ino} is not an allocated directory")
        return d

    def _file(self, ino: int, op: str) -> File:
        f = self.state.files.get(ino)
        _require(f is not None, op, f"{ino} is not an allocated file")
        return f

    def _allocate(self) -> int:
        ino = 1
        while self.state.allocated(ino):
            ino += 1
        return ino

    def _parent_count(self, ino: int) -> int:
        return sum(t == ino for d in self.state.dirs.values() for t in d.entries.values())

    def _is_ancestor(self, ino: int, of: int) -> bool:
        """True if directory ``ino`` is ``of`` or lies on its parent chain."""
        parents = {t: p for p, d in self.state.dirs.items() for t in d.entries.values() if t in self.state.dirs}
        seen = set()
        while of not in seen:
            if of == ino:
                return True
            seen.add(of)
            if of not in parents:
                return False
            of = parents[of]
        return False

    # structural operations

    def lookup(self, pino: int, dent: Dentry) -> Dentry:
        """Return ``dent`` resolved in directory ``pino``; negative if the name is absent."""
        d = self._dir(pino, "lookup")
        self._enter("lookup")
        return Dentry(dent.name, d.entries.get(dent.name))

    def create(self, pino: int, md: Meta, dent: Dentry) -> Dentry:
        d = self._dir(pino, "create")
        _require(valid_name(dent.name), "create", f"invalid name {dent.name!r}")
        _require(dent.name not in d.entries, "create", f"{dent.name!r} already in {pino}")
        self._enter("create")
        ino = self._allocate()
        self.state.files[ino] = File(md)
        d.entries[dent.name] = ino
        return Dentry(dent.name, ino)

    def mkdir(self, pino: int, md: Meta, dent: Dentry) -> Dentry:
        d = self._dir(pino, "mkdir")
        _require(valid_name(dent.name), "mkdir", f"invalid name {dent.name!r}")
        _require(dent.name not in d.entries, "mkdir", f"{dent.name!r} already in {pino}")
        self._enter("mkdir")
        ino = self._allocate()
        self.state.dirs[ino] = Dir(md)
        d.entries[dent.name] = ino
        return Dentry(dent.name, ino)

    def rmdir(self, pino: int, dent: Dentry) -> None:
        d = self._dir(pino, "rmdir")
        _require(dent.positive and d.entries.get(dent.name) == dent.target, "rmdir", f"inconsistent dentry {dent}")
        child = self._dir(dent.target, "rmdir")
        _require(not child.entries, "rmdir", f"directory {dent.target} not empty")
        _require(dent.target != ROOT_INO, "rmdir", "cannot remove the root")
        self._enter("rmdir")
        del d.entries[dent.name]
        del self.state.dirs[dent.target]

    def link(self, pino: int, olddent: Dentry, newdent: Dentry) -> Dentry:
        d = self._dir(pino, "link")
        _require(olddent.positive and olddent.target in self.state.files, "link", f"link target {olddent} is not a file")
        _require(valid_name(newdent.name), "link", f"invalid name {newdent.name!r}")
        _require(newdent.name not in d.entries, "link", f"{newdent.name!r} already in {pino}")
        self._enter("link")
        d.entries[newdent.name] = olddent.target
        return Dentry(newdent.name, olddent.target)

    def unlink(self, pino: int, dent: Dentry) -> None:
        d = self._dir(pino, "unlink")
        _require(dent.positive and d.entries.get(dent.name) == dent.target, "unlink", f"inconsistent dentry {dent}")
        _require(dent.target in self.state.files, "unlink", f"{dent.target} is not a file")
        self._enter("unlink")
        del d.entries[dent.name]

    def rename(self, oldino: int, olddent: Dentry, newino: int, newdent: Dentry) -> None:
        """Move ``olddent`` from ``oldino`` to ``newino`` under ``newdent.name``.

        A positive ``newdent`` overwrites its target, which must be of the
        same kind (and empty, if a directory). The displaced directory is
        deallocated; a displaced file stays in ``files`` until evicted.
        """
        state = self.state
        old = self._dir(oldino, "rename")
        new = self._dir(newino, "rename")
        _require(olddent.positive and old.entries.get(olddent.name) == olddent.target, "rename", f"inconsistent source {olddent}")
        _require(valid_name(newdent.name), "rename", f"invalid name {newdent.name!r}")
        src_isdir = olddent.target in state.dirs
        if newdent.positive:
            _require(new.entries.get(newdent.name) == newdent.target, "rename", f"inconsistent destination {newdent}")
            _require(newdent.target != olddent.target, "rename", "source and destination are the same node")
            _require((newdent.target in state.dirs) == src_isdir, "rename", "source and destination differ in kind")
            if src_isdir:
                _require(not state.dirs[newdent.target].entries, "rename", "destination directory not empty")
        else:
            _require(newdent.name not in new.entries, "rename", f"{newdent.name!r} already in {newino}")
        if src_isdir:
            _require(not self._is_ancestor(olddent.target, newino), "rename", "would move a directory into itself")
        self._enter("rename")
        del old.entries[olddent.name]
        new.entries[newdent.name] = olddent.target
        if newdent.positive and src_isdir:
            del state.dirs[newdent.target]

    # inode and content operations

    def readinode(self, ino: int) -> Inode:
        state = self.state
        _require(state.allocated(ino), "readinode", f"{ino} not allocated")
        self._enter("readinode")
        if ino in state.dirs:
            d = state.dirs[ino]
            has_parent = self._parent_count(ino) > 0
            return Inode(ino, d.meta, True, int(has_parent) + 1, len(d.entries))
        f = state.files[ino]
        return Inode(ino, f.meta, False, self._parent_count(ino), f.size)

    def writeinode(self, inode: Inode) -> None:
        """Write back ``inode.meta``. Size changes go through :meth:`truncate`."""
        store = self.state.dirs if inode.isdir else self.state.files
        _require(inode.ino in store, "writeinode", f"{inode.ino} is not an allocated {'directory' if inode.isdir else 'file'}")
        self._enter("writeinode")
        store[inode.ino].meta = inode.meta

    def readpage(self, ino: int, pageno: int) -> bytes:
        f = self._file(ino, "readpage")
        _require(pageno >= 0, "readpage", f"negative page number {pageno}")
        self._enter("readpage")
        return f.pages.get(pageno, bytes(self.page_size))

    def writepage(self, ino: int, pageno: int, page: bytes) -> None:
        f = self._file(ino, "writepage")
        _require(pageno >= 0, "writepage", f"negative page number {pageno}")
        _require(len(page) == self.page_size, "writepage", f"page has {len(page)} bytes, expected {self.page_size}")
        self._enter("writepage")
        f.pages[pageno] = bytes(page)

    def truncate(self, ino: int, newsize: int) -> None:
        """Set the size; drop pages past the end and zero the last page's tail."""
        f = self._file(ino, "truncate")
        _require(newsize >= 0, "truncate", f"negative size {newsize}")
        self._enter("truncate")
        ps = self.page_size
        f.size = newsize
        for n in [n for n in f.pages if n * ps >= newsize]:
            del f.pages[n]
        last, keep = divmod(newsize, ps)
        if keep and last in f.pages:
            f.pages[last] = f.pages[last][:keep] + bytes(ps - keep)

    def readdir(self, ino: int) -> list[str]:
        d = self._dir(ino, "readdir")
        self._enter("readdir")
        return sorted(d.entries, key=name_key)

    def evict(self, ino: int) -> None:
        """Deallocate an unreferenced file. Never fails and is never faulted."""
        self._file(ino, "evict")
        _require(self._parent_count(ino) == 0, "evict", f"{ino} is still linked")
        self.calls["evict"] += 1
        del self.state.files[ino]


def format_state(state: AfsState, page_size: int) -> str:
    """Canonical text dump: nodes by inode number, entries by name, pages by number."""
    lines = [f"page_size {page_size}"]
    for ino in sorted(state.dirs.keys() | state.files.keys()):
        if ino in state.dirs:
            d = state.dirs[ino]
            m = d.meta
            lines.append(f"dir {ino} owner={m.owner} group={m.group} perms={m.perms:03o} entries={len(d.entries)}")
            for name in sorted(d.entries, key=name_key):
                lines.append(f"  entry {json.dumps(name)} {d.entries[name]}")
        else:
            f = state.files[ino]
            m = f.meta
            lines.append(f"file {ino} owner={m.owner} group={m.group} perms={m.perms:03o} size={f.size} pages={len(f.pages)}")
            for n in sorted(f.pages):
                lines.append(f"  page {n} {f.pages[n].hex()}")
    return "\n".join(lines) + "\n"
