"""POSIX-style operations implemented purely through the AFS interface.

Every public operation is total: it either completes or raises
:class:`FsError` leaving the AFS state and the handle table exactly as they
were. Reads and writes are the one exception. They move data page by page,
so a fault part-way through ends the transfer early and returns the number
of bytes moved so far. An error is raised only when nothing was transferred.

The VFS never calls an AFS operation outside its precondition; the
reference AFS raises :class:`PreconditionError` if it ever does.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

from .afs import ROOT_INO, ROOT_USER, Afs, Dentry, Inode, Meta, UserContext, may_exec, may_read, may_write, valid_name
from .errors import ErrorCode, FsError

Path = tuple[str, ...]

# Attempts to shrink a file back after a failed extending page write.
ROLLBACK_ATTEMPTS = 8


class Mode(enum.Enum):
    READ_ONLY = "ro"
    WRITE_ONLY = "wo"
    READ_WRITE = "rw"

    @property
    def readable(self) -> bool:
        return self is not Mode.WRITE_ONLY

    @property
    def writable(self) -> bool:
        return self is not Mode.READ_ONLY


class SeekWhence(enum.Enum):
    SET = "set"
    CUR = "cur"
    END = "end"


@dataclass
class Handle:
    ino: int
    pos: int
    mode: Mode


def to_path(path: str | Sequence[str]) -> Path:
    """Normalize ``path`` to a tuple of segments.

    Strings are split on ``/`` with empty components dropped, so ``"/"``
    and ``""`` both denote the root. Explicit segment sequences must
    contain only valid names.
    """
    if isinstance(path, str):
        segments = tuple(s for s in path.split("/") if s)
    else:
        segments = tuple(path)
    for s in segments:
        if not valid_name(s):
            raise FsError(ErrorCode.EINVAL, f"invalid path segment {s!r}")
    return segments


def _fail(code: ErrorCode, detail: str | None = None):
    raise FsError(code, detail)


class Vfs:
    """Path walking, permission checks and open-file handles over an :class:`Afs`."""

    def __init__(self, afs: Afs, user: UserContext = ROOT_USER) -> None:
        self.afs = afs
        self.user = user
        self.handles: dict[int, Handle] = {}

    # helpers

    def _walk(self, path: Path) -> list[int]:
        """Resolve ``path`` from the root; returns every inode passed, root first."""
        chain = [ROOT_INO]
        for name in path:
            ino = chain[-1]
            inode = self.afs.readinode(ino)
            if not inode.isdir:
                _fail(ErrorCode.ENOTDIR, f"{ino} is not a directory")
            if not may_exec(self.user, inode.meta):
                _fail(ErrorCode.EACCES, f"cannot traverse {ino}")
            dent = self.afs.lookup(ino, Dentry(name))
            if not dent.positive:
                _fail(ErrorCode.ENOENT, f"no entry {name!r} in {ino}")
            chain.append(dent.target)
        return chain

    def _parent(self, path: Path) -> tuple[list[int], Inode]:
        """Walk to the directory that holds the last segment of ``path``."""
        if not path:
            _fail(ErrorCode.EINVAL, "empty path")
        chain = self._walk(path[:-1])
        pinode = self.afs.readinode(chain[-1])
        if not pinode.isdir:
            _fail(ErrorCode.ENOTDIR, f"{pinode.ino} is not a directory")
        return chain, pinode

    def _may_modify(self, pinode: Inode) -> None:
        if not (may_write(self.user, pinode.meta) and may_exec(self.user, pinode.meta)):
            _fail(ErrorCode.EACCES, f"cannot modify directory {pinode.ino}")

    def _handle(self, fd: int) -> Handle:
        h = self.handles.get(fd)
        if h is None:
            _fail(ErrorCode.EBADF, f"bad file descriptor {fd}")
        return h

    def _isopen(self, ino: int) -> bool:
        return any(h.ino == ino for h in self.handles.values())

    def _putinode(self, ino: int) -> None:
        """Evict ``ino`` once it has neither links nor open handles.

        The caller's state change has already happened, so a failure to read
        the link count only skips the eviction; it is not reported.
        """
        if self._isopen(ino):
            return
        try:
            inode = self.afs.readinode(ino)
        except FsError:
            return
        if inode.nlink == 0:
            self.afs.evict(ino)

    def _maycreate(self, path: Path) -> tuple[int, str]:
        chain, pinode = self._parent(path)
        name = path[-1]
        if self.afs.lookup(pinode.ino, Dentry(name)).positive:
            _fail(ErrorCode.EEXIST, f"{name!r} exists")
        self._may_modify(pinode)
        return pinode.ino, name

    # path resolution and structural operations

    def walk(self, path: str | Sequence[str]) -> int:
        return self._walk(to_path(path))[-1]

    def create(self, path: str | Sequence[str], md: Meta) -> int:
        """Create an empty regular file; returns its inode number."""
        pino, name = self._maycreate(to_path(path))
        return self.afs.create(pino, md, Dentry(name)).target

    def mkdir(self, path: str | Sequence[str], md: Meta) -> int:
        pino, name = self._maycreate(to_path(path))
        return self.afs.mkdir(pino, md, Dentry(name)).target

    def rmdir(self, path: str | Sequence[str]) -> None:
        path = to_path(path)
        _, pinode = self._parent(path)
        dent = self.afs.lookup(pinode.ino, Dentry(path[-1]))
        if not dent.positive:
            _fail(ErrorCode.ENOENT)
        self._may_modify(pinode)
        inode = self.afs.readinode(dent.target)
        if not inode.isdir:
            _fail(ErrorCode.ENOTDIR)
        if inode.size:
            _fail(ErrorCode.ENOTEMPTY)
        self.afs.rmdir(pinode.ino, dent)

    def link(self, oldpath: str | Sequence[str], newpath: str | Sequence[str]) -> None:
        oldpath, newpath = to_path(oldpath), to_path(newpath)
        ino = self._walk(oldpath)[-1]
        if self.afs.readinode(ino).isdir:
            _fail(ErrorCode.EISDIR, "cannot link a directory")
        pino, name = self._maycreate(newpath)
        self.afs.link(pino, Dentry(oldpath[-1], ino), Dentry(name))

    def unlink(self, path: str | Sequence[str]) -> None:
        path = to_path(path)
        _, pinode = self._parent(path)
        dent = self.afs.lookup(pinode.ino, Dentry(path[-1]))
        if not dent.positive:
            _fail(ErrorCode.ENOENT)
        self._may_modify(pinode)
        if self.afs.readinode(dent.target).isdir:
            _fail(ErrorCode.EISDIR)
        self.afs.unlink(pinode.ino, dent)
        self._putinode(dent.target)

    def rename(self, oldpath: str | Sequence[str], newpath: str | Sequence[str]) -> None:
        """Rename ``oldpath`` to ``newpath``, replacing a compatible destination.

        Renaming onto another link of the same node succeeds without change.
        """
        oldpath, newpath = to_path(oldpath), to_path(newpath)
        _, opinode = self._parent(oldpath)
        odent = self.afs.lookup(opinode.ino, Dentry(oldpath[-1]))
        if not odent.positive:
            _fail(ErrorCode.ENOENT)
        nchain, npinode = self._parent(newpath)
        ndent = self.afs.lookup(npinode.ino, Dentry(newpath[-1]))
        self._may_modify(opinode)
        self._may_modify(npinode)
        oinode = self.afs.readinode(odent.target)
        displaced = None
        if ndent.positive:
            if ndent.target == odent.target:
                return
            displaced = self.afs.readinode(ndent.target)
            if oinode.isdir and not displaced.isdir:
                _fail(ErrorCode.ENOTDIR)
            if displaced.isdir and not oinode.isdir:
                _fail(ErrorCode.EISDIR)
            if displaced.isdir and displaced.size:
                _fail(ErrorCode.ENOTEMPTY)
        if oinode.isdir and odent.target in nchain:
            _fail(ErrorCode.EINVAL, "cannot move a directory into itself")
        self.afs.rename(opinode.ino, odent, npinode.ino, ndent)
        if displaced is not None and not displaced.isdir:
            self._putinode(displaced.ino)

    # attributes and listing

    def getattr(self, path: str | Sequence[str]) -> Inode:
        return self.afs.readinode(self.walk(path))

    def setattr(self, path: str | Sequence[str], md: Meta) -> None:
        """Replace the metadata of ``path``; only its owner may do so."""
        inode = self.getattr(path)
        if self.user.uid != inode.meta.owner:
            _fail(ErrorCode.EACCES, "only the owner may change attributes")
        self.afs.writeinode(Inode(inode.ino, md, inode.isdir, inode.nlink, inode.size))

    def readdir(self, path: str | Sequence[str]) -> list[str]:
        inode = self.getattr(path)
        if not inode.isdir:
            _fail(ErrorCode.ENOTDIR)
        if not may_read(self.user, inode.meta):
            _fail(ErrorCode.EACCES)
        return self.afs.readdir(inode.ino)

    def truncate(self, path: str | Sequence[str], size: int) -> None:
        if size < 0:
            _fail(ErrorCode.EINVAL, "negative size")
        inode = self.getattr(path)
        if inode.isdir:
            _fail(ErrorCode.EISDIR)
        if not may_write(self.user, inode.meta):
            _fail(ErrorCode.EACCES)
        self.afs.truncate(inode.ino, size)

    # file handles

    def open(self, path: str | Sequence[str], mode: Mode) -> int:
        """Open a regular file; returns the smallest free descriptor."""
        inode = self.getattr(path)
        if inode.isdir:
            _fail(ErrorCode.EISDIR)
        if mode.readable and not may_read(self.user, inode.meta):
            _fail(ErrorCode.EACCES)
        if mode.writable and not may_write(self.user, inode.meta):
            _fail(ErrorCode.EACCES)
        fd = 0
        while fd in self.handles:
            fd += 1
        self.handles[fd] = Handle(inode.ino, 0, mode)
        return fd

    def close(self, fd: int) -> None:
        h = self._handle(fd)
        del self.handles[fd]
        self._putinode(h.ino)

    def seek(self, fd: int, offset: int, whence: SeekWhence = SeekWhence.SET) -> int:
        h = self._handle(fd)
        if whence is SeekWhence.SET:
            pos = offset
        elif whence is SeekWhence.CUR:
            pos = h.pos + offset
        else:
            pos = self.afs.readinode(h.ino).size + offset
        if pos < 0:
            _fail(ErrorCode.EINVAL, "negative file position")
        h.pos = pos
        return pos

    def readinto(self, fd: int, buf: bytearray, length: int | None = None) -> int:
        """Read up to ``length`` bytes into the front of ``buf``.

        Bytes of ``buf`` past the transferred count are left untouched.
        """
        h = self._handle(fd)
        if not h.mode.readable:
            _fail(ErrorCode.EACCES, "descriptor not open for reading")
        if length is None:
            length = len(buf)
        if not 0 <= length <= len(buf):
            _fail(ErrorCode.EINVAL, "length exceeds buffer")
        size = self.afs.readinode(h.ino).size
        ps = self.afs.page_size
        start = h.pos
        end = min(start + length, max(size, start))
        total = 0
        while start + total < end:
            pos = start + total
            pageno, offset = divmod(pos, ps)
            n = min(length - total, ps - offset, size - pos)
            try:
                page = self.afs.readpage(h.ino, pageno)
            except FsError:
                if total == 0:
                    raise
                break
            buf[total:total + n] = page[offset:offset + n]
            total += n
        h.pos += total
        return total

    def read(self, fd: int, length: int) -> bytes:
        if length < 0:
            _fail(ErrorCode.EINVAL, "negative length")
        buf = bytearray(length)
        return bytes(buf[:self.readinto(fd, buf, length)])

    def write(self, fd: int, data: bytes) -> int:
        """Write ``data`` at the handle position, extending the file as needed.

        A page that reaches past the end of the file is preceded by a
        truncate that grows the file to cover it, so the page-range and
        zero-tail invariants hold between every AFS call. If that page
        write then fails, the growth is rolled back.
        """
        h = self._handle(fd)
        if not h.mode.writable:
            _fail(ErrorCode.EACCES, "descriptor not open for writing")
        data = bytes(data)
        if not data:
            return 0
        ino, ps = h.ino, self.afs.page_size
        size = self.afs.readinode(ino).size
        start, total = h.pos, 0
        try:
            while total < len(data):
                pos = start + total
                pageno, offset = divmod(pos, ps)
                n = min(len(data) - total, ps - offset)
                chunk = data[total:total + n]
                if n == ps:
                    page = chunk
                else:
                    old = self.afs.readpage(ino, pageno)
                    page = old[:offset] + chunk + old[offset + n:]
                grown_from = None
                if pos + n > size:
                    self.afs.truncate(ino, pos + n)
                    grown_from, size = size, pos + n
                try:
                    self.afs.writepage(ino, pageno, page)
                except FsError:
                    if grown_from is not None:
                        self._shrink(ino, grown_from)
                    raise
                total += n
        except FsError:
            if total == 0:
                raise
        h.pos += total
        return total

    def _shrink(self, ino: int, size: int) -> None:
        for _ in range(ROLLBACK_ATTEMPTS):
            try:
                self.afs.truncate(ino, size)
                return
            except FsError:
                pass
