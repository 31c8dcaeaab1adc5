"""Mount the model into the host directory tree through FUSE.

:class:`FuseOperations` speaks the calling convention of the ``fusepy``
package (``operations(name, *args)``) but does not import it, so the request
translation can be tested without a kernel module. Only :func:`serve`
needs ``fusepy`` and a working ``/dev/fuse``.

Errors leave as :class:`OSError` carrying the errno that corresponds
one-to-one to our :class:`ErrorCode`; fusepy turns that into ``-errno``.
"""

from __future__ import annotations

import errno
import logging
import os
import stat
import threading
from dataclasses import dataclass

from .afs import DEFAULT_PAGE_SIZE, Afs, Meta, UserContext, may_exec, may_read, may_write
from .errors import ErrorCode, FsError
from .faults import FaultPlan
from .vfs import Mode, SeekWhence, Vfs

log = logging.getLogger(__name__)

_ACCESS_MODES = {os.O_RDONLY: Mode.READ_ONLY, os.O_WRONLY: Mode.WRITE_ONLY, os.O_RDWR: Mode.READ_WRITE}


def to_errno(code: ErrorCode) -> int:
    return code.errno


def from_errno(number: int) -> ErrorCode:
    return ErrorCode.from_errno(number)


@dataclass
class MountConfig:
    mountpoint: str
    page_size: int = DEFAULT_PAGE_SIZE
    faults: FaultPlan | None = None
    uid: int = 0
    gid: int = 0

    @classmethod
    def from_args(cls, mountpoint, page_size=DEFAULT_PAGE_SIZE, faults=None, uid=None, gid=None) -> MountConfig:
        if not os.path.isdir(mountpoint):
            raise ValueError(f"mountpoint {mountpoint!r} is not a directory")
        return cls(
            mountpoint,
            page_size,
            faults,
            os.getuid() if uid is None else uid,
            os.getgid() if gid is None else gid,
        )


class FuseOperations:
    """Translates FUSE requests into VFS calls, one request at a time.

    File handles given to the kernel are VFS descriptors. Reads and writes
    carry explicit offsets, so each transfer first seeks the handle.
    """

    def __init__(self, config: MountConfig):
        self.config = config
        self.user = UserContext(config.uid, frozenset({config.gid}))
        afs = Afs(config.page_size, config.faults, root_meta=Meta(config.uid, config.gid, 0o755))
        self.vfs = Vfs(afs, self.user)
        self._lock = threading.Lock()

    def __call__(self, op: str, *args):
        handler = getattr(self, op, None)
        if op.startswith("_") or handler is None:
            raise OSError(errno.ENOSYS, f"unsupported operation {op}")
        with self._lock:
            log.debug("-> %s %r", op, args)
            try:
                return handler(*args)
            except FsError as exc:
                log.debug("<- %s %s", op, exc.code.name)
                raise

    def _meta(self, mode: int) -> Meta:
        return Meta(self.user.uid, self.config.gid, stat.S_IMODE(mode) & 0o777)

    def init(self, path):
        pass

    def destroy(self, path):
        pass

    def getattr(self, path, fh=None):
        inode = self.vfs.getattr(path)
        kind = stat.S_IFDIR if inode.isdir else stat.S_IFREG
        return {
            "st_ino": inode.ino,
            "st_mode": kind | inode.meta.perms,
            "st_nlink": inode.nlink,
            "st_size": inode.size,
            "st_uid": inode.meta.owner,
            "st_gid": inode.meta.group,
            "st_atime": 0,
            "st_mtime": 0,
            "st_ctime": 0,
        }

    def access(self, path, amode):
        inode = self.vfs.getattr(path)
        checks = ((os.R_OK, may_read), (os.W_OK, may_write), (os.X_OK, may_exec))
        if any(amode & bit and not allowed(self.user, inode.meta) for bit, allowed in checks):
            raise FsError(ErrorCode.EACCES)
        return 0

    def readdir(self, path, fh):
        return [".", "..", *self.vfs.readdir(path)]

    def mkdir(self, path, mode):
        self.vfs.mkdir(path, self._meta(mode))
        return 0

    def rmdir(self, path):
        self.vfs.rmdir(path)
        return 0

    def create(self, path, mode, fi=None):
        self.vfs.create(path, self._meta(mode))
        # The creator gets the widest access its own permission bits allow.
        for access in (Mode.READ_WRITE, Mode.WRITE_ONLY, Mode.READ_ONLY):
            try:
                return self.vfs.open(path, access)
            except FsError as exc:
                if exc.code is not ErrorCode.EACCES or access is Mode.READ_ONLY:
                    raise

    def mknod(self, path, mode, dev):
        if not stat.S_ISREG(mode) and stat.S_IFMT(mode) != 0:
            raise FsError(ErrorCode.EINVAL, "only regular files are supported")
        self.vfs.create(path, self._meta(mode))
        return 0

    def open(self, path, flags):
        mode = _ACCESS_MODES.get(flags & os.O_ACCMODE)
        if mode is None:
            raise FsError(ErrorCode.EINVAL)
        return self.vfs.open(path, mode)

    def release(self, path, fh):
        self.vfs.close(fh)
        return 0

    def flush(self, path, fh):
        return 0

    def read(self, path, size, offset, fh):
        self.vfs.seek(fh, offset, SeekWhence.SET)
        return self.vfs.read(fh, size)

    def write(self, path, data, offset, fh):
        self.vfs.seek(fh, offset, SeekWhence.SET)
        return self.vfs.write(fh, data)

    def truncate(self, path, length, fh=None):
        if path is None:
            raise FsError(ErrorCode.ENOENT)
        self.vfs.truncate(path, length)
        return 0

    def unlink(self, path):
        self.vfs.unlink(path)
        return 0

    def link(self, target, source):
        # fusepy order: ``target`` is the new name, ``source`` the existing file
        self.vfs.link(source, target)
        return 0

    def rename(self, old, new):
        self.vfs.rename(old, new)
        return 0

    def chmod(self, path, mode):
        old = self.vfs.getattr(path).meta
        self.vfs.setattr(path, Meta(old.owner, old.group, stat.S_IMODE(mode) & 0o777))
        return 0

    def chown(self, path, uid, gid):
        old = self.vfs.getattr(path).meta
        owner = old.owner if uid in (-1, 0xFFFFFFFF) else uid
        group = old.group if gid in (-1, 0xFFFFFFFF) else gid
        self.vfs.setattr(path, Meta(owner, group, old.perms))
        return 0

    def utimens(self, path, times=None):
        self.vfs.getattr(path)
        return 0

    def statfs(self, path):
        return {"f_bsize": self.config.page_size, "f_frsize": self.config.page_size, "f_namemax": 255}


def serve(config: MountConfig) -> int:
    """Mount and serve until unmounted or interrupted. Returns an exit status."""
    try:
        from fuse import FUSE
    except (ImportError, OSError) as exc:
        log.error("FUSE is unavailable: %s", exc)
        print(f"error: cannot mount, FUSE is unavailable: {exc}")
        return 1
    ops = FuseOperations(config)
    try:
        FUSE(ops, config.mountpoint, foreground=True, nothreads=True, hard_remove=True, fsname="vfsafs")
    except RuntimeError as exc:
        print(f"error: mount failed: {exc}")
        return 1
    return 0
