"""Error codes shared by the VFS and AFS layers."""

from __future__ import annotations

import enum
import errno
import os


class ErrorCode(enum.Enum):
    """Result of a file-system operation.

    Each member's value is the host ``errno`` number it corresponds to, so
    the mapping to and from host errors is one-to-one. ``ESUCCESS`` (0)
    means no error.
    """

    ESUCCESS = 0
    ENOENT = errno.ENOENT
    EEXIST = errno.EEXIST
    EISDIR = errno.EISDIR
    ENOTDIR = errno.ENOTDIR
    ENOTEMPTY = errno.ENOTEMPTY
    EACCES = errno.EACCES
    EBADF = errno.EBADF
    EINVAL = errno.EINVAL
    EIO = errno.EIO
    ENOSPC = errno.ENOSPC
    ENOMEM = errno.ENOMEM

    @property
    def errno(self) -> int:
        return self.value

    @classmethod
    def from_errno(cls, number: int) -> ErrorCode:
        return cls(number)


LOW_LEVEL_ERRORS = frozenset({ErrorCode.EIO, ErrorCode.ENOSPC, ErrorCode.ENOMEM})


class FsError(OSError):
    """A file-system operation failed with ``code``.

    Subclasses :class:`OSError` so host-facing glue can hand it straight to
    callers that expect ``errno``-carrying exceptions.
    """

    def __init__(self, code: ErrorCode, detail: str | None = None):
        if code is ErrorCode.ESUCCESS:
            raise ValueError("ESUCCESS is not an error")
        super().__init__(code.errno, detail or os.strerror(code.errno))
        self.code = code


class PreconditionError(AssertionError):
    """An AFS operation was called outside its precondition.

    This is a contract violation by the caller, never a recoverable error.
    """
