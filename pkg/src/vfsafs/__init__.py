"""Executable model of a POSIX-style VFS layered on an abstract file system."""

from .afs import ROOT_INO, ROOT_USER, Afs, AfsState, Dentry, Dir, File, Inode, Meta, UserContext, format_state
from .check import Shadow, Violation, check_all, flat_content
from .errors import ErrorCode, FsError, PreconditionError
from .faults import FaultPlan, NoFaults, ScriptedFaults, SeededFaults, parse_plan
from .vfs import Handle, Mode, SeekWhence, Vfs

__all__ = [
    "ROOT_INO", "ROOT_USER", "Afs", "AfsState", "Dentry", "Dir", "File", "Inode", "Meta", "UserContext",
    "format_state", "Shadow", "Violation", "check_all", "flat_content", "ErrorCode", "FsError",
    "PreconditionError", "FaultPlan", "NoFaults", "ScriptedFaults", "SeededFaults", "parse_plan",
    "Handle", "Mode", "SeekWhence", "Vfs",
]
