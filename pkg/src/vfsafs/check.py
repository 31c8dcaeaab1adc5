"""Runtime invariant checks and the flat-byte content oracle.

Everything here is a pure function of a state snapshot, written as a
direct, brute-force transcription of the invariants so it can serve as a
trusted reference for the optimized code paths.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass

from .afs import ROOT_INO, AfsState, File, valid_name


@dataclass(frozen=True)
class Violation:
    """One broken invariant.

    ``invariant`` is ``"1"`` .. ``"5"``, ``"HANDLE"`` or ``"ORACLE"``;
    ``subject`` names the offending inode or descriptor.
    """

    invariant: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"violation inv={self.invariant} {self.subject}: {self.detail}"


def flat_content(f: File, page_size: int) -> bytes:
    """The file as a linear byte sequence of length ``f.size``; absent pages read as zeros."""
    out = bytearray(f.size)
    for m in range(f.size):
        page = f.pages.get(m // page_size)
        if page is not None:
            out[m] = page[m % page_size]
    return bytes(out)


def check_all(state: AfsState, handles: Mapping[int, object] | None = None, *, page_size: int) -> list[Violation]:
    """Return every violated invariant of ``state`` (and ``handles``); empty means consistent."""
    out: list[Violation] = []
    dirs, files = state.dirs, state.files

    # (1) inode numbers: never 0, root is a directory, stores disjoint
    for store, kind in ((dirs, "dirs"), (files, "files")):
        for ino in store:
            if not isinstance(ino, int) or ino < 1:
                out.append(Violation("1", f"ino={ino}", f"invalid inode number in {kind}"))
    if ROOT_INO not in dirs:
        out.append(Violation("1", f"ino={ROOT_INO}", "root directory missing"))
    for ino in sorted(dirs.keys() & files.keys()):
        out.append(Violation("1", f"ino={ino}", "allocated as both directory and file"))

    # (2) every entry leads to an allocated inode
    for pino in sorted(dirs):
        for name, target in sorted(dirs[pino].entries.items()):
            if not valid_name(name):
                out.append(Violation("2", f"ino={pino}", f"invalid entry name {name!r}"))
            if target not in dirs and target not in files:
                out.append(Violation("2", f"ino={pino}", f"entry {name!r} -> {target} is unallocated"))

    # (3) directories have at most one parent; the root has none
    links = Counter(t for d in dirs.values() for t in d.entries.values())
    for ino in sorted(dirs):
        if links[ino] > 1:
            out.append(Violation("3", f"ino={ino}", f"directory has {links[ino]} parents"))
        if ino == ROOT_INO and links[ino]:
            out.append(Violation("3", f"ino={ino}", "root directory has a parent"))

    for ino in sorted(files):
        f = files[ino]
        if f.size < 0:
            out.append(Violation("4", f"ino={ino}", f"negative size {f.size}"))
        # (4) no pages at or beyond the file size
        for n in sorted(f.pages):
            if not n * page_size < f.size:
                out.append(Violation("4", f"ino={ino}", f"page {n} lies beyond size {f.size}"))
            if len(f.pages[n]) != page_size:
                out.append(Violation("5", f"ino={ino}", f"page {n} has {len(f.pages[n])} bytes"))
        # (5) the last page is zero past the end of the file
        last, keep = divmod(f.size, page_size)
        page = f.pages.get(last)
        if keep and page is not None and any(page[keep:]):
            out.append(Violation("5", f"ino={ino}", f"page {last} has nonzero bytes past size {f.size}"))

    for fd in sorted(handles or {}):
        ino = handles[fd].ino
        if ino not in files:
            out.append(Violation("HANDLE", f"fd={fd}", f"refers to {ino}, which is not a file"))
    return out


class Shadow:
    """Independent model of file contents as plain byte strings, keyed by inode.

    The test harness mirrors each successful write and truncate here and
    compares the result against the paged representation.
    """

    def __init__(self) -> None:
        self.content: dict[int, bytearray] = {}

    def sync(self, state: AfsState) -> None:
        """Start tracking new files (empty on creation) and forget evicted ones."""
        for ino in state.files.keys() - self.content.keys():
            self.content[ino] = bytearray()
        for ino in self.content.keys() - state.files.keys():
            del self.content[ino]

    def write(self, ino: int, pos: int, data: bytes) -> None:
        c = self.content[ino]
        if len(c) < pos:
            c.extend(bytes(pos - len(c)))
        c[pos:pos + len(data)] = data

    def truncate(self, ino: int, size: int) -> None:
        c = self.content[ino]
        if size < len(c):
            del c[size:]
        else:
            c.extend(bytes(size - len(c)))

    def slice(self, ino: int, pos: int, length: int) -> bytes:
        return bytes(self.content[ino][pos:pos + length])

    def compare(self, state: AfsState, page_size: int) -> list[Violation]:
        out = []
        for ino in sorted(state.files.keys() | self.content.keys()):
            if ino not in state.files or ino not in self.content:
                out.append(Violation("ORACLE", f"ino={ino}", "file set differs from shadow"))
                continue
            actual = flat_content(state.files[ino], page_size)
            if actual != self.content[ino]:
                out.append(Violation("ORACLE", f"ino={ino}", f"content {actual.hex()} != shadow {bytes(self.content[ino]).hex()}"))
        return out
