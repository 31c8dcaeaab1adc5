"""Trace replay and state inspection.

A trace is a text file with one command per line::

    mkdir /tmp 755
    create /tmp/test 644
    open /tmp/test wo
    write 0 48656c6c6f2c20576f726c6421
    expect ESUCCESS
    close 0
    dump

Blank lines and ``#`` comments are ignored. Every command is executed
against a fresh model, the invariants are checked after each step and the
transcript records each result code. The final state is dumped at the end.

Exit status: 0 success, 2 parse error, 3 invariant or precondition
violation, 4 failed ``expect``.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .afs import DEFAULT_PAGE_SIZE, Afs, Meta, UserContext, format_state
from .check import check_all
from .errors import ErrorCode, FsError, PreconditionError
from .faults import FaultPlan, parse_plan
from .vfs import Mode, SeekWhence, Vfs, to_path

EXIT_OK, EXIT_PARSE, EXIT_VIOLATION, EXIT_EXPECT = 0, 2, 3, 4


class TraceParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class TraceCommand:
    lineno: int
    op: str
    args: tuple
    text: str


def _path(s: str):
    if not s.startswith("/"):
        raise ValueError(f"path must be absolute: {s!r}")
    return to_path(s)


def _octal(s: str) -> int:
    value = int(s, 8)
    if not 0 <= value <= 0o777:
        raise ValueError(f"mode out of range: {s}")
    return value


def _nat(s: str) -> int:
    value = int(s)
    if value < 0:
        raise ValueError(f"expected a non-negative integer, got {s}")
    return value


def _hex(s: str) -> bytes:
    return b"" if s == "-" else bytes.fromhex(s)


def _code(s: str) -> ErrorCode:
    try:
        return ErrorCode[s]
    except KeyError:
        raise ValueError(f"unknown error code {s}") from None


_MODES = {m.value: m for m in Mode}
_WHENCE = {w.value: w for w in SeekWhence}

# op -> (required arg parsers, optional arg parsers, variadic parser)
_GRAMMAR: dict[str, tuple[tuple[Callable, ...], tuple[Callable, ...], Callable | None]] = {
    "create": ((_path, _octal), (), None),
    "mkdir": ((_path,), (_octal,), None),
    "rmdir": ((_path,), (), None),
    "link": ((_path, _path), (), None),
    "unlink": ((_path,), (), None),
    "rename": ((_path, _path), (), None),
    "open": ((_path, _MODES.__getitem__), (), None),
    "close": ((int,), (), None),
    "seek": ((int, int, _WHENCE.__getitem__), (), None),
    "read": ((int, _nat), (), None),
    "write": ((int, _hex), (), None),
    "truncate": ((_path, int), (), None),
    "getattr": ((_path,), (), None),
    "setattr": ((_path, _octal), (_nat, _nat), None),
    "readdir": ((_path,), (), None),
    "user": ((_nat,), (), _nat),
    "expect": ((_code,), (), None),
    "dump": ((), (), None),
}


def parse_trace(text: str) -> list[TraceCommand]:
    commands = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        op, *words = line.split()
        if op not in _GRAMMAR:
            raise TraceParseError(lineno, f"unknown command {op!r}")
        required, optional, rest = _GRAMMAR[op]
        if len(words) < len(required) or (rest is None and len(words) > len(required) + len(optional)):
            raise TraceParseError(lineno, f"wrong number of arguments for {op}")
        parsers = list(required) + list(optional)
        parsers += [rest] * (len(words) - len(parsers))
        try:
            args = tuple(p(w) for p, w in zip(parsers, words))
        except (ValueError, KeyError, FsError) as exc:
            raise TraceParseError(lineno, f"bad argument for {op}: {exc}") from None
        commands.append(TraceCommand(lineno, op, args, " ".join([op, *words])))
    return commands


def _fmt_inode(inode) -> str:
    m = inode.meta
    return (f"ino={inode.ino} isdir={int(inode.isdir)} nlink={inode.nlink} size={inode.size} "
            f"owner={m.owner} group={m.group} perms={m.perms:03o}")


@dataclass
class Runner:
    """Executes parsed commands against a fresh model, recording a transcript."""

    page_size: int = DEFAULT_PAGE_SIZE
    faults: FaultPlan = field(default_factory=FaultPlan)
    transcript: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.afs = Afs(self.page_size, self.faults)
        self.vfs = Vfs(self.afs)
        self.gid = 0
        self.last: ErrorCode | None = None

    def _meta(self, perms: int) -> Meta:
        return Meta(self.vfs.user.uid, self.gid, perms)

    def _execute(self, cmd: TraceCommand) -> str:
        v, a = self.vfs, cmd.args
        match cmd.op:
            case "create":
                return f"ino={v.create(a[0], self._meta(a[1]))}"
            case "mkdir":
                return f"ino={v.mkdir(a[0], self._meta(a[1] if len(a) > 1 else 0o755))}"
            case "rmdir":
                v.rmdir(a[0])
            case "link":
                v.link(a[0], a[1])
            case "unlink":
                v.unlink(a[0])
            case "rename":
                v.rename(a[0], a[1])
            case "open":
                return f"fd={v.open(a[0], a[1])}"
            case "close":
                v.close(a[0])
            case "seek":
                return f"pos={v.seek(a[0], a[1], a[2])}"
            case "read":
                data = v.read(a[0], a[1])
                return f"len={len(data)} data={data.hex() or '-'}"
            case "write":
                return f"len={v.write(a[0], a[1])}"
            case "truncate":
                v.truncate(a[0], a[1])
            case "getattr":
                return _fmt_inode(v.getattr(a[0]))
            case "setattr":
                old = v.getattr(a[0]).meta
                owner = a[2] if len(a) > 2 else old.owner
                group = a[3] if len(a) > 3 else old.group
                v.setattr(a[0], Meta(owner, group, a[1]))
            case "readdir":
                names = v.readdir(a[0])
                return "names=" + (",".join(names) or "-")
        return ""

    def run(self, commands: list[TraceCommand]) -> int:
        out = self.transcript
        for cmd in commands:
            prefix = f"{cmd.lineno}: {cmd.text} ->"
            if cmd.op == "expect":
                if self.last is not cmd.args[0]:
                    got = self.last.name if self.last else "nothing"
                    out.append(f"{prefix} FAILED (got {got})")
                    return EXIT_EXPECT
                out.append(f"{prefix} ok")
                continue
            if cmd.op == "dump":
                out.append(f"{prefix} dump")
                out.extend(format_state(self.afs.state, self.page_size).splitlines())
                continue
            if cmd.op == "user":
                uid, *gids = cmd.args
                gids = gids or [uid]
                self.vfs.user = UserContext(uid, frozenset(gids))
                self.gid = gids[0]
                out.append(f"{prefix} ok")
                continue
            try:
                extra = self._execute(cmd)
                self.last = ErrorCode.ESUCCESS
            except FsError as exc:
                self.last, extra = exc.code, ""
            except PreconditionError as exc:
                out.append(f"{prefix} PRECONDITION {exc}")
                return EXIT_VIOLATION
            out.append(f"{prefix} {self.last.name}" + (f" {extra}" if extra else ""))
            violations = check_all(self.afs.state, self.vfs.handles, page_size=self.page_size)
            if violations:
                out.extend(str(x) for x in violations)
                return EXIT_VIOLATION
        out.append("final state:")
        out.extend(format_state(self.afs.state, self.page_size).splitlines())
        return EXIT_OK


def run_trace(script: str, faults: FaultPlan | None = None, page_size: int = DEFAULT_PAGE_SIZE) -> tuple[int, list[str]]:
    """Parse and replay ``script``; returns the exit status and transcript lines."""
    try:
        commands = parse_trace(script)
    except TraceParseError as exc:
        return EXIT_PARSE, [f"parse error: {exc}"]
    runner = Runner(page_size, faults if faults is not None else FaultPlan())
    status = runner.run(commands)
    return status, runner.transcript


def _positive(s: str) -> int:
    value = int(s)
    if value < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--page-size", type=_positive, default=DEFAULT_PAGE_SIZE)
    p.add_argument("--faults", default="none", help="none | seed:<s>,p:<prob> | script:<file>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfsafs", description="VFS/AFS file-system model")
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="replay a trace and check invariants after every step")
    replay.add_argument("--trace", required=True, help="trace file, or - for stdin")
    replay.add_argument("--dump-format", choices=["text"], default="text")
    _add_model_args(replay)

    mount = sub.add_parser("mount", help="mount the model with FUSE")
    mount.add_argument("--mountpoint", required=True)
    mount.add_argument("--uid", type=int, default=None)
    mount.add_argument("--gid", type=int, default=None)
    _add_model_args(mount)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        plan = parse_plan(args.faults)
    except (ValueError, OSError) as exc:
        print(f"error: --faults: {exc}", file=sys.stderr)
        return EXIT_PARSE

    if args.command == "mount":
        from .fusebridge import MountConfig, serve

        try:
            config = MountConfig.from_args(args.mountpoint, args.page_size, plan, args.uid, args.gid)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return serve(config)

    script = sys.stdin.read() if args.trace == "-" else FsPath(args.trace).read_text()
    status, transcript = run_trace(script, plan, args.page_size)
    for line in transcript:
        print(line)
    return status


if __name__ == "__main__":
    sys.exit(main())
