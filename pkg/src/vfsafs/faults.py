"""Deterministic fault plans for AFS operations.

Every AFS operation except ``evict`` is a fault point: on entry it asks the
active plan whether to fail, and if so returns the chosen low-level error
without touching the state. A plan replaces a free nondeterministic choice
with a reproducible schedule, so the same plan and the same operation trace
always produce the same faults.

Seeded plans draw from :class:`random.Random` (MT19937) seeded with the
given integer, one ``random()`` call per fault point plus one ``randrange``
call per fired fault.
"""

from __future__ import annotations

import random
import re
from collections.abc import Iterable, Mapping
from fractions import Fraction
from pathlib import Path

from .errors import LOW_LEVEL_ERRORS, ErrorCode

EIO, ENOSPC, ENOMEM = ErrorCode.EIO, ErrorCode.ENOSPC, ErrorCode.ENOMEM

# Errors a seeded plan may pick for each operation. Read-only operations
# cannot run out of space; metadata writes only fail on I/O.
OP_ERRORS: dict[str, frozenset[ErrorCode]] = {
    "lookup": frozenset({EIO, ENOMEM}),
    "create": frozenset({EIO, ENOSPC, ENOMEM}),
    "mkdir": frozenset({EIO, ENOSPC, ENOMEM}),
    "rmdir": frozenset({EIO, ENOSPC, ENOMEM}),
    "link": frozenset({EIO, ENOSPC, ENOMEM}),
    "unlink": frozenset({EIO, ENOSPC, ENOMEM}),
    "rename": frozenset({EIO, ENOSPC, ENOMEM}),
    "readinode": frozenset({EIO}),
    "writeinode": frozenset({EIO}),
    "readpage": frozenset({EIO}),
    "writepage": frozenset({EIO, ENOSPC}),
    "truncate": frozenset({EIO, ENOSPC, ENOMEM}),
    "readdir": frozenset({EIO}),
}

# Stable order for seeded choices (set iteration order is not).
_ERROR_ORDER = (EIO, ENOSPC, ENOMEM)


class FaultPlan:
    """Base plan: never fails.

    ``step`` counts fault points seen so far (1-based once the first point
    is reached). ``fired`` records ``(step, op, error)`` for every injected
    fault.
    """

    def __init__(self) -> None:
        self.step = 0
        self.fired: list[tuple[int, str, ErrorCode]] = []

    def next_fault(self, op: str) -> ErrorCode | None:
        if op == "evict":
            return None
        self.step += 1
        err = self._decide(self.step, op)
        if err is not None:
            self.fired.append((self.step, op, err))
        return err

    def _decide(self, step: int, op: str) -> ErrorCode | None:
        return None

    def describe(self) -> str:
        return "none"


NoFaults = FaultPlan


class SeededFaults(FaultPlan):
    """Fail each fault point independently with ``probability``."""

    def __init__(
        self,
        seed: int,
        probability: Fraction | float | str = Fraction(0),
        errors: Iterable[ErrorCode] = LOW_LEVEL_ERRORS,
    ) -> None:
        super().__init__()
        probability = Fraction(probability)
        if not 0 <= probability <= 1:
            raise ValueError(f"probability must lie in [0, 1], got {probability}")
        errors = frozenset(errors)
        if not errors <= LOW_LEVEL_ERRORS:
            raise ValueError(f"not low-level errors: {sorted(e.name for e in errors - LOW_LEVEL_ERRORS)}")
        self.seed = seed
        self.probability = probability
        self.errors = errors
        self._threshold = float(probability)
        self._rng = random.Random(seed)

    def _decide(self, step: int, op: str) -> ErrorCode | None:
        if self._rng.random() >= self._threshold:
            return None
        allowed = OP_ERRORS.get(op, LOW_LEVEL_ERRORS)
        candidates = [e for e in _ERROR_ORDER if e in self.errors and e in allowed]
        if not candidates:
            return None
        return candidates[self._rng.randrange(len(candidates))]

    def describe(self) -> str:
        return f"seed:{self.seed},p:{self.probability}"


class ScriptedFaults(FaultPlan):
    """Fail exactly at the listed fault-point indices (1-based)."""

    def __init__(self, directives: Mapping[int, ErrorCode] | Iterable[tuple[int, ErrorCode]]) -> None:
        super().__init__()
        pairs = list(directives.items()) if isinstance(directives, Mapping) else list(directives)
        if isinstance(directives, Mapping):
            pairs.sort()
        last = 0
        for step, err in pairs:
            if step <= last:
                raise ValueError(f"scripted fault steps must be strictly increasing and >= 1, got {step} after {last}")
            if err is ErrorCode.ESUCCESS:
                raise ValueError(f"step {step}: ESUCCESS is not a fault")
            last = step
        self.directives = dict(pairs)

    def _decide(self, step: int, op: str) -> ErrorCode | None:
        return self.directives.get(step)

    def describe(self) -> str:
        return "script:" + ",".join(f"{s}={e.name}" for s, e in self.directives.items())


_SCRIPT_LINE = re.compile(r"^step=(\d+)\s+err=([A-Z]+)$")


def parse_script(text: str) -> ScriptedFaults:
    """Parse ``step=<n> err=<CODE>`` lines; blank lines and ``#`` comments are skipped."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SCRIPT_LINE.match(line)
        if not m:
            raise ValueError(f"line {lineno}: expected 'step=<n> err=<CODE>', got {raw!r}")
        try:
            err = ErrorCode[m.group(2)]
        except KeyError:
            raise ValueError(f"line {lineno}: unknown error code {m.group(2)}") from None
        pairs.append((int(m.group(1)), err))
    return ScriptedFaults(pairs)


def parse_plan(text: str) -> FaultPlan:
    """Build a plan from ``none``, ``seed:<s>,p:<prob>`` or ``script:<file>``."""
    if text == "none":
        return FaultPlan()
    if text.startswith("script:"):
        return parse_script(Path(text[len("script:"):]).read_text())
    if text.startswith("seed:"):
        fields = dict(part.split(":", 1) for part in text.split(","))
        try:
            seed = int(fields.pop("seed"))
            prob = Fraction(fields.pop("p", "0"))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad seeded plan {text!r}: {exc}") from None
        errors = LOW_LEVEL_ERRORS
        if "errors" in fields:
            errors = frozenset(ErrorCode[name] for name in fields.pop("errors").split("+"))
        if fields:
            raise ValueError(f"unknown fault plan fields: {sorted(fields)}")
        return SeededFaults(seed, prob, errors)
    raise ValueError(f"unknown fault plan {text!r}")
