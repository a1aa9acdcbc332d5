from __future__ import annotations

import logging
import threading

from types import TracebackType
from typing import Dict, List, Optional, Type
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

_local = threading.local()


class FlopScopeError(Exception):
    def __init__(self, expected: str, got: str):
        self.expected = expected
        self.got = got

        super().__init__(f"scope {got!r} closed while {expected!r} is innermost")


@dataclass
class FlopReport:
    """Multiply-accumulate counts per op kind collected inside one scope."""

    name: str
    counts: Dict[str, int] = field(default_factory=dict)
    children: Dict[str, FlopReport] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def get(self, kind: str) -> int:
        return self.counts.get(kind, 0)

    def child(self, name: str) -> FlopReport:
        return self.children.get(name, FlopReport(name))

    def merge(self, other: FlopReport) -> None:
        for kind, macs in other.counts.items():
            self.counts[kind] = self.counts.get(kind, 0) + macs

        for name, child in other.children.items():
            self.children.setdefault(name, FlopReport(name)).merge(child)


def _stack() -> List[flop_counter]:
    stack: Optional[List[flop_counter]] = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack

    return stack


def counting() -> bool:
    return bool(getattr(_local, "stack", None))


def record(kind: str, macs: int) -> None:
    """Adds macs to every open scope, so outer scopes contain inner ones."""

    for scope in _stack():
        counts = scope.report.counts
        counts[kind] = counts.get(kind, 0) + macs


class flop_counter:
    """
    Counting scope. Scopes nest; a closing scope is attached to its parent as a named
    child so stages of a forward pass can be read back separately.
    """

    def __init__(self, name: str = "root") -> None:
        self.name = name
        self.report = FlopReport(name)

        self._open = False

    def open(self) -> flop_counter:
        _stack().append(self)
        self._open = True

        return self

    def close(self) -> FlopReport:
        stack = _stack()
        if not stack or stack[-1] is not self:
            raise FlopScopeError(stack[-1].name if stack else "<none>", self.name)

        stack.pop()
        self._open = False

        if stack:
            stack[-1].report.children.setdefault(self.name, FlopReport(self.name)).merge(
                self.report
            )

        return self.report

    def __enter__(self) -> FlopReport:
        self.open()

        return self.report

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        if self._open:
            self.close()


class scope:
    """Named sub-scope that costs nothing when no counter is open."""

    def __init__(self, name: str) -> None:
        self._counter: Optional[flop_counter] = None
        self.name = name

    def __enter__(self) -> None:
        if counting():
            self._counter = flop_counter(self.name).open()

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        if self._counter is not None:
            self._counter.close()
            self._counter = None
