import logging
from collections import defaultdict
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Dict, Iterator, Optional, Tuple

logger = logging.getLogger(__name__)

ROOT_SCOPE_NAME = "<root>"

_active_profiler: ContextVar[Optional["MacProfiler"]] = ContextVar("active_mac_profiler", default=None)
_scope_stack: ContextVar[Tuple[str, ...]] = ContextVar("mac_profiler_scope_stack", default=())


class MacProfiler:
    """
    Collects multiply-accumulate counts from every primitive executed while it is active.

    Counts are keyed by the dotted scope path opened with `profiler_scope`. In symbolic mode the
    primitives skip their arithmetic and return zero tensors of the correct shape.
    """

    def __init__(self, symbolic: bool = False):
        self.symbolic = symbolic
        self.macs_by_scope: Dict[str, int] = defaultdict(int)
        self._token = None

    def __enter__(self) -> "MacProfiler":
        self._token = _active_profiler.set(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        _active_profiler.reset(self._token)
        self._token = None

    def record(self, macs: int):
        scope = ".".join(_scope_stack.get()) or ROOT_SCOPE_NAME
        self.macs_by_scope[scope] += int(macs)

    @property
    def total_macs(self) -> int:
        return sum(self.macs_by_scope.values())

    def macs_under(self, scope_prefix: str) -> int:
        return sum(
            macs
            for scope, macs in self.macs_by_scope.items()
            if scope == scope_prefix or scope.startswith(scope_prefix + ".")
        )


@contextmanager
def profiler_scope(name: str) -> Iterator[None]:
    token = _scope_stack.set(_scope_stack.get() + (name,))
    try:
        yield
    finally:
        _scope_stack.reset(token)


def record_macs(macs: int):
    profiler = _active_profiler.get()
    if profiler is not None:
        profiler.record(macs)


def is_symbolic() -> bool:
    profiler = _active_profiler.get()
    return profiler is not None and profiler.symbolic
