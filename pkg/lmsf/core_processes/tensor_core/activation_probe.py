from contextvars import ContextVar
from typing import Dict, List, Optional

import numpy as np

_active_probe: ContextVar[Optional["ActivationProbe"]] = ContextVar("active_activation_probe", default=None)


class ActivationProbe:
    """Captures named intermediate tensors (gates, fused features) emitted while it is active."""

    def __init__(self):
        self.captured: Dict[str, List[np.ndarray]] = {}
        self._token = None

    def __enter__(self) -> "ActivationProbe":
        self._token = _active_probe.set(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        _active_probe.reset(self._token)
        self._token = None

    def get(self, name: str) -> List[np.ndarray]:
        return self.captured.get(name, [])


def probe_activation(name: str, value: np.ndarray):
    probe = _active_probe.get()
    if probe is not None:
        probe.captured.setdefault(name, []).append(np.array(value, copy=True))
