"""Counters proving the no-nested-differentiation property at runtime.

Every first-order input-derivative evaluation (scalar or batched) enters a
``jacobian_scope``. Entering the scope while another one is active would mean a
derivative is being taken of a quantity that is itself being differentiated;
that event is what ``nested_evaluations`` counts. Training and the acceptance
suite assert it stays at zero.

The counters are process-global and intended for the single-threaded epoch
loop; batch evaluations inside one scope are fine.
"""

from contextlib import contextmanager
from dataclasses import dataclass


@dataclass
class _Counters:
    jacobian_evaluations: int = 0
    nested_evaluations: int = 0
    _active_depth: int = 0


_counters = _Counters()


def reset() -> None:
    _counters.jacobian_evaluations = 0
    _counters.nested_evaluations = 0
    _counters._active_depth = 0


def jacobian_evaluations() -> int:
    return _counters.jacobian_evaluations


def nested_evaluations() -> int:
    return _counters.nested_evaluations


@contextmanager
def jacobian_scope(num_points: int = 1):
    """Record ``num_points`` first-order input-derivative evaluations."""
    if _counters._active_depth > 0:
        _counters.nested_evaluations += 1
    _counters._active_depth += 1
    _counters.jacobian_evaluations += num_points
    try:
        yield
    finally:
        _counters._active_depth -= 1
