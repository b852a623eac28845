"""Derivative contracts: input Jacobians and loss gradients, never nested.

Input derivatives come from forward-mode tangent propagation (dual numbers
seeded at the displacement encoding); only first derivatives exist by
construction. Loss gradients with respect to the trainable parameters have an
accuracy contract rather than a mechanism contract: ``parameter_gradient``
here is the guaranteed-correct central-finite-difference evaluator used as
the oracle, while training defaults to the tape-based reverse sweep in
``qnn.backprop_params`` and is checked against this oracle by gradcheck and
the test suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .duals import DualScalar
from .errors import NumericalError

FD_STEP_SCALE = 1e-5
DEFAULT_CLIP = 10.0


def clip_gradient(grad: np.ndarray, cap: float | None) -> np.ndarray:
    """Per-component magnitude cap; None disables clipping (raw behavior)."""
    if cap is None:
        return grad
    return np.clip(grad, -cap, cap)


def input_jacobian(
    network: Callable[[np.ndarray, list[DualScalar]], tuple[list[DualScalar], DualScalar]],
    params: np.ndarray,
    inputs: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """First derivatives of every network output with respect to every input.

    One tangent slot is seeded per input; the evaluator propagates them
    through the encoding and circuit. Returns (outputs, jacobian) with
    jacobian[i][j] = d(output_i)/d(input_j).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    width = len(inputs)
    duals = [DualScalar.seed(x, j, width) for j, x in enumerate(inputs)]
    outs, _norm = network(params, duals)
    outputs = np.array([o.value.real for o in outs])
    jac = np.array([o.tangents.real for o in outs])
    if not (np.all(np.isfinite(outputs)) and np.all(np.isfinite(jac))):
        raise NumericalError("non-finite input Jacobian", inputs=tuple(inputs))
    return outputs, jac


def parameter_gradient(
    loss: Callable[[np.ndarray], float],
    params: np.ndarray,
    step_scale: float = FD_STEP_SCALE,
    clip: float | None = DEFAULT_CLIP,
) -> np.ndarray:
    """Central finite differences of a deterministic scalar loss.

    Step per component is step_scale * max(1, |theta_k|). Entries are clipped
    to +-clip before return (training-instability mitigation; pass None to
    reproduce raw magnitudes).
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for k in range(params.size):
        h = step_scale * max(1.0, abs(params[k]))
        probe = params.copy()
        probe[k] = params[k] + h
        hi = loss(probe)
        probe[k] = params[k] - h
        lo = loss(probe)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericalError("non-finite loss during finite differences", component=k)
        grad[k] = (hi - lo) / (2.0 * h)
    return clip_gradient(grad, clip)


def relative_error(candidate: np.ndarray, reference: np.ndarray) -> float:
    """Worst relative component error, with tiny components judged against the
    vector scale so a near-zero reference entry cannot blow the metric up."""
    candidate = np.asarray(candidate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = max(float(np.max(np.abs(reference), initial=0.0)), 1e-12)
    denom = np.maximum(np.abs(reference), 1e-3 * scale)
    return float(np.max(np.abs(candidate - reference) / denom))
