"""Benchmark problem definitions, independent reference solutions, and NMSE.

Two presets ship: ``poisson1d`` (u'' + sin 4x = 0 on [0, pi/2], zero boundary
values, exact solution sin(4x)/16) and ``heat1d`` (T_t = 0.30 T_xx on
[-pi/2, pi/2] x [0, 0.5], zero boundary values, Gaussian initial bump). The
heat reference is a Crank-Nicolson finite-difference solution, kept
independent of any analytic manipulation; a Fourier-series cross-check lives
in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import cho_solve_banded, cholesky_banded

from . import pinn, qnn
from .errors import NumericalError, UsageError
from .ioutil import atomic_write_text

HEAT_DIFFUSIVITY = 0.30
HEAT_SIGMA = 0.2
X_LEFT, X_RIGHT = -math.pi / 2, math.pi / 2
T_FINAL = 0.5


heat_initial = pinn.initial_bump


def poisson_exact(x):
    """sin(4x)/16: the solution of u'' + sin(4x) = 0 with u(0) = u(pi/2) = 0."""
    return np.sin(4.0 * np.asarray(x, dtype=np.float64)) / 16.0


def _crank_nicolson_grid(nx: int, nt: int) -> np.ndarray:
    """Dirichlet Crank-Nicolson solve, returning T with shape (nt, nx).

    The initial data does not vanish at the boundary corners, so the first
    two steps are replaced by four implicit-Euler half steps (Rannacher
    start-up) to damp the oscillations Crank-Nicolson would otherwise ring
    with on nonsmooth data.
    """
    x = np.linspace(X_LEFT, X_RIGHT, nx)
    dt = T_FINAL / (nt - 1)
    dx = (X_RIGHT - X_LEFT) / (nx - 1)
    mu = HEAT_DIFFUSIVITY * dt / dx**2
    n = nx - 2  # interior unknowns

    # Left-hand matrix I - (mu/2) L serves both the CN step and the dt/2
    # implicit-Euler step (same coefficient by coincidence of the half factor).
    ab = np.zeros((2, n))
    ab[0, 1:] = -0.5 * mu
    ab[1, :] = 1.0 + mu
    left = cholesky_banded(ab)

    def second_diff(u):
        out = -2.0 * u
        out[1:] += u[:-1]
        out[:-1] += u[1:]
        return out

    grid = np.zeros((nt, nx))
    grid[0, 1:-1] = heat_initial(x[1:-1])
    u = grid[0, 1:-1].copy()
    for step in range(1, nt):
        if step <= 2:
            for _ in range(2):
                u = cho_solve_banded((left, False), u)
        else:
            u = cho_solve_banded((left, False), u + 0.5 * mu * second_diff(u))
        grid[step, 1:-1] = u
    return grid


def _refinement_gap(coarse: np.ndarray, fine: np.ndarray, x_c, t_c) -> float:
    """Sup difference at shared nodes, outside tiny corner patches.

    The initial data is discontinuous at the two space-time corners, so
    pointwise refinement differences there decay too slowly to be a useful
    convergence gauge; a patch of 5% of the width and 2% of the horizon at
    each corner is excluded.
    """
    shared = fine[::2, ::2]
    diff = np.abs(shared - coarse)
    corner_x = (np.abs(x_c - X_LEFT) < 0.05 * (X_RIGHT - X_LEFT)) | (
        np.abs(x_c - X_RIGHT) < 0.05 * (X_RIGHT - X_LEFT)
    )
    early = t_c < 0.02 * T_FINAL
    diff[np.ix_(early, corner_x)] = 0.0
    return float(diff.max())


@lru_cache(maxsize=1)
def _heat_reference_table():
    """Cached CN solution, refined until successive levels agree to 1e-5."""
    nx, nt = 401, 501
    grid = _crank_nicolson_grid(nx, nt)
    for _ in range(3):
        fine = _crank_nicolson_grid(2 * (nx - 1) + 1, 2 * (nt - 1) + 1)
        gap = _refinement_gap(
            grid, fine, np.linspace(X_LEFT, X_RIGHT, nx), np.linspace(0.0, T_FINAL, nt)
        )
        nx, nt = 2 * (nx - 1) + 1, 2 * (nt - 1) + 1
        grid = fine
        if gap < 1e-5:
            break
    else:
        raise NumericalError("heat reference failed to self-converge", last_gap=gap)
    x = np.linspace(X_LEFT, X_RIGHT, nx)
    t = np.linspace(0.0, T_FINAL, nt)
    interp = RegularGridInterpolator((t, x), grid, method="linear")
    return x, t, grid, interp


def heat_reference(x, t):
    """Reference temperature at (x, t), bilinear in the Crank-Nicolson table.

    At t = 0 the initial condition is evaluated exactly (zero at the exact
    endpoints, where the Dirichlet data wins over the discontinuous corner).
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    x_arr, t_arr = np.broadcast_arrays(x_arr, t_arr)
    if np.any(x_arr < X_LEFT - 1e-12) or np.any(x_arr > X_RIGHT + 1e-12):
        raise UsageError("heat reference queried outside the spatial domain")
    if np.any(t_arr < -1e-12) or np.any(t_arr > T_FINAL + 1e-12):
        raise UsageError("heat reference queried outside the time horizon")
    _, _, _, interp = _heat_reference_table()
    pts = np.stack(
        [np.clip(t_arr.ravel(), 0.0, T_FINAL), np.clip(x_arr.ravel(), X_LEFT, X_RIGHT)],
        axis=1,
    )
    vals = interp(pts)
    initial = t_arr.ravel() == 0.0
    if np.any(initial):
        xi = x_arr.ravel()[initial]
        exact = heat_initial(xi)
        exact[np.isclose(xi, X_LEFT) | np.isclose(xi, X_RIGHT)] = 0.0
        vals[initial] = exact
    boundary = np.isclose(x_arr.ravel(), X_LEFT) | np.isclose(x_arr.ravel(), X_RIGHT)
    vals[boundary] = 0.0
    out = vals.reshape(x_arr.shape)
    return float(out[()]) if out.ndim == 0 else out


def nmse(predicted, truth) -> float:
    """Normalized mean squared error sum((y - yhat)^2) / sum(y^2)."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if predicted.shape != truth.shape or truth.size == 0:
        raise UsageError(
            f"need equal nonzero lengths, got {predicted.shape} and {truth.shape}"
        )
    energy = float(np.dot(truth, truth))
    if energy <= 0.0:
        raise NumericalError("undefined metric: truth vector has zero energy")
    return float(np.dot(truth - predicted, truth - predicted)) / energy


@dataclass(frozen=True)
class ProblemSpec:
    """Everything a solver needs to know about one benchmark.

    ``residual`` maps (outputs, jacobian, points) to the per-point PDE
    residual together with its constant partials {(output, direction):
    coefficient} with respect to the Jacobian entries it reads -- always and
    only first-order entries.
    """

    name: str
    input_dim: int
    domain: tuple[tuple[float, float], ...]
    network: qnn.NetworkConfig
    mode_map: np.ndarray  # displacements = mode_map @ inputs
    weights: pinn.LossWeights
    boundary_value: float
    initial_target: Callable | None
    residual: Callable
    reference: Callable  # (points (N, input_dim)) -> values (N,)
    eval_grid_shape: tuple[int, ...]

    def displacements(self, points: np.ndarray) -> np.ndarray:
        return np.atleast_2d(points) @ self.mode_map.T

    def jacobian_seed(self) -> np.ndarray:
        # seed[d, m] = d(displacement_m)/d(input_d)
        return self.mode_map.T.copy()

    def evaluation_points(self) -> np.ndarray:
        axes = [
            np.linspace(lo, hi, n)
            for (lo, hi), n in zip(self.domain, self.eval_grid_shape)
        ]
        if self.input_dim == 1:
            return axes[0][:, None]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


_DEFAULT_NETWORK = qnn.NetworkConfig(
    num_modes=2, cutoff=20, multi_layers=2, single_layers=2, output_modes=(0, 1)
)


def _poisson_residual(outputs, jac, points):
    r = jac[:, 1, 0] + np.sin(4.0 * points[:, 0])
    return r, {(1, 0): 1.0}


def _heat_residual(outputs, jac, points):
    r = jac[:, 0, 1] - HEAT_DIFFUSIVITY * jac[:, 1, 0]
    return r, {(0, 1): 1.0, (1, 0): -HEAT_DIFFUSIVITY}


def _poisson_spec() -> ProblemSpec:
    return ProblemSpec(
        name="poisson1d",
        input_dim=1,
        domain=((0.0, math.pi / 2),),
        network=_DEFAULT_NETWORK,
        mode_map=np.array([[1.0], [0.0]]),
        weights=pinn.POISSON_WEIGHTS,
        boundary_value=0.0,
        initial_target=None,
        residual=_poisson_residual,
        reference=lambda pts: poisson_exact(np.atleast_2d(pts)[:, 0]),
        eval_grid_shape=(101,),
    )


def _heat_spec() -> ProblemSpec:
    return ProblemSpec(
        name="heat1d",
        input_dim=2,
        domain=((X_LEFT, X_RIGHT), (0.0, T_FINAL)),
        network=_DEFAULT_NETWORK,
        mode_map=np.eye(2),
        weights=pinn.HEAT_WEIGHTS,
        boundary_value=0.0,
        initial_target=heat_initial,
        residual=_heat_residual,
        reference=lambda pts: heat_reference(
            np.atleast_2d(pts)[:, 0], np.atleast_2d(pts)[:, 1]
        ),
        eval_grid_shape=(41, 21),
    )


_REGISTRY: dict[str, Callable[[], ProblemSpec]] = {
    "poisson1d": _poisson_spec,
    "heat1d": _heat_spec,
}

PROBLEM_NAMES = tuple(sorted(_REGISTRY))


def get_problem(name: str) -> ProblemSpec:
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise UsageError(
            f"unknown problem {name!r}; available: {', '.join(PROBLEM_NAMES)}"
        ) from None
    return builder()


def export_reference_csv(problem: ProblemSpec, path: str) -> None:
    """Reference solution on the evaluation grid as x[,t],value rows."""
    pts = problem.evaluation_points()
    values = problem.reference(pts)
    header = ("x,t,value" if problem.input_dim == 2 else "x,value")
    lines = [f"# cvqpinn-reference v1 problem={problem.name}", header]
    for row, val in zip(pts, values):
        coords = ",".join(f"{c:.17g}" for c in row)
        lines.append(f"{coords},{val:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")
