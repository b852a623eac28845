"""Loss components, collocation sampling, and the residual/gradient assembly.

Second derivatives never appear: the PDE residual of each benchmark reads
first-order entries of a single input Jacobian (the circuit's second output
stands in for du/dx and the consistency loss ties the two together), so the
evaluators below consume plain Jacobian entries and nothing else.

Reductions over point sets are means, not sums, so the percent-style weight
presets are independent of the collocation count. The per-point operations
(``loss_pde_poisson`` and friends) are the squared-residual contracts; the
batched assembly evaluates the same quadratics and additionally pushes their
derivative through the reverse-mode tape for training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import gradients, qnn
from .errors import ConfigurationError

SOBOL_MAX_LOG2 = 24  # 2^24 points is already past any desk-scale memory budget
IC_SIGMA = 0.2


@dataclass(frozen=True)
class LossWeights:
    """Percent-style component weights; the benchmark presets sum to 100."""

    lambda_pde: float
    lambda_bc: float
    lambda_ic: float
    lambda_trace: float
    lambda_consistency: float
    lambda_extra: float = 0.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"weight {name} must be finite and nonnegative")

    def as_dict(self) -> dict[str, float]:
        return {
            "pde": self.lambda_pde,
            "bc": self.lambda_bc,
            "ic": self.lambda_ic,
            "trace": self.lambda_trace,
            "consistency": self.lambda_consistency,
            "extra": self.lambda_extra,
        }

    def total_weight(self) -> float:
        return sum(self.as_dict().values())


POISSON_WEIGHTS = LossWeights(
    lambda_pde=25.0, lambda_bc=25.0, lambda_ic=0.0, lambda_trace=25.0, lambda_consistency=25.0
)
HEAT_WEIGHTS = LossWeights(
    lambda_pde=10.0, lambda_bc=10.0, lambda_ic=60.0, lambda_trace=10.0, lambda_consistency=10.0
)


@dataclass(frozen=True)
class CollocationSet:
    interior: np.ndarray  # (n, input_dim), strictly inside the domain
    boundary: tuple[np.ndarray, np.ndarray]  # points, first-output targets
    initial: tuple[np.ndarray, np.ndarray] | None  # heat only


@dataclass(frozen=True)
class LossBreakdown:
    pde: float
    bc: float
    ic: float
    trace: float
    consistency: float
    extra: float
    total: float


# ---------------------------------------------------------------------------
# collocation sampling
# ---------------------------------------------------------------------------


def sobol_unit(n: int, dim: int, scramble_seed: int | None) -> np.ndarray:
    """n low-discrepancy points in the open unit cube.

    Unscrambled draws use the standard direction numbers and skip the
    all-zeros first element; a seed turns on Owen scrambling (deterministic
    per seed).
    """
    if scramble_seed is None:
        engine = qmc.Sobol(d=dim, scramble=False)
        engine.fast_forward(1)
    else:
        engine = qmc.Sobol(d=dim, scramble=True, seed=int(scramble_seed))
    draw = 1 << max(1, int(n - 1).bit_length())
    return engine.random(draw)[:n]


def sobol_points(k: int, domain, scramble_seed: int | None = None, boundary_target: float = 0.0) -> CollocationSet:
    """2^k Sobol interior points plus the two domain endpoints (1D).

    For multi-dimensional domains only the interior points are generated; the
    boundary and initial sets are supplied by the problem's builder.
    """
    if k < 1:
        raise ConfigurationError(f"collocation exponent must be >= 1, got {k}")
    if k > SOBOL_MAX_LOG2:
        raise ConfigurationError(f"2^{k} collocation points exceed the memory budget")
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    if not domain or any(hi <= lo for lo, hi in domain):
        raise ConfigurationError(f"invalid domain {domain}")
    dim = len(domain)
    unit = sobol_unit(2**k, dim, scramble_seed)
    lows = np.array([lo for lo, _ in domain])
    highs = np.array([hi for _, hi in domain])
    interior = lows + unit * (highs - lows)
    if dim == 1:
        bpts = np.array([[domain[0][0]], [domain[0][1]]])
        btargets = np.full(2, boundary_target)
    else:
        bpts = np.empty((0, dim))
        btargets = np.empty(0)
    return CollocationSet(interior, (bpts, btargets), None)


def initial_bump(x) -> np.ndarray:
    """Heat-problem initial profile exp(-(x + pi/8)^2 / (2 sigma)), sigma = 0.2.

    The denominator is 2*sigma = 0.4, exactly as the problem statement prints
    it (not 2 sigma^2).
    """
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-((x + math.pi / 8) ** 2) / (2.0 * IC_SIGMA))


def _epoch_seed(base_seed: int, epoch: int, salt: int) -> int:
    return int(np.random.SeedSequence((base_seed, epoch, salt)).generate_state(1)[0])


def collocation_for_epoch(problem, train_cfg, epoch: int) -> CollocationSet:
    """Fresh (rescrambled) collocation draw for one epoch."""
    seed = train_cfg.seed
    if problem.input_dim == 1:
        return sobol_points(
            train_cfg.k_collocation,
            problem.domain,
            scramble_seed=_epoch_seed(seed, epoch, 1),
            boundary_target=problem.boundary_value,
        )
    (x_lo, x_hi), (t_lo, t_hi) = problem.domain
    xs = x_lo + sobol_unit(train_cfg.spatial_points, 1, _epoch_seed(seed, epoch, 2))[:, 0] * (
        x_hi - x_lo
    )
    ts = t_lo + sobol_unit(train_cfg.temporal_points, 1, _epoch_seed(seed, epoch, 3))[:, 0] * (
        t_hi - t_lo
    )
    mesh_x, mesh_t = np.meshgrid(xs, ts, indexing="ij")
    interior = np.stack([mesh_x.ravel(), mesh_t.ravel()], axis=1)
    bpts = np.concatenate(
        [
            np.stack([np.full_like(ts, x_lo), ts], axis=1),
            np.stack([np.full_like(ts, x_hi), ts], axis=1),
        ]
    )
    btargets = np.full(len(bpts), problem.boundary_value)
    uniform = np.linspace(x_lo, x_hi, train_cfg.spatial_points + 2)[1:-1]
    ic_x = np.concatenate([uniform, xs])
    ic_pts = np.stack([ic_x, np.full_like(ic_x, t_lo)], axis=1)
    return CollocationSet(interior, (bpts, btargets), (ic_pts, problem.initial_target(ic_x)))


def pretraining_points(problem, k: int, base_seed: int, epoch: int) -> tuple[np.ndarray, np.ndarray]:
    """2^k + 2 points along the initial profile for derivative-free pretraining."""
    (x_lo, x_hi) = problem.domain[0]
    one_d = sobol_points(k, ((x_lo, x_hi),), _epoch_seed(base_seed, epoch, 4))
    xs = np.concatenate([one_d.interior[:, 0], [x_lo, x_hi]])
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return pts, problem.initial_target(xs)


def validation_set(problem) -> CollocationSet:
    """Fixed held-out grid used for best-checkpoint comparison."""
    if problem.input_dim == 1:
        (lo, hi) = problem.domain[0]
        interior = np.linspace(lo, hi, 66)[1:-1][:, None]
        bpts = np.array([[lo], [hi]])
        return CollocationSet(interior, (bpts, np.full(2, problem.boundary_value)), None)
    (x_lo, x_hi), (t_lo, t_hi) = problem.domain
    xs = np.linspace(x_lo, x_hi, 34)[1:-1]
    ts = np.linspace(t_lo, t_hi, 17)[1:]
    mesh_x, mesh_t = np.meshgrid(xs, ts, indexing="ij")
    interior = np.stack([mesh_x.ravel(), mesh_t.ravel()], axis=1)
    bpts = np.concatenate(
        [
            np.stack([np.full_like(ts, x_lo), ts], axis=1),
            np.stack([np.full_like(ts, x_hi), ts], axis=1),
        ]
    )
    ic_pts = np.stack([xs, np.full_like(xs, t_lo)], axis=1)
    return CollocationSet(
        interior,
        (bpts, np.full(len(bpts), problem.boundary_value)),
        (ic_pts, problem.initial_target(xs)),
    )


# ---------------------------------------------------------------------------
# per-point loss operations (squared residuals; sums over explicit lists)
# ---------------------------------------------------------------------------


def loss_pde_poisson(du_x_dx, x):
    """(d(u_x)/dx + sin 4x)^2; du_x_dx is a first-order Jacobian entry."""
    r = np.asarray(du_x_dx) + np.sin(4.0 * np.asarray(x))
    return r * r


def loss_pde_heat(dT_dt, dTx_dx, alpha_d: float):
    """(dT/dt - alpha_d * d(T_x)/dx)^2 from two first-order Jacobian entries."""
    r = np.asarray(dT_dt) - alpha_d * np.asarray(dTx_dx)
    return r * r


def loss_bc(values_at_boundary) -> float:
    """Sum of squared boundary mismatches over (predicted, target) pairs."""
    return float(sum((float(p) - float(t)) ** 2 for p, t in values_at_boundary))


def loss_ic(predicted, x):
    """(T(x, 0) - initial_bump(x))^2."""
    e = np.asarray(predicted) - initial_bump(x)
    return e * e


def loss_consistency(du_dx, u_x):
    """(du/dx - u_x)^2: the second output must track the first output's slope."""
    r = np.asarray(du_dx) - np.asarray(u_x)
    return r * r


def loss_trace(norm_sq):
    """(<psi|psi> - 1)^2, compensating truncation-induced norm leakage."""
    r = np.asarray(norm_sq) - 1.0
    return r * r


def total_loss(
    weights: LossWeights,
    pde: float = 0.0,
    bc: float = 0.0,
    ic: float = 0.0,
    trace: float = 0.0,
    consistency: float = 0.0,
    extra: float = 0.0,
) -> LossBreakdown:
    """Weighted sum of already point-averaged components."""
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    total = (
        weights.lambda_pde * pde
        + weights.lambda_bc * bc
        + weights.lambda_ic * ic
        + weights.lambda_trace * trace
        + weights.lambda_consistency * consistency
        + weights.lambda_extra * extra
    )
    return LossBreakdown(pde, bc, ic, trace, consistency, extra, total)


# ---------------------------------------------------------------------------
# batched evaluation and reverse-mode gradient assembly
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    breakdown: LossBreakdown
    gradient: np.ndarray | None


def evaluate(
    problem,
    params: np.ndarray,
    colloc: CollocationSet,
    weights: LossWeights | None = None,
    want_gradient: bool = False,
    clip: float | None = gradients.DEFAULT_CLIP,
    gates: list | None = None,
) -> EvalResult:
    """Loss breakdown on one collocation set, optionally with its parameter
    gradient accumulated by the reverse sweep through the circuit tape.

    ``gates`` may carry a prebuilt gate sequence for these params (the epoch
    loop evaluates the training and validation sets with the same circuit).
    """
    config = problem.network
    weights = problem.weights if weights is None else weights
    if gates is None:
        gates = qnn.build_gates(config, params)
    seed = problem.jacobian_seed()
    num_params = qnn.param_count(config)

    n_int = len(colloc.interior)
    bc_pts, bc_targets = colloc.boundary
    n_bc = len(bc_pts)
    n_ic = 0 if colloc.initial is None else len(colloc.initial[0])
    n_all = n_int + n_bc + n_ic

    ev_int = qnn.evaluate_batch(
        config, gates, problem.displacements(colloc.interior), seed, keep_tape=want_gradient
    )
    residual, jac_partials = problem.residual(ev_int.outputs, ev_int.jac, colloc.interior)
    cons = ev_int.jac[:, 0, 0] - ev_int.outputs[:, 1]
    pde_mean = float(np.mean(residual**2))
    cons_mean = float(np.mean(cons**2))
    trace_sum = float(np.sum((ev_int.norms - 1.0) ** 2))

    ev_bc = None
    bc_mean = 0.0
    if n_bc:
        ev_bc = qnn.evaluate_batch(
            config, gates, problem.displacements(bc_pts), None, keep_tape=want_gradient
        )
        bc_mean = loss_bc(zip(ev_bc.outputs[:, 0], bc_targets)) / n_bc
        trace_sum += float(np.sum((ev_bc.norms - 1.0) ** 2))

    ev_ic = None
    ic_mean = 0.0
    if n_ic:
        ic_pts, ic_targets = colloc.initial
        ev_ic = qnn.evaluate_batch(
            config, gates, problem.displacements(ic_pts), None, keep_tape=want_gradient
        )
        ic_mean = float(np.mean((ev_ic.outputs[:, 0] - ic_targets) ** 2))
        trace_sum += float(np.sum((ev_ic.norms - 1.0) ** 2))

    trace_mean = trace_sum / n_all
    breakdown = total_loss(
        weights, pde=pde_mean, bc=bc_mean, ic=ic_mean, trace=trace_mean, consistency=cons_mean
    )

    if not want_gradient:
        return EvalResult(breakdown, None)

    grad = np.zeros(num_params)
    k = len(config.output_modes)
    width = seed.shape[0]

    abar = np.zeros((n_int, k))
    bbar = np.zeros((n_int, k, width))
    for (j, d), coeff in jac_partials.items():
        bbar[:, j, d] += weights.lambda_pde * 2.0 * residual * coeff / n_int
    bbar[:, 0, 0] += weights.lambda_consistency * 2.0 * cons / n_int
    abar[:, 1] -= weights.lambda_consistency * 2.0 * cons / n_int
    cbar = weights.lambda_trace * 2.0 * (ev_int.norms - 1.0) / n_all
    grad += qnn.backprop_params(
        ev_int, qnn.readout_cotangents(ev_int, abar, bbar, cbar), num_params
    )

    if n_bc:
        abar = np.zeros((n_bc, k))
        abar[:, 0] = weights.lambda_bc * 2.0 * (ev_bc.outputs[:, 0] - bc_targets) / n_bc
        cbar = weights.lambda_trace * 2.0 * (ev_bc.norms - 1.0) / n_all
        grad += qnn.backprop_params(
            ev_bc, qnn.readout_cotangents(ev_bc, abar, np.zeros((n_bc, k, 0)), cbar), num_params
        )

    if n_ic:
        abar = np.zeros((n_ic, k))
        abar[:, 0] = weights.lambda_ic * 2.0 * (ev_ic.outputs[:, 0] - colloc.initial[1]) / n_ic
        cbar = weights.lambda_trace * 2.0 * (ev_ic.norms - 1.0) / n_all
        grad += qnn.backprop_params(
            ev_ic, qnn.readout_cotangents(ev_ic, abar, np.zeros((n_ic, k, 0)), cbar), num_params
        )

    return EvalResult(breakdown, gradients.clip_gradient(grad, clip))


def evaluate_ic_only(
    problem,
    params: np.ndarray,
    points: np.ndarray,
    targets: np.ndarray,
    want_gradient: bool = False,
    clip: float | None = gradients.DEFAULT_CLIP,
) -> tuple[float, np.ndarray | None]:
    """Plain initial-condition mean squared error; no input derivatives at all."""
    config = problem.network
    gates = qnn.build_gates(config, params)
    ev = qnn.evaluate_batch(
        config, gates, problem.displacements(points), None, keep_tape=want_gradient
    )
    err = ev.outputs[:, 0] - targets
    mse = float(np.mean(err**2))
    if not want_gradient:
        return mse, None
    n = len(points)
    abar = np.zeros((n, len(config.output_modes)))
    abar[:, 0] = 2.0 * err / n
    cot = qnn.readout_cotangents(
        ev, abar, np.zeros((n, len(config.output_modes), 0)), np.zeros(n)
    )
    grad = qnn.backprop_params(ev, cot, qnn.param_count(config))
    return mse, gradients.clip_gradient(grad, clip)


def predict(problem, params: np.ndarray, points: np.ndarray) -> np.ndarray:
    """First-output predictions at arbitrary domain points (no tangents)."""
    config = problem.network
    gates = qnn.build_gates(config, params)
    ev = qnn.evaluate_batch(config, gates, problem.displacements(points), None)
    return ev.outputs[:, 0]


def consistency_gap(problem, params: np.ndarray, points: np.ndarray) -> float:
    """Mean |du/dx - u_x| over the given points."""
    config = problem.network
    gates = qnn.build_gates(config, params)
    ev = qnn.evaluate_batch(
        config, gates, problem.displacements(points), problem.jacobian_seed()
    )
    return float(np.mean(np.abs(ev.jac[:, 0, 0] - ev.outputs[:, 1])))
