"""Adam with cosine-annealing warm restarts, IC pretraining, and the epoch loop.

Each epoch redraws (rescrambles) the collocation set, evaluates the loss and
its parameter gradient, and takes one Adam step. "Best" parameters are
tracked on a fixed held-out validation grid rather than the moving training
set, so the minimum is meaningful across epochs; non-finite epochs are logged
as incidents, the best parameters are restored, and training continues.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gradients, pinn, qnn
from .errors import ConfigurationError, NumericalError, UsageError
from .ioutil import atomic_write_text

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8
DEFAULT_SEED = 1


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_EPSILON

    @classmethod
    def fresh(cls, num_params: int, **kwargs) -> "AdamState":
        return cls(np.zeros(num_params), np.zeros(num_params), 0, **kwargs)


def adam_step(
    state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or state.first_moment.shape != params.shape:
        raise UsageError("gradient/moment dimensions do not match the parameters")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in Adam step", step=state.step_count)
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return replace(state, first_moment=m, second_moment=v, step_count=t), new_params


@dataclass(frozen=True)
class CosineWarmRestarts:
    period: int
    mult: int = 2
    lr_min: float = 0.0

    def __post_init__(self):
        if self.period < 1 or self.mult < 1 or self.lr_min < 0:
            raise ConfigurationError("invalid warm-restart schedule")


def cosine_lr(epoch: int, schedule: CosineWarmRestarts | None, lr_max: float) -> float:
    """lr_min + (lr_max - lr_min)(1 + cos(pi t / T_i))/2 with T_{i+1} = mult T_i."""
    if schedule is None:
        return lr_max
    if epoch < 0:
        raise UsageError("epoch must be nonnegative")
    t, period = epoch, schedule.period
    while t >= period:
        t -= period
        period *= schedule.mult
    return schedule.lr_min + 0.5 * (lr_max - schedule.lr_min) * (
        1.0 + np.cos(np.pi * t / period)
    )


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int
    learning_rate: float
    schedule: CosineWarmRestarts | None
    pretrain_epochs: int
    k_collocation: int
    spatial_points: int
    temporal_points: int
    weights: pinn.LossWeights | None  # None: use the problem preset
    seed: int
    clip: float | None
    gradient_mechanism: str = "adjoint"  # "adjoint" (tape) or "fd" (oracle)

    def __post_init__(self):
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigurationError("epoch counts must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.gradient_mechanism not in ("adjoint", "fd"):
            raise ConfigurationError(
                f"unknown gradient mechanism {self.gradient_mechanism!r}"
            )


def default_training_config(problem_name: str) -> TrainingConfig:
    """Benchmark defaults: constant lr 0.1 / 5000 epochs / 258 points for the
    Poisson run; lr 0.01 with warm restarts / 1000 epochs / 18 x 10 points and
    300 pretraining epochs for the heat run."""
    if problem_name == "poisson1d":
        return TrainingConfig(
            epochs=5000,
            learning_rate=0.1,
            schedule=None,
            pretrain_epochs=0,
            k_collocation=8,
            spatial_points=18,
            temporal_points=10,
            weights=None,
            seed=DEFAULT_SEED,
            clip=gradients.DEFAULT_CLIP,
        )
    if problem_name == "heat1d":
        return TrainingConfig(
            epochs=1000,
            learning_rate=0.01,
            schedule=CosineWarmRestarts(period=100, mult=2, lr_min=0.01 / 100),
            pretrain_epochs=300,
            k_collocation=8,
            spatial_points=18,
            temporal_points=10,
            weights=None,
            seed=DEFAULT_SEED,
            clip=gradients.DEFAULT_CLIP,
        )
    raise ConfigurationError(f"no training defaults for problem {problem_name!r}")


@dataclass
class EpochLog:
    epoch: int
    breakdown: pinn.LossBreakdown
    lr: float
    validation_total: float
    wall_time: float


@dataclass
class TrainingRecord:
    epochs: list[EpochLog] = field(default_factory=list)
    incidents: list[str] = field(default_factory=list)
    best_epoch: int = -1
    best_total: float = np.inf
    best_breakdown: pinn.LossBreakdown | None = None
    best_params: np.ndarray | None = None
    final_params: np.ndarray | None = None


def _loss_and_gradient(problem, params, colloc, weights, config, gates):
    if config.gradient_mechanism == "adjoint":
        res = pinn.evaluate(
            problem, params, colloc, weights, want_gradient=True, clip=config.clip, gates=gates
        )
        return res.breakdown, res.gradient
    breakdown = pinn.evaluate(problem, params, colloc, weights, gates=gates).breakdown
    grad = gradients.parameter_gradient(
        lambda p: pinn.evaluate(problem, p, colloc, weights).breakdown.total,
        params,
        clip=config.clip,
    )
    return breakdown, grad


def pretrain_ic(problem, config: TrainingConfig, initial_params: np.ndarray | None = None) -> np.ndarray:
    """Warm start on the initial condition alone; no derivative evaluations."""
    if problem.initial_target is None:
        raise UsageError(f"problem {problem.name} has no initial condition to pretrain on")
    params = (
        qnn.init_params(problem.network, config.seed)
        if initial_params is None
        else np.array(initial_params, dtype=np.float64)
    )
    if config.pretrain_epochs == 0:
        return params
    adam = AdamState.fresh(params.size)
    for epoch in range(config.pretrain_epochs):
        pts, targets = pinn.pretraining_points(problem, config.k_collocation, config.seed, epoch)
        _, grad = pinn.evaluate_ic_only(
            problem, params, pts, targets, want_gradient=True, clip=config.clip
        )
        adam, params = adam_step(adam, params, grad, config.learning_rate)
    return params


def train(problem, config: TrainingConfig, initial_params: np.ndarray | None = None) -> TrainingRecord:
    """Full epoch loop; returns the per-epoch record with the best parameters."""
    params = (
        qnn.init_params(problem.network, config.seed)
        if initial_params is None
        else np.array(initial_params, dtype=np.float64)
    )
    weights = config.weights if config.weights is not None else problem.weights
    val_set = pinn.validation_set(problem)
    adam = AdamState.fresh(params.size)
    record = TrainingRecord()

    for epoch in range(config.epochs):
        start = time.perf_counter()
        lr = float(cosine_lr(epoch, config.schedule, config.learning_rate))
        colloc = pinn.collocation_for_epoch(problem, config, epoch)
        try:
            gates = qnn.build_gates(problem.network, params)
            breakdown, grad = _loss_and_gradient(problem, params, colloc, weights, config, gates)
            if not np.isfinite(breakdown.total):
                raise NumericalError("non-finite training loss", epoch=epoch)
            val = pinn.evaluate(problem, params, val_set, weights, gates=gates).breakdown
            if val.total < record.best_total:
                record.best_total = val.total
                record.best_epoch = epoch
                record.best_breakdown = val
                record.best_params = params.copy()
            record.epochs.append(
                EpochLog(epoch, breakdown, lr, val.total, time.perf_counter() - start)
            )
            adam, params = adam_step(adam, params, grad, lr)
        except NumericalError as exc:
            record.incidents.append(f"epoch {epoch}: {exc}")
            if record.best_params is not None:
                params = record.best_params.copy()
            # Momentum pointed into the bad region; start Adam over from rest.
            adam = AdamState.fresh(params.size)

    record.final_params = params
    if record.best_params is None:  # every epoch failed; fall back to the last state
        record.best_params = params.copy()
        record.best_epoch = max(config.epochs - 1, 0)
        record.best_total = np.inf
    return record


TRAINING_LOG_COLUMNS = "epoch,loss_pde,loss_bc,loss_ic,loss_trace,loss_consistency,loss_total,lr"


def training_log_text(record: TrainingRecord) -> str:
    lines = ["# cvqpinn-train-log v1", TRAINING_LOG_COLUMNS]
    for entry in record.epochs:
        b = entry.breakdown
        lines.append(
            ",".join(
                [str(entry.epoch)]
                + [
                    f"{v:.17g}"
                    for v in (b.pde, b.bc, b.ic, b.trace, b.consistency, b.total, entry.lr)
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_training_log(record: TrainingRecord, path: str) -> None:
    atomic_write_text(path, training_log_text(record))


def write_checkpoint(record: TrainingRecord, network: qnn.NetworkConfig, path: str) -> None:
    qnn.save_checkpoint(path, network, record.best_params)
