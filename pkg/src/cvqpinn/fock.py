"""Truncated-Fock-space states and the continuous-variable gate set.

Quadrature convention, fixed here once and referenced by every test and
readout: ``x_hat = a + a_dag``. Under it the vacuum has Var(x) = 1 and a
coherent state D(alpha)|0> has <x> = 2 Re(alpha).

States are dense complex tensors of shape ``(cutoff,) * num_modes`` with mode
0 on the slowest (first) axis. All operations are pure functions: inputs are
never mutated, so states and gates can be shared freely across threads.
Everything runs in complex128.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, NumericalError, UsageError


@dataclass(frozen=True)
class FockState:
    """Amplitude tensor of a pure multi-mode state in the truncated number basis."""

    amplitudes: np.ndarray
    num_modes: int
    cutoff: int


@dataclass(frozen=True)
class GateMatrix:
    """Dense matrix of a gate in the truncated number basis.

    ``entries`` is cutoff x cutoff for arity 1 and cutoff^2 x cutoff^2 for
    arity 2 (row-major over (n_first, n_second)).
    """

    entries: np.ndarray
    arity: int
    label: str


def make_vacuum(num_modes: int, cutoff: int) -> FockState:
    """All-modes vacuum |0,...,0>, normalized exactly."""
    if num_modes < 1 or cutoff < 2:
        raise ConfigurationError(
            f"need num_modes >= 1 and cutoff >= 2, got {num_modes}, {cutoff}"
        )
    amps = np.zeros((cutoff,) * num_modes, dtype=np.complex128)
    amps[(0,) * num_modes] = 1.0
    return FockState(amps, num_modes, cutoff)


def ladder_matrix(cutoff: int) -> GateMatrix:
    """Annihilation operator a: <m|a|n> = sqrt(n) delta_{m,n-1}."""
    if cutoff < 2:
        raise ConfigurationError(f"cutoff must be >= 2, got {cutoff}")
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=np.float64)), k=1)
    return GateMatrix(a.astype(np.complex128), arity=1, label="a")


def coherent_column(alpha: complex, cutoff: int) -> np.ndarray:
    """Amplitudes of D(alpha)|0>: exp(-|alpha|^2/2) alpha^n / sqrt(n!)."""
    col = np.empty(cutoff, dtype=np.complex128)
    col[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, cutoff):
        col[n] = col[n - 1] * alpha / np.sqrt(n)
    return col


@lru_cache(maxsize=8)
def _factorial_ratio_table(cutoff: int) -> np.ndarray:
    """ratio[offset][n] = sqrt(n! / (n + offset)!) packed as a dense table."""
    table = np.zeros((cutoff, cutoff))
    for offset in range(cutoff):
        count = cutoff - offset
        table[offset, 0] = 1.0 / np.sqrt(
            np.prod(np.arange(1, offset + 1, dtype=np.float64))
        )
        for n in range(1, count):
            table[offset, n] = table[offset, n - 1] * np.sqrt(n / (n + offset))
    return table


def _laguerre_table(x: float, cutoff: int) -> np.ndarray:
    """lag[order][k] = L_k^(order)(x), filled by the three-term recurrence in k
    simultaneously for every order (stable at desk-scale cutoffs)."""
    orders = np.arange(cutoff, dtype=np.float64)
    lag = np.zeros((cutoff, cutoff))
    lag[:, 0] = 1.0
    if cutoff > 1:
        lag[:, 1] = 1.0 + orders - x
    for k in range(1, cutoff - 1):
        lag[:, k + 1] = ((2 * k + 1 + orders - x) * lag[:, k] - (k + orders) * lag[:, k - 1]) / (
            k + 1
        )
    return lag


def displacement_matrix(alpha: complex, cutoff: int) -> GateMatrix:
    """Displacement gate from the closed-form Laguerre expression.

    For m >= n the entry is sqrt(n!/m!) alpha^(m-n) e^(-|alpha|^2/2)
    L_n^(m-n)(|alpha|^2); entries with m < n follow from D(alpha)^dag =
    D(-alpha). Subdiagonals are filled with a three-term Laguerre recurrence
    in the degree, which stays stable at desk-scale cutoffs. The entries are
    the exact infinite-operator matrix elements (no dependence on the
    cutoff), so truncation only shows up as norm leakage when applied.
    """
    alpha = complex(alpha)
    if not np.isfinite(alpha):
        raise ConfigurationError(f"displacement must be finite, got {alpha}")
    x = abs(alpha) ** 2
    pref = np.exp(-0.5 * x)
    ratio = _factorial_ratio_table(cutoff)
    lag = _laguerre_table(x, cutoff)
    d = np.empty((cutoff, cutoff), dtype=np.complex128)
    power = np.complex128(1.0)
    power_conj = np.complex128(1.0)
    for offset in range(cutoff):
        count = cutoff - offset
        vals = pref * ratio[offset, :count] * lag[offset, :count]
        rows = np.arange(offset, cutoff)
        cols = np.arange(count)
        d[rows, cols] = power * vals
        if offset:
            d[cols, rows] = power_conj * vals
        power *= alpha
        power_conj *= -np.conj(alpha)
    return GateMatrix(d, arity=1, label="D")


def displacement_with_derivative(x: float, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """D(x) for real x plus the entrywise d/dx of the truncated matrix.

    The entries are cutoff-independent, so the derivative of the truncated
    block equals the restriction of (a_dag - a) D computed one level higher:
    d/dx <m|D|n> = sqrt(m) <m-1|D|n> - sqrt(m+1) <m+1|D|n>.
    """
    big = displacement_matrix(x, cutoff + 1).entries
    root = np.sqrt(np.arange(1, cutoff + 1, dtype=np.float64))
    deriv = np.empty((cutoff, cutoff), dtype=np.complex128)
    deriv[0] = -root[0] * big[1, :cutoff]
    deriv[1:] = root[:-1, None] * big[: cutoff - 1, :cutoff] - root[1:, None] * big[
        2 : cutoff + 1, :cutoff
    ]
    return np.ascontiguousarray(big[:cutoff, :cutoff]), deriv


def squeeze_generator(phi: float, cutoff: int) -> np.ndarray:
    """Unit-strength squeezing generator (1/2)(e^{-i phi} a^2 - e^{i phi} a_dag^2)."""
    a = ladder_matrix(cutoff).entries
    a2 = a @ a
    return 0.5 * (np.exp(-1j * phi) * a2 - np.exp(1j * phi) * a2.conj().T)


@lru_cache(maxsize=8)
def _squeeze_eigensystem(cutoff: int):
    # i A is Hermitian (A skew-Hermitian), so expm(r A) = V e^{-i r mu} V^dag.
    mu, vec = np.linalg.eigh(1j * squeeze_generator(0.0, cutoff))
    return mu, vec


def squeezing_matrix(r: float, phi: float = 0.0, cutoff: int = 2) -> GateMatrix:
    """Squeezing gate: the matrix exponential of the truncated generator.

    Evaluated spectrally (the generator is normal and linear in r, so its
    eigensystem is computed once per cutoff); phi enters by the exact phase
    conjugation A(phi) = R(phi/2) A(0) R(phi/2)^dag.
    """
    if not (np.isfinite(r) and np.isfinite(phi)):
        raise ConfigurationError(f"squeeze parameters must be finite, got {r}, {phi}")
    mu, vec = _squeeze_eigensystem(cutoff)
    s = (vec * np.exp(-1j * float(r) * mu)) @ vec.conj().T
    if phi:
        phase = np.exp(1j * (phi / 2.0) * np.arange(cutoff))
        s = phase[:, None] * s * phase.conj()[None, :]
    return GateMatrix(s, arity=1, label="S")


def rotation_matrix(phi: float, cutoff: int) -> GateMatrix:
    """Phase shifter: diagonal e^{i n phi}."""
    if not np.isfinite(phi):
        raise ConfigurationError(f"rotation angle must be finite, got {phi}")
    n = np.arange(cutoff)
    return GateMatrix(np.diag(np.exp(1j * phi * n)), arity=1, label="R")


def kerr_matrix(kappa: float, cutoff: int) -> GateMatrix:
    """Kerr gate: diagonal e^{i kappa n^2}, exactly unitary at any cutoff."""
    if not np.isfinite(kappa):
        raise ConfigurationError(f"Kerr strength must be finite, got {kappa}")
    n = np.arange(cutoff)
    return GateMatrix(np.diag(np.exp(1j * kappa * n * n)), arity=1, label="K")


def total_photon_blocks(cutoff: int) -> list[np.ndarray]:
    """Flat two-mode basis indices grouped by total photon number n_a + n_b.

    The beamsplitter generator conserves the total photon number, so its
    matrix exponential is exactly block diagonal over these groups.
    """
    blocks = []
    for total in range(2 * cutoff - 1):
        lo = max(0, total - (cutoff - 1))
        hi = min(cutoff - 1, total)
        na = np.arange(lo, hi + 1)
        blocks.append(na * cutoff + (total - na))
    return blocks


@lru_cache(maxsize=8)
def _beamsplitter_eigensystems(cutoff: int):
    """Eigensystem of each unit-angle phi = 0 block generator.

    Within the block for total photons N (basis ordered by rising n_a) the
    generator a_dag b - a b_dag is tridiagonal with coupling
    sqrt((n_a+1)(N-n_a)); it is skew-Hermitian, so i*gen is Hermitian and
    expm(theta gen) = V e^{-i theta mu} V^dag for every theta.
    """
    systems = []
    for total in range(2 * cutoff - 1):
        lo = max(0, total - (cutoff - 1))
        hi = min(cutoff - 1, total)
        size = hi - lo + 1
        na = np.arange(lo, hi + 1)
        if size == 1:
            systems.append((np.zeros(1), np.ones((1, 1), dtype=np.complex128), na))
            continue
        coup = np.sqrt((na[:-1] + 1.0) * (total - na[:-1]))
        gen = np.zeros((size, size), dtype=np.complex128)
        rows = np.arange(size - 1)
        gen[rows + 1, rows] = coup
        gen[rows, rows + 1] = -coup
        mu, vec = np.linalg.eigh(1j * gen)
        systems.append((mu, vec, na))
    return systems


def beamsplitter_blocks(theta: float, phi: float, cutoff: int) -> list[np.ndarray]:
    """Per-total-photon-number blocks of BS(theta, phi).

    Built spectrally from the cached phi = 0 eigensystems; phi enters by the
    exact conjugation BS(theta, phi) = R_a(phi) BS(theta, 0) R_a(phi)^dag,
    which is entrywise e^{i phi (n_a - n_a')}.
    """
    out = []
    for mu, vec, na in _beamsplitter_eigensystems(cutoff):
        block = (vec * np.exp(-1j * theta * mu)) @ vec.conj().T
        if phi:
            phase = np.exp(1j * phi * na)
            block = phase[:, None] * block * phase.conj()[None, :]
        out.append(block)
    return out


def beamsplitter_matrix(theta: float, phi: float, cutoff: int) -> GateMatrix:
    """Two-mode beamsplitter expm(theta (e^{i phi} a_dag b - e^{-i phi} a b_dag))."""
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ConfigurationError(f"beamsplitter angles must be finite, got {theta}, {phi}")
    full = np.zeros((cutoff * cutoff, cutoff * cutoff), dtype=np.complex128)
    for idx, block in zip(total_photon_blocks(cutoff), beamsplitter_blocks(theta, phi, cutoff)):
        full[np.ix_(idx, idx)] = block
    return GateMatrix(full, arity=2, label="BS")


def _validate_modes(state: FockState, modes: tuple[int, ...]) -> None:
    if len(set(modes)) != len(modes):
        raise UsageError(f"mode indices must be distinct, got {modes}")
    for m in modes:
        if not 0 <= m < state.num_modes:
            raise UsageError(f"mode {m} out of range for {state.num_modes}-mode state")


def apply_gate(gate: GateMatrix, state: FockState, modes) -> FockState:
    """Contract a gate against the state tensor along the given mode axes."""
    if isinstance(modes, int):
        modes = (modes,)
    modes = tuple(modes)
    if gate.arity != len(modes):
        raise UsageError(f"gate arity {gate.arity} does not match modes {modes}")
    _validate_modes(state, modes)
    c = state.cutoff
    expected = c if gate.arity == 1 else c * c
    if gate.entries.shape != (expected, expected):
        raise UsageError(
            f"gate dimension {gate.entries.shape} does not match cutoff {c}"
        )
    psi = state.amplitudes
    if gate.arity == 1:
        moved = np.moveaxis(psi, modes[0], 0)
        out = np.moveaxis(
            (gate.entries @ moved.reshape(c, -1)).reshape(moved.shape), 0, modes[0]
        )
    else:
        moved = np.moveaxis(psi, modes, (0, 1))
        flat = moved.reshape(c * c, -1)
        out = np.moveaxis((gate.entries @ flat).reshape(moved.shape), (0, 1), modes)
    return FockState(np.ascontiguousarray(out), state.num_modes, state.cutoff)


def _column(vec: np.ndarray, ndim: int) -> np.ndarray:
    return vec.reshape((-1,) + (1,) * (ndim - 1))


def lower_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Apply the annihilation operator along one axis: out_n = sqrt(n+1) arr_{n+1}."""
    c = arr.shape[axis]
    root = np.sqrt(np.arange(1, c, dtype=np.float64))
    out = np.empty_like(arr)
    src = np.moveaxis(arr, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    np.multiply(_column(root, arr.ndim), src[1:], out=dst[: c - 1])
    dst[c - 1] = 0.0
    return out


def raise_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Apply the creation operator along one axis: out_n = sqrt(n) arr_{n-1}."""
    c = arr.shape[axis]
    root = np.sqrt(np.arange(1, c, dtype=np.float64))
    out = np.empty_like(arr)
    src = np.moveaxis(arr, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    np.multiply(_column(root, arr.ndim), src[: c - 1], out=dst[1:])
    dst[0] = 0.0
    return out


def position_apply(arr: np.ndarray, axis: int) -> np.ndarray:
    """Apply x_hat = a + a_dag along one axis."""
    return lower_axis(arr, axis) + raise_axis(arr, axis)


def norm_squared(state: FockState) -> float:
    """<psi|psi> of the (possibly truncation-leaked) state."""
    flat = state.amplitudes.ravel()
    return float(np.vdot(flat, flat).real)


def expectation_x(state: FockState, mode: int) -> float:
    """Normalized homodyne expectation <x_hat> on one mode.

    Divides by the norm: truncation leaks norm and the trace loss only drives
    it near 1, so an unnormalized value would conflate leakage with signal.
    """
    _validate_modes(state, (mode,))
    nrm = norm_squared(state)
    if nrm <= 1e-300:
        raise NumericalError("expectation of a zero-norm state", mode=mode)
    xpsi = position_apply(state.amplitudes, mode)
    return float(np.vdot(state.amplitudes.ravel(), xpsi.ravel()).real) / nrm
