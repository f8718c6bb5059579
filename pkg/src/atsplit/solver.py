"""Vectorized Liouvillian, steady-state solve, and a fixed-step propagator.

Density matrices are vectorized by column stacking: vec(rho)[i + 3j] =
rho[i, j], so left multiplication A.rho maps to (I kron A) and right
multiplication rho.B to (B^T kron I).  The two vectorization conventions
transpose the dissipator terms, so this choice is load bearing and fixed
here once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPhysicalResult, SingularLiouvillian, StepTooLarge
from .model import (
    TWO_PI,
    ThreeLevelModel,
    build_hamiltonian,
    check_density_matrix,
    collapse_operators,
)

_I3 = np.eye(3, dtype=complex)
_I9 = np.eye(9, dtype=complex)

#: vec indices of the diagonal elements rho00, rho11, rho22 under column
#: stacking; the trace functional is the sum over these rows.
_DIAG_IDX = (0, 4, 8)

#: Condition-number threshold beyond which the trace-constrained system is
#: treated as rank deficient (non-unique steady state).
_COND_LIMIT = 1e12

#: Residual ceiling for an accepted steady-state solution.
_RESIDUAL_LIMIT = 1e-10

#: Allowed trace drift over a full time evolution.
_TRACE_DRIFT_LIMIT = 1e-9


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a 3x3 matrix into a length-9 vector."""
    return np.asarray(rho, dtype=complex).reshape(9, order="F")


def unvectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of ``vectorize``."""
    return np.asarray(v, dtype=complex).reshape((3, 3), order="F")


class ReadoutMode(Enum):
    """Which linear map of the density matrix the readout reports."""

    PA_SUM = "pa_sum"        # rho11 + rho22
    PB_SECOND = "pb_second"  # rho22 only


@dataclass(frozen=True)
class Trajectory:
    """Recorded time evolution: times in us, states as an (n, 3, 3) array."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("times must be strictly increasing")

    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def expectation(self, index: int) -> np.ndarray:
        """Real part of one diagonal element along the trajectory."""
        return self.states[:, index, index].real.copy()


def _dissipator_superop(op: np.ndarray) -> np.ndarray:
    """Column-stacked superoperator of one Lindblad channel."""
    op_dag_op = op.conj().T @ op
    return (
        np.kron(op.conj(), op)
        - 0.5 * np.kron(_I3, op_dag_op)
        - 0.5 * np.kron(op_dag_op.T, _I3)
    )


def build_liouvillian(model: ThreeLevelModel) -> np.ndarray:
    """9x9 generator L with vec(d rho/dt) = L . vec(rho), in rad/us."""
    h = build_hamiltonian(model.drive)
    sup = -1j * (np.kron(_I3, h) - np.kron(h.T, _I3))
    for op in collapse_operators(model.rates):
        sup = sup + _dissipator_superop(op)
    return sup


def steady_state(model: ThreeLevelModel) -> np.ndarray:
    """Unique steady state of the master equation as a density matrix.

    One row of the Liouvillian is replaced by the trace constraint and
    the resulting 9x9 linear system solved directly; the 9x9 problem is
    tiny, so a dense solve is exact to machine precision and needs no
    eigensolver tolerance tuning.  The output is symmetrized and
    renormalized to scrub roundoff before the invariant checks.

    Raises SingularLiouvillian when the constrained system is rank
    deficient (steady state not unique, e.g. no dissipation at all) and
    NonPhysicalResult when the result violates the positivity floor.
    """
    lsup = build_liouvillian(model)
    constrained = lsup.copy()
    constrained[0, :] = 0.0
    constrained[0, list(_DIAG_IDX)] = 1.0
    rhs = np.zeros(9, dtype=complex)
    rhs[0] = 1.0

    cond = np.linalg.cond(constrained)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise SingularLiouvillian(
            f"steady state not unique: condition estimate {cond:.3e}"
        )
    vec = np.linalg.solve(constrained, rhs)

    rho = unvectorize(vec)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / rho.trace().real

    residual = float(np.linalg.norm(lsup @ vectorize(rho)))
    if residual > _RESIDUAL_LIMIT:
        raise SingularLiouvillian(
            f"steady-state residual {residual:.3e} exceeds {_RESIDUAL_LIMIT}"
        )
    return check_density_matrix(rho)


def max_cyclic_frequency(model: ThreeLevelModel) -> float:
    """Largest frequency scale of the model in cyclic MHz.

    Covers drive amplitudes, detunings, and decoherence rates (converted
    from 1/us to an equivalent cyclic value); used to bound the
    integration step.
    """
    drive = model.drive
    return max(
        drive.omega_p,
        drive.omega_c,
        abs(drive.delta_p),
        abs(drive.delta_c),
        model.rates.max_rate() / TWO_PI,
    )


def _rk4_transfer_matrix(lsup: np.ndarray, dt: float) -> np.ndarray:
    """One-step map of classic RK4 for the linear system d v/dt = L v.

    For a time-independent generator the four RK4 stages collapse to the
    degree-4 Taylor polynomial of exp(dt L); applying its matrix powers
    reproduces fixed-step RK4 exactly while allowing cheap long jumps.
    """
    a = dt * lsup
    a2 = a @ a
    return _restore_trace_rows(_I9 + a + a2 / 2.0 + (a2 @ a) / 6.0 + (a2 @ a2) / 24.0)


def _restore_trace_rows(transfer: np.ndarray) -> np.ndarray:
    """Project a transfer matrix back onto the trace-preserving subspace.

    The exact RK4 map preserves the trace identically (the trace
    functional annihilates the generator), so any defect in the summed
    diagonal rows is pure floating-point drift; removing it keeps the
    trace stable over tens of millions of steps.
    """
    rows = list(_DIAG_IDX)
    defect = transfer[rows, :].sum(axis=0)
    defect[rows] -= 1.0
    transfer[rows, :] -= defect / 3.0
    return transfer


def _transfer_power(transfer: np.ndarray, n: int) -> np.ndarray:
    """Binary powering with the trace projection applied after each product."""
    result = _I9.copy()
    base = transfer
    while n > 0:
        if n & 1:
            result = _restore_trace_rows(result @ base)
        n >>= 1
        if n:
            base = _restore_trace_rows(base @ base)
    return result


def evolve(
    model: ThreeLevelModel,
    rho0: np.ndarray,
    t_final: float,
    dt: float,
    record_every: int = 1,
) -> Trajectory:
    """Fixed-step 4th-order propagation of the master equation.

    ``dt`` is the maximum step; it must satisfy dt <= 1/(50 * f_max)
    where f_max is the model's largest cyclic frequency scale (raises
    StepTooLarge otherwise).  The actual step divides t_final evenly and
    is never larger than ``dt``.  States are recorded every
    ``record_every`` steps (plus the initial and final ones), each
    re-symmetrized and checked against the density-matrix invariants
    with a 1e-9 trace-drift allowance.
    """
    rho0 = check_density_matrix(rho0)
    if dt <= 0.0:
        raise StepTooLarge(f"dt must be positive, got {dt}")
    if t_final < 0.0:
        raise ValueError(f"t_final must be >= 0, got {t_final}")
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")

    f_max = max_cyclic_frequency(model)
    if f_max > 0.0:
        bound = 1.0 / (50.0 * f_max)
        if dt > bound * (1.0 + 1e-12):
            raise StepTooLarge(
                f"dt={dt} us exceeds 1/(50*f_max)={bound:.6g} us "
                f"for f_max={f_max:.6g} MHz"
            )

    if t_final == 0.0:
        return Trajectory(times=np.array([0.0]), states=rho0[np.newaxis].copy())

    n_steps = max(1, math.ceil(t_final / dt - 1e-12))
    dt_eff = t_final / n_steps

    lsup = build_liouvillian(model)
    step = _rk4_transfer_matrix(lsup, dt_eff)

    record_idx = list(range(0, n_steps + 1, record_every))
    if record_idx[-1] != n_steps:
        record_idx.append(n_steps)

    # Jump between recorded points with powers of the one-step map.
    segment_maps: dict[int, np.ndarray] = {}
    times = []
    states = []
    v = vectorize(rho0)
    previous = 0
    for idx in record_idx:
        span = idx - previous
        if span > 0:
            if span not in segment_maps:
                segment_maps[span] = _transfer_power(step, span)
            v = segment_maps[span] @ v
        previous = idx
        rho = unvectorize(v)
        rho = 0.5 * (rho + rho.conj().T)
        try:
            check_density_matrix(rho, trace_tol=_TRACE_DRIFT_LIMIT)
        except NonPhysicalResult as exc:
            raise NonPhysicalResult(
                f"state at t={idx * dt_eff:.6g} us left the physical set: {exc}"
            ) from exc
        times.append(idx * dt_eff)
        states.append(rho)

    return Trajectory(times=np.array(times), states=np.array(states))


def readout_signal(rho: np.ndarray, mode: ReadoutMode) -> float:
    """Calibrated readout of a density matrix.

    PA_SUM returns rho11 + rho22 (the cavity power that does not
    distinguish |1> from |2>), PB_SECOND returns rho22 alone.  The
    probability scale is taken as already calibrated, so these are exact
    linear maps; tiny negative roundoff is clamped to zero.
    """
    rho = check_density_matrix(rho, trace_tol=_TRACE_DRIFT_LIMIT)
    if mode is ReadoutMode.PA_SUM:
        value = rho[1, 1].real + rho[2, 2].real
    elif mode is ReadoutMode.PB_SECOND:
        value = rho[2, 2].real
    else:
        raise ValueError(f"unknown readout mode {mode!r}")
    return max(0.0, float(value))
