"""Domain types and operator construction for a driven three-level transmon.

The three lowest transmon levels |0>, |1>, |2> are driven by a weak probe
near the 0-1 transition and a strong coupler near the 1-2 transition.  In
the frame co-rotating with both drives the Hamiltonian is time independent
and fully determined by the two detunings and two Rabi amplitudes.

Unit conventions (used consistently everywhere):

* user-facing frequencies are cyclic: GHz for absolute transition
  frequencies, MHz for detunings and Rabi amplitudes (the Omega/2pi value
  an experimentalist quotes);
* decoherence rates are 1/us;
* internal operator math is angular: Hamiltonians in rad/us, collapse
  operators in 1/sqrt(us).

Conversions happen exactly once, inside ``build_hamiltonian`` and
``collapse_operators``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPhysicalCoherence, NonPhysicalResult

TWO_PI = 2.0 * math.pi

#: Default ratio Gamma_21/Gamma_10 from the transmon transition matrix
#: elements (|1><2| dipole is sqrt(2) ~ 1.41 times the |0><1| one).
TRANSMON_RATIO_21 = 1.41


# ---------------------------------------------------------------------------
# 3x3 matrix helpers
# ---------------------------------------------------------------------------

def basis_ket(i: int) -> np.ndarray:
    """Column basis vector |i> of the three-level system."""
    v = np.zeros(3, dtype=complex)
    v[i] = 1.0
    return v


def ket_bra(i: int, j: int) -> np.ndarray:
    """Operator |i><j| as a dense 3x3 complex matrix."""
    m = np.zeros((3, 3), dtype=complex)
    m[i, j] = 1.0
    return m


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest absolute entry of m - m^dagger."""
    return float(np.max(np.abs(m - m.conj().T)))


def check_hamiltonian(h: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate a matrix tagged as a Hamiltonian (Hermitian within tol)."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {h.shape}")
    defect = hermiticity_defect(h)
    if defect > tol:
        raise NonPhysicalResult(f"Hamiltonian not Hermitian: defect {defect:.3e}")
    return h


def check_density_matrix(
    rho: np.ndarray,
    herm_tol: float = 1e-12,
    trace_tol: float = 1e-12,
    eig_floor: float = -1e-10,
) -> np.ndarray:
    """Validate a matrix tagged as a density matrix.

    Requires Hermiticity within ``herm_tol``, trace within ``trace_tol``
    of one, and all eigenvalues above ``eig_floor`` (a small negative
    floor absorbs roundoff on pure states).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {rho.shape}")
    defect = hermiticity_defect(rho)
    if defect > herm_tol:
        raise NonPhysicalResult(f"density matrix not Hermitian: defect {defect:.3e}")
    tr = rho.trace()
    if abs(tr - 1.0) > trace_tol:
        raise NonPhysicalResult(f"density matrix trace {tr:.15g} != 1")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals[0] < eig_floor:
        raise NonPhysicalResult(f"density matrix has eigenvalue {evals[0]:.3e}")
    return rho


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviceSpec:
    """Transition frequencies of the device, cyclic GHz.

    The anharmonicity is always derived from the two transition
    frequencies, never set independently.
    """

    omega01: float
    omega12: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(
                f"anharmonicity must be positive, got {self.alpha} MHz "
                f"(omega01={self.omega01} GHz, omega12={self.omega12} GHz)"
            )

    @property
    def alpha(self) -> float:
        """Anharmonicity omega01 - omega12, cyclic MHz."""
        return (self.omega01 - self.omega12) * 1e3

    @property
    def omega02(self) -> float:
        """Two-photon 0-2 transition frequency omega01 + omega12, GHz."""
        return self.omega01 + self.omega12


@dataclass(frozen=True)
class DriveParams:
    """Probe and coupler detunings and Rabi amplitudes, cyclic MHz.

    Drive phases are fixed real and non-negative; every observable this
    package computes is steady state and phase insensitive.
    """

    delta_p: float = 0.0
    delta_c: float = 0.0
    omega_p: float = 0.0
    omega_c: float = 0.0

    def __post_init__(self):
        if self.omega_p < 0.0 or self.omega_c < 0.0:
            raise ValueError(
                f"Rabi amplitudes must be >= 0, got omega_p={self.omega_p}, "
                f"omega_c={self.omega_c}"
            )


@dataclass(frozen=True)
class DecoherenceRates:
    """Downward relaxation and pure dephasing rates, 1/us.

    There are no upward rates in the model: the thermal occupation at the
    device temperature is negligible by construction, so the type cannot
    express them.
    """

    gamma_10: float
    gamma_21: float
    gamma_20: float = 0.0
    phi_1: float = 0.0
    phi_2: float = 0.0

    def __post_init__(self):
        for name in ("gamma_10", "gamma_21", "gamma_20", "phi_1", "phi_2"):
            value = getattr(self, name)
            if value < 0.0:
                raise ValueError(f"rate {name} must be >= 0, got {value}")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.gamma_10, self.gamma_21, self.gamma_20, self.phi_1, self.phi_2)

    def max_rate(self) -> float:
        return max(self.as_tuple())

    def min_nonzero_rate(self) -> float:
        nonzero = [r for r in self.as_tuple() if r > 0.0]
        if not nonzero:
            raise ValueError("all rates are zero")
        return min(nonzero)


@dataclass(frozen=True)
class ThreeLevelModel:
    """Complete input to a master-equation solve: drives plus rates.

    Immutable value type; two models with equal fields produce
    bit-identical solver outputs.
    """

    drive: DriveParams
    rates: DecoherenceRates

    def with_drive(self, **changes) -> "ThreeLevelModel":
        """Copy of the model with some drive fields replaced."""
        fields = {
            "delta_p": self.drive.delta_p,
            "delta_c": self.drive.delta_c,
            "omega_p": self.drive.omega_p,
            "omega_c": self.drive.omega_c,
        }
        fields.update(changes)
        return ThreeLevelModel(drive=DriveParams(**fields), rates=self.rates)


# ---------------------------------------------------------------------------
# Operator construction
# ---------------------------------------------------------------------------

def build_hamiltonian(drive: DriveParams) -> np.ndarray:
    """Rotating-frame Hamiltonian H/hbar in angular rad/us.

    Level |1> sits at -delta_p and |2> at -(delta_p + delta_c); the probe
    couples 0-1 and the coupler couples 1-2 with matrix elements
    Omega/2.  Hermitian by construction (real drive amplitudes).
    """
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = -TWO_PI * drive.delta_p
    h[2, 2] = -TWO_PI * (drive.delta_p + drive.delta_c)
    h[1, 0] = TWO_PI * drive.omega_p / 2.0
    h[0, 1] = np.conj(h[1, 0])
    h[2, 1] = TWO_PI * drive.omega_c / 2.0
    h[1, 2] = np.conj(h[2, 1])
    return h


def collapse_operators(rates: DecoherenceRates) -> list[np.ndarray]:
    """Five Lindblad collapse operators in 1/sqrt(us) units.

    Three relaxation channels sqrt(Gamma_ij)|j><i| and two pure-dephasing
    channels sqrt(2*phi_i)|i><i|.  The sqrt(2*phi) normalization makes the
    0-i coherence decay at (relaxation out of i)/2 + phi_i, so that
    1/T2* = Gamma_10/2 + phi_1 holds as an identity.  Zero-rate channels
    are kept as explicit zero matrices so the operator count is stable.
    """
    return [
        math.sqrt(rates.gamma_10) * ket_bra(0, 1),
        math.sqrt(rates.gamma_21) * ket_bra(1, 2),
        math.sqrt(rates.gamma_20) * ket_bra(0, 2),
        math.sqrt(2.0 * rates.phi_1) * ket_bra(1, 1),
        math.sqrt(2.0 * rates.phi_2) * ket_bra(2, 2),
    ]


def rates_from_coherence_times(
    t1: float,
    t2_star: float,
    ratio_21: float = TRANSMON_RATIO_21,
    phi_2: float | None = None,
) -> DecoherenceRates:
    """Decoherence rates from measured T1 and Ramsey T2*, both in us.

    gamma_10 = 1/T1 and phi_1 = 1/T2* - 1/(2*T1).  The 2-1 relaxation is
    ratio_21 * gamma_10 (default from the transmon matrix elements) and
    gamma_20 = 0.  The |2> dephasing rate is not independently measurable
    from these two numbers; by default it is set equal to phi_1, pass an
    explicit ``phi_2`` to override.

    Raises NonPhysicalCoherence when t2_star > 2*t1, which would require
    negative pure dephasing.
    """
    if t1 <= 0.0 or t2_star <= 0.0:
        raise ValueError(f"coherence times must be positive, got t1={t1}, t2_star={t2_star}")
    if t2_star > 2.0 * t1:
        raise NonPhysicalCoherence(
            f"t2_star={t2_star} us exceeds 2*t1={2.0 * t1} us; "
            "pure dephasing rate would be negative"
        )
    gamma_10 = 1.0 / t1
    phi_1 = 1.0 / t2_star - 1.0 / (2.0 * t1)
    return DecoherenceRates(
        gamma_10=gamma_10,
        gamma_21=ratio_21 * gamma_10,
        gamma_20=0.0,
        phi_1=phi_1,
        phi_2=phi_1 if phi_2 is None else phi_2,
    )


def detunings_from_frequencies(
    device: DeviceSpec, f_probe: float, f_coupler: float
) -> tuple[float, float]:
    """Drive detunings in cyclic MHz from absolute drive frequencies in GHz."""
    delta_p = (f_probe - device.omega01) * 1e3
    delta_c = (f_coupler - device.omega12) * 1e3
    return delta_p, delta_c


def frequencies_from_detunings(
    device: DeviceSpec, delta_p: float, delta_c: float
) -> tuple[float, float]:
    """Inverse of ``detunings_from_frequencies``; detunings in MHz, output GHz."""
    return device.omega01 + delta_p * 1e-3, device.omega12 + delta_c * 1e-3


def validate_three_level(drive: DriveParams, device: DeviceSpec) -> list[str]:
    """Warnings when drive parameters strain the three-level truncation.

    Rabi amplitudes should stay well below the anharmonicity (threshold
    alpha/5), and detunings should keep clear of the two-photon 0-2 line
    which sits at delta_p = -alpha/2 (threshold alpha/4).
    """
    warnings = []
    alpha = device.alpha
    amp_limit = alpha / 5.0
    det_limit = alpha / 4.0
    if drive.omega_c > amp_limit:
        warnings.append(
            f"coupler amplitude {drive.omega_c} MHz exceeds alpha/5 = "
            f"{amp_limit:.6g} MHz; higher transmon levels may contribute"
        )
    if drive.omega_p > amp_limit:
        warnings.append(
            f"probe amplitude {drive.omega_p} MHz exceeds alpha/5 = "
            f"{amp_limit:.6g} MHz; higher transmon levels may contribute"
        )
    if abs(drive.delta_p) > det_limit:
        warnings.append(
            f"probe detuning {drive.delta_p} MHz is within reach of the "
            f"two-photon 0-2 line at -alpha/2 = {-alpha / 2.0:.6g} MHz"
        )
    if abs(drive.delta_c) > det_limit:
        warnings.append(
            f"coupler detuning {drive.delta_c} MHz is within reach of the "
            f"two-photon 0-2 line at -alpha/2 = {-alpha / 2.0:.6g} MHz"
        )
    return warnings
