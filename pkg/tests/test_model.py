"""Tests for domain types, the rotating-frame Hamiltonian, and collapse
operators, including the coherence-time identities they must reproduce."""

import math

import numpy as np
import pytest

from atsplit.errors import NonPhysicalCoherence, NonPhysicalResult
from atsplit.model import (
    TWO_PI,
    DecoherenceRates,
    DeviceSpec,
    DriveParams,
    ThreeLevelModel,
    basis_ket,
    build_hamiltonian,
    check_density_matrix,
    check_hamiltonian,
    collapse_operators,
    detunings_from_frequencies,
    frequencies_from_detunings,
    ket_bra,
    rates_from_coherence_times,
    validate_three_level,
)
from atsplit.solver import evolve, max_cyclic_frequency


class TestDeviceSpec:
    def test_alpha_is_derived(self, paper_device):
        assert paper_device.alpha == pytest.approx(177.476, abs=1e-9)

    def test_omega02(self, paper_device):
        assert paper_device.omega02 == pytest.approx(8.410694)

    def test_negative_anharmonicity_rejected(self):
        with pytest.raises(ValueError, match="anharmonicity"):
            DeviceSpec(omega01=4.0, omega12=4.2)


class TestDriveParams:
    def test_negative_amplitude_rejected(self):
        with pytest.raises(ValueError, match="Rabi amplitudes"):
            DriveParams(omega_p=-0.1)

    def test_detunings_may_be_negative(self):
        DriveParams(delta_p=-5.0, delta_c=-3.0)


class TestDecoherenceRates:
    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="gamma_21"):
            DecoherenceRates(gamma_10=0.01, gamma_21=-0.01)

    def test_min_nonzero_rate(self):
        rates = DecoherenceRates(gamma_10=0.02, gamma_21=0.0, phi_1=0.005)
        assert rates.min_nonzero_rate() == 0.005

    def test_min_nonzero_rate_requires_dissipation(self):
        with pytest.raises(ValueError, match="zero"):
            DecoherenceRates(0.0, 0.0).min_nonzero_rate()

    def test_no_upward_rates_expressible(self):
        # The type has exactly the three downward and two dephasing fields.
        fields = set(DecoherenceRates.__dataclass_fields__)
        assert fields == {"gamma_10", "gamma_21", "gamma_20", "phi_1", "phi_2"}


class TestBuildHamiltonian:
    def test_all_zero_drive_gives_zero_matrix(self):
        h = build_hamiltonian(DriveParams())
        assert np.array_equal(h, np.zeros((3, 3)))

    def test_matrix_entries(self):
        h = build_hamiltonian(DriveParams(delta_p=1.5, delta_c=-2.0, omega_p=0.4, omega_c=3.0))
        assert h[1, 1] == pytest.approx(-TWO_PI * 1.5)
        assert h[2, 2] == pytest.approx(-TWO_PI * (1.5 - 2.0))
        assert h[1, 0] == pytest.approx(TWO_PI * 0.2)
        assert h[2, 1] == pytest.approx(TWO_PI * 1.5)
        assert h[0, 0] == 0.0 and h[2, 0] == 0.0 and h[0, 2] == 0.0

    def test_zero_detuning_eigenvalues_match_direct_diagonalization(self):
        """Splitting equals the generalized Rabi frequency of both drives."""
        omega_p, omega_c = 0.186, 11.2
        h = build_hamiltonian(DriveParams(omega_p=omega_p, omega_c=omega_c))
        evals = np.sort(np.linalg.eigvalsh(h))
        rabi = TWO_PI * math.hypot(omega_p, omega_c) / 2.0
        np.testing.assert_allclose(evals, [-rabi, 0.0, rabi], atol=1e-12)

    def test_dark_eigenvector_at_zero_detuning(self):
        omega_p, omega_c = 0.186, 11.2
        h = build_hamiltonian(DriveParams(omega_p=omega_p, omega_c=omega_c))
        theta = math.atan2(omega_p, omega_c)
        dark = np.array([math.cos(theta), 0.0, -math.sin(theta)])
        np.testing.assert_allclose(h @ dark, np.zeros(3), atol=1e-12)

    def test_hermitian_for_random_drives(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            drive = DriveParams(
                delta_p=rng.uniform(-50, 50),
                delta_c=rng.uniform(-50, 50),
                omega_p=rng.uniform(0, 50),
                omega_c=rng.uniform(0, 50),
            )
            h = build_hamiltonian(drive)
            assert np.max(np.abs(h - h.conj().T)) == 0.0


class TestCollapseOperators:
    def test_zero_rates_give_five_zero_matrices(self):
        ops = collapse_operators(DecoherenceRates(0.0, 0.0, 0.0, 0.0, 0.0))
        assert len(ops) == 5
        for op in ops:
            assert np.array_equal(op, np.zeros((3, 3)))

    def test_operator_count_is_stable(self, paper_rates):
        assert len(collapse_operators(paper_rates)) == 5

    def test_structure(self, paper_rates):
        """Relaxation operators only connect down in energy (single entry
        above the diagonal); dephasing operators are diagonal."""
        ops = collapse_operators(paper_rates)
        for op in ops[:3]:
            assert np.count_nonzero(op) <= 1
            assert np.array_equal(np.tril(op), np.zeros((3, 3)))
        for op in ops[3:]:
            assert np.array_equal(op, np.diag(np.diag(op)))

    def test_amplitudes(self, paper_rates):
        ops = collapse_operators(paper_rates)
        assert ops[0][0, 1] == pytest.approx(math.sqrt(paper_rates.gamma_10))
        assert ops[1][1, 2] == pytest.approx(math.sqrt(paper_rates.gamma_21))
        assert np.array_equal(ops[2], np.zeros((3, 3)))  # gamma_20 = 0
        assert ops[3][1, 1] == pytest.approx(math.sqrt(2 * paper_rates.phi_1))
        assert ops[4][2, 2] == pytest.approx(math.sqrt(2 * paper_rates.phi_2))

    def test_coherence_decay_rate_reproduces_t2_star(self, paper_rates):
        """With no drives, rho01 must decay at gamma_10/2 + phi_1 = 1/T2*,
        i.e. 19.6e-3 per us; verified with the time-evolution oracle."""
        model = ThreeLevelModel(DriveParams(), paper_rates)
        psi = (basis_ket(0) + basis_ket(1)) / math.sqrt(2)
        rho0 = np.outer(psi, psi.conj())
        dt = 1.0 / (50.0 * max_cyclic_frequency(model))
        traj = evolve(model, rho0, 30.0, dt, record_every=10**9)
        measured = -math.log(traj.final_state()[0, 1].real / 0.5) / 30.0
        expected = paper_rates.gamma_10 / 2.0 + paper_rates.phi_1
        assert measured == pytest.approx(expected, rel=1e-5)
        assert expected == pytest.approx(1.0 / 51.0, rel=1e-12)
        assert round(expected, 4) == 0.0196


class TestRatesFromCoherenceTimes:
    def test_published_values(self):
        rates = rates_from_coherence_times(39.0, 51.0, 1.41)
        assert rates.gamma_10 == pytest.approx(1.0 / 39.0, rel=1e-15)
        assert rates.phi_1 == pytest.approx(1.0 / 51.0 - 1.0 / 78.0, rel=1e-15)
        assert rates.phi_2 == rates.phi_1
        assert rates.gamma_21 == pytest.approx(1.41 / 39.0, rel=1e-15)
        assert rates.gamma_20 == 0.0
        # Quoted 2-significant-figure values in 1/s.
        assert round(rates.gamma_10 * 1e6, -3) == 26e3
        assert float(f"{rates.phi_1 * 1e6:.2g}") == 6.8e3  # 6787/s rounds to 6.8e3

    def test_relaxation_limited_t2_gives_zero_dephasing(self):
        rates = rates_from_coherence_times(10.0, 20.0, 1.0)
        assert rates.phi_1 == 0.0

    def test_t2_star_above_twice_t1_rejected(self):
        with pytest.raises(NonPhysicalCoherence):
            rates_from_coherence_times(10.0, 25.0, 1.0)

    def test_nonpositive_times_rejected(self):
        with pytest.raises(ValueError):
            rates_from_coherence_times(0.0, 10.0)

    def test_explicit_phi_2(self):
        rates = rates_from_coherence_times(39.0, 51.0, phi_2=0.123)
        assert rates.phi_2 == 0.123

    def test_round_trip_identities(self):
        """1/gamma_10 recovers T1 and 1/(gamma_10/2 + phi_1) recovers T2*."""
        rng = np.random.default_rng(5)
        for _ in range(200):
            t1 = rng.uniform(1.0, 200.0)
            t2 = rng.uniform(0.1, 2.0) * t1
            if t2 > 2.0 * t1:
                t2 = 2.0 * t1
            rates = rates_from_coherence_times(t1, t2)
            assert 1.0 / rates.gamma_10 == pytest.approx(t1, rel=1e-12)
            assert 1.0 / (rates.gamma_10 / 2.0 + rates.phi_1) == pytest.approx(t2, rel=1e-12)


class TestDetunings:
    def test_on_resonance_probe(self, paper_device):
        dp, _ = detunings_from_frequencies(paper_device, 4.294085, 4.1)
        assert dp == 0.0

    def test_on_resonance_coupler(self, paper_device):
        _, dc = detunings_from_frequencies(paper_device, 4.3, 4.116609)
        assert dc == 0.0

    def test_unit_conversion(self, paper_device):
        dp, _ = detunings_from_frequencies(paper_device, paper_device.omega01 + 0.001, 4.1)
        assert dp == pytest.approx(1.0, abs=1e-9)

    def test_round_trip(self, paper_device):
        rng = np.random.default_rng(3)
        for _ in range(200):
            dp, dc = rng.uniform(-200, 200, 2)
            fp, fc = frequencies_from_detunings(paper_device, dp, dc)
            dp2, dc2 = detunings_from_frequencies(paper_device, fp, fc)
            assert dp2 == pytest.approx(dp, abs=1e-12)
            assert dc2 == pytest.approx(dc, abs=1e-12)


class TestValidateThreeLevel:
    def test_published_coupler_is_quiet(self, paper_device):
        warnings = validate_three_level(DriveParams(omega_c=11.2), paper_device)
        assert warnings == []

    def test_strong_coupler_warns(self, paper_device):
        warnings = validate_three_level(DriveParams(omega_c=50.0), paper_device)
        assert any("coupler amplitude" in w for w in warnings)

    def test_strong_probe_warns(self, paper_device):
        warnings = validate_three_level(DriveParams(omega_p=40.0), paper_device)
        assert any("probe amplitude" in w for w in warnings)

    def test_detuning_at_two_photon_line_warns(self, paper_device):
        warnings = validate_three_level(DriveParams(delta_p=-88.5), paper_device)
        assert any("two-photon" in w for w in warnings)

    def test_small_detuning_is_quiet(self, paper_device):
        assert validate_three_level(DriveParams(delta_p=10.0), paper_device) == []


class TestMatrixChecks:
    def test_check_hamiltonian_accepts_hermitian(self):
        check_hamiltonian(np.array([[1, 1j, 0], [-1j, 2, 0], [0, 0, 3.0]]))

    def test_check_hamiltonian_rejects_nonhermitian(self):
        with pytest.raises(NonPhysicalResult):
            check_hamiltonian(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0.0]]))

    def test_check_density_matrix_rejects_bad_trace(self):
        with pytest.raises(NonPhysicalResult, match="trace"):
            check_density_matrix(np.diag([0.5, 0.4, 0.2]))

    def test_check_density_matrix_rejects_negative_eigenvalue(self):
        with pytest.raises(NonPhysicalResult, match="eigenvalue"):
            check_density_matrix(np.diag([1.1, -0.1, 0.0]))

    def test_check_density_matrix_allows_roundoff_floor(self):
        check_density_matrix(np.diag([1.0 + 5e-11, -5e-11, 0.0]))

    def test_basis_helpers(self):
        assert np.array_equal(ket_bra(1, 2), np.outer(basis_ket(1), basis_ket(2).conj()))
