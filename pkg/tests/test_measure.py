import io

import numpy as np
import pytest
from scipy.linalg import expm

from freqcomb import (
    DetectionWindow,
    FrequencyComb,
    Projector,
    SinglePhotonState,
    UnitaryMap,
    basis_state,
    detection_probability,
    effective_projector,
    effective_projector_quadrature,
    evolve_projector,
    fidelity_sweep,
    projection_fidelity,
    projector_from_row,
    projector_from_state,
    sinc,
    write_fidelity_csv,
)
from conftest import haar_unitary, random_state_vector


def dft_unitary(n: int) -> UnitaryMap:
    k = np.arange(n)
    return UnitaryMap(np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n))


def random_projector(comb, seed) -> Projector:
    rng = np.random.default_rng(seed)
    return projector_from_state(
        SinglePhotonState(comb, random_state_vector(comb.n_modes, rng))
    )


def expm_evolved(proj: Projector, tau: float, zero_point: bool = False) -> np.ndarray:
    """Independent oracle: e^{+iH tau} M e^{-iH tau} by matrix exponential."""
    h = np.diag(proj.comb.frequencies.astype(complex))
    if zero_point:
        h = h + 0.5 * np.sum(proj.comb.frequencies) * np.eye(proj.comb.n_modes)
    u = expm(1j * h * tau)
    return u @ proj.matrix @ u.conj().T


class TestProjectorFromRow:
    def test_identity_row(self):
        comb = FrequencyComb(1.0, 1.0, 3)
        m = projector_from_row(UnitaryMap(np.eye(3)), 0, comb)
        np.testing.assert_allclose(m.matrix, np.diag([1.0, 0.0, 0.0]))

    def test_two_mode_fourier_row(self, comb2):
        m = projector_from_row(dft_unitary(2), 0, comb2)
        np.testing.assert_allclose(m.matrix, np.full((2, 2), 0.5), atol=1e-15)

    @pytest.mark.parametrize("n", [2, 4, 7])
    def test_rows_complete(self, n):
        comb = FrequencyComb(1.0, 1.0, n)
        u = UnitaryMap(haar_unitary(n, n))
        total = sum(projector_from_row(u, j, comb).matrix for j in range(n))
        np.testing.assert_allclose(total, np.eye(n), atol=1e-12)

    def test_index_out_of_range(self, comb2):
        with pytest.raises(IndexError):
            projector_from_row(dft_unitary(2), 2, comb2)


class TestEvolveProjector:
    def test_zero_time_is_identity_op(self, comb4):
        m = random_projector(comb4, 1)
        np.testing.assert_array_equal(evolve_projector(m, 0.0).matrix, m.matrix)

    def test_diagonal_projector_unaffected(self, comb4):
        m = projector_from_state(basis_state(comb4, 2))
        out = evolve_projector(m, 0.37e-9)
        np.testing.assert_allclose(out.matrix, m.matrix, atol=1e-15)

    def test_half_beat_negates_offdiagonals(self, comb2):
        m = projector_from_row(dft_unitary(2), 0, comb2)
        tau = np.pi / comb2.delta_omega
        out = evolve_projector(m, tau)
        np.testing.assert_allclose(out.matrix, np.array([[0.5, -0.5], [-0.5, 0.5]]), atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_matrix_exponential_oracle(self, comb4, seed):
        m = random_projector(comb4, seed)
        tau = 0.21e-9 * (seed + 1)
        np.testing.assert_allclose(
            evolve_projector(m, tau).matrix, expm_evolved(m, tau), atol=1e-12
        )

    def test_zero_point_energy_has_no_effect(self, comb4):
        m = random_projector(comb4, 9)
        tau = 0.4e-9
        np.testing.assert_allclose(
            expm_evolved(m, tau, zero_point=False),
            expm_evolved(m, tau, zero_point=True),
            atol=1e-9,
        )

    def test_diagonal_preserved(self, comb4):
        m = random_projector(comb4, 4)
        out = evolve_projector(m, 1.234e-10)
        np.testing.assert_array_equal(np.diag(out.matrix), np.diag(m.matrix))


class TestEffectiveProjector:
    def test_zero_width_equals_evolved(self, comb4):
        m = random_projector(comb4, 2)
        t = 0.3e-9
        eff = effective_projector(m, DetectionWindow(t, 0.0))
        np.testing.assert_allclose(eff.matrix, evolve_projector(m, t).matrix, atol=1e-15)

    def test_sinc_zero_kills_offdiagonals(self, comb2):
        m = projector_from_row(dft_unitary(2), 0, comb2)
        T = 2 * np.pi / comb2.delta_omega  # (w1 - w0) T / 2 = pi
        eff = effective_projector(m, DetectionWindow(0.0, T))
        np.testing.assert_allclose(eff.matrix, np.diag(np.diag(m.matrix)), atol=1e-15)

    def test_half_period_window_value(self):
        comb = FrequencyComb(100.0, 2 * np.pi, 2)
        m = projector_from_row(dft_unitary(2), 0, comb)
        eff = effective_projector(m, DetectionWindow(0.0, 0.5))
        assert eff.matrix[0, 1] == pytest.approx(1 / np.pi, abs=1e-12)

    def test_diagonal_equals_source_exactly(self, comb4):
        m = random_projector(comb4, 3)
        eff = effective_projector(m, DetectionWindow(0.77e-9, 0.4e-9))
        np.testing.assert_array_equal(np.diag(eff.matrix), np.diag(m.matrix))

    def test_positive_semidefinite_with_unit_trace(self, comb4):
        m = random_projector(comb4, 5)
        eff = effective_projector(m, DetectionWindow(0.1e-9, 1.3e-9))
        eigs = np.linalg.eigvalsh(eff.matrix)
        assert eigs.min() >= -1e-10
        assert np.trace(eff.matrix).real == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_completeness_preserved(self, n):
        comb = FrequencyComb(3.0, 2 * np.pi * 1e9, n)
        u = UnitaryMap(haar_unitary(n, 17 + n))
        window = DetectionWindow(0.4e-9, 0.9e-9)
        total = sum(
            effective_projector(projector_from_row(u, j, comb), window).matrix
            for j in range(n)
        )
        np.testing.assert_allclose(total, np.eye(n), atol=1e-12)


class TestQuadratureOracle:
    @pytest.mark.parametrize("n,seed", [(2, 0), (4, 1), (8, 2)])
    def test_agrees_with_analytic(self, n, seed):
        comb = FrequencyComb(2 * np.pi * 193.1e12, 2 * np.pi * 1e9, n)
        m = random_projector(comb, seed)
        T = 4 * np.pi / comb.delta_omega * 0.9  # dw T <= 4 pi
        window = DetectionWindow(0.23e-9, T)
        analytic = effective_projector(m, window).matrix
        quad = effective_projector_quadrature(m, window, 64).matrix
        assert np.abs(analytic - quad).max() < 1e-8

    def test_zero_width_is_pointwise(self, comb4):
        m = random_projector(comb4, 6)
        window = DetectionWindow(0.19e-9, 0.0)
        np.testing.assert_array_equal(
            effective_projector_quadrature(m, window, 16).matrix,
            effective_projector(m, window).matrix,
        )

    def test_error_decreases_with_points(self, comb4):
        m = random_projector(comb4, 7)
        window = DetectionWindow(0.3e-9, 4 * np.pi / comb4.delta_omega * 0.9)
        exact = effective_projector(m, window).matrix
        errors = [
            np.abs(effective_projector_quadrature(m, window, n).matrix - exact).max()
            for n in (2, 4, 8, 16, 32, 64)
        ]
        for前, after in zip(errors, errors[1:]):
            assert after < 前 or after < 1e-13

    def test_rejects_too_few_points(self, comb4):
        with pytest.raises(ValueError):
            effective_projector_quadrature(
                random_projector(comb4, 8), DetectionWindow(0.0, 1e-9), 1
            )


class TestDetectionProbability:
    @pytest.mark.parametrize("T", [0.0, 0.3e-9, 2.1e-9])
    def test_mode_state_identity_rows(self, comb4, T):
        u = UnitaryMap(np.eye(4))
        state = basis_state(comb4, 2)
        for j in range(4):
            eff = effective_projector(
                projector_from_row(u, j, comb4), DetectionWindow(0.1e-9, T)
            )
            assert detection_probability(state, eff) == pytest.approx(
                1.0 if j == 2 else 0.0, abs=1e-12
            )

    def test_fourier_state_on_own_row(self, comb4):
        u = dft_unitary(4)
        state = SinglePhotonState(comb4, u.matrix[1])
        eff = effective_projector(projector_from_row(u, 1, comb4), DetectionWindow(0.0, 0.0))
        assert detection_probability(state, eff) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("t,T", [(0.0, 0.0), (0.4e-9, 0.0), (0.13e-9, 0.8e-9)])
    def test_mode_state_uniform_row_gives_1_over_n(self, comb4, t, T):
        eff = effective_projector(
            projector_from_row(dft_unitary(4), 0, comb4), DetectionWindow(t, T)
        )
        state = basis_state(comb4, 3)
        assert detection_probability(state, eff) == pytest.approx(0.25, abs=1e-12)
        quad = effective_projector_quadrature(
            projector_from_row(dft_unitary(4), 0, comb4), DetectionWindow(t, T), 64
        )
        assert detection_probability(state, quad) == pytest.approx(0.25, abs=1e-8)

    def test_probabilities_sum_to_one(self, comb4, rng):
        state = SinglePhotonState(comb4, random_state_vector(4, rng))
        u = UnitaryMap(haar_unitary(4, 23))
        window = DetectionWindow(0.2e-9, 0.7e-9)
        total = sum(
            detection_probability(
                state, effective_projector(projector_from_row(u, j, comb4), window)
            )
            for j in range(4)
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_small_window_limit(self, comb4, rng):
        state = SinglePhotonState(comb4, random_state_vector(4, rng))
        m = random_projector(comb4, 31)
        T = 1e-6 * comb4.beat_period
        p_limit = detection_probability(state, effective_projector(m, DetectionWindow(0.0, T)))
        p_exact = float(np.real(np.vdot(state.amplitudes, m.matrix @ state.amplitudes)))
        assert abs(p_limit - p_exact) < 1e-9

    def test_efficiency_scales_probability(self, comb4):
        state = basis_state(comb4, 0)
        eff = effective_projector(
            projector_from_row(dft_unitary(4), 0, comb4), DetectionWindow(0.0, 0.0)
        )
        assert detection_probability(state, eff, efficiency=0.5) == pytest.approx(0.125)
        with pytest.raises(ValueError):
            detection_probability(state, eff, efficiency=0.0)

    def test_comb_mismatch(self, comb4):
        other = FrequencyComb(comb4.omega0, comb4.delta_omega * 2, 4)
        eff = effective_projector(
            projector_from_row(dft_unitary(4), 0, other), DetectionWindow(0.0, 0.0)
        )
        with pytest.raises(ValueError, match="combs"):
            detection_probability(basis_state(comb4, 0), eff)

    def test_conjugate_evolution_convention_invariance(self, comb4, rng):
        # Flipping the Heisenberg sign conjugates projector and state alike;
        # every probability must be unchanged.
        v = random_state_vector(4, rng)
        state = SinglePhotonState(comb4, v)
        state_c = SinglePhotonState(comb4, v.conj())
        m = random_projector(comb4, 41)
        m_c = Projector(comb4, m.matrix.conj())
        t, T = 0.37e-9, 0.9e-9
        p_plus = detection_probability(state, effective_projector(m, DetectionWindow(t, T)))
        p_minus = detection_probability(
            state_c, effective_projector(m_c, DetectionWindow(-t, T))
        )
        assert p_plus == pytest.approx(p_minus, abs=1e-12)


def pair_fidelity_closed_form(n: int, delta_omega: float, T: float) -> float:
    s = float(sinc((n - 1) * delta_omega * T / 2))
    return (1 + s) ** 2 / (2 * (1 + s**2))


def quadrature_fidelity(m: Projector, window: DetectionWindow, n_points=64) -> float:
    """Fidelity rebuilt entirely from the quadrature-averaged operator."""
    target = evolve_projector(m, window.t_center).matrix
    avg = effective_projector_quadrature(m, window, n_points).matrix
    num = abs(np.trace(avg.conj().T @ target)) ** 2
    den = np.trace(avg.conj().T @ avg).real * np.trace(target.conj().T @ target).real
    return float(num / den)


class TestProjectionFidelity:
    def test_unity_at_zero_width_any_center(self, comb4):
        for seed, t in [(0, 0.0), (1, 0.6e-9), (2, -0.2e-9)]:
            m = random_projector(comb4, seed)
            assert projection_fidelity(m, DetectionWindow(t, 0.0)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("T", [0.0, 0.5e-9, 3.7e-9])
    def test_computational_basis_immune(self, comb4, T):
        m = projector_from_state(basis_state(comb4, 1))
        assert projection_fidelity(m, DetectionWindow(0.0, T)) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("n,T_frac", [(2, 0.2), (5, 0.1), (9, 0.45), (3, 1.0)])
    def test_pair_closed_form(self, n, T_frac):
        comb = FrequencyComb(2 * np.pi * 193.1e12, 2 * np.pi * 1e9, n)
        amp = np.zeros(n, dtype=complex)
        amp[0] = amp[-1] = 1 / np.sqrt(2)
        m = projector_from_state(SinglePhotonState(comb, amp))
        T = T_frac * comb.beat_period
        f = projection_fidelity(m, DetectionWindow(0.0, T))
        assert f == pytest.approx(pair_fidelity_closed_form(n, comb.delta_omega, T), abs=1e-12)
        assert f == pytest.approx(quadrature_fidelity(m, DetectionWindow(0.0, T)), abs=1e-8)

    def test_pair_sinc_zero_gives_half(self):
        comb = FrequencyComb(0.0, 2 * np.pi * 1e9, 2)
        amp = np.array([1, 1]) / np.sqrt(2)
        m = projector_from_state(SinglePhotonState(comb, amp.astype(complex)))
        T = 2 * np.pi / comb.delta_omega  # s = sinc(pi) = 0
        assert projection_fidelity(m, DetectionWindow(0.0, T)) == pytest.approx(0.5, abs=1e-12)

    def test_center_invariance(self, comb4, rng):
        for seed in range(4):
            m = random_projector(comb4, 100 + seed)
            T = float(rng.uniform(0.1, 2.0)) * comb4.beat_period
            t = float(rng.uniform(-2, 2)) * comb4.beat_period
            f0 = projection_fidelity(m, DetectionWindow(0.0, T))
            ft = projection_fidelity(m, DetectionWindow(t, T))
            assert ft == pytest.approx(f0, abs=1e-12)

    def test_monotone_decay_on_first_lobe(self):
        comb = FrequencyComb(1.0, 2 * np.pi * 1e9, 4)
        amp = np.zeros(4, dtype=complex)
        amp[0] = amp[-1] = 1 / np.sqrt(2)
        m = projector_from_state(SinglePhotonState(comb, amp))
        span = (comb.n_modes - 1) * comb.delta_omega
        ts = np.linspace(0.0, 2 * np.pi / span, 25)
        fs = [projection_fidelity(m, DetectionWindow(0.0, T)) for T in ts]
        assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))

    def test_omega0_independent(self):
        for omega0 in (0.0, 2 * np.pi * 193.1e12, 7.7e15):
            comb = FrequencyComb(omega0, 2 * np.pi * 1e9, 5)
            m = projector_from_state(
                SinglePhotonState(comb, np.ones(5, dtype=complex) / np.sqrt(5))
            )
            f = projection_fidelity(m, DetectionWindow(0.1e-9, 0.2e-9))
            assert f == pytest.approx(
                projection_fidelity(m, DetectionWindow(0.1e-9, 0.2e-9)), abs=0
            )
        # same numbers for两 omega0 values
        f_a = projection_fidelity(
            projector_from_state(
                SinglePhotonState(
                    FrequencyComb(0.0, 2 * np.pi * 1e9, 5), np.ones(5, dtype=complex) / np.sqrt(5)
                )
            ),
            DetectionWindow(0.1e-9, 0.2e-9),
        )
        f_b = projection_fidelity(
            projector_from_state(
                SinglePhotonState(
                    FrequencyComb(9.9e15, 2 * np.pi * 1e9, 5),
                    np.ones(5, dtype=complex) / np.sqrt(5),
                )
            ),
            DetectionWindow(0.1e-9, 0.2e-9),
        )
        assert f_a == pytest.approx(f_b, abs=1e-14)


class TestFidelitySweep:
    def test_zero_jitter_rows_are_unity(self, comb2):
        rows = fidelity_sweep("pair", [2, 3, 4], [0.0], comb2)
        assert all(f == pytest.approx(1.0, abs=1e-12) for _, _, f in rows)

    def test_row_order_n_major(self, comb2):
        rows = fidelity_sweep("fourier", [2, 3], [0.0, 1e-12], comb2)
        assert [(n, T) for n, T, _ in rows] == [(2, 0.0), (2, 1e-12), (3, 0.0), (3, 1e-12)]

    def test_pair_depends_on_span_time_product(self, comb2):
        # (N-1) dw T matched between N=2 and N=3 rows
        T2 = 0.31 * comb2.beat_period
        T3 = T2 / 2
        f2 = fidelity_sweep("pair", [2], [T2], comb2)[0][2]
        f3 = fidelity_sweep("pair", [3], [T3], comb2)[0][2]
        assert f2 == pytest.approx(f3, abs=1e-10)

    def test_85_mode_fourier_claim(self, comb2):
        rows = fidelity_sweep("fourier", [85], [3e-12], comb2)
        assert rows[0][2] >= 0.9

    def test_unknown_basis(self, comb2):
        with pytest.raises(ValueError, match="basis"):
            fidelity_sweep("diagonal", [2], [0.0], comb2)

    def test_empty_ranges(self, comb2):
        with pytest.raises(ValueError, match="non-empty"):
            fidelity_sweep("pair", [], [0.0], comb2)

    def test_csv_format(self, comb2):
        rows = fidelity_sweep("pair", [2], [0.0, 1e-12], comb2)
        buf = io.StringIO()
        write_fidelity_csv(rows, buf)
        lines = buf.getvalue().split("\n")
        assert lines[0] == "n_modes,response_time_s,fidelity"
        assert lines[1] == "2,0,1"
        assert len(lines) == 4  # header + 2 rows + trailing newline
