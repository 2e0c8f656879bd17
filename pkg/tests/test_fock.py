import math

import numpy as np
import pytest

from tmsvlab.errors import HeraldImpossibleError
from tmsvlab.fock import (
    DensityOperator,
    FockCutoff,
    annihilate,
    basis_state,
    create,
    density_from_json,
    density_to_json,
    dual_subtracted_state,
    fidelity,
    normalize,
    phase_shift,
    tmsv_state,
    to_density,
    truncate_density,
)


def lam_of(zeta):
    # independent of np.tanh: lambda = (e^{2z} - 1)/(e^{2z} + 1)
    e = math.exp(2 * zeta)
    return (e - 1) / (e + 1)


class TestTmsvState:
    def test_zero_squeezing_is_vacuum(self):
        psi = tmsv_state(0.0, 4)
        assert psi.amplitude(0, 0) == pytest.approx(1.0, abs=1e-15)
        assert np.abs(psi.amplitudes).sum() == pytest.approx(1.0, abs=1e-15)

    def test_amplitudes_at_reference_point(self):
        psi = tmsv_state(0.19, 15)
        lam = lam_of(0.19)
        assert lam == pytest.approx(0.18776, abs=2e-5)
        assert psi.amplitude(0, 0).real == pytest.approx(0.98221, abs=2e-5)
        assert psi.amplitude(1, 1).real == pytest.approx(0.18442, abs=2e-5)
        assert psi.amplitude(0, 1) == 0.0
        # every diagonal amplitude follows sqrt(1-lam^2) lam^n
        for n in range(16):
            assert psi.amplitude(n, n).real == pytest.approx(
                math.sqrt(1 - lam**2) * lam**n, rel=1e-10
            )

    def test_truncation_tail_negligible(self):
        lam = lam_of(0.19)
        raw = [math.sqrt(1 - lam**2) * lam**n for n in range(16)]
        assert abs(1.0 - sum(c * c for c in raw)) < 1e-10  # geometric tail bound
        assert tmsv_state(0.19, 15).norm_sq == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            tmsv_state(float("nan"), 10)
        with pytest.raises(ValueError):
            tmsv_state(float("inf"), 10)
        with pytest.raises(ValueError):
            tmsv_state(-0.1, 10)
        with pytest.raises(ValueError):
            FockCutoff(0)

    def test_warns_when_cutoff_too_small(self):
        with pytest.warns(UserWarning, match="too small"):
            tmsv_state(1.5, 3)


class TestLadderOperators:
    def test_annihilate_single_photon(self):
        out = annihilate(basis_state(1, 0, 4), mode=1)
        assert out.amplitude(0, 0) == pytest.approx(1.0)
        assert not out.normalized
        assert out.norm_sq == pytest.approx(1.0)

    def test_dual_subtraction_matches_termwise_series(self):
        # independent term-by-term evaluation: a1 a2 sum lam^n |n,n>
        # has amplitude n lam^n on |n-1, n-1>
        zeta, n_max = 0.19, 15
        lam = lam_of(zeta)
        psi = annihilate(annihilate(tmsv_state(zeta, n_max), 1), 2)
        scale = psi.amplitude(0, 0).real / (1 * lam**1)
        for n in range(1, n_max + 1):
            expected = scale * n * lam**n
            assert psi.amplitude(n - 1, n - 1).real == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("lam", [0.05, 0.1, 0.2])
    def test_dual_subtracted_coefficient_law(self, lam):
        zeta = math.atanh(lam)
        state = dual_subtracted_state(zeta, 15)
        prefactor = (1 - lam**2) ** 1.5 / math.sqrt(1 + lam**2)
        for n in range(12):
            assert state.amplitude(n, n).real == pytest.approx(
                prefactor * (n + 1) * lam**n, rel=1e-7
            )

    def test_small_squeezing_distillation_ratio(self):
        lam = 0.01
        state = dual_subtracted_state(math.atanh(lam), 15)
        ratio = state.amplitude(1, 1).real / state.amplitude(0, 0).real
        assert ratio == pytest.approx(2 * lam, rel=1e-3)

    @pytest.mark.parametrize("n", range(0, 15))
    def test_ladder_algebra(self, n):
        # a a^dag |n> = (n+1) |n> up to floating point in sqrt products
        state = basis_state(n, 0, 15)
        out = annihilate(create(state, 1), 1)
        assert out.amplitude(n, 0).real == pytest.approx(n + 1, rel=1e-14)

    def test_annihilate_vacuum_has_zero_norm(self):
        dead = annihilate(basis_state(0, 0, 3), 1)
        assert dead.norm_sq == 0.0
        with pytest.raises(HeraldImpossibleError):
            normalize(dead)
        with pytest.raises(HeraldImpossibleError):
            to_density(dead)


class TestPhaseShift:
    def test_zero_phase_is_identity(self):
        psi = tmsv_state(0.19, 8)
        out = phase_shift(psi, 1, 0.0)
        np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-15)

    def test_pi_flips_single_photon_amplitude(self):
        psi = normalize(
            PureStateSum(basis_state(0, 0, 3), basis_state(1, 0, 3))
        )
        out = phase_shift(psi, 1, np.pi)
        assert out.amplitude(1, 0).real == pytest.approx(-psi.amplitude(1, 0).real, rel=1e-12)
        assert out.amplitude(0, 0) == pytest.approx(psi.amplitude(0, 0))

    @pytest.mark.parametrize("theta", [0.3, 1.0, np.pi / 2, 2.6])
    def test_opposite_shifts_leave_tmsv_invariant(self, theta):
        psi = tmsv_state(0.19, 15)
        shifted = phase_shift(phase_shift(psi, 1, theta), 2, -theta)
        assert fidelity(shifted, psi) == pytest.approx(1.0, abs=1e-12)

    def test_norm_preserved(self):
        psi = tmsv_state(0.3, 10)
        assert phase_shift(psi, 2, 1.234).norm_sq == pytest.approx(1.0, abs=1e-12)


def PureStateSum(a, b):
    # helper: unnormalized superposition of two basis states
    from tmsvlab.fock import PureState

    return PureState(a.amplitudes + b.amplitudes, a.cutoff, normalized=False)


class TestDensityAndNormalize:
    def test_vacuum_projector(self):
        rho = to_density(basis_state(0, 0, 3))
        assert rho.matrix[0, 0] == pytest.approx(1.0)
        assert np.abs(rho.matrix).sum() == pytest.approx(1.0)

    def test_normalize_records_weight(self):
        from tmsvlab.fock import PureState

        doubled = PureState(
            2.0 * basis_state(0, 0, 3).amplitudes, FockCutoff(3), normalized=False
        )
        unit = normalize(doubled)
        assert unit.norm_sq == pytest.approx(1.0)
        assert unit.weight == pytest.approx(4.0)

    def test_weights_compose_multiplicatively(self):
        psi = tmsv_state(0.19, 15)
        step1 = normalize(annihilate(psi, 1))
        step2 = normalize(annihilate(step1, 2))
        direct = annihilate(annihilate(psi, 1), 2)
        assert step2.weight == pytest.approx(direct.norm_sq, rel=1e-12)

    def test_top_layer_population_small_for_defaults(self):
        assert tmsv_state(0.19, 15).top_layer_population() < 1e-8
        assert dual_subtracted_state(0.19, 15).top_layer_population() < 1e-8
        assert to_density(tmsv_state(0.19, 15)).top_layer_population() < 1e-8


class TestFidelity:
    def test_identical_pure_states(self):
        assert fidelity(basis_state(0, 0, 3), basis_state(0, 0, 3)) == pytest.approx(1.0)

    def test_orthogonal_states(self):
        assert fidelity(basis_state(0, 0, 3), basis_state(1, 1, 3)) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_pure_vs_mixture_gives_weight(self):
        p = 0.3
        psi = basis_state(0, 0, 3)
        phi = basis_state(1, 1, 3)
        mix = DensityOperator(
            p * to_density(psi).matrix + (1 - p) * to_density(phi).matrix,
            2,
            FockCutoff(3),
        )
        assert fidelity(psi, mix) == pytest.approx(p, abs=1e-10)
        assert fidelity(mix, psi) == pytest.approx(p, abs=1e-10)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            fidelity(basis_state(0, 0, 3), basis_state(0, 0, 4))


class TestSerializationAndTruncation:
    def test_density_json_round_trip(self):
        rho = to_density(tmsv_state(0.19, 7))
        back = density_from_json(density_to_json(rho))
        assert back.mode_count == 2
        assert back.cutoff == FockCutoff(7)
        np.testing.assert_allclose(back.matrix, rho.matrix, atol=1e-15)

    def test_single_mode_json_round_trip(self):
        rho = to_density(tmsv_state(0.19, 7)).partial_trace(1)
        back = density_from_json(density_to_json(rho))
        assert back.mode_count == 1
        np.testing.assert_allclose(back.matrix, rho.matrix, atol=1e-15)

    def test_partial_trace_thermal_populations(self):
        # reduced mode of a two-mode squeezed vacuum is thermal: p_n ~ lam^(2n)
        lam = lam_of(0.19)
        reduced = to_density(tmsv_state(0.19, 15)).partial_trace(2)
        pops = reduced.populations()
        expected = (1 - lam**2) * lam ** (2 * np.arange(16))
        np.testing.assert_allclose(pops, expected, atol=1e-12)

    def test_truncate_density(self):
        rho = to_density(tmsv_state(0.19, 15))
        small = truncate_density(rho, 3)
        assert small.cutoff == FockCutoff(3)
        assert small.matrix.trace().real == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            truncate_density(small, 5)
