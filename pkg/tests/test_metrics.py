import math

import numpy as np
import pytest

from tmsvlab.channels import LossSpec, apply_loss
from tmsvlab.fock import (
    DensityOperator,
    FockCutoff,
    basis_state,
    dual_subtracted_state,
    normalize,
    tmsv_state,
    to_density,
)
from tmsvlab.metrics import (
    MetricsReport,
    compute_metrics,
    correlated_variance,
    log_negativity,
    min_correlated_variance,
    negativity,
    partial_transpose,
    squeezing_db,
)


def random_single_mode_density(rng, dim):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / rho.trace().real


def product_density(rho_a, rho_b, n_max):
    return DensityOperator(np.kron(rho_a, rho_b), 2, FockCutoff(n_max))


def bell_like(n_max):
    from tmsvlab.fock import PureState

    a = basis_state(0, 0, n_max).amplitudes + basis_state(1, 1, n_max).amplitudes
    return to_density(normalize(PureState(a, FockCutoff(n_max), normalized=False)))


class TestPartialTranspose:
    def test_product_state_transposes_second_factor(self):
        rng = np.random.default_rng(7)
        a = random_single_mode_density(rng, 4)
        b = random_single_mode_density(rng, 4)
        rho = product_density(a, b, 3)
        pt = partial_transpose(rho)
        np.testing.assert_allclose(pt, np.kron(a, b.T), atol=1e-14)
        assert np.linalg.eigvalsh(pt).min() > -1e-9  # separable stays PSD

    def test_bell_like_minimum_eigenvalue(self):
        pt = partial_transpose(bell_like(3))
        assert np.linalg.eigvalsh(pt).min() == pytest.approx(-0.5, abs=1e-12)

    def test_involution_is_exact(self):
        rho = apply_loss(to_density(tmsv_state(0.19, 7)), LossSpec.uniform(0.6))
        twice = partial_transpose(
            DensityOperator(partial_transpose(rho), 2, rho.cutoff)
        )
        assert np.array_equal(twice, rho.matrix)

    def test_single_mode_rejected(self):
        reduced = to_density(tmsv_state(0.19, 7)).partial_trace(1)
        with pytest.raises(ValueError):
            partial_transpose(reduced)


class TestNegativity:
    def test_product_states_have_zero_negativity(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = random_single_mode_density(rng, 4)
            b = random_single_mode_density(rng, 4)
            assert negativity(product_density(a, b, 3)) < 1e-9

    def test_convex_mixtures_of_products_stay_ppt(self):
        rng = np.random.default_rng(13)
        pieces = []
        for _ in range(4):
            a = random_single_mode_density(rng, 4)
            b = random_single_mode_density(rng, 4)
            pieces.append(np.kron(a, b))
        w = rng.dirichlet(np.ones(4))
        mix = sum(wi * p for wi, p in zip(w, pieces))
        assert negativity(DensityOperator(mix, 2, FockCutoff(3))) < 1e-9

    def test_bell_like_log_negativity_is_one(self):
        assert log_negativity(bell_like(3)) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("zeta", [0.1, 0.19, 0.3, 0.358])
    def test_tmsv_closed_form(self, zeta):
        rho = to_density(tmsv_state(zeta, 15))
        assert log_negativity(rho) == pytest.approx(2 * zeta / math.log(2), abs=1e-4)

    def test_dual_subtracted_closed_form(self):
        lam = math.tanh(0.19)
        expected = math.log2((1 + lam) ** 3 / ((1 - lam) * (1 + lam**2)))
        rho = to_density(dual_subtracted_state(0.19, 15))
        assert log_negativity(rho) == pytest.approx(expected, abs=1e-3)

    @pytest.mark.parametrize(
        "eta_pair", [(1.0, 0.8), (0.8, 0.6), (0.6, 0.42), (0.42, 0.2)]
    )
    def test_monotone_under_loss(self, eta_pair):
        rho = to_density(tmsv_state(0.19, 12))
        high, low = eta_pair
        en_high = log_negativity(apply_loss(rho, LossSpec.uniform(high)))
        en_low = log_negativity(apply_loss(rho, LossSpec.uniform(low)))
        assert en_low <= en_high + 1e-12

    def test_eigensolver_self_checks(self):
        # the internal eigensolve verifies trace closure and residuals;
        # confirm it also holds under an explicit independent check
        rho = apply_loss(to_density(tmsv_state(0.19, 9)), LossSpec.uniform(0.42))
        pt = partial_transpose(rho)
        vals, vecs = np.linalg.eigh(pt)
        assert abs(vals.sum() - pt.trace().real) < 1e-10
        residual = np.linalg.norm(pt @ vecs - vecs * vals, axis=0).max()
        assert residual < 1e-9
        assert negativity(rho) > 0  # runs the checked path


class TestSqueezingDb:
    def test_unit_variance_is_zero_db(self):
        assert squeezing_db(1.0) == 0.0

    def test_reference_value(self):
        assert squeezing_db(0.86722) == pytest.approx(0.619, abs=1e-3)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            squeezing_db(0.0)
        with pytest.raises(ValueError):
            squeezing_db(-0.2)


class TestCorrelatedVariance:
    def test_matches_lossy_tmsv_law(self):
        zeta, eta = 0.19, 0.42
        rho = apply_loss(to_density(tmsv_state(zeta, 15)), LossSpec.uniform(eta))
        for theta in np.linspace(0, 2 * np.pi, 9):
            for sign in (-1, +1):
                expected = (1 - eta) + eta * (
                    math.cosh(2 * zeta) + sign * math.cos(theta) * math.sinh(2 * zeta)
                )
                got = correlated_variance(rho, theta / 2, theta / 2, sign)
                assert got == pytest.approx(expected, abs=1e-9)

    def test_minimum_of_lossy_tmsv(self):
        rho = apply_loss(to_density(tmsv_state(0.19, 15)), LossSpec.uniform(0.42))
        v_min, theta_min = min_correlated_variance(rho)
        assert v_min == pytest.approx(0.8672218, abs=1e-6)
        assert min(theta_min, 2 * np.pi - theta_min) < 1e-3

    def test_vacuum_level_is_one(self):
        vac = to_density(basis_state(0, 0, 4))
        assert correlated_variance(vac, 0.3, 1.1, -1) == pytest.approx(1.0, abs=1e-12)
        assert correlated_variance(vac, 0.3, 1.1, +1) == pytest.approx(1.0, abs=1e-12)


class TestMetricsReport:
    def test_report_consistency_invariants(self):
        rho = apply_loss(to_density(tmsv_state(0.19, 12)), LossSpec.uniform(0.42))
        report = compute_metrics(rho, fitted_zeta=0.19)
        assert report.log_negativity == pytest.approx(
            math.log2(1 + 2 * report.negativity), abs=1e-12
        )
        assert report.squeezing_db == pytest.approx(
            -10 * math.log10(report.min_variance), abs=1e-12
        )
        assert report.fitted_zeta == 0.19

    def test_json_round_trip(self):
        rho = to_density(tmsv_state(0.1, 8))
        report = compute_metrics(rho)
        back = MetricsReport.from_json(report.to_json())
        assert back == report
