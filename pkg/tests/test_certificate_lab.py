"""
Tests for the dual certificate lab: kernels, interpolation systems, validation.

    pytest tests/test_certificate_lab.py -v
"""

import sys
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from atomiclift.certificate_lab import (
    build_gamma,
    build_phi,
    build_workspace,
    certificate_eval,
    fejer_coeffs,
    gamma_concentration_stats,
    implied_dual_vector,
    kernel_eval,
    matrix_kernel_eval,
    ones_subspace,
    phi_bound_report,
    solve_coefficients,
    validate_certificate,
)
from atomiclift.config import CertificateOptions
from atomiclift.dual_localizer import dual_polynomial_eval
from atomiclift.errors import ConventionError, DomainError
from atomiclift.signal_model import draw_separated_spikes, sample_subspace
from utils.environment import slow_tests_enabled

slow = pytest.mark.skipif(not slow_tests_enabled(), reason="set ATOMICLIFT_RUN_SLOW=1")


def _clustered_support(M, factor=1.5, start=0.1, K=3):
    return start + factor / M * np.arange(K)


class TestFejerKernel:
    """Squared Fejer kernel identities"""

    @pytest.mark.parametrize("M", [4, 16, 64, 128])
    def test_identities(self, M):
        table = fejer_coeffs(M)
        assert table.s.sum() == pytest.approx(M, abs=1e-12 * M)
        assert kernel_eval(table, 0, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert abs(kernel_eval(table, 1, 0.0)) <= 1e-12 * M
        assert table.kappa ** 2 * abs(kernel_eval(table, 2, 0.0)) == pytest.approx(1.0, abs=1e-12)

    def test_kernel_is_real_and_even(self):
        table = fejer_coeffs(8)
        taus = np.linspace(0.01, 0.49, 7)
        assert_allclose(kernel_eval(table, 0, taus), kernel_eval(table, 0, -taus), atol=1e-13)
        assert_allclose(np.imag(kernel_eval(table, 0, taus)), 0.0, atol=1e-13)

    def test_derivative_matches_finite_difference(self):
        table = fejer_coeffs(8)
        tau, h = 0.037, 1e-6
        numeric = (kernel_eval(table, 0, tau + h) - kernel_eval(table, 0, tau - h)) / (2 * h)
        assert kernel_eval(table, 1, tau) == pytest.approx(numeric, rel=1e-6)

    def test_invalid_order(self):
        with pytest.raises(DomainError):
            kernel_eval(fejer_coeffs(4), 4, 0.0)

    def test_matrix_kernel_with_ones_is_scalar(self):
        table = fejer_coeffs(8)
        value = matrix_kernel_eval(table, ones_subspace(8), 0, 0.2)
        assert value.shape == (1, 1)
        assert value[0, 0] == pytest.approx(kernel_eval(table, 0, 0.2))

    def test_subspace_must_have_4m_plus_1_rows(self):
        table = fejer_coeffs(8)
        with pytest.raises(ConventionError):
            matrix_kernel_eval(table, sample_subspace("real-gaussian", 32, 2, seed=0), 0, 0.1)


class TestInterpolationMatrices:
    """Phi and Gamma"""

    def test_phi_routes_agree(self):
        table = fejer_coeffs(16)
        support = [0.1, 0.3, 0.75]
        assert_allclose(build_phi(table, support, "blocks"), build_phi(table, support, "outer"), atol=1e-12)

    def test_gamma_routes_agree(self):
        table = fejer_coeffs(16)
        subspace = sample_subspace("fourier-row", 65, 3, seed=1)
        support = [0.1, 0.3, 0.75]
        blocks = build_gamma(table, subspace, support, "blocks")
        outer = build_gamma(table, subspace, support, "outer")
        assert_allclose(blocks, outer, atol=1e-11)
        assert_allclose(blocks, blocks.conj().T, atol=1e-12)

    def test_gamma_with_ones_is_phi(self):
        table = fejer_coeffs(16)
        support = [0.2, 0.6]
        assert_allclose(build_gamma(table, ones_subspace(16), support), build_phi(table, support), atol=1e-12)

    def test_phi_bounds_on_random_supports(self):
        table = fejer_coeffs(64)
        rng = np.random.default_rng(3)
        for _ in range(100):
            K = int(rng.integers(1, 9))
            support = draw_separated_spikes(K, 1.0 / 64, seed=rng).delays
            report = phi_bound_report(table, support)
            assert report["identity_gap"] <= 0.3623 + 1e-9
            assert report["norm"] <= 1.3623 + 1e-9
            assert report["inverse_norm"] <= 1.568 + 1e-9

    def test_duplicate_support(self):
        with pytest.raises(DomainError):
            build_phi(fejer_coeffs(4), [0.1, 0.1])

    def test_gamma_size_mismatch(self):
        with pytest.raises(DomainError):
            solve_coefficients(np.eye(4), [1.0, 1.0], [1.0, 1.0], kappa=1.0)


class TestDeterministicCertificate:
    """L = 1, b_n = 1: the scalar certificate"""

    @pytest.mark.parametrize("M", [16, 64])
    def test_valid_certificate(self, M):
        signs = np.exp(1j * np.array([0.4, -2.1, 1.3]))
        ws = build_workspace(M, _clustered_support(M), signs=signs)
        report = validate_certificate(ws)
        assert report.passed, report.reason
        assert report.interpolation_residual <= 1e-8
        assert report.off_support_max < 1.0
        assert report.far_region_max <= 0.99992

    def test_interpolates_conjugated_signs(self):
        signs = np.array([1.0, -1.0, 1j])
        ws = build_workspace(16, [0.1, 0.4, 0.8], signs=signs)
        assert_allclose(certificate_eval(ws, 0, ws.support)[:, 0], np.conj(signs), atol=1e-10)
        assert_allclose(certificate_eval(ws, 1, ws.support), 0.0, atol=1e-8)

    def test_near_region_is_concave(self):
        ws = build_workspace(16, [0.1, 0.4, 0.8])
        report = validate_certificate(ws)
        assert max(report.near_concavity_max) < 0
        assert min(report.near_decay_constants) > 0

    def test_single_spike_curvature_is_the_kernel_curvature(self):
        """Q is the squared Fejer kernel, so ||Q||^2 bends by 2 K''(0) at the spike"""
        M = 16
        ws = build_workspace(M, [0.3])
        report = validate_certificate(ws)
        assert report.spike_curvature[0] == pytest.approx(-2.0 / (ws.table.kappa * M) ** 2, rel=1e-8)

    def test_convex_point_at_spike_fails(self):
        ws = build_workspace(16, [0.1, 0.4, 0.8])
        original = certificate_eval

        def flipped(workspace, m, tau):
            values = original(workspace, m, tau)
            return -values if m == 2 else values

        with patch("atomiclift.certificate_lab.certificate_eval", side_effect=flipped):
            report = validate_certificate(ws)
        assert min(report.spike_curvature) > 0
        assert not report.passed
        assert "not concave" in report.reason

    def test_profile_is_kept_on_request(self):
        ws = build_workspace(8, [0.25, 0.75])
        report = validate_certificate(ws, CertificateOptions(grid_size=4096), keep_profile=True)
        taus, norms = report.profile
        assert taus.size == 4096
        assert norms.max() == pytest.approx(1.0, abs=1e-6)

    def test_too_close_spikes_fail(self):
        M = 16
        ws = build_workspace(M, _clustered_support(M, factor=0.2), signs=[1.0, -1.0, 1.0])
        report = validate_certificate(ws)
        assert not report.passed


class TestImpliedDualVector:
    """Q(tau) = X*(q)^H c(tau)"""

    def test_matches_certificate_evaluation(self):
        M = 8
        subspace = sample_subspace("fourier-row", 4 * M + 1, 2, seed=2)
        ws = build_workspace(M, [0.15, 0.6], signs=[1.0, -1.0], h=[1.0, 1j], subspace=subspace)
        q = implied_dual_vector(ws)
        taus = np.linspace(0.0, 0.99, 11)
        direct = certificate_eval(ws, 0, taus)
        via_q = dual_polynomial_eval(q, subspace, taus, indexing="symmetric")
        assert_allclose(via_q, direct, atol=1e-10)

    def test_h_is_normalized(self):
        ws = build_workspace(8, [0.3], h=[3.0], subspace=ones_subspace(8))
        assert ws.h_norm == pytest.approx(3.0)
        assert_allclose(ws.h, [1.0])


class TestGammaConcentration:
    """Deviation of Gamma from Phi kron I_L"""

    def test_ones_subspace_has_no_deviation(self):
        stats = gamma_concentration_stats(fejer_coeffs(16), "ones", [0.1, 0.5], L=1, trials=2)
        assert stats["max"] <= 1e-12

    def test_ones_needs_l_equal_one(self):
        with pytest.raises(DomainError):
            gamma_concentration_stats(fejer_coeffs(16), "ones", [0.1, 0.5], L=2, trials=2)

    def test_deviation_shrinks_with_m(self):
        small = gamma_concentration_stats(fejer_coeffs(16), "fourier-row", [0.1, 0.3, 0.6], L=3,
                                          trials=20, seed=1)
        large = gamma_concentration_stats(fejer_coeffs(128), "fourier-row", [0.1, 0.3, 0.6], L=3,
                                          trials=20, seed=1)
        assert large["median"] < small["median"]


@slow
class TestRandomCertificates:
    """Fourier-row certificates, K = 3, L = 3, delta = 1.5 / M"""

    @staticmethod
    def _pass_rate(M, seeds):
        passed = 0
        for seed in seeds:
            rng = np.random.default_rng(seed)
            spikes = draw_separated_spikes(3, 1.5 / M, seed=rng)
            subspace = sample_subspace("fourier-row", 4 * M + 1, 3, seed=rng)
            h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            signs = spikes.amplitudes / np.abs(spikes.amplitudes)
            ws = build_workspace(M, spikes.delays, signs=signs, h=h, subspace=subspace)
            passed += validate_certificate(ws).passed
        return passed / len(seeds)

    def test_pass_rate_at_m64(self):
        assert self._pass_rate(64, range(50)) >= 0.9

    def test_pass_rate_non_decreasing_in_m(self):
        rates = [self._pass_rate(M, range(50)) for M in (16, 32, 64, 128)]
        assert all(later >= earlier for earlier, later in zip(rates, rates[1:]))
