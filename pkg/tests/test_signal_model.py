"""
Tests for the signal model: spikes, subspaces, measurement synthesis.

    pytest tests/test_signal_model.py -v
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from atomiclift.config import AmplitudeSpec
from atomiclift.errors import ConfigurationError, ConventionError, DomainError
from atomiclift.signal_model import (
    IndexingConvention,
    ProblemInstance,
    SpikeSignal,
    SubspaceModel,
    calibrate_with_known_psf,
    draw_separated_spikes,
    epsilon_rule,
    measure,
    min_separation,
    noise_for_snr,
    sample_indices,
    sample_subspace,
    steering_derivatives,
    steering_matrix,
    steering_vector,
    synth_psf,
    synth_spike_spectrum,
    synthesize_instance,
    time_domain_rendering,
    wrap_distance,
)


class TestIndexingConvention:
    """Sample index sets"""

    def test_symmetric_indices(self):
        convention = IndexingConvention.symmetric(4)
        assert convention.N == 17
        assert convention.M == 4
        assert_allclose(convention.indices(), np.arange(-8, 9))

    def test_shifted_indices(self):
        assert_allclose(sample_indices(8, "shifted"), np.arange(8))

    def test_symmetric_rejects_bad_length(self):
        with pytest.raises(ConventionError):
            IndexingConvention("symmetric", 16)

    def test_unknown_kind(self):
        with pytest.raises(ConventionError):
            IndexingConvention("centered", 17)


class TestSteering:
    """Steering vectors c(tau)"""

    def test_unit_norm(self):
        for indexing in ("shifted", "symmetric"):
            c = steering_vector(0.37, 17, indexing)
            assert np.linalg.norm(c) == pytest.approx(1.0, abs=1e-14)

    def test_half_period_alternates_sign(self):
        c = steering_vector(0.5, 5, "symmetric")
        assert_allclose(c, np.array([1, -1, 1, -1, 1]) / np.sqrt(5), atol=1e-15)

    def test_zero_delay_is_flat(self):
        assert_allclose(steering_vector(0.0, 5), np.ones(5) / np.sqrt(5))

    def test_delay_outside_unit_interval(self):
        with pytest.raises(DomainError):
            steering_vector(1.0, 16)
        with pytest.raises(DomainError):
            steering_vector(-0.1, 16)

    def test_matrix_columns_match_vectors(self):
        delays = [0.1, 0.5, 0.9]
        C = steering_matrix(delays, 12)
        for k, tau in enumerate(delays):
            assert_allclose(C[:, k], steering_vector(tau, 12))

    def test_derivative_matches_finite_difference(self):
        tau, h = 0.31, 1e-6
        derivs = steering_derivatives(tau, 16, order=1)
        numeric = (steering_vector(tau + h, 16) - steering_vector(tau - h, 16)) / (2 * h)
        assert_allclose(derivs[1], numeric, atol=1e-6)


class TestSpikeSignal:
    """Spike train validation and spectra"""

    def test_mismatched_lengths(self):
        with pytest.raises(DomainError):
            SpikeSignal([0.1, 0.2], [1.0])

    def test_duplicate_delays(self):
        with pytest.raises(DomainError):
            SpikeSignal([0.2, 0.2], [1.0, 2.0])

    def test_arrays_are_read_only(self):
        spikes = SpikeSignal([0.2], [1.0])
        with pytest.raises(ValueError):
            spikes.delays[0] = 0.3

    def test_spectrum_of_single_spike(self):
        spikes = SpikeSignal([0.25], [2.0 + 0j])
        x = synth_spike_spectrum(spikes, 8)
        assert_allclose(x, 2.0 * np.exp(-2j * np.pi * np.arange(8) * 0.25))

    def test_atomic_amplitudes_scale_by_root_n(self):
        spikes = SpikeSignal([0.1, 0.6], [1.0 + 1j, -0.5])
        atoms = spikes.atomic_amplitudes(16)
        assert_allclose(atoms, 4.0 * spikes.amplitudes)
        assert_allclose(steering_matrix(spikes.delays, 16) @ atoms, synth_spike_spectrum(spikes, 16))

    def test_two_spike_spectrum(self):
        spikes = SpikeSignal([0.0, 0.5], [1.0, 1.0])
        n = np.arange(-2, 3)
        assert_allclose(synth_spike_spectrum(spikes, 5, "symmetric"), 1 + (-1.0) ** n, atol=1e-14)

    def test_spectrum_is_linear_in_the_spike_set(self):
        first = SpikeSignal([0.11, 0.42], [1.0 - 2j, 0.3])
        second = SpikeSignal([0.77], [2.5j])
        combined = synth_spike_spectrum(first.concatenate(second), 32)
        assert_allclose(combined, synth_spike_spectrum(first, 32) + synth_spike_spectrum(second, 32),
                        rtol=1e-13, atol=1e-13)

    def test_shifted_and_symmetric_differ_by_a_phase(self):
        """Shifted index n + 2M picks up e^{-j 2 pi (2M) tau} per spike"""
        M, tau = 4, 0.123
        spikes = SpikeSignal([tau], [1.5 - 0.5j])
        symmetric = synth_spike_spectrum(spikes, 4 * M + 1, "symmetric")
        shifted = synth_spike_spectrum(spikes, 4 * M + 1, "shifted")
        assert_allclose(shifted, symmetric * np.exp(-2j * np.pi * 2 * M * tau), rtol=1e-13)

    def test_empty_spectrum(self):
        spikes = SpikeSignal([], [])
        assert spikes.count == 0
        assert_allclose(synth_spike_spectrum(spikes, 8), np.zeros(8))


class TestSubspace:
    """Random subspace draws"""

    def test_fourier_rows_have_unit_modulus(self):
        subspace = sample_subspace("fourier-row", 32, 4, seed=1)
        assert_allclose(np.abs(subspace.B), 1.0)
        assert subspace.coherence == 1.0
        assert subspace.coherence_is_deterministic

    def test_gaussian_coherence_is_empirical(self):
        subspace = sample_subspace("real-gaussian", 32, 3, seed=1)
        assert not subspace.coherence_is_deterministic
        assert subspace.coherence == pytest.approx(np.max(np.abs(subspace.B) ** 2))

    def test_isotropy_on_average(self):
        subspace = sample_subspace("complex-gaussian", 20000, 2, seed=3)
        second_moment = subspace.B.conj().T @ subspace.B / subspace.N
        assert_allclose(second_moment, np.eye(2), atol=0.05)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            sample_subspace("wavelet", 16, 2)

    def test_fourier_rows_with_one_dimension_are_ones(self):
        subspace = sample_subspace("fourier-row", 12, 1, seed=9)
        assert_allclose(subspace.B, np.ones((12, 1)))

    def test_dimension_out_of_range(self):
        with pytest.raises(DomainError):
            sample_subspace("real-gaussian", 4, 5)


class TestSeparation:
    """Separated spike draws"""

    def test_wrap_distance(self):
        assert wrap_distance(0.95, 0.05) == pytest.approx(0.1)

    def test_min_separation_single_spike(self):
        assert min_separation([0.3]) == float("inf")

    def test_min_separation_wraps_around(self):
        assert min_separation([0.1, 0.95]) == pytest.approx(0.15)

    def test_draws_respect_separation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            spikes = draw_separated_spikes(8, 1.0 / 16, seed=rng)
            assert min_separation(spikes.delays) >= 1.0 / 16

    def test_dense_request_uses_spacing_construction(self):
        spikes = draw_separated_spikes(9, 0.11, seed=5)
        assert min_separation(spikes.delays) >= 0.11 - 1e-12

    def test_infeasible_request(self):
        with pytest.raises(ConfigurationError):
            draw_separated_spikes(10, 0.1)

    def test_amplitude_dynamic_range(self):
        spikes = draw_separated_spikes(50, 0.001, AmplitudeSpec(dynamic_range_db=10.0), seed=2)
        magnitudes = np.abs(spikes.amplitudes)
        assert magnitudes.min() >= 1.0 - 1e-12
        assert magnitudes.max() <= 10 ** 0.5 + 1e-12


class TestMeasurements:
    """Synthesis y = diag(B h) x + w"""

    def test_measure_is_entrywise_product(self):
        g = np.array([1.0, 2.0, 3.0])
        x = np.array([1j, 1.0, -1.0])
        assert_allclose(measure(g, x), g * x)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            measure(np.ones(3), np.ones(4))

    def test_noise_matches_requested_snr_on_average(self):
        y_clean = np.exp(2j * np.pi * np.arange(4096) * 0.1)
        w, sigma = noise_for_snr(y_clean, 10.0, seed=1)
        assert sigma == pytest.approx(np.sqrt(0.1))
        measured = 10 * np.log10(np.vdot(y_clean, y_clean).real / np.vdot(w, w).real)
        assert measured == pytest.approx(10.0, abs=0.3)

    def test_epsilon_rule(self):
        N = 64
        assert epsilon_rule(0.5, N) == pytest.approx(0.5 * np.sqrt(N + 2 * np.sqrt(N * np.log(N))))
        assert epsilon_rule(0.0, N) == 0.0

    def test_instance_is_consistent(self):
        instance = synthesize_instance(32, 3, 2, seed=4, snr_db=20.0)
        g = synth_psf(instance.subspace, instance.h)
        clean = measure(g, instance.ground_truth_spectrum())
        assert_allclose(instance.y - clean, instance.w, atol=1e-12)
        assert instance.noisy
        assert instance.epsilon == pytest.approx(epsilon_rule(instance.sigma, 32))

    def test_same_seed_same_instance(self):
        a = synthesize_instance(16, 2, 2, seed=11)
        b = synthesize_instance(16, 2, 2, seed=11)
        assert_allclose(a.y, b.y)
        assert_allclose(a.spikes.delays, b.spikes.delays)

    def test_sigma_and_snr_are_exclusive(self):
        with pytest.raises(ConfigurationError):
            synthesize_instance(16, 2, 2, seed=1, sigma=0.1, snr_db=10.0)

    def test_empty_signal(self):
        instance = synthesize_instance(16, 0, 2, seed=1)
        assert_allclose(instance.y, np.zeros(16))
        assert not instance.noisy


class TestInstanceCodec:
    """JSON encoding of problem instances"""

    def test_json_preserves_instance(self):
        instance = synthesize_instance(16, 2, 3, seed=9, sigma=0.01, indexing="shifted")
        decoded = ProblemInstance.from_json(instance.to_json())
        assert_allclose(decoded.y, instance.y)
        assert_allclose(decoded.subspace.B, instance.subspace.B)
        assert_allclose(decoded.spikes.amplitudes, instance.spikes.amplitudes)
        assert decoded.epsilon == instance.epsilon
        assert json.loads(instance.to_json())["N"] == 16

    def test_length_mismatch_is_rejected(self):
        subspace = SubspaceModel(np.ones((8, 1)))
        with pytest.raises(DomainError):
            ProblemInstance(np.zeros(7), subspace, IndexingConvention.shifted(7))


class TestRenderings:
    """Time-domain renderings and known-PSF deconvolution"""

    def test_spike_renders_at_its_delay(self):
        spikes = SpikeSignal([0.25], [3.0 + 0j])
        t, values = time_domain_rendering(synth_spike_spectrum(spikes, 16), oversample=8)
        peak = int(np.argmax(np.abs(values)))
        assert t[peak] == pytest.approx(0.25)
        assert np.abs(values[peak]) == pytest.approx(3.0)

    def test_known_psf_deconvolution(self):
        g = np.array([1.0, 0.0, 2.0])
        y = np.array([2.0, 5.0, 4.0])
        x, mask = calibrate_with_known_psf(y, g)
        assert_allclose(x, [2.0, 0.0, 2.0])
        assert mask.tolist() == [False, True, False]
