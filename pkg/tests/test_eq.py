"""Differentiable EQ: bases, gain curve, and the optimization loop."""

import numpy as np
import pytest

from timbrespace.audio import AudioBuffer
from timbrespace.encoders import MelStatEncoder
from timbrespace.eq import (
    EqParams,
    EqRunConfig,
    apply_eq,
    band_centers_hz,
    build_target,
    gain_curve,
    gain_curve_jacobian,
    optimize_eq,
    _pu_bases,
)
from timbrespace.spectral import Spectrogram, mel_filterbank, stft

SR = 16000


def tone_mixture(seconds=1.0, sample_rate=SR):
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    freqs = [220.0, 440.0, 880.0, 1760.0, 3520.0]
    samples = sum(np.sin(2 * np.pi * f * t) / (i + 1) for i, f in enumerate(freqs))
    samples += 0.05 * np.random.default_rng(0).normal(size=len(t))
    return AudioBuffer(0.8 * samples / np.max(np.abs(samples)), sample_rate)


def small_encoder(n_fft=256, n_mels=12, d=24, seed=0):
    fb = mel_filterbank(n_mels=n_mels, n_fft=n_fft, sample_rate=SR, f_min=0.0, f_max=8000.0)
    return MelStatEncoder(fb, d=d, projection_seed=seed)


class TestBases:
    def test_partition_of_unity(self):
        for bands in (1, 2, 8, 32):
            bases = _pu_bases(bands, 1024, SR)
            np.testing.assert_allclose(bases.sum(axis=0), np.ones(513), atol=1e-9)

    def test_nonnegative(self):
        bases = _pu_bases(16, 512, SR)
        assert bases.min() >= 0.0

    def test_band_centers_monotone(self):
        centers = band_centers_hz(32, 1024, SR)
        assert len(centers) == 32
        assert np.all(np.diff(centers) > 0)
        assert centers[0] == pytest.approx(0.0, abs=1e-9)
        assert centers[-1] == pytest.approx(SR / 2, rel=1e-9)


class TestGainCurve:
    def test_unity(self):
        curve = gain_curve(EqParams.unity(32), 1024, SR)
        np.testing.assert_array_equal(curve, np.ones(513))

    def test_constant_shift(self):
        c = 0.7
        curve = gain_curve(EqParams(np.full(8, c)), 512, SR)
        np.testing.assert_allclose(curve, np.full(257, np.exp(c)), rtol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        params = EqParams(rng.uniform(-1, 1, 8))
        jac = gain_curve_jacobian(params, 128, SR)
        h = 1e-5
        for k in range(8):
            up = params.log_gains.copy()
            down = params.log_gains.copy()
            up[k] += h
            down[k] -= h
            numeric = (gain_curve(EqParams(up), 128, SR) - gain_curve(EqParams(down), 128, SR)) / (2 * h)
            scale = np.maximum(np.abs(numeric), 1e-9)
            assert np.max(np.abs(jac[k] - numeric) / scale) <= 1e-6

    def test_clamp_enforced_by_type(self):
        with pytest.raises(ValueError):
            EqParams(np.array([11.0]))


class TestApplyEq:
    def _spec(self):
        return stft(tone_mixture(0.25), 256, 64)

    def test_unity_is_identity(self):
        spec = self._spec()
        out = apply_eq(spec, EqParams.unity(8))
        np.testing.assert_array_equal(out.magnitudes, spec.magnitudes)
        np.testing.assert_array_equal(out.phases, spec.phases)

    def test_global_double(self):
        spec = self._spec()
        out = apply_eq(spec, EqParams(np.full(8, np.log(2.0))))
        np.testing.assert_allclose(out.magnitudes, 2.0 * spec.magnitudes, rtol=1e-12)

    def test_single_band_boost_is_local(self):
        spec = self._spec()
        bands = 8
        lg = np.zeros(bands)
        lg[3] = np.log(4.0)
        out = apply_eq(spec, EqParams(lg))
        bases = _pu_bases(bands, spec.n_fft, SR)
        in_band = bases[3] > 0.999  # bins where band 3 fully owns the gain
        out_band = bases[3] == 0.0
        np.testing.assert_allclose(out.magnitudes[:, in_band], 4.0 * spec.magnitudes[:, in_band], rtol=1e-9)
        np.testing.assert_array_equal(out.magnitudes[:, out_band], spec.magnitudes[:, out_band])

    def test_commutes_with_scaling(self):
        spec = self._spec()
        params = EqParams(np.linspace(-1, 1, 8))
        scaled = Spectrogram(3.0 * spec.magnitudes, spec.phases, spec.n_fft, spec.hop, spec.sample_rate)
        a = apply_eq(scaled, params).magnitudes
        b = 3.0 * apply_eq(spec, params).magnitudes
        np.testing.assert_allclose(a, b, rtol=1e-12)


class TestBuildTarget:
    def test_source_only(self):
        z_s = np.array([1.0, 0.0])
        z_p = np.array([0.0, 1.0])
        out = build_target(z_s, [z_p], [1.0, 0.0])
        np.testing.assert_allclose(out.values, z_s, atol=1e-12)

    def test_prompt_only(self):
        z_s = np.array([1.0, 0.0])
        z_p = np.array([0.0, 1.0])
        out = build_target(z_s, [z_p], [0.0, 1.0])
        np.testing.assert_allclose(out.values, z_p, atol=1e-12)

    def test_equal_mix_orthogonal(self):
        out = build_target(np.array([1.0, 0.0]), [np.array([0.0, 1.0])], [0.5, 0.5])
        np.testing.assert_allclose(out.values, [1 / np.sqrt(2)] * 2, atol=1e-12)

    def test_default_alphas_uniform(self):
        z_s = np.array([1.0, 0.0, 0.0])
        prompts = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
        out = build_target(z_s, prompts)
        np.testing.assert_allclose(out.values, np.full(3, 1 / np.sqrt(3)), atol=1e-12)

    def test_alpha_count_validated(self):
        with pytest.raises(ValueError):
            build_target(np.array([1.0, 0.0]), [np.array([0.0, 1.0])], [1.0])


class TestOptimizeEq:
    def test_fixed_point_at_source_target(self):
        source = tone_mixture(0.25)
        encoder = small_encoder()
        config = EqRunConfig(iterations=5, lr=1e-2, bands=8, n_fft=256, hop=64)
        target = encoder.encode(stft(source, 256, 64))
        result = optimize_eq(source, target, encoder, config)
        assert abs(result.initial_loss) <= 1e-9
        # Adam wobbles at the lr scale around an exact optimum; unity holds
        # to well under one dB per band
        np.testing.assert_allclose(result.params.log_gains, np.zeros(8), atol=0.05)
        assert len(result.trace) == 5

    def test_gradient_zero_at_fixed_point(self):
        source = tone_mixture(0.25)
        encoder = small_encoder()
        spec = stft(source, 256, 64)
        z = encoder.encode(spec).values
        from timbrespace.eq import _cosine_loss_and_upstream

        loss, upstream = _cosine_loss_and_upstream(z, z)
        grad = encoder.vjp(spec, upstream)
        assert np.linalg.norm(grad) < 1e-8

    def test_self_recovery_small(self):
        source = tone_mixture(0.5)
        encoder = small_encoder()
        bands = 8
        boosted_band = 4
        lg_true = np.zeros(bands)
        lg_true[boosted_band] = np.log(10 ** (6 / 20))  # +6 dB
        spec = stft(source, 256, 64)
        target = encoder.encode(apply_eq(spec, EqParams(lg_true)))
        config = EqRunConfig(iterations=800, lr=1e-2, bands=bands, n_fft=256, hop=64)
        result = optimize_eq(source, target, encoder, config)
        assert result.final_loss <= 0.1 * result.initial_loss
        assert int(np.argmax(result.params.log_gains)) == boosted_band

    def test_full_chain_gradient_matches_fd(self):
        source = tone_mixture(0.25)
        encoder = small_encoder()
        bands = 8
        config = EqRunConfig(iterations=1, lr=1e-2, bands=bands, n_fft=256, hop=64)
        rng = np.random.default_rng(1)
        target = encoder.encode(
            apply_eq(stft(source, 256, 64), EqParams(rng.uniform(-0.5, 0.5, bands)))
        ).values
        spec = stft(source, 256, 64)
        bases = _pu_bases(bands, 256, SR)
        from timbrespace.eq import _cosine_loss_and_upstream

        def loss_at(lg):
            gains = np.exp(lg @ bases)
            shaped = Spectrogram(spec.magnitudes * gains, spec.phases, 256, 64, SR)
            z = encoder.encode(shaped).values
            return _cosine_loss_and_upstream(z, target)[0]

        lg0 = rng.uniform(-0.3, 0.3, bands)
        gains = np.exp(lg0 @ bases)
        shaped = Spectrogram(spec.magnitudes * gains, spec.phases, 256, 64, SR)
        z = encoder.encode(shaped).values
        _, upstream = _cosine_loss_and_upstream(z, target)
        d_mag = encoder.vjp(shaped, upstream)
        analytic = bases @ (np.sum(d_mag * spec.magnitudes, axis=0) * gains)
        h = 1e-4
        numeric = np.zeros(bands)
        for k in range(bands):
            up, down = lg0.copy(), lg0.copy()
            up[k] += h
            down[k] -= h
            numeric[k] = (loss_at(up) - loss_at(down)) / (2 * h)
        scale = np.maximum(np.abs(numeric), 1e-8)
        assert np.max(np.abs(analytic - numeric) / scale) <= 1e-3

    def test_trace_shape_and_final(self):
        source = tone_mixture(0.25)
        encoder = small_encoder()
        config = EqRunConfig(iterations=12, lr=1e-2, bands=8, n_fft=256, hop=64)
        z_p = encoder.encode(stft(source, 256, 64)).values
        target = build_target(z_p, [np.roll(z_p, 1)], [0.5, 0.5])
        result = optimize_eq(source, target, encoder, config)
        assert result.trace.shape == (12,)
        assert result.final_loss == result.trace[-1]
        assert result.initial_loss == result.trace[0]
        assert result.processed.num_samples == source.num_samples

    def test_empty_source_rejected(self):
        encoder = small_encoder()
        with pytest.raises(ValueError):
            optimize_eq(
                AudioBuffer(np.zeros(0), SR),
                np.ones(24),
                encoder,
                EqRunConfig(iterations=1, bands=4, n_fft=256, hop=64),
            )

    def test_front_end_mismatch_rejected(self):
        encoder = small_encoder(n_fft=256)
        with pytest.raises(ValueError):
            optimize_eq(
                tone_mixture(0.1),
                np.ones(24),
                encoder,
                EqRunConfig(iterations=1, bands=4, n_fft=512, hop=128),
            )
