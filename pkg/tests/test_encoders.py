"""Reference encoders (determinism, gradients) and the TCLP store format."""

import struct

import numpy as np
import pytest

from timbrespace.encoders import (
    EmbeddingStore,
    MelStatEncoder,
    StoreFormatError,
    hashed_text_encode,
    mel_stat_encode,
    store_load,
    store_save,
)
from timbrespace.spectral import Spectrogram, mel_filterbank


def random_spectrogram(rng, frames=10, n_fft=64, sample_rate=16000):
    bins = n_fft // 2 + 1
    mag = rng.uniform(0.1, 2.0, size=(frames, bins))
    phase = rng.uniform(-np.pi, np.pi, size=(frames, bins))
    return Spectrogram(mag, phase, n_fft, 16, sample_rate)


def small_encoder(seed=0, d=12, n_mels=6, n_fft=64):
    fb = mel_filterbank(n_mels=n_mels, n_fft=n_fft, sample_rate=16000, f_min=0.0, f_max=8000.0)
    return MelStatEncoder(fb, d=d, projection_seed=seed)


def fd_input_gradient(encoder, spec, upstream, h=1e-4):
    """Central finite differences of upstream . encode(spec) w.r.t. magnitudes."""

    def scalar(mag):
        shifted = Spectrogram(mag, spec.phases, spec.n_fft, spec.hop, spec.sample_rate)
        return float(np.dot(upstream, encoder.encode(shifted).values))

    grad = np.zeros_like(spec.magnitudes)
    for i in range(spec.magnitudes.shape[0]):
        for j in range(spec.magnitudes.shape[1]):
            up = spec.magnitudes.copy()
            down = spec.magnitudes.copy()
            up[i, j] += h
            down[i, j] -= h
            grad[i, j] = (scalar(up) - scalar(down)) / (2 * h)
    return grad


class TestMelStatEncoder:
    def test_deterministic(self):
        rng = np.random.default_rng(0)
        spec = random_spectrogram(rng)
        enc = small_encoder()
        a = enc.encode(spec).values
        b = enc.encode(spec).values
        np.testing.assert_array_equal(a, b)

    def test_same_seed_same_projection(self):
        a = small_encoder(seed=3).projection
        b = small_encoder(seed=3).projection
        np.testing.assert_array_equal(a, b)

    def test_unit_norm_output(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            z = small_encoder().encode(random_spectrogram(rng)).values
            assert abs(np.linalg.norm(z) - 1.0) <= 1e-6

    def test_vjp_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        enc = small_encoder(d=8, n_mels=4, n_fft=32)
        spec = random_spectrogram(rng, frames=10, n_fft=32)
        upstream = rng.normal(size=8)
        analytic = enc.vjp(spec, upstream)
        numeric = fd_input_gradient(enc, spec, upstream)
        scale = np.maximum(np.abs(numeric), 1e-6)
        assert np.max(np.abs(analytic - numeric) / scale) <= 1e-4

    def test_vjp_over_many_seeds(self):
        # property required across >= 20 seeds
        for seed in range(20):
            rng = np.random.default_rng(seed)
            enc = small_encoder(seed=seed, d=6, n_mels=3, n_fft=16)
            spec = random_spectrogram(rng, frames=4, n_fft=16)
            upstream = rng.normal(size=6)
            analytic = enc.vjp(spec, upstream)
            numeric = fd_input_gradient(enc, spec, upstream)
            scale = np.maximum(np.abs(numeric), 1e-6)
            assert np.max(np.abs(analytic - numeric) / scale) <= 1e-4, f"seed {seed}"

    def test_continuity_under_small_scaling(self):
        rng = np.random.default_rng(5)
        enc = small_encoder()
        spec = random_spectrogram(rng)
        z = enc.encode(spec).values
        for c in (1 + 1e-3, 1 - 1e-3):
            scaled = Spectrogram(c * spec.magnitudes, spec.phases, spec.n_fft, spec.hop, spec.sample_rate)
            dz = np.linalg.norm(enc.encode(scaled).values - z)
            # local Lipschitz bound for this fixture: ||dz|| <~ 10 * |c-1|
            assert dz <= 10 * abs(c - 1)

    def test_empty_spectrogram_rejected(self):
        enc = small_encoder()
        spec = Spectrogram(np.zeros((0, 33)), np.zeros((0, 33)), 64, 16, 16000)
        with pytest.raises(ValueError):
            enc.encode(spec)

    def test_front_end_mismatch_rejected(self):
        enc = small_encoder(n_fft=64)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            enc.encode(random_spectrogram(rng, n_fft=32))

    def test_functional_wrapper_matches_class(self):
        rng = np.random.default_rng(7)
        spec = random_spectrogram(rng)
        fb = mel_filterbank(n_mels=6, n_fft=64, sample_rate=16000, f_max=8000.0)
        a = mel_stat_encode(spec, fb, projection_seed=1, d=12).values
        b = MelStatEncoder(fb, d=12, projection_seed=1).encode(spec).values
        np.testing.assert_array_equal(a, b)


class TestHashedTextEncoder:
    def test_deterministic(self):
        a = hashed_text_encode("bright", d=64, seed=0).values
        b = hashed_text_encode("bright", d=64, seed=0).values
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        z = hashed_text_encode("warm pad", d=32).values
        assert abs(np.linalg.norm(z) - 1.0) <= 1e-6

    def test_shared_trigrams_raise_similarity(self):
        # "bright" shares all its trigrams with "bright pad" and none with "zzqx"
        sims_related = []
        sims_unrelated = []
        for seed in range(16):
            z = hashed_text_encode("bright", d=64, seed=seed).values
            sims_related.append(float(z @ hashed_text_encode("bright pad", d=64, seed=seed).values))
            sims_unrelated.append(float(z @ hashed_text_encode("zzqx", d=64, seed=seed).values))
        assert np.mean(sims_related) > np.mean(sims_unrelated)

    def test_seed_changes_vector(self):
        a = hashed_text_encode("bright", d=64, seed=0).values
        b = hashed_text_encode("bright", d=64, seed=1).values
        assert not np.array_equal(a, b)

    def test_short_string_uses_whole_token(self):
        z = hashed_text_encode("ab", d=16).values
        assert abs(np.linalg.norm(z) - 1.0) <= 1e-6

    def test_empty_string_rejected(self):
        with pytest.raises(ValueError):
            hashed_text_encode("", d=16)

    def test_sign_cancellation_is_an_error(self):
        # at d=16/seed=0 the two trigrams of "warm" collide with opposite
        # signs; the encoder must refuse the zero vector rather than emit it
        with pytest.raises(ValueError, match="zero"):
            hashed_text_encode("warm", d=16, seed=0)

    def test_small_dimension_rejected(self):
        with pytest.raises(ValueError):
            hashed_text_encode("x", d=4)


class TestEmbeddingStore:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        store = EmbeddingStore(512)
        for name in ("a", "b", "c"):
            store.add(name, rng.normal(size=512))
        path = tmp_path / "vectors.tclp"
        store_save(path, store)
        loaded = store_load(path)
        assert loaded.ids() == ["a", "b", "c"]
        assert loaded.d == 512
        for name in ("a", "b", "c"):
            np.testing.assert_array_equal(loaded[name], store[name])
            assert loaded[name].dtype == np.float32

    def test_sidecar_metadata(self, tmp_path):
        import json

        store = EmbeddingStore(4)
        store.add("x", [1.0, 0.0, 0.0, 0.0])
        path = tmp_path / "vectors.tclp"
        store_save(path, store, metadata={"model": "unit-test", "notes": "n/a"})
        sidecar = json.loads((tmp_path / "vectors.json").read_text())
        assert sidecar["model"] == "unit-test"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tclp"
        path.write_bytes(b"XXXX" + struct.pack("<III", 1, 4, 0))
        with pytest.raises(StoreFormatError, match="magic"):
            store_load(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "bad.tclp"
        path.write_bytes(b"TCLP" + struct.pack("<III", 2, 4, 0))
        with pytest.raises(StoreFormatError, match="version"):
            store_load(path)

    def test_zero_dimension(self, tmp_path):
        path = tmp_path / "bad.tclp"
        path.write_bytes(b"TCLP" + struct.pack("<III", 1, 0, 0))
        with pytest.raises(StoreFormatError, match="dimension"):
            store_load(path)

    def test_duplicate_id(self, tmp_path):
        record = struct.pack("<H", 1) + b"a" + struct.pack("<f", 1.0)
        path = tmp_path / "dup.tclp"
        path.write_bytes(b"TCLP" + struct.pack("<III", 1, 1, 2) + record + record)
        with pytest.raises(StoreFormatError, match="duplicate"):
            store_load(path)

    def test_truncated_record(self, tmp_path):
        record = struct.pack("<H", 1) + b"a" + struct.pack("<f", 1.0)[:2]
        path = tmp_path / "trunc.tclp"
        path.write_bytes(b"TCLP" + struct.pack("<III", 1, 1, 1) + record)
        with pytest.raises(StoreFormatError, match="truncated"):
            store_load(path)

    def test_trailing_garbage(self, tmp_path):
        record = struct.pack("<H", 1) + b"a" + struct.pack("<f", 1.0)
        path = tmp_path / "trail.tclp"
        path.write_bytes(b"TCLP" + struct.pack("<III", 1, 1, 1) + record + b"junk")
        with pytest.raises(StoreFormatError, match="trailing"):
            store_load(path)

    def test_duplicate_add_rejected(self):
        store = EmbeddingStore(2)
        store.add("a", [1.0, 0.0])
        with pytest.raises(StoreFormatError):
            store.add("a", [0.0, 1.0])

    def test_dimension_enforced(self):
        store = EmbeddingStore(3)
        with pytest.raises(ValueError):
            store.add("a", [1.0, 0.0])

    def test_store_of_many_random_dims_round_trips(self, tmp_path):
        rng = np.random.default_rng(9)
        for d in (1, 7, 33):
            store = EmbeddingStore(d)
            for i in range(5):
                store.add(f"id{i}", rng.normal(size=d))
            path = tmp_path / f"d{d}.tclp"
            store_save(path, store)
            loaded = store_load(path)
            for i in range(5):
                np.testing.assert_array_equal(loaded[f"id{i}"], store[f"id{i}"])
