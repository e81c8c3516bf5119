"""Text-guided differentiable equalization.

A bank of mel-spaced triangular bands forms a partition of unity over the
spectrum; per-band log-gains therefore compose into a smooth, strictly
positive gain curve applied multiplicatively to STFT magnitudes. An Adam
loop tunes the log-gains so the processed audio's embedding approaches a
target mixed from the source embedding and one or more prompt embeddings.
Gradients are analytic end to end; audio is reconstructed once at the end
with the original phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .embedding import Embedding, as_vector, mix_embeddings
from .spectral import DEFAULT_HOP, DEFAULT_N_FFT, Spectrogram, hz_to_mel, istft, mel_to_hz, stft
from .trainer import AdamState, adam_step

__all__ = [
    "LOG_GAIN_LIMIT",
    "EqParams",
    "EqRunConfig",
    "EqRunResult",
    "EqDivergedError",
    "band_centers_hz",
    "gain_curve",
    "gain_curve_jacobian",
    "apply_eq",
    "build_target",
    "optimize_eq",
]

LOG_GAIN_LIMIT = 10.0  # ~87 dB; keeps adversarial targets from diverging
DEFAULT_BANDS = 32


@dataclass(frozen=True)
class EqParams:
    """Trainable per-band log-gains."""

    log_gains: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.log_gains, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("log_gains must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("log_gains must be finite")
        if np.max(np.abs(arr)) > LOG_GAIN_LIMIT + 1e-12:
            raise ValueError(f"|log_gain| must stay within {LOG_GAIN_LIMIT}")
        object.__setattr__(self, "log_gains", arr)

    @property
    def bands(self) -> int:
        return self.log_gains.shape[0]

    @classmethod
    def unity(cls, bands: int = DEFAULT_BANDS) -> "EqParams":
        return cls(np.zeros(bands))


@dataclass
class EqRunConfig:
    iterations: int = 5000
    lr: float = 1e-2
    alphas: np.ndarray | None = None  # [source, prompt_1, ...]; uniform when None
    l2_penalty: float = 0.0
    bands: int = DEFAULT_BANDS
    n_fft: int = DEFAULT_N_FFT
    hop: int = DEFAULT_HOP
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be nonnegative")


@dataclass
class EqRunResult:
    params: EqParams
    trace: np.ndarray
    initial_loss: float
    final_loss: float
    processed: AudioBuffer


class EqDivergedError(RuntimeError):
    """The loss became non-finite; carries the iteration and a params snapshot."""

    def __init__(self, iteration: int, params: EqParams):
        super().__init__(f"EQ optimization diverged at iteration {iteration}")
        self.iteration = iteration
        self.params = params


def _pu_bases(bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular bases on the mel axis summing to exactly 1 at every bin."""
    if bands < 1:
        raise ValueError("bands must be >= 1")
    bins = n_fft // 2 + 1
    bin_mels = hz_to_mel(np.linspace(0.0, sample_rate / 2.0, bins))
    if bands == 1:
        return np.ones((1, bins))
    knots = np.linspace(0.0, bin_mels[-1], bands)
    bases = np.empty((bands, bins))
    for k in range(bands):
        if k == 0:
            bases[k] = np.interp(bin_mels, knots[:2], [1.0, 0.0])
        elif k == bands - 1:
            bases[k] = np.interp(bin_mels, knots[-2:], [0.0, 1.0])
        else:
            bases[k] = np.interp(bin_mels, knots[k - 1 : k + 2], [0.0, 1.0, 0.0])
    return bases


def band_centers_hz(bands: int, n_fft: int = DEFAULT_N_FFT, sample_rate: int = 16000) -> np.ndarray:
    """Center frequency of each EQ band (mel-spaced from DC to Nyquist)."""
    if bands == 1:
        return np.array([sample_rate / 4.0])
    nyquist_mel = float(hz_to_mel(sample_rate / 2.0))
    return mel_to_hz(np.linspace(0.0, nyquist_mel, bands))


def gain_curve(params: EqParams, n_fft: int = DEFAULT_N_FFT, sample_rate: int = 16000) -> np.ndarray:
    """Per-bin linear gains: exp(sum_k log_gain_k * basis_k(bin))."""
    bases = _pu_bases(params.bands, n_fft, sample_rate)
    return np.exp(params.log_gains @ bases)


def gain_curve_jacobian(params: EqParams, n_fft: int = DEFAULT_N_FFT, sample_rate: int = 16000) -> np.ndarray:
    """d gain[bin] / d log_gain[k], shape [bands, bins]."""
    bases = _pu_bases(params.bands, n_fft, sample_rate)
    return bases * np.exp(params.log_gains @ bases)[None, :]


def apply_eq(spec: Spectrogram, params: EqParams) -> Spectrogram:
    """Scale magnitudes by the gain curve; phases pass through untouched."""
    gains = gain_curve(params, spec.n_fft, spec.sample_rate)
    return Spectrogram(spec.magnitudes * gains, spec.phases, spec.n_fft, spec.hop, spec.sample_rate)


def build_target(z_source, prompt_embeddings, alphas=None) -> Embedding:
    """Renormalized mix of the source embedding with prompt embeddings."""
    prompts = list(prompt_embeddings)
    if not prompts:
        raise ValueError("need at least one prompt embedding")
    parts = [z_source, *prompts]
    if alphas is None:
        alphas = np.full(len(parts), 1.0 / len(parts))
    else:
        alphas = np.asarray(alphas, dtype=np.float64)
        if alphas.shape != (len(parts),):
            raise ValueError(f"need {len(parts)} alphas (source + {len(prompts)} prompts), got {alphas.shape}")
    return mix_embeddings(parts, alphas, renormalize=True)


def _cosine_loss_and_upstream(z: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Unclamped cosine distance and its gradient w.r.t. z."""
    nz = float(np.linalg.norm(z))
    nt = float(np.linalg.norm(target))
    if nz < 1e-30 or nt < 1e-30:
        raise ValueError("cosine loss undefined for zero-norm vectors")
    dot = float(z @ target)
    loss = 1.0 - dot / (nz * nt)
    grad = -(target / (nz * nt) - (dot / (nz ** 3 * nt)) * z)
    return loss, grad


def optimize_eq(source: AudioBuffer, target, encoder, config: EqRunConfig | None = None) -> EqRunResult:
    """Tune the EQ so the processed audio's embedding approaches the target.

    Per iteration: apply the EQ to the source magnitudes, encode, take the
    cosine distance to the target (plus an optional L2 penalty on the
    log-gains), backpropagate analytically, and Adam-step the log-gains.
    The trace records the loss at the parameters of each iteration.
    """
    config = config if config is not None else EqRunConfig()
    if source.num_samples == 0:
        raise ValueError("source buffer is empty")
    fb = encoder.filterbank
    if fb.n_fft != config.n_fft or fb.sample_rate != source.sample_rate:
        raise ValueError(
            f"encoder front-end (n_fft={fb.n_fft}, sr={fb.sample_rate}) does not match "
            f"config/source (n_fft={config.n_fft}, sr={source.sample_rate})"
        )
    target_vec = as_vector(target)
    spec = stft(source, config.n_fft, config.hop)
    bases = _pu_bases(config.bands, config.n_fft, source.sample_rate)

    log_gains = np.zeros(config.bands)
    adam = AdamState(lr=config.lr)
    trace = np.empty(config.iterations)
    for iteration in range(config.iterations):
        gains = np.exp(log_gains @ bases)
        shaped = Spectrogram(spec.magnitudes * gains, spec.phases, spec.n_fft, spec.hop, spec.sample_rate)
        z_post = encoder.encode(shaped).values
        fit_loss, upstream = _cosine_loss_and_upstream(z_post, target_vec)
        loss = fit_loss + config.l2_penalty * float(log_gains @ log_gains)
        if not np.isfinite(loss):
            raise EqDivergedError(iteration, EqParams(np.clip(log_gains, -LOG_GAIN_LIMIT, LOG_GAIN_LIMIT)))
        trace[iteration] = loss
        d_magnitudes = encoder.vjp(shaped, upstream)
        d_gains = np.sum(d_magnitudes * spec.magnitudes, axis=0)
        d_log_gains = bases @ (d_gains * gains) + 2.0 * config.l2_penalty * log_gains
        updated = adam_step(adam, {"log_gains": log_gains}, {"log_gains": d_log_gains})
        log_gains = np.clip(updated["log_gains"], -LOG_GAIN_LIMIT, LOG_GAIN_LIMIT)

    params = EqParams(log_gains)
    processed_spec = apply_eq(spec, params)
    processed = istft(processed_spec)
    trimmed = AudioBuffer(processed.samples[: source.num_samples], source.sample_rate)
    return EqRunResult(params, trace, float(trace[0]), float(trace[-1]), trimmed)
