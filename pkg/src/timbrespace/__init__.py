"""timbrespace: audio-text shared-latent-space toolkit.

Library plus CLI covering the full pipeline around a pluggable encoder
contract: note preprocessing and pitch-shift augmentation, CLIP-style
contrastive training of a projection head, cross-modal retrieval evaluation
with exact baselines, text-guided differentiable equalization, and
prompt-embedding conditioning export for external image generators.
"""

from .audio import (
    AudioBuffer,
    downmix_mono,
    load_wav,
    peak_normalize,
    pitch_shift,
    resample,
    save_wav,
)
from .conditioning import (
    ConditioningResult,
    PromptBank,
    build_prompts,
    condition,
    effect_series,
    keyword_weights,
    load_prompt_bank,
    prompt_matrices_load,
    prompt_matrices_save,
)
from .embedding import (
    Embedding,
    MixWeights,
    cosine_distance,
    effect_embedding,
    mix_embeddings,
    softmax_weights,
)
from .encoders import (
    EmbeddingStore,
    MelStatEncoder,
    hashed_text_encode,
    mel_stat_encode,
    store_load,
    store_save,
)
from .eq import (
    EqParams,
    EqRunConfig,
    EqRunResult,
    apply_eq,
    build_target,
    gain_curve,
    optimize_eq,
)
from .retrieval import (
    PatchRecord,
    QuerySet,
    RetrievalReport,
    build_queries,
    evaluate,
    normalize_title,
    patch_distance,
    perfect_baseline,
    random_baseline,
)
from .spectral import MelFilterbank, Spectrogram, istft, mel_filterbank, stft
from .trainer import (
    AdamState,
    EarlyStopper,
    ProjectionHead,
    TrainConfig,
    adam_step,
    build_batch,
    contrastive_loss,
    train_projection,
)

__version__ = "0.1.0"
