"""clip-export: real-model embedding exporter for the timbrespace toolkit.

Encodes text with a CLIP text encoder (pooled embeddings and token-level
prompt matrices) and audio with a CLAP encoder, writing TCLP/TCPM files the
primary toolkit consumes. This package owns all ML-framework dependencies;
the primary runs entirely without it.
"""

from .export import export_audio_embeddings, export_prompt_matrices, export_text_embeddings
from .formats import ExportFormatError, write_tclp, write_tcpm
from .models import ClapAudioTower, ClipTextTower, ModelLoadError

__version__ = "0.1.0"
