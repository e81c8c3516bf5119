"""Hermetic model fixtures: tiny CLIP and CLAP saved to temp directories.

Real architectures and tokenizers with small seeded random weights, so the
export pipeline is exercised end to end without network access or large
checkpoints. Any genuine checkpoint directory or hub id works the same way
in production.
"""

import json
import os
import string

import pytest
import torch

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")


@pytest.fixture(scope="session")
def tiny_clip_dir(tmp_path_factory):
    from transformers import CLIPTextConfig, CLIPTextModelWithProjection, CLIPTokenizer

    root = tmp_path_factory.mktemp("tiny_clip")
    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for ch in string.ascii_lowercase + string.digits + " ":
        for token in (ch + "</w>", ch):
            if token not in vocab:
                vocab[token] = len(vocab)
    (root / "vocab.json").write_text(json.dumps(vocab))
    (root / "merges.txt").write_text("#version: 0.2\n")
    tokenizer = CLIPTokenizer(str(root / "vocab.json"), str(root / "merges.txt"))
    config = CLIPTextConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=4,
        max_position_embeddings=77,
        projection_dim=16,
        bos_token_id=vocab["<|startoftext|>"],
        eos_token_id=vocab["<|endoftext|>"],
    )
    torch.manual_seed(0)
    model = CLIPTextModelWithProjection(config)
    model_dir = root / "model"
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return model_dir


@pytest.fixture(scope="session")
def tiny_clap_dir(tmp_path_factory):
    from transformers import ClapAudioConfig, ClapAudioModelWithProjection, ClapFeatureExtractor

    root = tmp_path_factory.mktemp("tiny_clap")
    config = ClapAudioConfig(
        window_size=4,
        num_mel_bins=8,
        spec_size=32,
        patch_size=4,
        patch_stride=[4, 4],
        patch_embeds_hidden_size=16,
        hidden_size=32,
        depths=[1, 1],
        num_attention_heads=[2, 2],
        num_hidden_layers=2,
        projection_dim=12,
        mlp_ratio=2.0,
        enable_fusion=False,
    )
    torch.manual_seed(1)
    model = ClapAudioModelWithProjection(config)
    extractor = ClapFeatureExtractor(
        feature_size=8,
        sampling_rate=16000,
        hop_length=160,
        max_length_s=1,
        fft_window_size=400,
        frequency_min=50,
        frequency_max=7000,
        nb_max_samples=16000,
    )
    model_dir = root / "model"
    model.save_pretrained(model_dir)
    extractor.save_pretrained(model_dir)
    return model_dir
