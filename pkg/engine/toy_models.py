# engine/toy_models.py

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence

import numpy as np

from engine.tokenizer import BYTE_TOKEN, WhitespaceTokenizer
from engine.transformer import gelu, layer_norm
from engine.weights import ModelConfig, WeightBundle, tensor_manifest

# Planted-fact construction constants.
PLANTED_LAYER = 1
PLANTED_N_LAYERS = 3
TEXTURE_DIMS = 16
TEXTURE_SCALE = 0.5
KEY_THRESHOLD = 7.5
UNUSED_UNIT_BIAS = -10.0
LOOKUP_GAIN = 4.0
QUERY_GAIN = 1.5
KEY_GAIN = 1.5
VALUE_GAIN = 2.0
UNEMBED_GAIN = 3.0
FILLER_WORDS = ["the", "a", "its", "an", "one", "that", "this", "his", "her", "their", "which", "some"]


def _zeros(config: ModelConfig) -> Dict[str, np.ndarray]:
    arrays = {name: np.zeros(shape) for name, shape in tensor_manifest(config)}
    for name in arrays:
        if name.endswith("ln_1.weight") or name.endswith("ln_2.weight") or name == "ln_f.weight":
            arrays[name][:] = 1.0
    return arrays


def build_random_model(seed: int = 0, n_layers: int = 2, d_model: int = 64, n_heads: int = 4,
                       d_mlp: int = 256, vocab_size: int = 256, max_seq_len: int = 64) -> WeightBundle:
    """Seeded Gaussian weights for a small model; no planted structure."""
    config = ModelConfig(n_layers=n_layers, d_model=d_model, n_heads=n_heads, d_mlp=d_mlp,
                         vocab_size=vocab_size, max_seq_len=max_seq_len)
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in tensor_manifest(config):
        if name in ("wte", "wpe"):
            arrays[name] = rng.normal(0.0, 1.0 if name == "wte" else 0.1, size=shape)
        elif name.endswith(".weight"):
            arrays[name] = 1.0 + rng.normal(0.0, 0.1, size=shape)
        elif len(shape) == 1:
            arrays[name] = rng.normal(0.0, 0.1, size=shape)
        else:
            gain = 3.0 if name == "w_u" else 1.0
            arrays[name] = rng.normal(0.0, gain / np.sqrt(shape[0]), size=shape)
    return WeightBundle.from_arrays(config, arrays)


@dataclass(frozen=True)
class PlantedModel:
    weights: WeightBundle
    tokenizer: WhitespaceTokenizer
    facts: Dict[str, str]
    layer: int = PLANTED_LAYER


def _zero_mean_basis(d_model: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal columns orthogonal to the all-ones vector, so layer norm never recentres them."""
    seed_matrix = rng.normal(size=(d_model, d_model))
    seed_matrix[:, 0] = 1.0
    q, _ = np.linalg.qr(seed_matrix)
    return q[:, 1:]


def planted_vocabulary(facts: Mapping[str, str], context_words: Sequence[str]) -> List[str]:
    """Context words, then byte tokens, then subjects, then objects."""
    context = []
    for word in list(FILLER_WORDS) + list(context_words):
        if word not in context:
            context.append(word)
    subjects = list(facts)
    objects = list(dict.fromkeys(facts.values()))
    clash = set(context) & (set(subjects) | set(objects))
    if clash or set(subjects) & set(objects):
        raise ValueError(f"subjects/objects collide with context words: {sorted(clash or set(subjects) & set(objects))}")
    return context + [BYTE_TOKEN.format(b) for b in range(256)] + subjects + objects


def build_planted_model(facts: Mapping[str, str], context_words: Sequence[str], seed: int = 0,
                        d_model: int = 128, n_heads: int = 4, d_mlp: int = 64,
                        max_seq_len: int = 32) -> PlantedModel:
    """
    Builds a three-layer model whose layer-1 MLP stores subject -> object.

    Each subject token embeds as a unit key vector. MLP unit k fires only on
    key k and writes "object present" plus the object direction into the
    subject's residual stream. Head 0 of layer 2 attends from any context
    token to the position carrying "object present" and copies the object
    direction, which the unembedding reads out. Every other block is zero.
    """
    subjects = list(facts)
    objects = list(dict.fromkeys(facts.values()))
    if len(subjects) > d_mlp:
        raise ValueError(f"{len(subjects)} facts need at least that many MLP units (d_mlp={d_mlp})")
    if len(subjects) + 1 + TEXTURE_DIMS + len(objects) + 1 > d_model - 1:
        raise ValueError(f"d_model={d_model} is too small for {len(subjects)} facts")
    if len(objects) > d_model // n_heads:
        raise ValueError("more objects than head-0 dimensions")

    tokens = planted_vocabulary(facts, context_words)
    index = {tok: i for i, tok in enumerate(tokens)}
    config = ModelConfig(n_layers=PLANTED_N_LAYERS, d_model=d_model, n_heads=n_heads, d_mlp=d_mlp,
                         vocab_size=len(tokens), max_seq_len=max_seq_len)

    rng = np.random.default_rng(seed)
    basis = _zero_mean_basis(d_model, rng)
    column = iter(range(basis.shape[1]))
    keys = {s: basis[:, next(column)] for s in subjects}
    context_dir = basis[:, next(column)]
    texture = np.stack([basis[:, next(column)] for _ in range(TEXTURE_DIMS)], axis=1)
    object_dirs = {o: basis[:, next(column)] for o in objects}
    present = basis[:, next(column)]

    arrays = _zeros(config)
    for tok, i in index.items():
        if tok in keys:
            arrays["wte"][i] = keys[tok]
        else:
            g = rng.normal(size=TEXTURE_DIMS)
            arrays["wte"][i] = context_dir + TEXTURE_SCALE * texture @ (g / np.linalg.norm(g))

    eps = config.layernorm_epsilon
    mlp = f"blocks.{PLANTED_LAYER}.mlp."
    arrays[mlp + "b_in"][:] = UNUSED_UNIT_BIAS
    ones, zeros = np.ones(d_model), np.zeros(d_model)
    for k, subject in enumerate(subjects):
        # stored weights are float32; build the gain from the values the engine will see
        key = keys[subject].astype(np.float32).astype(np.float64)
        arrays[mlp + "w_in"][:, k] = keys[subject]
        arrays[mlp + "b_in"][k] = -KEY_THRESHOLD
        clean = layer_norm(key, ones, zeros, eps) @ key
        activation = float(gelu(np.asarray(clean - KEY_THRESHOLD)))
        arrays[mlp + "w_out"][k] = LOOKUP_GAIN / activation * (present + object_dirs[facts[subject]])

    attn = f"blocks.{PLANTED_LAYER + 1}.attn."
    arrays[attn + "w_q"][:, 0] = QUERY_GAIN * context_dir
    arrays[attn + "w_k"][:, 0] = KEY_GAIN * present
    for j, obj in enumerate(objects):
        arrays[attn + "w_v"][:, j] = object_dirs[obj]
        arrays[attn + "w_o"][j, :] = VALUE_GAIN * object_dirs[obj]

    for obj in objects:
        arrays["w_u"][:, index[obj]] = UNEMBED_GAIN * object_dirs[obj]
    for j, filler in enumerate(FILLER_WORDS):
        arrays["w_u"][:, index[filler]] = (1.0 + 0.1 * j) * context_dir

    return PlantedModel(
        weights=WeightBundle.from_arrays(config, arrays),
        tokenizer=WhitespaceTokenizer(tokens),
        facts=dict(facts),
    )
