# engine/transformer.py

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from engine.tokenizer import TokenSequence
from engine.weights import WeightBundle

COMPONENTS = ("hidden", "mlp", "attn")
_GELU_C = math.sqrt(2.0 / math.pi)


class SequenceTooLongError(Exception):
    pass


class NonFiniteActivationError(Exception):
    def __init__(self, layer: int):
        self.layer = layer
        super().__init__(f"non-finite activation after layer {layer}")


class InterventionError(Exception):
    pass


@dataclass(frozen=True)
class ActivationTrace:
    """Per-layer states of one forward pass; arrays are [position, layer, d_model]."""
    hidden: np.ndarray
    mlp_out: np.ndarray
    attn_out: np.ndarray
    final_logits: np.ndarray

    @property
    def n_positions(self) -> int:
        return self.hidden.shape[0]

    @property
    def n_layers(self) -> int:
        return self.hidden.shape[1]

    def component(self, name: str) -> np.ndarray:
        return {"hidden": self.hidden, "mlp": self.mlp_out, "attn": self.attn_out}[name]

    def next_token_probs(self) -> np.ndarray:
        return softmax(self.final_logits[-1])


@dataclass(frozen=True)
class PatchEntry:
    position: int
    layer: int
    component: str
    # None picks the component default: 5 for mlp/attn, 0 for hidden
    window_radius: Optional[int] = None


@dataclass(frozen=True, eq=False)
class InterventionSpec:
    noise_span: Tuple[int, int]
    noise_sigma: float
    noise_seed: int
    patches: Tuple[PatchEntry, ...] = ()
    reference: Optional[ActivationTrace] = field(default=None, repr=False)


def default_window(component: str) -> int:
    return 0 if component == "hidden" else 5


def window_layers(layer: int, radius: int, n_layers: int) -> range:
    """Layers [layer - r, layer + max(r, 1)) clipped to the model."""
    return range(max(0, layer - radius), min(n_layers, layer + max(radius, 1)))


def layer_norm(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * weight + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _attention(h: np.ndarray, weights: WeightBundle, layer: int) -> np.ndarray:
    cfg = weights.config
    p = f"blocks.{layer}.attn."
    T = h.shape[0]
    n_heads, d_head = cfg.n_heads, cfg.d_head

    def heads(name):
        proj = h @ weights[p + "w_" + name] + weights[p + "b_" + name]
        return proj.reshape(T, n_heads, d_head).transpose(1, 0, 2)

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(d_head)
    future = np.triu(np.ones((T, T), dtype=bool), k=1)
    scores = np.where(future, -np.inf, scores)
    z = softmax(scores, axis=-1) @ v
    z = z.transpose(1, 0, 2).reshape(T, cfg.d_model)
    return z @ weights[p + "w_o"] + weights[p + "b_o"]


def _mlp(h: np.ndarray, weights: WeightBundle, layer: int) -> np.ndarray:
    p = f"blocks.{layer}.mlp."
    return gelu(h @ weights[p + "w_in"] + weights[p + "b_in"]) @ weights[p + "w_out"] + weights[p + "b_out"]


def _plan_patches(spec: InterventionSpec, n_positions: int, n_layers: int, d_model: int) -> Dict[str, Dict[int, List[int]]]:
    plan: Dict[str, Dict[int, List[int]]] = {c: defaultdict(list) for c in COMPONENTS}
    if not spec.patches:
        return plan
    ref = spec.reference
    if ref is None:
        raise InterventionError("patches given without a reference trace")
    if ref.hidden.shape != (n_positions, n_layers, d_model):
        raise InterventionError(
            f"reference trace shape {ref.hidden.shape} does not match run shape {(n_positions, n_layers, d_model)}"
        )
    for entry in spec.patches:
        if entry.component not in COMPONENTS:
            raise InterventionError(f"unknown component '{entry.component}'")
        if not (0 <= entry.position < n_positions):
            raise InterventionError(f"patch position {entry.position} out of range 0..{n_positions - 1}")
        if not (0 <= entry.layer < n_layers):
            raise InterventionError(f"patch layer {entry.layer} out of range 0..{n_layers - 1}")
        if entry.component == "hidden":
            plan["hidden"][entry.layer].append(entry.position)
            continue
        radius = default_window(entry.component) if entry.window_radius is None else entry.window_radius
        if radius < 0:
            raise InterventionError(f"negative window radius {radius}")
        for layer in window_layers(entry.layer, radius, n_layers):
            plan[entry.component][layer].append(entry.position)
    return plan


def _run(weights: WeightBundle, tokens: TokenSequence, spec: Optional[InterventionSpec]) -> ActivationTrace:
    cfg = weights.config
    ids = np.asarray(tokens.token_ids, dtype=np.int64)
    T, L, d = len(ids), cfg.n_layers, cfg.d_model
    if T == 0:
        raise SequenceTooLongError("empty token sequence")
    if T > cfg.max_seq_len:
        raise SequenceTooLongError(f"{T} tokens exceed max_seq_len {cfg.max_seq_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InterventionError(f"token id out of vocabulary range 0..{cfg.vocab_size - 1}")

    plan = _plan_patches(spec, T, L, d) if spec is not None else None
    x = weights["wte"][ids]
    if spec is not None and spec.noise_sigma > 0:
        start, end = spec.noise_span
        if not (0 <= start <= end <= T):
            raise InterventionError(f"noise span {spec.noise_span} outside sequence of {T} tokens")
        rng = np.random.default_rng(spec.noise_seed)
        x = x.copy()
        x[start:end] += rng.normal(0.0, spec.noise_sigma, size=(end - start, d))
    x = x + weights["wpe"][:T]

    hidden = np.empty((T, L, d))
    mlp_out = np.empty((T, L, d))
    attn_out = np.empty((T, L, d))
    eps = cfg.layernorm_epsilon
    for layer in range(L):
        p = f"blocks.{layer}."
        attn = _attention(layer_norm(x, weights[p + "ln_1.weight"], weights[p + "ln_1.bias"], eps), weights, layer)
        if plan is not None and layer in plan["attn"]:
            for pos in plan["attn"][layer]:
                attn[pos] = spec.reference.attn_out[pos, layer]
        x = x + attn
        mlp = _mlp(layer_norm(x, weights[p + "ln_2.weight"], weights[p + "ln_2.bias"], eps), weights, layer)
        if plan is not None and layer in plan["mlp"]:
            for pos in plan["mlp"][layer]:
                mlp[pos] = spec.reference.mlp_out[pos, layer]
        x = x + mlp
        if plan is not None and layer in plan["hidden"]:
            for pos in plan["hidden"][layer]:
                x[pos] = spec.reference.hidden[pos, layer]
        if not np.all(np.isfinite(x)):
            raise NonFiniteActivationError(layer)
        hidden[:, layer] = x
        mlp_out[:, layer] = mlp
        attn_out[:, layer] = attn

    logits = layer_norm(x, weights["ln_f.weight"], weights["ln_f.bias"], eps) @ weights["w_u"]
    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivationError(L - 1)
    return ActivationTrace(hidden=hidden, mlp_out=mlp_out, attn_out=attn_out, final_logits=logits)


def forward_with_capture(weights: WeightBundle, tokens: TokenSequence) -> ActivationTrace:
    return _run(weights, tokens, None)


def forward_with_intervention(weights: WeightBundle, tokens: TokenSequence, spec: InterventionSpec) -> ActivationTrace:
    """
    Noised and/or patched run. Subject-span token embeddings get
    N(0, sigma^2) noise drawn from the spec seed before positional embeddings
    are added; patched states are overwritten with the reference values
    before downstream computation continues.
    """
    return _run(weights, tokens, spec)
