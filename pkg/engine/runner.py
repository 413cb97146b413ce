# engine/runner.py

from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np

from engine.tokenizer import Tokenizer, TokenSequence
from engine.transformer import forward_with_capture, softmax
from engine.weights import WeightBundle


@dataclass(frozen=True)
class Prediction:
    token_text: str
    rank: int
    probability: float
    token_id: Optional[int] = None

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")


class ModelRunner(Protocol):
    """What the diagnostics and builders need from a model: top-k next tokens."""

    def topk(self, prompt: str, k: int) -> List[Prediction]: ...


class TransformerRunner:
    """Read-only wrapper around a weight bundle and tokenizer; safe to share across threads."""

    def __init__(self, weights: WeightBundle, tokenizer: Tokenizer):
        if tokenizer.vocab_size != weights.config.vocab_size:
            raise ValueError(
                f"tokenizer vocabulary ({tokenizer.vocab_size}) does not match model ({weights.config.vocab_size})"
            )
        self.weights = weights
        self.tokenizer = tokenizer

    def encode(self, prompt: str) -> TokenSequence:
        return self.tokenizer.encode(prompt)

    def next_token_probs(self, prompt: str) -> np.ndarray:
        trace = forward_with_capture(self.weights, self.encode(prompt))
        return softmax(trace.final_logits[-1])

    def topk(self, prompt: str, k: int) -> List[Prediction]:
        probs = self.next_token_probs(prompt)
        # stable sort: equal probabilities keep vocabulary order
        order = np.argsort(-probs, kind="stable")[:k]
        return [
            Prediction(token_text=self.tokenizer.decode_token(int(t)), rank=i + 1,
                       probability=float(probs[t]), token_id=int(t))
            for i, t in enumerate(order)
        ]

    def token_id(self, text: str) -> Optional[int]:
        return self.tokenizer.token_id(text)

    def decode(self, token_id: int) -> str:
        return self.tokenizer.decode_token(token_id)
