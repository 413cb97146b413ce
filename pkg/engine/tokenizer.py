# engine/tokenizer.py

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Tuple

from utils.persistence import write_json

WORD_PATTERN = re.compile(r"\w+|[^\w\s]")
BYTE_TOKEN = "<0x{:02X}>"

Span = Tuple[int, int]


class TokenizationError(Exception):
    pass


@dataclass(frozen=True)
class TokenSequence:
    text: str
    token_ids: Tuple[int, ...]
    char_offsets: Tuple[Span, ...]

    def __len__(self) -> int:
        return len(self.token_ids)


class Tokenizer(Protocol):
    kind: str

    @property
    def vocab_size(self) -> int: ...

    def encode(self, text: str) -> TokenSequence: ...

    def decode_token(self, token_id: int) -> str: ...

    def token_id(self, text: str) -> Optional[int]: ...


def _char_byte_spans(text: str, start: int, end: int) -> List[Tuple[int, Span]]:
    """(byte value, char span) pairs; continuation bytes get an empty span at the char end."""
    out = []
    for pos in range(start, end):
        raw = text[pos].encode("utf-8")
        out.append((raw[0], (pos, pos + 1)))
        for b in raw[1:]:
            out.append((b, (pos + 1, pos + 1)))
    return out


class WhitespaceTokenizer:
    """
    Splits on whitespace and punctuation. Words missing from the vocabulary
    fall back to "<0xNN>" byte tokens when the vocabulary carries them.
    """
    kind = "whitespace"

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self._ids = {}
        for i, tok in enumerate(self.tokens):
            if tok in self._ids:
                raise TokenizationError(f"duplicate vocabulary entry '{tok}'")
            self._ids[tok] = i

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> TokenSequence:
        ids: List[int] = []
        offsets: List[Span] = []
        for match in WORD_PATTERN.finditer(text):
            word = match.group(0)
            tid = self._ids.get(word)
            if tid is not None:
                ids.append(tid)
                offsets.append((match.start(), match.end()))
                continue
            for byte, span in _char_byte_spans(text, match.start(), match.end()):
                bid = self._ids.get(BYTE_TOKEN.format(byte))
                if bid is None:
                    raise TokenizationError(f"'{word}' is not in the vocabulary and byte fallback is unavailable")
                ids.append(bid)
                offsets.append(span)
        return TokenSequence(text=text, token_ids=tuple(ids), char_offsets=tuple(offsets))

    def decode_token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def token_id(self, text: str) -> Optional[int]:
        return self._ids.get(text)


class ByteTokenizer:
    """One token per UTF-8 byte; vocabulary of 256."""
    kind = "bytes"

    @property
    def vocab_size(self) -> int:
        return 256

    def encode(self, text: str) -> TokenSequence:
        ids: List[int] = []
        offsets: List[Span] = []
        for byte, span in _char_byte_spans(text, 0, len(text)):
            ids.append(byte)
            offsets.append(span)
        return TokenSequence(text=text, token_ids=tuple(ids), char_offsets=tuple(offsets))

    def decode_token(self, token_id: int) -> str:
        if 0 <= token_id < 128:
            return chr(token_id)
        return BYTE_TOKEN.format(token_id)

    def token_id(self, text: str) -> Optional[int]:
        raw = text.encode("utf-8")
        if len(raw) == 1:
            return raw[0]
        if re.fullmatch(r"<0x[0-9A-F]{2}>", text):
            return int(text[3:5], 16)
        return None


def subject_token_span(tokens: TokenSequence, subject_char_span: Span) -> Span:
    """Minimal token range whose character offsets cover the subject span."""
    a, b = subject_char_span
    hits = []
    for i, (s, e) in enumerate(tokens.char_offsets):
        if s == e:
            if a < s <= b:
                hits.append(i)
        elif s < b and e > a:
            hits.append(i)
    if not hits:
        raise TokenizationError(f"no token covers characters {a}..{b} of '{tokens.text}'")
    return hits[0], hits[-1] + 1


def tokenize(tokenizer: Tokenizer, text: str, subject_char_span: Span,
             require_subject_first: bool = True) -> Tuple[TokenSequence, Span]:
    """
    Tokenizes a prompt and locates its subject. Relation templates put the
    subject first; audit imports may not, so that check can be switched off.
    """
    if not text:
        raise TokenizationError("empty text")
    a, b = subject_char_span
    if not (0 <= a < b <= len(text)):
        raise TokenizationError(f"subject span {subject_char_span} lies outside the text (length {len(text)})")
    if require_subject_first and a != 0:
        raise TokenizationError(f"subject '{text[a:b]}' is not a prefix of '{text}'")
    seq = tokenizer.encode(text)
    if len(seq) == 0:
        raise TokenizationError(f"'{text}' produced no tokens")
    return seq, subject_token_span(seq, subject_char_span)


def save_vocab(path: Path, tokenizer: WhitespaceTokenizer) -> None:
    write_json(Path(path), {"kind": tokenizer.kind, "tokens": tokenizer.tokens})


def load_tokenizer(kind: str, vocab_path: Optional[Path] = None) -> Tokenizer:
    if kind == "bytes":
        return ByteTokenizer()
    if kind == "whitespace":
        if vocab_path is None:
            raise TokenizationError("the whitespace tokenizer needs a vocabulary file")
        raw = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        if raw.get("kind") != "whitespace" or not isinstance(raw.get("tokens"), list):
            raise TokenizationError(f"{vocab_path} is not a whitespace vocabulary file")
        return WhitespaceTokenizer(raw["tokens"])
    raise TokenizationError(f"unknown tokenizer '{kind}'")
