# engine/weights.py

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from utils.persistence import atomic_write_bytes

WEIGHTS_FORMAT = "recall-weights"
WEIGHTS_VERSION = 1
CHECKSUM_HEX_LEN = 64
_TRAILER_LEN = 8 + CHECKSUM_HEX_LEN


class WeightsFormatError(Exception):
    """Base class for weight file problems."""
    pass


class MalformedHeaderError(WeightsFormatError):
    pass


class ShapeMismatchError(WeightsFormatError):
    def __init__(self, tensor: str, message: str):
        self.tensor = tensor
        super().__init__(f"tensor '{tensor}': {message}")


class ChecksumMismatchError(WeightsFormatError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    d_mlp: int
    vocab_size: int
    max_seq_len: int
    layernorm_epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("n_layers", "d_model", "n_heads", "d_mlp", "vocab_size", "max_seq_len"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")
        if not self.layernorm_epsilon > 0:
            raise ValueError("layernorm_epsilon must be positive")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_mlp": self.d_mlp,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
            "layernorm_epsilon": self.layernorm_epsilon,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ModelConfig":
        return cls(
            n_layers=raw["n_layers"],
            d_model=raw["d_model"],
            n_heads=raw["n_heads"],
            d_mlp=raw["d_mlp"],
            vocab_size=raw["vocab_size"],
            max_seq_len=raw["max_seq_len"],
            layernorm_epsilon=float(raw.get("layernorm_epsilon", 1e-5)),
        )


def tensor_manifest(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) list; every shape follows from the config."""
    d, m, v = config.d_model, config.d_mlp, config.vocab_size
    manifest = [("wte", (v, d)), ("wpe", (config.max_seq_len, d))]
    for layer in range(config.n_layers):
        p = f"blocks.{layer}."
        manifest += [
            (p + "ln_1.weight", (d,)), (p + "ln_1.bias", (d,)),
            (p + "attn.w_q", (d, d)), (p + "attn.b_q", (d,)),
            (p + "attn.w_k", (d, d)), (p + "attn.b_k", (d,)),
            (p + "attn.w_v", (d, d)), (p + "attn.b_v", (d,)),
            (p + "attn.w_o", (d, d)), (p + "attn.b_o", (d,)),
            (p + "ln_2.weight", (d,)), (p + "ln_2.bias", (d,)),
            (p + "mlp.w_in", (d, m)), (p + "mlp.b_in", (m,)),
            (p + "mlp.w_out", (m, d)), (p + "mlp.b_out", (d,)),
        ]
    manifest += [("ln_f.weight", (d,)), ("ln_f.bias", (d,)), ("w_u", (d, v))]
    return manifest


@dataclass(frozen=True)
class WeightBundle:
    config: ModelConfig
    tensors: Dict[str, np.ndarray] = field(repr=False)
    checksum: str

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Mapping[str, np.ndarray]) -> "WeightBundle":
        """
        Builds a bundle exactly as it would come back from disk: values are
        rounded through float32, upcast, and frozen.
        """
        payload = _encode_payload(config, arrays)
        tensors = _decode_payload(config, payload)
        return cls(config=config, tensors=tensors, checksum=hashlib.sha256(payload).hexdigest())


def _encode_payload(config: ModelConfig, arrays: Mapping[str, np.ndarray]) -> bytes:
    chunks = []
    for name, shape in tensor_manifest(config):
        if name not in arrays:
            raise ShapeMismatchError(name, "missing")
        arr = np.asarray(arrays[name])
        if arr.shape != shape:
            raise ShapeMismatchError(name, f"expected shape {shape}, got {arr.shape}")
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def _decode_payload(config: ModelConfig, payload: bytes) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {}
    offset = 0
    manifest = tensor_manifest(config)
    for name, shape in manifest:
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise ShapeMismatchError(
                name, f"payload ends at byte {len(payload)}, tensor needs bytes {offset}..{offset + nbytes}"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float64)
        arr.setflags(write=False)
        tensors[name] = arr
        offset += nbytes
    if offset != len(payload):
        raise ShapeMismatchError(manifest[-1][0], f"{len(payload) - offset} unexpected bytes after the last tensor")
    return tensors


def save_weights(path: Path, config: ModelConfig, arrays: Mapping[str, np.ndarray]) -> str:
    """Writes a weights file atomically and returns the payload checksum."""
    payload = _encode_payload(config, arrays)
    header = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "config": config.to_dict(),
        "tensors": [{"name": n, "shape": list(s)} for n, s in tensor_manifest(config)],
    }
    checksum = hashlib.sha256(payload).hexdigest()
    header_line = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
    trailer = CHECKSUM_HEX_LEN.to_bytes(8, "little") + checksum.encode("ascii")
    atomic_write_bytes(Path(path), header_line + payload + trailer)
    return checksum


def _parse_header(line: bytes) -> Tuple[ModelConfig, list]:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"header is not JSON: {e}") from e
    if not isinstance(header, dict):
        raise MalformedHeaderError("header must be a JSON object")
    if header.get("format") != WEIGHTS_FORMAT or header.get("version") != WEIGHTS_VERSION:
        raise MalformedHeaderError(
            f"unsupported format {header.get('format')!r} version {header.get('version')!r}"
        )
    try:
        config = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedHeaderError(f"invalid model config: {e}") from e
    listed = header.get("tensors")
    if not isinstance(listed, list):
        raise MalformedHeaderError("tensor manifest missing")
    return config, listed


def _split_trailer(rest: bytes) -> Tuple[bytes, Optional[str]]:
    if len(rest) < _TRAILER_LEN:
        return rest, None
    length = int.from_bytes(rest[-_TRAILER_LEN:-CHECKSUM_HEX_LEN], "little")
    digest = rest[-CHECKSUM_HEX_LEN:]
    if length != CHECKSUM_HEX_LEN:
        return rest, None
    try:
        text = digest.decode("ascii")
        int(text, 16)
    except (UnicodeDecodeError, ValueError):
        return rest, None
    return rest[:-_TRAILER_LEN], text


def load_weights(path: Path) -> WeightBundle:
    """
    Reads a weights file: JSON header line, float32 little-endian payload in
    manifest order, then an 8-byte length-prefixed hex sha256 of the payload.
    Tensors come back as read-only float64 arrays.
    """
    path = Path(path)
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise MalformedHeaderError(f"{path}: no header line")
    config, listed = _parse_header(data[:newline])

    expected = tensor_manifest(config)
    for i, (name, shape) in enumerate(expected):
        if i >= len(listed):
            raise ShapeMismatchError(name, "missing from header manifest")
        entry = listed[i]
        if entry.get("name") != name:
            raise ShapeMismatchError(name, f"manifest lists {entry.get('name')!r} at this position")
        if tuple(entry.get("shape", ())) != shape:
            raise ShapeMismatchError(name, f"expected shape {shape}, header says {tuple(entry.get('shape', ()))}")
    if len(listed) != len(expected):
        raise MalformedHeaderError(f"header lists {len(listed)} tensors, config implies {len(expected)}")

    payload, checksum = _split_trailer(data[newline + 1:])
    tensors = _decode_payload(config, payload)
    if checksum is None:
        raise ChecksumMismatchError(f"{path}: checksum trailer missing")
    actual = hashlib.sha256(payload).hexdigest()
    if actual != checksum:
        raise ChecksumMismatchError(f"{path}: checksum {actual} does not match trailer {checksum}")
    return WeightBundle(config=config, tensors=tensors, checksum=checksum)
