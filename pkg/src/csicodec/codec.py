"""Transmitter and receiver chains: codeword fitting, uniform scalar
quantization, entropy coding, and the feedback bitstream wire format.

The transmitter adapts a codeword to the channel matrix by a few inner
gradient steps, quantizes it with per-dimension uniform bins, and entropy
codes the symbols against a table fitted on training codewords. The
receiver inverts the chain and reconstructs the channel through the shared
base network. Both ends must hold the same codec sidecar (quantizer bounds
plus frequency table); every quantized bitstream carries a digest of the
sidecar so drift is detected instead of silently decoded.

Channel matrices cross this module's public API in the physical domain;
normalization by the checkpoint's norm_scale happens internally.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .entropy import (
    FrequencyTable,
    entropy_decode,
    entropy_encode,
    fit_frequency_table,
    pack_symbols,
    unpack_symbols,
)
from .model import CoordinateGrid, ModelParams
from .siren import forward_batch, fourier_features
from .training import inner_adapt_batch

STREAM_MAGIC = b"CSIF"
SIDECAR_MAGIC = b"CSIQ"
FORMAT_VERSION = 1

# magic, version, codeword_dim, bit_width, flags, reserved, sidecar digest, payload bits
_STREAM_HEADER = struct.Struct("<4sIIBBH16sI")
_SIDECAR_HEADER = struct.Struct("<4sIII")

FLAG_UNQUANTIZED = 0
FLAG_RAW = 1
FLAG_ENTROPY = 2

_NO_DIGEST = bytes(16)


@dataclass(frozen=True)
class QuantizerConfig:
    """Per-dimension uniform quantizer: 2^bit_width bins between lower and upper."""

    bit_width: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if not (1 <= self.bit_width <= 16):
            raise ValueError("bit_width must be in 1..16")
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("bounds must be matching one-dimensional arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("need lower < upper per dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def codeword_dim(self) -> int:
        return self.lower.shape[0]

    @property
    def bin_width(self) -> np.ndarray:
        return (self.upper - self.lower) / (1 << self.bit_width)


def fit_quantizer(codewords: np.ndarray, bit_width: int) -> QuantizerConfig:
    """Per-dimension min/max bounds widened by 1% of the range on each side.

    A degenerate dimension (zero range) is widened to +-1e-6 around its value.
    """
    cw = np.asarray(codewords, dtype=np.float64)
    if cw.ndim != 2 or cw.shape[0] < 1:
        raise ValueError("need a nonempty (count, dim) codeword array")
    lo = cw.min(axis=0)
    hi = cw.max(axis=0)
    rng = hi - lo
    degenerate = rng == 0
    margin = np.where(degenerate, 1e-6, 0.01 * rng)
    return QuantizerConfig(bit_width, lo - margin, hi + margin)


def quantize(codeword: np.ndarray, q: QuantizerConfig) -> np.ndarray:
    """Nearest-bin symbols; out-of-range values clamp to the edge bins."""
    x = np.asarray(codeword, dtype=np.float64)
    if x.shape != (q.codeword_dim,):
        raise ValueError("codeword length does not match the quantizer")
    idx = np.floor((x - q.lower) / q.bin_width).astype(np.int64)
    return np.clip(idx, 0, (1 << q.bit_width) - 1).astype(np.int32)


def dequantize(symbols: np.ndarray, q: QuantizerConfig) -> np.ndarray:
    """Bin-center values for each symbol."""
    s = np.asarray(symbols, dtype=np.int64)
    if s.shape != (q.codeword_dim,):
        raise ValueError("symbol count does not match the quantizer")
    if np.any(s < 0) or np.any(s >= (1 << q.bit_width)):
        raise ValueError("symbol outside the bin range")
    return q.lower + (s + 0.5) * q.bin_width


@dataclass(frozen=True)
class CodecState:
    """Shared sidecar: quantizer bounds plus the symbol frequency table."""

    quantizer: QuantizerConfig
    table: FrequencyTable

    def __post_init__(self):
        if self.table.num_symbols != (1 << self.quantizer.bit_width):
            raise ValueError("table alphabet does not match the bit width")

    def digest(self) -> bytes:
        return hashlib.sha256(sidecar_bytes(self)).digest()[:16]


def sidecar_bytes(state: CodecState) -> bytes:
    q = state.quantizer
    head = _SIDECAR_HEADER.pack(SIDECAR_MAGIC, FORMAT_VERSION,
                                q.codeword_dim, q.bit_width)
    body = (np.ascontiguousarray(q.lower, dtype="<f8").tobytes()
            + np.ascontiguousarray(q.upper, dtype="<f8").tobytes()
            + np.ascontiguousarray(state.table.counts, dtype="<u2").tobytes())
    return head + body


def save_sidecar(state: CodecState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(sidecar_bytes(state))


def load_sidecar(path) -> CodecState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _SIDECAR_HEADER.size:
        raise ValueError(f"{path}: truncated sidecar header")
    magic, version, n, b = _SIDECAR_HEADER.unpack_from(blob)
    if magic != SIDECAR_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported sidecar version {version}")
    expected = _SIDECAR_HEADER.size + 16 * n + 2 * (1 << b)
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} != expected {expected}")
    off = _SIDECAR_HEADER.size
    lo = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    hi = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    counts = np.frombuffer(blob, dtype="<u2", count=1 << b, offset=off)
    return CodecState(QuantizerConfig(b, lo, hi),
                      FrequencyTable(counts.astype(np.int64)))


@dataclass(frozen=True)
class Bitstream:
    """One feedback message: header fields plus the payload bits."""

    codeword_dim: int
    bit_width: int          # 0 for unquantized streams
    flags: int
    sidecar_digest: bytes
    payload: bytes
    payload_bits: int

    def __post_init__(self):
        if self.flags not in (FLAG_UNQUANTIZED, FLAG_RAW, FLAG_ENTROPY):
            raise ValueError(f"unknown flags value {self.flags}")
        if len(self.sidecar_digest) != 16:
            raise ValueError("sidecar digest must be 16 bytes")
        if len(self.payload) != (self.payload_bits + 7) // 8:
            raise ValueError("payload length does not match the bit count")


def save_bitstream(stream: Bitstream, path) -> None:
    header = _STREAM_HEADER.pack(STREAM_MAGIC, FORMAT_VERSION,
                                 stream.codeword_dim, stream.bit_width,
                                 stream.flags, 0, stream.sidecar_digest,
                                 stream.payload_bits)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stream.payload)


def load_bitstream(path) -> Bitstream:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_bitstream(blob, context=str(path))


def parse_bitstream(blob: bytes, context: str = "bitstream") -> Bitstream:
    if len(blob) < _STREAM_HEADER.size:
        raise ValueError(f"{context}: truncated header")
    magic, version, n, b, flags, _, digest, bits = _STREAM_HEADER.unpack_from(blob)
    if magic != STREAM_MAGIC:
        raise ValueError(f"{context}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{context}: unsupported stream version {version}")
    payload = blob[_STREAM_HEADER.size:]
    if len(payload) != (bits + 7) // 8:
        raise ValueError(f"{context}: payload length does not match bit count")
    if bits % 8 and payload and payload[-1] & ((1 << (8 - bits % 8)) - 1):
        raise ValueError(f"{context}: nonzero padding bits")
    return Bitstream(codeword_dim=n, bit_width=b, flags=flags,
                     sidecar_digest=digest, payload=payload, payload_bits=bits)


def serialize_bitstream(stream: Bitstream) -> bytes:
    header = _STREAM_HEADER.pack(STREAM_MAGIC, FORMAT_VERSION,
                                 stream.codeword_dim, stream.bit_width,
                                 stream.flags, 0, stream.sidecar_digest,
                                 stream.payload_bits)
    return header + stream.payload


def _to_planes(params: ModelParams, matrices: np.ndarray):
    """Physical complex matrices (N, R, C) to normalized planes (N, R*C, 2)."""
    m = np.asarray(matrices)
    if not np.iscomplexobj(m) or m.ndim != 3:
        raise ValueError("expected complex matrices with shape (count, rows, cols)")
    n_samp, rows, cols = m.shape
    planes = np.empty((n_samp, rows * cols, 2), dtype=np.float32)
    planes[..., 0] = (m.real / params.norm_scale).reshape(n_samp, -1)
    planes[..., 1] = (m.imag / params.norm_scale).reshape(n_samp, -1)
    return planes, CoordinateGrid(rows, cols)


def adapt_codewords(params: ModelParams, matrices: np.ndarray, inner_steps: int,
                    inner_lr: float = 1e-2, batch_size: int = 64) -> np.ndarray:
    """Inner-loop codewords for a stack of physical channel matrices."""
    planes, grid = _to_planes(params, matrices)
    feats = fourier_features(params, grid.flat_coords())
    out = []
    for start in range(0, planes.shape[0], batch_size):
        out.append(inner_adapt_batch(params, feats, planes[start:start + batch_size],
                                     inner_steps, inner_lr))
    return np.concatenate(out, axis=0)


def fit_codec_state(params: ModelParams, matrices: np.ndarray, bit_width: int,
                    inner_steps: int, inner_lr: float = 1e-2) -> CodecState:
    """Fit quantizer bounds and frequency table on training-set codewords.

    Codewords are produced exactly the way encode_sample produces them, so
    the fitted bounds describe the codewords the codec will actually see.
    """
    codewords = adapt_codewords(params, matrices, inner_steps, inner_lr)
    q = fit_quantizer(codewords, bit_width)
    symbols = np.stack([quantize(cw, q) for cw in codewords])
    return CodecState(q, fit_frequency_table(symbols, 1 << bit_width))


def _payload_for(symbols: np.ndarray, state: CodecState):
    """Entropy-coded payload, falling back to fixed-width packing when that
    is not shorter. Keeps every stream at or below codeword_dim * bit_width
    payload bits."""
    coded, coded_bits = entropy_encode(symbols, state.table)
    raw, raw_bits = pack_symbols(symbols, state.quantizer.bit_width)
    if coded_bits < raw_bits:
        return FLAG_ENTROPY, coded, coded_bits
    return FLAG_RAW, raw, raw_bits


def encode_sample(params: ModelParams, matrix: np.ndarray, inner_steps: int,
                  state: CodecState | None = None,
                  inner_lr: float = 1e-2) -> Bitstream:
    """Transmitter chain for one physical channel matrix.

    Adapts a codeword from zero with the base network frozen, then either
    quantizes and entropy codes it (state given) or emits the raw float32
    codeword with the unquantized flag (state None).
    """
    cw = adapt_codewords(params, np.asarray(matrix)[None, :, :],
                         inner_steps, inner_lr)[0]
    n = params.arch.codeword_dim
    if state is None:
        payload = np.ascontiguousarray(cw, dtype="<f4").tobytes()
        return Bitstream(codeword_dim=n, bit_width=0, flags=FLAG_UNQUANTIZED,
                         sidecar_digest=_NO_DIGEST, payload=payload,
                         payload_bits=32 * n)
    symbols = quantize(cw, state.quantizer)
    flags, payload, bits = _payload_for(symbols, state)
    return Bitstream(codeword_dim=n, bit_width=state.quantizer.bit_width,
                     flags=flags, sidecar_digest=state.digest(),
                     payload=payload, payload_bits=bits)


def decode_codeword(params: ModelParams, stream: Bitstream,
                    state: CodecState | None = None) -> np.ndarray:
    """Recover the (possibly dequantized) codeword from a bitstream."""
    n = params.arch.codeword_dim
    if stream.codeword_dim != n:
        raise ValueError(f"stream codeword length {stream.codeword_dim} does "
                         f"not match the model ({n})")
    if stream.flags == FLAG_UNQUANTIZED:
        if stream.payload_bits != 32 * n:
            raise ValueError("unquantized payload has the wrong size")
        return np.frombuffer(stream.payload, dtype="<f4", count=n).astype(np.float64)
    if state is None:
        raise ValueError("quantized stream needs the codec sidecar")
    if stream.bit_width != state.quantizer.bit_width:
        raise ValueError("stream bit width does not match the sidecar")
    if stream.sidecar_digest != state.digest():
        raise ValueError("sidecar digest mismatch: encoder and decoder "
                         "hold different codec state")
    if stream.flags == FLAG_ENTROPY:
        symbols = entropy_decode(stream.payload, stream.payload_bits,
                                 state.table, n)
    else:
        symbols = unpack_symbols(stream.payload, stream.payload_bits,
                                 stream.bit_width, n)
    return dequantize(symbols, state.quantizer)


def decode_sample(params: ModelParams, stream: Bitstream, grid: CoordinateGrid,
                  state: CodecState | None = None) -> np.ndarray:
    """Receiver chain: bitstream to a physical complex channel matrix."""
    from .model import reconstruct

    codeword = decode_codeword(params, stream, state)
    return reconstruct(params, codeword, grid)


def decode_matrices(params: ModelParams, streams, grid: CoordinateGrid,
                    state: CodecState | None = None,
                    batch_size: int = 64) -> np.ndarray:
    """Batched decode of many bitstreams to physical matrices (N, R, C)."""
    cws = np.stack([decode_codeword(params, s, state) for s in streams])
    feats = fourier_features(params, grid.flat_coords())
    outs = []
    for start in range(0, cws.shape[0], batch_size):
        out, _ = forward_batch(params, cws[start:start + batch_size], feats=feats)
        outs.append(out)
    out = np.concatenate(outs, axis=0).astype(np.float64)
    re = out[..., 0].reshape(-1, grid.num_rows, grid.num_cols)
    im = out[..., 1].reshape(-1, grid.num_rows, grid.num_cols)
    return (re + 1j * im) * params.norm_scale


def encode_dataset(params: ModelParams, matrices: np.ndarray, inner_steps: int,
                   state: CodecState | None = None,
                   inner_lr: float = 1e-2) -> list:
    """Transmitter chain over a stack of matrices; returns one Bitstream each."""
    cws = adapt_codewords(params, matrices, inner_steps, inner_lr)
    n = params.arch.codeword_dim
    streams = []
    if state is None:
        for cw in cws:
            payload = np.ascontiguousarray(cw, dtype="<f4").tobytes()
            streams.append(Bitstream(n, 0, FLAG_UNQUANTIZED, _NO_DIGEST,
                                     payload, 32 * n))
        return streams
    digest = state.digest()
    for cw in cws:
        symbols = quantize(cw, state.quantizer)
        flags, payload, bits = _payload_for(symbols, state)
        streams.append(Bitstream(n, state.quantizer.bit_width, flags, digest,
                                 payload, bits))
    return streams
