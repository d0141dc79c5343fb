"""Model parameterization for the modulated sinusoidal coordinate network.

The network maps a normalized (antenna, subcarrier) coordinate pair to the
(re, im) parts of one channel matrix entry. A fixed random Fourier matrix
lifts the 2-D coordinate into sinusoidal features, a stack of sine layers
transforms them, and a short per-sample codeword scales and shifts every
layer's pre-activation (FiLM style) so a single shared base network can
represent many different channel matrices.

This module owns the parameter container, initialization, the coordinate
grid convention, reconstruction, and the checkpoint file format. The
forward/backward math lives in `siren`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

MAGIC = b"CSIN"
FORMAT_VERSION = 1
# magic, version, hidden_dim, num_layers, codeword_dim, omega0, fourier_scale, norm_scale
_HEADER = struct.Struct("<4sIIIIddd")

# Modulation maps get a small random init (see init_params); this is the scale.
DEFAULT_MOD_SCALE = 0.1


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters.

    hidden_dim is the width of every sine layer, num_layers the depth of the
    modulated stack, codeword_dim the length of the per-sample codeword,
    omega0 the sine frequency multiplier, fourier_scale the stddev of the
    random Fourier matrix entries.
    """

    hidden_dim: int = 512
    num_layers: int = 10
    codeword_dim: int = 32
    omega0: float = 50.0
    fourier_scale: float = 10.0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_layers < 1 or self.codeword_dim < 1:
            raise ValueError("hidden_dim, num_layers, codeword_dim must be >= 1")
        if self.omega0 <= 0 or self.fourier_scale <= 0:
            raise ValueError("omega0 and fourier_scale must be positive")

    def layer_in_dim(self, i: int) -> int:
        """Input width of 1-based layer i (layer 1 reads the Fourier features)."""
        return 2 * self.hidden_dim if i == 1 else self.hidden_dim


@dataclass(frozen=True)
class ModelParams:
    """All network parameters plus the dataset normalization scale.

    The Fourier matrix is fixed (never trained). Weight lists are indexed by
    layer, 0-based internally; block names use 1-based layer numbers.
    norm_scale records the global scale of the dataset the model was trained
    on, so a decoder can map outputs back to the physical domain.
    """

    arch: ArchConfig
    fourier: np.ndarray            # (d_h, 2), fixed
    layer_w: tuple                 # per layer: (d_h, in_dim)
    layer_b: tuple                 # per layer: (d_h,)
    scale_w: tuple                 # per layer: (d_h, n), codeword -> gamma
    scale_b: tuple
    shift_w: tuple                 # per layer: (d_h, n), codeword -> eta
    shift_b: tuple
    out_w: np.ndarray              # (2, d_h)
    out_b: np.ndarray              # (2,)
    norm_scale: float = 1.0

    def __post_init__(self):
        a = self.arch
        d, n = a.hidden_dim, a.codeword_dim
        if self.fourier.shape != (d, 2):
            raise ValueError(f"fourier matrix must be ({d}, 2)")
        for t in ("layer_w", "layer_b", "scale_w", "scale_b", "shift_w", "shift_b"):
            if len(getattr(self, t)) != a.num_layers:
                raise ValueError(f"{t} must have {a.num_layers} entries")
        for i in range(a.num_layers):
            if self.layer_w[i].shape != (d, a.layer_in_dim(i + 1)):
                raise ValueError(f"layer_w[{i}] has wrong shape")
            if self.layer_b[i].shape != (d,):
                raise ValueError(f"layer_b[{i}] has wrong shape")
            for t in ("scale_w", "shift_w"):
                if getattr(self, t)[i].shape != (d, n):
                    raise ValueError(f"{t}[{i}] has wrong shape")
            for t in ("scale_b", "shift_b"):
                if getattr(self, t)[i].shape != (d,):
                    raise ValueError(f"{t}[{i}] has wrong shape")
        if self.out_w.shape != (2, d) or self.out_b.shape != (2,):
            raise ValueError("output layer has wrong shape")
        if not (self.norm_scale > 0 and np.isfinite(self.norm_scale)):
            raise ValueError("norm_scale must be positive and finite")

    def trainable_blocks(self) -> dict:
        """Named trainable arrays in a fixed order. Excludes the Fourier matrix."""
        blocks = {}
        for i in range(self.arch.num_layers):
            k = i + 1
            blocks[f"w{k}"] = self.layer_w[i]
            blocks[f"b{k}"] = self.layer_b[i]
            blocks[f"scale_w{k}"] = self.scale_w[i]
            blocks[f"scale_b{k}"] = self.scale_b[i]
            blocks[f"shift_w{k}"] = self.shift_w[i]
            blocks[f"shift_b{k}"] = self.shift_b[i]
        blocks["out_w"] = self.out_w
        blocks["out_b"] = self.out_b
        return blocks

    def with_blocks(self, blocks: dict) -> "ModelParams":
        """New ModelParams with trainable arrays replaced by `blocks`."""
        L = self.arch.num_layers
        return replace(
            self,
            layer_w=tuple(blocks[f"w{k}"] for k in range(1, L + 1)),
            layer_b=tuple(blocks[f"b{k}"] for k in range(1, L + 1)),
            scale_w=tuple(blocks[f"scale_w{k}"] for k in range(1, L + 1)),
            scale_b=tuple(blocks[f"scale_b{k}"] for k in range(1, L + 1)),
            shift_w=tuple(blocks[f"shift_w{k}"] for k in range(1, L + 1)),
            shift_b=tuple(blocks[f"shift_b{k}"] for k in range(1, L + 1)),
            out_w=blocks["out_w"],
            out_b=blocks["out_b"],
        )

    def cast(self, dtype) -> "ModelParams":
        """Copy with every array cast to dtype (float64 for verification)."""
        cast1 = lambda a: np.asarray(a, dtype=dtype).copy()
        castn = lambda t: tuple(cast1(a) for a in t)
        return replace(
            self,
            fourier=cast1(self.fourier),
            layer_w=castn(self.layer_w), layer_b=castn(self.layer_b),
            scale_w=castn(self.scale_w), scale_b=castn(self.scale_b),
            shift_w=castn(self.shift_w), shift_b=castn(self.shift_b),
            out_w=cast1(self.out_w), out_b=cast1(self.out_b),
        )

    def param_count(self) -> int:
        """Total scalar count including the fixed Fourier matrix."""
        total = self.fourier.size
        for arr in self.trainable_blocks().values():
            total += arr.size
        return total


def init_params(seed: int, arch: ArchConfig,
                mod_scale: float = DEFAULT_MOD_SCALE) -> ModelParams:
    """Seeded parameter initialization.

    Fourier matrix entries are N(0, fourier_scale^2) and stay fixed. Sine
    layers use the standard sinusoidal-network scheme: layer 1 uniform in
    +-1/fan_in, deeper layers and the output uniform in +-sqrt(6/fan_in)/omega0.
    All plain biases start at zero.

    Modulation: scale_b starts at one and shift_b at zero, so the zero
    codeword is exactly the identity modulation. The codeword-to-modulation
    maps scale_w/shift_w start small random, uniform in +-mod_scale, not zero:
    the codeword always starts its inner descent at zero, and with zero maps
    both the codeword gradient and the maps' own gradients vanish identically,
    so a zero init would freeze the whole modulation path forever.
    """
    a = arch
    d, n, L = a.hidden_dim, a.codeword_dim, a.num_layers
    rng = np.random.default_rng(seed)
    f32 = lambda x: np.asarray(x, dtype=np.float32)

    fourier = f32(rng.normal(0.0, a.fourier_scale, (d, 2)))
    deep = np.sqrt(6.0 / d) / a.omega0
    layer_w = []
    for i in range(1, L + 1):
        bound = 1.0 / a.layer_in_dim(i) if i == 1 else deep
        layer_w.append(f32(rng.uniform(-bound, bound, (d, a.layer_in_dim(i)))))
    out_w = f32(rng.uniform(-deep, deep, (2, d)))
    scale_w = [f32(rng.uniform(-mod_scale, mod_scale, (d, n))) for _ in range(L)]
    shift_w = [f32(rng.uniform(-mod_scale, mod_scale, (d, n))) for _ in range(L)]

    zeros = lambda: np.zeros(d, dtype=np.float32)
    return ModelParams(
        arch=a,
        fourier=fourier,
        layer_w=tuple(layer_w),
        layer_b=tuple(zeros() for _ in range(L)),
        scale_w=tuple(scale_w),
        scale_b=tuple(np.ones(d, dtype=np.float32) for _ in range(L)),
        shift_w=tuple(shift_w),
        shift_b=tuple(zeros() for _ in range(L)),
        out_w=out_w,
        out_b=np.zeros(2, dtype=np.float32),
    )


@dataclass(frozen=True)
class CoordinateGrid:
    """Normalized coordinates for an antenna-by-subcarrier grid.

    Index (i, j), 1-based, maps to (2(i-1)/(R-1) - 1, 2(j-1)/(C-1) - 1); an
    axis of size 1 maps to 0. The mapping is a bijection with index pairs.
    """

    num_rows: int
    num_cols: int

    def __post_init__(self):
        if self.num_rows < 1 or self.num_cols < 1:
            raise ValueError("grid dimensions must be >= 1")

    def __len__(self) -> int:
        return self.num_rows * self.num_cols

    @staticmethod
    def _axis(count: int) -> np.ndarray:
        if count == 1:
            return np.zeros(1)
        return 2.0 * np.arange(count) / (count - 1) - 1.0

    def flat_coords(self) -> np.ndarray:
        """All coordinate pairs, shape (num_rows*num_cols, 2), row-major."""
        r = self._axis(self.num_rows)
        c = self._axis(self.num_cols)
        rr, cc = np.meshgrid(r, c, indexing="ij")
        return np.stack([rr.ravel(), cc.ravel()], axis=1)

    def locate(self, coords: np.ndarray) -> np.ndarray:
        """Inverse mapping: normalized pairs back to 1-based (i, j) indices."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        out = np.empty(coords.shape, dtype=np.int64)
        for axis, count in enumerate((self.num_rows, self.num_cols)):
            v = coords[:, axis]
            idx = np.ones(v.shape, dtype=np.int64) if count == 1 \
                else np.rint((v + 1.0) * (count - 1) / 2.0).astype(np.int64) + 1
            if np.any(idx < 1) or np.any(idx > count):
                raise ValueError("coordinate outside the grid")
            out[:, axis] = idx
        return out


def reconstruct(params: ModelParams, codeword: np.ndarray,
                grid: CoordinateGrid, s_norm: float | None = None) -> np.ndarray:
    """Decode a codeword into a complex channel matrix.

    Runs the network over the full grid, pairs the two outputs into complex
    entries, and multiplies by the normalization scale (params.norm_scale
    unless overridden) to return to the original domain.
    """
    from .siren import forward

    preds, _ = forward(params, codeword, grid.flat_coords())
    scale = params.norm_scale if s_norm is None else s_norm
    re = preds[:, 0].astype(np.float64).reshape(grid.num_rows, grid.num_cols)
    im = preds[:, 1].astype(np.float64).reshape(grid.num_rows, grid.num_cols)
    return (re + 1j * im) * scale


def _file_blocks(params: ModelParams):
    yield "fourier", params.fourier
    yield from params.trainable_blocks().items()


def save_checkpoint(params: ModelParams, path) -> None:
    """Versioned little-endian binary: header, then parameter blocks as f32."""
    a = params.arch
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, a.hidden_dim, a.num_layers,
                          a.codeword_dim, a.omega0, a.fourier_scale,
                          params.norm_scale)
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in _file_blocks(params):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, d, L, n, omega0, fscale, norm_scale = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    arch = ArchConfig(hidden_dim=d, num_layers=L, codeword_dim=n,
                      omega0=omega0, fourier_scale=fscale)
    ref = init_params(0, arch)
    expected = _HEADER.size + 4 * ref.param_count()
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} != expected {expected}")
    offset = _HEADER.size
    loaded = {}
    for name, arr in _file_blocks(ref):
        block = np.frombuffer(blob, dtype="<f4", count=arr.size, offset=offset)
        loaded[name] = block.reshape(arr.shape).copy()
        offset += 4 * arr.size
        if not np.all(np.isfinite(loaded[name])):
            raise ValueError(f"{path}: non-finite values in block {name}")
    fourier = loaded.pop("fourier")
    return replace(ref.with_blocks(loaded), fourier=fourier,
                   norm_scale=norm_scale)
