"""Raw audio/frames to patch sequences, plus random masking.

Audio is converted to a log mel spectrogram (Hanning window, HTK mel
scale), then both spectrograms and RGB frames are cut into square
patches in row-major order. Masking keeps a sorted random subset of
patch positions; the complement is re-inserted later as a learned mask
token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .nn import Tensor, concat, take_rows


@dataclass
class SpectrogramConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 128
    n_fft: int | None = None  # next power of two >= window length when None
    fmin: float = 0.0
    fmax: float | None = None  # Nyquist when None
    floor: float = 1e-10

    @property
    def window_length(self):
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self):
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def fft_length(self):
        if self.n_fft is not None:
            return self.n_fft
        return 1 << (self.window_length - 1).bit_length()


@dataclass
class AudioFeature:
    """Log mel filterbank frames (T, F) plus the framing metadata."""

    frames: np.ndarray
    sample_rate: int
    window_length: int
    hop_length: int
    floor: float = 1e-10

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_mels(self):
        return self.frames.shape[1]


@dataclass
class PatchSet:
    """Kept patch vectors plus the bookkeeping to restore grid order."""

    patches: np.ndarray  # (n_kept, patch_width)
    kept_indices: np.ndarray  # sorted, unique
    masked_indices: np.ndarray  # sorted complement
    rows: int
    cols: int
    mask_ratio: float

    @property
    def n_total(self):
        return self.rows * self.cols

    @property
    def n_kept(self):
        return len(self.kept_indices)

    @property
    def patch_width(self):
        return self.patches.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config):
    """Triangular HTK-style filters, shape (n_mels, fft_length//2 + 1)."""
    fmax = config.fmax if config.fmax is not None else config.sample_rate / 2.0
    n_bins = config.fft_length // 2 + 1
    bin_freqs = np.arange(n_bins) * config.sample_rate / config.fft_length
    edges = mel_to_hz(
        np.linspace(hz_to_mel(config.fmin), hz_to_mel(fmax), config.n_mels + 2)
    )
    fb = np.zeros((config.n_mels, n_bins))
    for i in range(config.n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_center_frequencies(config):
    fmax = config.fmax if config.fmax is not None else config.sample_rate / 2.0
    edges = mel_to_hz(
        np.linspace(hz_to_mel(config.fmin), hz_to_mel(fmax), config.n_mels + 2)
    )
    return edges[1:-1]


def frame_count(n_samples, config):
    win, hop = config.window_length, config.hop_length
    if n_samples < win:
        return 0
    return 1 + (n_samples - win) // hop


def log_mel(waveform, config=None):
    """Log mel filterbank features of a mono waveform.

    Each frame is a Hanning-windowed segment; energies below the
    configured floor are lifted to it before the log, so digital silence
    maps to log(floor).
    """
    config = config or SpectrogramConfig()
    wave = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if wave.size == 0:
        raise InputError("empty waveform")
    n_frames = frame_count(wave.size, config)
    if n_frames < 1:
        raise InputError(
            f"waveform of {wave.size} samples is shorter than one "
            f"{config.window_length}-sample window"
        )
    win, hop = config.window_length, config.hop_length
    window = np.hanning(win)
    offsets = np.arange(n_frames) * hop
    segments = np.stack([wave[o : o + win] for o in offsets]) * window
    spectrum = np.fft.rfft(segments, n=config.fft_length, axis=1)
    power = np.abs(spectrum) ** 2
    energies = power @ mel_filterbank(config).T
    frames = np.log(np.maximum(energies, 0.0) + config.floor)
    return AudioFeature(
        frames=frames,
        sample_rate=config.sample_rate,
        window_length=win,
        hop_length=hop,
        floor=config.floor,
    )


def fit_frames(feature, target_frames):
    """Crop or silence-pad a feature to exactly `target_frames` rows."""
    frames = feature.frames
    if frames.shape[0] > target_frames:
        frames = frames[:target_frames]
    elif frames.shape[0] < target_frames:
        pad = np.full(
            (target_frames - frames.shape[0], frames.shape[1]),
            math.log(feature.floor),
        )
        frames = np.vstack([frames, pad])
    return AudioFeature(
        frames=frames,
        sample_rate=feature.sample_rate,
        window_length=feature.window_length,
        hop_length=feature.hop_length,
        floor=feature.floor,
    )


def validate_frame_image(image, patch_side=None):
    """Check an H, W, 3 float image in [0, 1]; returns it unchanged."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image; got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InputError("image intensities must lie in [0, 1]")
    if patch_side is not None and (
        img.shape[0] % patch_side or img.shape[1] % patch_side
    ):
        raise ShapeError(
            f"image dims {img.shape[:2]} not divisible by patch side {patch_side}"
        )
    return img


def patchify(data, patch_side):
    """Cut a (T, F) matrix or (H, W, 3) image into flattened square patches.

    Patches are ordered row-major over the grid and each patch is
    flattened row-major, so patch width is side**2 for matrices and
    3 * side**2 for images. Returns (patches, rows, cols).
    """
    if isinstance(data, AudioFeature):
        data = data.frames
    x = np.asarray(data, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected 2-d or 3-d input; got shape {x.shape}")
    h, w = x.shape[:2]
    if h % patch_side or w % patch_side:
        raise ShapeError(
            f"dims ({h}, {w}) not divisible by patch side {patch_side}"
        )
    rows, cols = h // patch_side, w // patch_side
    if x.ndim == 2:
        tiles = x.reshape(rows, patch_side, cols, patch_side)
        patches = tiles.transpose(0, 2, 1, 3).reshape(rows * cols, -1)
    else:
        tiles = x.reshape(rows, patch_side, cols, patch_side, x.shape[2])
        patches = tiles.transpose(0, 2, 1, 3, 4).reshape(rows * cols, -1)
    return patches, rows, cols


def unpatchify(patches, rows, cols, patch_side, channels=None):
    """Inverse of patchify for both matrices and images."""
    p = np.asarray(patches, dtype=np.float64)
    if channels is None:
        channels = p.shape[1] // (patch_side * patch_side)
    if channels == 1:
        tiles = p.reshape(rows, cols, patch_side, patch_side)
        return tiles.transpose(0, 2, 1, 3).reshape(rows * patch_side, cols * patch_side)
    tiles = p.reshape(rows, cols, patch_side, patch_side, channels)
    return tiles.transpose(0, 2, 1, 3, 4).reshape(
        rows * patch_side, cols * patch_side, channels
    )


def kept_count(n_total, mask_ratio):
    return n_total - int(math.floor(mask_ratio * n_total))


def random_mask(patches, mask_ratio, seed, rows=None, cols=None):
    """Randomly hide a fraction of patches; kept rows stay in grid order.

    `patches` is either the (patches, rows, cols) triple from patchify or
    a bare (N, P) array with rows/cols passed explicitly. `seed` may be
    an int, a sequence of ints, or a numpy Generator.
    """
    if isinstance(patches, tuple) and len(patches) == 3:
        patches, rows, cols = patches
    patches = np.asarray(patches, dtype=np.float64)
    if rows is None or cols is None:
        raise ShapeError("grid shape (rows, cols) is required")
    if not 0.0 <= mask_ratio < 1.0:
        raise InputError(f"mask ratio must lie in [0, 1); got {mask_ratio}")
    n_total = rows * cols
    if patches.shape[0] != n_total:
        raise ShapeError(
            f"{patches.shape[0]} patches do not fill a {rows}x{cols} grid"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_masked = int(math.floor(mask_ratio * n_total))
    perm = rng.permutation(n_total)
    masked = np.sort(perm[:n_masked])
    kept = np.sort(perm[n_masked:])
    return PatchSet(
        patches=patches[kept],
        kept_indices=kept,
        masked_indices=masked,
        rows=rows,
        cols=cols,
        mask_ratio=mask_ratio,
    )


def full_patch_set(patches, rows=None, cols=None):
    """A PatchSet with nothing masked (inference-time tokenization)."""
    return random_mask(patches, 0.0, 0, rows=rows, cols=cols)


def pad_gather_index(patch_set):
    """Index into [kept rows; mask row] restoring full grid order.

    Position p maps to the rank of p among kept indices when kept, and
    to n_kept (the appended mask-token row) when masked.
    """
    idx = np.full(patch_set.n_total, patch_set.n_kept, dtype=np.intp)
    idx[patch_set.kept_indices] = np.arange(patch_set.n_kept)
    return idx


def unshuffle_with_pad(decoded, patch_set, mask_token, pos_table=None):
    """Re-insert mask tokens so the sequence covers the full patch grid.

    `decoded` is a (n_kept, D) Tensor of encoder outputs, `mask_token` a
    learned (D,) Tensor. Kept positions carry their encoder output,
    masked positions the mask token; `pos_table` (n_total, D), when
    given, is added to every position.
    """
    if decoded.shape[0] != patch_set.n_kept:
        raise ShapeError(
            f"decoded rows {decoded.shape[0]} != kept patches {patch_set.n_kept}"
        )
    stacked = concat([decoded, mask_token.reshape(1, -1)], axis=0)
    full = take_rows(stacked, pad_gather_index(patch_set))
    if pos_table is not None:
        full = full + np.asarray(pos_table, dtype=np.float64)
    return full


def _sincos_1d(positions, dim):
    omega = 1.0 / 10000.0 ** (np.arange(dim // 2, dtype=np.float64) / (dim // 2))
    angles = np.outer(positions, omega)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def sincos_positions_2d(rows, cols, dim):
    """Fixed 2-d sinusoidal table, one row per patch in row-major order."""
    if dim % 4 != 0:
        raise ShapeError(f"positional dim must be divisible by 4; got {dim}")
    r = np.repeat(np.arange(rows, dtype=np.float64), cols)
    c = np.tile(np.arange(cols, dtype=np.float64), rows)
    return np.concatenate(
        [_sincos_1d(r, dim // 2), _sincos_1d(c, dim // 2)], axis=1
    )
