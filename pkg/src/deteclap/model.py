"""The audio-visual network: uni-modal encoders, a shared cross-modal
stack, a joint decoder over padded patch grids, and per-modality label
prediction heads.

All sequence math runs on (B, L, D) Tensors; the public operations also
accept single clips and return unbatched arrays for them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, ShapeError
from .nn import (
    Tensor,
    TransformerBlockParams,
    concat,
    init_block_params,
    layer_norm,
    take_rows,
    transformer_block,
    trunc_normal,
)
from .tokenizer import pad_gather_index, sincos_positions_2d

CHECKPOINT_FORMAT = "deteclap.ckpt.v1"

_BLOCK_FIELDS = (
    ("ln1.scale", "ln1_scale"),
    ("ln1.shift", "ln1_shift"),
    ("attn.wq", "wq"),
    ("attn.wk", "wk"),
    ("attn.wv", "wv"),
    ("attn.wo", "wo"),
    ("ln2.scale", "ln2_scale"),
    ("ln2.shift", "ln2_shift"),
    ("ff.w1", "ff1"),
    ("ff.w2", "ff2"),
)


@dataclass
class ModelConfig:
    embed_dim: int = 64
    heads: int = 4
    encoder_layers: int = 2
    cross_layers: int = 1
    decoder_layers: int = 2
    decoder_dim: int = 64
    decoder_heads: int = 4
    patch_size: int = 16
    mask_ratio: float = 0.75
    label_count: int = 8
    temperature: float = 0.05
    use_type_embed: bool = True
    audio_frames: int = 128
    audio_mels: int = 128
    frame_size: int = 64

    def __post_init__(self):
        if min(self.encoder_layers, self.cross_layers, self.decoder_layers) < 1:
            raise ConfigError("all layer counts must be >= 1")
        if self.embed_dim % self.heads:
            raise ConfigError(
                f"embed dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if self.decoder_dim % self.decoder_heads:
            raise ConfigError(
                f"decoder dim {self.decoder_dim} not divisible by "
                f"decoder heads {self.decoder_heads}"
            )
        if self.label_count < 1:
            raise ConfigError("label count must be >= 1")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ConfigError(f"mask ratio {self.mask_ratio} outside [0, 1)")
        for name, value in (
            ("audio_frames", self.audio_frames),
            ("audio_mels", self.audio_mels),
            ("frame_size", self.frame_size),
        ):
            if value % self.patch_size:
                raise ConfigError(
                    f"{name}={value} not divisible by patch size {self.patch_size}"
                )

    # -- patch geometry --------------------------------------------------

    @property
    def audio_grid(self):
        return (self.audio_frames // self.patch_size,
                self.audio_mels // self.patch_size)

    @property
    def frame_grid(self):
        return (self.frame_size // self.patch_size,
                self.frame_size // self.patch_size)

    @property
    def audio_patches(self):
        r, c = self.audio_grid
        return r * c

    @property
    def frame_patches(self):
        r, c = self.frame_grid
        return r * c

    @property
    def audio_patch_width(self):
        return self.patch_size * self.patch_size

    @property
    def frame_patch_width(self):
        return 3 * self.patch_size * self.patch_size


PROFILES = {
    "desk": dict(
        embed_dim=64, heads=4, encoder_layers=2, cross_layers=1,
        decoder_layers=2, decoder_dim=64, decoder_heads=4,
        audio_frames=128, audio_mels=128, frame_size=64,
    ),
    "paper": dict(
        embed_dim=768, heads=12, encoder_layers=11, cross_layers=1,
        decoder_layers=8, decoder_dim=512, decoder_heads=16,
        audio_frames=1024, audio_mels=128, frame_size=224, label_count=600,
    ),
}


def profile_config(name, **overrides):
    """A ModelConfig from a named profile with field overrides."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    fields = dict(PROFILES[name])
    fields.update(overrides)
    return ModelConfig(**fields)


def parameter_count(config):
    """Learnable parameter total as a pure function of the config."""
    d, dd, c = config.embed_dim, config.decoder_dim, config.label_count
    pa, pv = config.audio_patch_width, config.frame_patch_width
    block = lambda w: 12 * w * w + 4 * w
    total = (pa * d + d) + (pv * d + d)  # patch embeddings
    if config.use_type_embed:
        total += 2 * d + 2 * dd
    total += 2 * (config.encoder_layers * block(d) + 2 * d)  # uni-modal stacks
    total += config.cross_layers * block(d) + 2 * d
    total += d * dd + dd  # decoder adapter
    total += dd  # mask token
    total += config.decoder_layers * block(dd) + 2 * dd
    total += (dd * pa + pa) + (dd * pv + pv)  # reconstruction heads
    total += 2 * (d * c + c)  # label heads
    return total


@dataclass
class ForwardOutput:
    a_hat: Tensor
    v_hat: Tensor
    z: Tensor
    a_bar: Tensor
    v_bar: Tensor
    a_rec: Tensor | None = None
    v_rec: Tensor | None = None
    y_audio: Tensor | None = None
    y_visual: Tensor | None = None


class ModelParams:
    """Named learnable Tensors plus the fixed positional tables."""

    def __init__(self, config, tensors, positions):
        self.config = config
        self.tensors = tensors
        self.positions = positions

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def grads(self):
        return {k: t.grad for k, t in self.tensors.items() if t.grad is not None}

    def n_parameters(self):
        return sum(t.data.size for t in self.tensors.values())

    def copy(self):
        clones = {
            k: Tensor(t.data.copy(), requires_grad=t.requires_grad)
            for k, t in self.tensors.items()
        }
        return ModelParams(self.config, clones, self.positions)

    def block(self, prefix, heads):
        kwargs = {attr: self.tensors[f"{prefix}.{leaf}"]
                  for leaf, attr in _BLOCK_FIELDS}
        return TransformerBlockParams(heads=heads, **kwargs)

    def stack_blocks(self, stack, layers, heads):
        return [self.block(f"{stack}.{i}", heads) for i in range(layers)]

    def groups(self):
        """Parameter names keyed by architectural group."""
        out = {}
        for name in self.tensors:
            if name.startswith(("audio_embed", "visual_embed")):
                g = "patch_embeds"
            elif name.startswith("audio_enc"):
                g = "audio_encoder"
            elif name.startswith("visual_enc"):
                g = "visual_encoder"
            elif name.startswith("cross"):
                g = "cross_modal"
            elif name.startswith(("decoder", "audio_out", "visual_out")):
                g = "decoder"
            elif name == "mask_token":
                g = "mask_token"
            elif name.startswith("label_"):
                g = "label_heads"
            else:
                g = "type_embeds"
            out.setdefault(g, []).append(name)
        return out


def _add_block(tensors, rng, prefix, dim, heads):
    p = init_block_params(rng, dim, heads)
    for leaf, attr in _BLOCK_FIELDS:
        tensors[f"{prefix}.{leaf}"] = getattr(p, attr)


def _add_norm(tensors, prefix, dim):
    tensors[f"{prefix}.norm.scale"] = Tensor(np.ones(dim), requires_grad=True)
    tensors[f"{prefix}.norm.shift"] = Tensor(np.zeros(dim), requires_grad=True)


def init_params(config, seed=0):
    """Fresh parameters: truncated-normal projections, zero biases,
    unit layer-norm scales. The same seed reproduces bit-identical
    weights."""
    rng = np.random.default_rng(seed)
    d, dd = config.embed_dim, config.decoder_dim
    t = {}

    def proj(shape):
        return Tensor(trunc_normal(rng, shape), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    t["audio_embed.weight"] = proj((config.audio_patch_width, d))
    t["audio_embed.bias"] = zeros(d)
    t["visual_embed.weight"] = proj((config.frame_patch_width, d))
    t["visual_embed.bias"] = zeros(d)
    if config.use_type_embed:
        t["type_audio"] = proj(d)
        t["type_visual"] = proj(d)
    for i in range(config.encoder_layers):
        _add_block(t, rng, f"audio_enc.{i}", d, config.heads)
    _add_norm(t, "audio_enc", d)
    for i in range(config.encoder_layers):
        _add_block(t, rng, f"visual_enc.{i}", d, config.heads)
    _add_norm(t, "visual_enc", d)
    for i in range(config.cross_layers):
        _add_block(t, rng, f"cross.{i}", d, config.heads)
    _add_norm(t, "cross", d)
    t["decoder_embed.weight"] = proj((d, dd))
    t["decoder_embed.bias"] = zeros(dd)
    t["mask_token"] = proj(dd)
    if config.use_type_embed:
        t["dec_type_audio"] = proj(dd)
        t["dec_type_visual"] = proj(dd)
    for i in range(config.decoder_layers):
        _add_block(t, rng, f"decoder.{i}", dd, config.decoder_heads)
    _add_norm(t, "decoder", dd)
    t["audio_out.weight"] = proj((dd, config.audio_patch_width))
    t["audio_out.bias"] = zeros(config.audio_patch_width)
    t["visual_out.weight"] = proj((dd, config.frame_patch_width))
    t["visual_out.bias"] = zeros(config.frame_patch_width)
    t["label_audio.weight"] = proj((d, config.label_count))
    t["label_audio.bias"] = zeros(config.label_count)
    t["label_visual.weight"] = proj((d, config.label_count))
    t["label_visual.bias"] = zeros(config.label_count)

    ar, ac = config.audio_grid
    fr, fc = config.frame_grid
    positions = {
        "enc_audio": sincos_positions_2d(ar, ac, d),
        "enc_visual": sincos_positions_2d(fr, fc, d),
        "dec_audio": sincos_positions_2d(ar, ac, dd),
        "dec_visual": sincos_positions_2d(fr, fc, dd),
    }
    params = ModelParams(config, t, positions)
    expected = parameter_count(config)
    assert params.n_parameters() == expected, (
        f"parameter count {params.n_parameters()} != expected {expected}"
    )
    return params


# -- forward operations ---------------------------------------------------


def _as_batch(sets):
    if isinstance(sets, (list, tuple)):
        return list(sets), False
    return [sets], True


def _stack_patches(sets, expected_width, modality):
    widths = {s.patch_width for s in sets}
    kept = {s.n_kept for s in sets}
    grids = {(s.rows, s.cols) for s in sets}
    if len(kept) > 1 or len(grids) > 1:
        raise ContractError(
            f"{modality} patch sets disagree within the batch: "
            f"kept counts {sorted(kept)}, grids {sorted(grids)}"
        )
    if widths != {expected_width}:
        raise ShapeError(
            f"{modality} patch width {sorted(widths)} does not match "
            f"embedding input width {expected_width}"
        )
    return np.stack([s.patches for s in sets])


def _run_stack(x, blocks, norm_scale, norm_shift):
    for b in blocks:
        x = transformer_block(x, b)
    return layer_norm(x, norm_scale, norm_shift)


def encode(audio, visual, params):
    """Contextualize kept patches per modality; lengths are preserved.

    `audio`/`visual` are PatchSets or equal-length lists of them. For
    lists the outputs are (B, L, D); otherwise (L, D).
    """
    cfg = params.config
    audio_sets, single_a = _as_batch(audio)
    visual_sets, single_v = _as_batch(visual)
    if len(audio_sets) != len(visual_sets):
        raise ContractError(
            f"batch sizes disagree: {len(audio_sets)} audio vs "
            f"{len(visual_sets)} visual clips"
        )
    a = Tensor(_stack_patches(audio_sets, cfg.audio_patch_width, "audio"))
    v = Tensor(_stack_patches(visual_sets, cfg.frame_patch_width, "visual"))

    a_pos = np.stack([params.positions["enc_audio"][s.kept_indices]
                      for s in audio_sets])
    v_pos = np.stack([params.positions["enc_visual"][s.kept_indices]
                      for s in visual_sets])

    a = a @ params["audio_embed.weight"] + params["audio_embed.bias"] + a_pos
    v = v @ params["visual_embed.weight"] + params["visual_embed.bias"] + v_pos

    a_hat = _run_stack(a, params.stack_blocks("audio_enc", cfg.encoder_layers, cfg.heads),
                       params["audio_enc.norm.scale"], params["audio_enc.norm.shift"])
    v_hat = _run_stack(v, params.stack_blocks("visual_enc", cfg.encoder_layers, cfg.heads),
                       params["visual_enc.norm.scale"], params["visual_enc.norm.shift"])
    if single_a and single_v:
        return a_hat[0], v_hat[0]
    return a_hat, v_hat


def cross_modal(a_hat, v_hat, params):
    """Joint sequence Z plus mean-pooled per-modality embeddings.

    The same cross-modal stack (shared weights) runs three times: on the
    concatenated sequence for Z and on each modality alone for the
    pooled vectors.
    """
    cfg = params.config
    single = a_hat.ndim == 2
    if single:
        a_hat = a_hat.reshape(1, *a_hat.shape)
        v_hat = v_hat.reshape(1, *v_hat.shape)
    if a_hat.shape[-1] != v_hat.shape[-1]:
        raise ShapeError(
            f"modality widths disagree: {a_hat.shape[-1]} vs {v_hat.shape[-1]}"
        )
    if cfg.use_type_embed:
        a_in = a_hat + params["type_audio"]
        v_in = v_hat + params["type_visual"]
    else:
        a_in, v_in = a_hat, v_hat
    blocks = params.stack_blocks("cross", cfg.cross_layers, cfg.heads)
    scale, shift = params["cross.norm.scale"], params["cross.norm.shift"]
    z = _run_stack(concat([a_in, v_in], axis=1), blocks, scale, shift)
    a_bar = _run_stack(a_in, blocks, scale, shift).mean(axis=1)
    v_bar = _run_stack(v_in, blocks, scale, shift).mean(axis=1)
    if single:
        return z[0], a_bar[0], v_bar[0]
    return z, a_bar, v_bar


def _pad_full_grid(seq, sets, params, pos_key, type_key):
    """Insert mask tokens into kept-only decoder input, add positions."""
    b = seq.shape[0]
    mask_row = params["mask_token"].reshape(1, 1, -1).broadcast_to(
        (b, 1, params.config.decoder_dim)
    )
    stacked = concat([seq, mask_row], axis=1)
    index = np.stack([pad_gather_index(s) for s in sets])
    full = take_rows(stacked, index) + params.positions[pos_key]
    if params.config.use_type_embed:
        full = full + params[type_key]
    return full


def decode(z, audio, visual, params):
    """Reconstruct full per-modality patch grids from the joint sequence.

    Masked positions are filled with the learned mask token before the
    decoder runs; outputs cover every grid position at original patch
    width regardless of which positions were masked.
    """
    cfg = params.config
    audio_sets, single = _as_batch(audio)
    visual_sets, _ = _as_batch(visual)
    if single:
        z = z.reshape(1, *z.shape)
    la = audio_sets[0].n_kept
    lv = visual_sets[0].n_kept
    if z.shape[1] != la + lv:
        raise ContractError(
            f"joint sequence rows {z.shape[1]} != kept audio {la} + "
            f"kept visual {lv}"
        )
    for s, (rows, cols), what in (
        (audio_sets[0], cfg.audio_grid, "audio"),
        (visual_sets[0], cfg.frame_grid, "visual"),
    ):
        if (s.rows, s.cols) != (rows, cols):
            raise ContractError(
                f"{what} grid {(s.rows, s.cols)} does not match config {(rows, cols)}"
            )

    h = z @ params["decoder_embed.weight"] + params["decoder_embed.bias"]
    full_a = _pad_full_grid(h[:, :la, :], audio_sets, params,
                            "dec_audio", "dec_type_audio")
    full_v = _pad_full_grid(h[:, la:, :], visual_sets, params,
                            "dec_visual", "dec_type_visual")
    joined = concat([full_a, full_v], axis=1)
    out = _run_stack(
        joined,
        params.stack_blocks("decoder", cfg.decoder_layers, cfg.decoder_heads),
        params["decoder.norm.scale"], params["decoder.norm.shift"],
    )
    na = cfg.audio_patches
    a_rec = out[:, :na, :] @ params["audio_out.weight"] + params["audio_out.bias"]
    v_rec = out[:, na:, :] @ params["visual_out.weight"] + params["visual_out.bias"]
    if single:
        return a_rec[0], v_rec[0]
    return a_rec, v_rec


def predict_labels(a_bar, v_bar, params):
    """Per-class probabilities from the pooled embeddings.

    Sigmoid outputs are nudged off exact 0/1 so downstream log terms
    stay finite.
    """
    tiny = 1e-12
    single = a_bar.ndim == 1
    if single:
        a_bar = a_bar.reshape(1, -1)
        v_bar = v_bar.reshape(1, -1)
    y_a = (a_bar @ params["label_audio.weight"] + params["label_audio.bias"]
           ).sigmoid().clamp(tiny, 1.0 - tiny)
    y_v = (v_bar @ params["label_visual.weight"] + params["label_visual.bias"]
           ).sigmoid().clamp(tiny, 1.0 - tiny)
    if single:
        return y_a[0], y_v[0]
    return y_a, y_v


def forward(audio, visual, params, with_decoder=True, with_labels=True):
    """Full pass; decoder and label heads can be skipped when unused."""
    a_hat, v_hat = encode(audio, visual, params)
    z, a_bar, v_bar = cross_modal(a_hat, v_hat, params)
    out = ForwardOutput(a_hat=a_hat, v_hat=v_hat, z=z, a_bar=a_bar, v_bar=v_bar)
    if with_decoder:
        out.a_rec, out.v_rec = decode(z, audio, visual, params)
    if with_labels:
        out.y_audio, out.y_visual = predict_labels(a_bar, v_bar, params)
    return out


# -- checkpointing ---------------------------------------------------------


def save_checkpoint(path, params, seed=0, step=0, extra=None):
    """One file: a JSON header line, then little-endian float64 blobs in
    the order declared by the header's parameter manifest."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(params.config),
        "seed": int(seed),
        "step": int(step),
        "params": [
            {"name": k, "shape": list(t.data.shape)} for k, t in params.items()
        ],
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ModelParams, header dict); verifies manifest and sizes."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"not a checkpoint file: {path}")
        config = ModelConfig(**header["config"])
        params = init_params(config, seed=header.get("seed", 0))
        names = params.names()
        manifest = [entry["name"] for entry in header["params"]]
        if manifest != names:
            raise ConfigError("checkpoint manifest does not match this config")
        for entry in header["params"]:
            t = params[entry["name"]]
            shape = tuple(entry["shape"])
            if shape != t.data.shape:
                raise ConfigError(
                    f"checkpoint shape {shape} != expected {t.data.shape} "
                    f"for {entry['name']}"
                )
            n = int(np.prod(shape)) if shape else 1
            blob = fh.read(8 * n)
            if len(blob) != 8 * n:
                raise ConfigError(f"checkpoint truncated at {entry['name']}")
            t.data = np.frombuffer(blob, dtype="<f8").reshape(shape).astype(
                np.float64
            )
        trailing = fh.read(1)
        if trailing:
            raise ConfigError("checkpoint has trailing bytes")
    return params, header
