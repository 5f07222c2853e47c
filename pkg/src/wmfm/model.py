"""Dual encoders, projection heads and unit-hypersphere embeddings."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .diffcore import Tensor, no_grad, ops
from .diffcore.checkpoint import checksum, load_checkpoint, save_checkpoint
from .diffcore.nn import MLP, ConvBlock, Module

CSI = "CSI"
CAM = "CAM"
CHANNEL_REPRS = ("raw", "angle_delay")


@dataclass(frozen=True)
class EncoderConfig:
    """Layer sizes for both encoders and the projection heads.

    ``image_head`` and ``channel_head`` are (hidden, embed_dim) pairs and
    must end in ``embed_dim``; ``projection_head`` is shared by both
    modalities. The defaults (image head (128, 32), channel head (64, 32),
    projection (256, 32), embed_dim 32) are sized for CPU training; larger
    heads such as (1024, 128) only change the tuples. ``channel_repr``
    selects the CSI input ("angle_delay" magnitudes or "raw" real/imag
    planes) and ``coord_channels`` appends two pixel-coordinate planes to
    the image input.
    """

    embed_dim: int = 32
    antennas: int = 16
    subcarriers: int = 8
    image_dims: tuple = (32, 64, 3)
    channel_conv: tuple = (16, 16)
    channel_head: tuple = (64, 32)
    image_backbone: tuple = (16, 32, 64, 128)
    image_head: tuple = (128, 32)
    projection_head: tuple = (256, 32)
    phase_reference: bool = True
    channel_repr: str = "angle_delay"
    coord_channels: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.channel_head[-1] != self.embed_dim or self.image_head[-1] != self.embed_dim:
            raise ValueError("both encoder heads must output embed_dim")
        if self.channel_repr not in CHANNEL_REPRS:
            raise ValueError(f"channel_repr must be one of {CHANNEL_REPRS}")
        if len(self.projection_head) < 1:
            raise ValueError("projection_head needs at least one layer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("image_dims", "channel_conv", "channel_head", "image_backbone", "image_head", "projection_head"):
            if k in d:
                d[k] = tuple(d[k])
        if "embed_dim" in d:
            e = d["embed_dim"]
            d.setdefault("channel_head", (64, e))
            d.setdefault("image_head", (128, e))
            d["channel_head"] = tuple(d["channel_head"][:-1]) + (e,)
            d["image_head"] = tuple(d["image_head"][:-1]) + (e,)
        return cls(**d)

    @classmethod
    def for_scenario(cls, scenario, **kw):
        return cls.from_dict({
            "antennas": scenario.antennas, "subcarriers": scenario.subcarriers,
            "image_dims": tuple(scenario.image_dims), **kw,
        })


@dataclass
class EmbeddingBatch:
    z: np.ndarray
    modality: str
    record_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.record_ids is None:
            self.record_ids = np.arange(len(self.z))

    def __len__(self):
        return len(self.z)


def stack_channel(H, phase_reference=True, dtype=np.float64, repr="raw"):
    """Complex (N, M, S) -> real (N, 2, M, S) encoder input.

    ``repr="raw"``: real plane then imaginary plane. With
    ``phase_reference`` each sample is first rotated so that entry (0, 0)
    is real and nonnegative, removing the common carrier phase.

    ``repr="angle_delay"``: magnitude of the unitary 2-D DFT (angle bins
    over antennas, centred; delay bins over subcarriers), then the same map
    scaled by its own peak. Each path becomes a peak whose position does not
    depend on the carrier phase; the first plane keeps absolute power.
    """
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    H = H.astype(np.complex128)
    if repr == "angle_delay":
        F = np.fft.fftshift(np.fft.ifft2(H, axes=(1, 2), norm="ortho"), axes=1)
        mag = np.abs(F)
        peak = mag.max(axis=(1, 2), keepdims=True)
        return np.stack([mag, mag / np.where(peak > 0, peak, 1.0)], axis=1).astype(dtype)
    if phase_reference:
        ref = H[:, 0, 0]
        mag = np.abs(ref)
        rot = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1.0), 1.0)
        H = H * rot[:, None, None]
    return np.stack([H.real, H.imag], axis=1).astype(dtype)


def prep_images(images, dtype=np.float64):
    """uint8 (N, h, w, 3) -> standardized float (N, 3, h, w)."""
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[None]
    return ((x.astype(dtype) / 255.0 - 0.5) / 0.25).transpose(0, 3, 1, 2).copy()


class ChannelEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        dt = np.dtype(cfg.dtype)
        c_in = 2
        self.n_blocks = len(cfg.channel_conv)
        for i, c in enumerate(cfg.channel_conv):
            setattr(self, f"block{i}", ConvBlock(c_in, c, rng, stride=1, dtype=dt))
            c_in = c
        flat = c_in * cfg.antennas * cfg.subcarriers
        self.head = MLP((flat,) + tuple(cfg.channel_head), rng, dtype=dt)
        self.shape = (2, cfg.antennas, cfg.subcarriers)

    def forward(self, x):
        if tuple(x.shape[1:]) != self.shape:
            raise ValueError(f"channel input shape {tuple(x.shape[1:])} does not match {self.shape}")
        for i in range(self.n_blocks):
            x = getattr(self, f"block{i}")(x)
        return ops.l2_normalize(self.head(ops.flatten(x)))


def _coord_planes(n, h, w, dtype):
    """Row / column coordinate planes in [-1, 1] so pooled features keep position."""
    yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
    return np.broadcast_to(np.stack([yy, xx]).astype(dtype), (n, 2, h, w))


class ImageEncoder(Module):
    """Strided conv stages -> global average pool -> MLP.

    With ``coord_channels`` two fixed coordinate planes are appended to the
    input so that global pooling does not discard where things are.
    """

    def __init__(self, cfg: EncoderConfig, rng):
        super().__init__()
        dt = np.dtype(cfg.dtype)
        self.coords = bool(cfg.coord_channels)
        c_in = 5 if self.coords else 3
        self.n_stages = len(cfg.image_backbone)
        for i, c in enumerate(cfg.image_backbone):
            setattr(self, f"stage{i}", ConvBlock(c_in, c, rng, stride=2, dtype=dt))
            c_in = c
        self.head = MLP((c_in,) + tuple(cfg.image_head), rng, dtype=dt)
        h, w, _ = cfg.image_dims
        self.shape = (3, h, w)

    def forward(self, x):
        if tuple(x.shape[1:]) != self.shape:
            raise ValueError(f"image input shape {tuple(x.shape[1:])} does not match {self.shape}")
        if self.coords:
            x = ops.concat([x, _coord_planes(x.shape[0], self.shape[1], self.shape[2], x.dtype)], axis=1)
        for i in range(self.n_stages):
            x = getattr(self, f"stage{i}")(x)
        return ops.l2_normalize(self.head(ops.global_avg_pool(x)))


class ProjectionHead(Module):
    def __init__(self, d_in, sizes, rng, dtype):
        super().__init__()
        self.mlp = MLP((d_in,) + tuple(sizes), rng, dtype=dtype)

    def forward(self, z):
        return ops.l2_normalize(self.mlp(z))


class WMFM(Module):
    """Channel and image encoders plus their pretraining projection heads."""

    ENCODER_PREFIXES = ("channel_encoder.", "image_encoder.")
    PROJECTION_PREFIXES = ("channel_proj.", "image_proj.")

    def __init__(self, cfg: EncoderConfig, seed=0):
        super().__init__()
        object.__setattr__(self, "cfg", cfg)
        rng = np.random.default_rng(seed)
        dt = np.dtype(cfg.dtype)
        self.channel_encoder = ChannelEncoder(cfg, rng)
        self.image_encoder = ImageEncoder(cfg, rng)
        self.channel_proj = ProjectionHead(cfg.embed_dim, cfg.projection_head, rng, dt)
        self.image_proj = ProjectionHead(cfg.embed_dim, cfg.projection_head, rng, dt)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    # -- differentiable paths
    def channel_embed(self, H) -> Tensor:
        x = Tensor(stack_channel(H, self.cfg.phase_reference, self.dtype, self.cfg.channel_repr))
        return self.channel_encoder(x)

    def image_embed(self, images) -> Tensor:
        return self.image_encoder(Tensor(prep_images(images, self.dtype)))

    def project(self, z, modality) -> Tensor:
        head = self.channel_proj if modality == CSI else self.image_proj
        return head(z)

    # -- batched inference
    def encode_channel(self, H, record_ids=None, batch_size=256) -> EmbeddingBatch:
        z = self._batched(self.channel_embed, H, batch_size)
        return EmbeddingBatch(z, CSI, record_ids)

    def encode_image(self, images, record_ids=None, batch_size=256) -> EmbeddingBatch:
        z = self._batched(self.image_embed, images, batch_size)
        return EmbeddingBatch(z, CAM, record_ids)

    def project_batch(self, emb: EmbeddingBatch, batch_size=1024) -> EmbeddingBatch:
        with no_grad():
            parts = [
                self.project(Tensor(emb.z[i : i + batch_size]), emb.modality).data
                for i in range(0, len(emb), batch_size)
            ]
        z = np.concatenate(parts) if parts else np.zeros((0, self.cfg.projection_head[-1]))
        return EmbeddingBatch(z, emb.modality, emb.record_ids)

    def _batched(self, fn, x, batch_size):
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                parts = [fn(x[i : i + batch_size]).data for i in range(0, len(x), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(parts) if parts else np.zeros((0, self.cfg.embed_dim), dtype=self.dtype)

    # -- parameter groups
    def encoder_state(self):
        return {n: a for n, a in self.state_dict().items() if n.startswith(self.ENCODER_PREFIXES)}

    def encoder_parameters(self):
        return [p for n, p in self.named_parameters() if n.startswith(self.ENCODER_PREFIXES)]

    def projection_parameters(self):
        return [p for n, p in self.named_parameters() if n.startswith(self.PROJECTION_PREFIXES)]

    def encoder_checksum(self) -> str:
        return checksum(self.encoder_state())

    # -- persistence
    def save(self, path, extra_meta=None):
        meta = {"kind": "wmfm", "encoder_config": self.cfg.to_dict(), **(extra_meta or {})}
        return save_checkpoint(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path, expected_cfg: EncoderConfig | None = None):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "wmfm":
            raise ValueError(f"{path}: not a WMFM checkpoint")
        cfg = EncoderConfig.from_dict(meta["encoder_config"])
        if expected_cfg is not None and expected_cfg != cfg:
            raise ValueError(f"{path}: checkpoint encoder config {cfg} does not match expected {expected_cfg}")
        model = cls(cfg)
        model.load_state_dict(arrays)
        return model, meta
