"""Same-size restoration network built around sub-pixel rearrangement.

The network keeps its 3xHxW input resolution end to end: a shallow
feature extractor with a squeeze/expand autoencoder, a chain of residual
concatenation blocks gated by an attention unit, global feature fusion
with a long skip, and a reconstruction tail that expands to sub-pixel
space, refines it, and folds back to RGB through a sigmoid.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import expect_kind, load_checkpoint, match_state, save_checkpoint
from .errors import CheckpointError, ConfigError, ShapeError

ATTENTION_CHOICES = ("pltfam", "tfam", "none")


@dataclass
class ModelConfig:
    channels: int = 64
    num_rcb: int = 4
    units_per_rcb: int = 3
    shuffle_factor: int = 2
    attention: str = "pltfam"
    recon_blocks: int = 7
    tie_recon_weights: bool = False

    def validate(self) -> None:
        r = self.shuffle_factor
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.num_rcb < 1:
            raise ConfigError(f"num_rcb must be >= 1, got {self.num_rcb}")
        if self.units_per_rcb < 1:
            raise ConfigError(f"units_per_rcb must be >= 1, got {self.units_per_rcb}")
        if r < 1:
            raise ConfigError(f"shuffle_factor must be >= 1, got {r}")
        if self.recon_blocks < 1:
            raise ConfigError(f"recon_blocks must be >= 1, got {self.recon_blocks}")
        if self.attention not in ATTENTION_CHOICES:
            raise ConfigError(
                f"attention must be one of {ATTENTION_CHOICES}, got {self.attention!r}"
            )
        if self.channels % (r * r) != 0:
            raise ConfigError(
                f"channels ({self.channels}) must be divisible by "
                f"shuffle_factor^2 ({r * r})"
            )
        if self.attention == "pltfam" and (self.channels // (r * r)) % 2 != 0:
            raise ConfigError(
                f"pltfam needs an even sub-pixel channel count, got "
                f"channels/r^2 = {self.channels // (r * r)}"
            )


@dataclass
class NetworkOutput:
    """Restored images plus one attention mask per block when collected."""

    sr: np.ndarray
    attention_masks: Optional[list[np.ndarray]] = None


def _conv(c_in: int, c_out: int, k: int) -> nn.Conv2d:
    return nn.Conv2d(c_in, c_out, kernel_size=k, padding=k // 2)


class Sfe(nn.Module):
    """Shallow feature extraction with a sub-pixel squeeze/expand branch."""

    def __init__(self, channels: int, r: int):
        super().__init__()
        self.r = r
        self.entry = _conv(3, channels, 5)
        self.expand = _conv(channels, channels, 3)
        self.inner = _conv(channels * r * r, channels * r * r, 3)
        self.agg = _conv(channels, channels, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        base = F.relu(self.entry(x))
        t = F.relu(self.expand(base))
        t = F.pixel_unshuffle(t, self.r)
        t = F.relu(self.inner(t))
        t = F.pixel_shuffle(t, self.r)
        return self.agg(t) + base


class Pltfam(nn.Module):
    """Attention computed in sub-pixel space with parameter-free resampling.

    The feature map is spread spatially by pixel shuffle; a split-channel
    pair of convolutions forms the channel branch and a single convolution
    forms the positional branch.  Both fold back by pixel unshuffle before
    the shared sigmoid head.
    """

    def __init__(self, channels: int, r: int):
        super().__init__()
        if channels % (r * r) != 0:
            raise ConfigError(f"channels {channels} not divisible by r^2 = {r * r}")
        sub = channels // (r * r)
        if sub % 2 != 0:
            raise ConfigError(f"sub-pixel channel count {sub} must be even")
        self.r = r
        self.half = sub // 2
        self.ca_a = _conv(self.half, self.half, 3)
        self.ca_b = _conv(self.half, self.half, 3)
        self.pos = _conv(sub, sub, 3)
        self.head_wide = _conv(channels, channels, 3)
        self.head_point = _conv(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ps = F.pixel_shuffle(x, self.r)
        a, b = torch.split(ps, self.half, dim=1)
        ca = F.pixel_unshuffle(torch.cat([self.ca_a(a), self.ca_b(b)], dim=1), self.r)
        pos = F.pixel_unshuffle(self.pos(ps), self.r)
        mask = torch.sigmoid(self.head_point(self.head_wide(ca + pos)))
        return mask, x * mask


class Tfam(nn.Module):
    """Pooling-based attention: channel gate from global average and max
    pooling through a shared bottleneck, positional gate from a strided
    average pool refined by a convolution and resampled bilinearly."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.squeeze = _conv(channels, hidden, 1)
        self.excite = _conv(hidden, channels, 1)
        self.pos = _conv(channels, channels, 3)
        self.head_wide = _conv(channels, channels, 3)
        self.head_point = _conv(channels, channels, 1)

    def _channel_gate(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.excite(F.relu(self.squeeze(pooled)))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        ca = self._channel_gate(F.adaptive_avg_pool2d(x, 1))
        ca = ca + self._channel_gate(F.adaptive_max_pool2d(x, 1))
        pooled = F.avg_pool2d(x, kernel_size=2, stride=2, ceil_mode=True)
        pos = F.interpolate(
            self.pos(pooled), size=x.shape[-2:], mode="bilinear", align_corners=False
        )
        mask = torch.sigmoid(self.head_point(self.head_wide(ca + pos)))
        return mask, x * mask


class ResidualUnit(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3)
        self.conv2 = _conv(channels, channels, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.relu(self.conv1(x)))


class Rcb(nn.Module):
    """Residual concatenation block: chained residual units whose outputs
    are concatenated, fused by a 1x1 convolution, gated by attention, and
    wrapped in a block-level skip."""

    def __init__(self, channels: int, units: int, attention: Optional[nn.Module]):
        super().__init__()
        self.units = nn.ModuleList(ResidualUnit(channels) for _ in range(units))
        self.fuse = _conv(channels * units, channels, 1)
        self.attention = attention

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        h = x
        taps = []
        for unit in self.units:
            h = unit(h)
            taps.append(h)
        fused = self.fuse(torch.cat(taps, dim=1))
        mask = None
        if self.attention is not None:
            mask, fused = self.attention(fused)
        return fused + x, mask


class Reconstruction(nn.Module):
    """Expand to sub-pixel space, refine with repeated conv blocks, fold
    back, and project to RGB through a sigmoid."""

    def __init__(self, channels: int, r: int, blocks: int, tie_weights: bool):
        super().__init__()
        self.r = r
        self.passes = blocks
        self.entry = _conv(channels, channels * r * r, 1)
        n_distinct = 1 if tie_weights else blocks

        def make_block() -> nn.Sequential:
            return nn.Sequential(
                _conv(channels, channels, 3),
                nn.ReLU(),
                _conv(channels, channels, 3),
                nn.ReLU(),
            )

        self.blocks = nn.ModuleList(make_block() for _ in range(n_distinct))
        self.exit = _conv(channels * r * r, 3, 3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.pixel_shuffle(self.entry(x), self.r)
        for i in range(self.passes):
            y = self.blocks[i % len(self.blocks)](y)
        y = F.pixel_unshuffle(y, self.r)
        return torch.sigmoid(self.exit(y))


class PlateSrNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c, r = cfg.channels, cfg.shuffle_factor

        def make_attention() -> Optional[nn.Module]:
            if cfg.attention == "pltfam":
                return Pltfam(c, r)
            if cfg.attention == "tfam":
                return Tfam(c)
            return None

        self.sfe = Sfe(c, r)
        self.rcbs = nn.ModuleList(
            Rcb(c, cfg.units_per_rcb, make_attention()) for _ in range(cfg.num_rcb)
        )
        self.fuse_point = _conv(c * cfg.num_rcb, c, 1)
        self.fuse_wide = _conv(c, c, 3)
        self.recon = Reconstruction(c, r, cfg.recon_blocks, cfg.tie_recon_weights)

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a (N, 3, H, W) batch, got {tuple(x.shape)}")
        rr = self.cfg.shuffle_factor ** 2
        if x.shape[2] % rr != 0 or x.shape[3] % rr != 0:
            raise ShapeError(
                f"input {x.shape[2]}x{x.shape[3]} not divisible by "
                f"shuffle_factor^2 = {rr}"
            )

    def forward(
        self, x: torch.Tensor, return_masks: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, list[Optional[torch.Tensor]]]:
        self._check_input(x)
        shallow = self.sfe(x)
        h = shallow
        taps = []
        masks = []
        for rcb in self.rcbs:
            h, mask = rcb(h)
            taps.append(h)
            masks.append(mask)
        fused = self.fuse_wide(self.fuse_point(torch.cat(taps, dim=1)))
        sr = self.recon(fused + shallow)
        if return_masks:
            return sr, masks
        return sr

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_network(cfg: ModelConfig, seed: int = 0) -> PlateSrNet:
    """Construct and deterministically initialize a network.

    Weights use Kaiming-uniform fan-in bounds drawn from a dedicated
    generator; biases start at zero.  Two calls with equal (cfg, seed)
    produce bit-identical parameters.
    """
    cfg.validate()
    net = PlateSrNet(cfg)
    init_parameters(net, seed)
    return net


def init_parameters(module: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for sub in module.modules():
            if isinstance(sub, nn.Conv2d):
                fan_in = sub.in_channels // sub.groups
                fan_in *= sub.kernel_size[0] * sub.kernel_size[1]
                bound = math.sqrt(6.0 / fan_in)
                sub.weight.uniform_(-bound, bound, generator=gen)
                if sub.bias is not None:
                    sub.bias.zero_()
            elif isinstance(sub, nn.Linear):
                bound = math.sqrt(6.0 / sub.in_features)
                sub.weight.uniform_(-bound, bound, generator=gen)
                if sub.bias is not None:
                    sub.bias.zero_()


def forward(network: PlateSrNet, batch: np.ndarray | torch.Tensor) -> NetworkOutput:
    """Run a batch (or a single image) and return numpy outputs with masks."""
    single = False
    if isinstance(batch, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(batch))
    else:
        t = batch
    t = t.float()
    if t.ndim == 3:
        single = True
        t = t.unsqueeze(0)
    was_training = network.training
    network.eval()
    with torch.no_grad():
        sr, masks = network(t, return_masks=True)
    if was_training:
        network.train()
    sr_np = sr.numpy()
    masks_np = None
    if any(m is not None for m in masks):
        masks_np = [m.numpy() for m in masks if m is not None]
        if single:
            masks_np = [m[0] for m in masks_np]
    if single:
        sr_np = sr_np[0]
    return NetworkOutput(sr=sr_np, attention_masks=masks_np)


_CHECKPOINT_KIND = "plate_sr_net"


def save_network(network: PlateSrNet, path: str | os.PathLike) -> None:
    config = {"kind": _CHECKPOINT_KIND, "model": asdict(network.cfg)}
    arrays = {k: v.detach().cpu().numpy() for k, v in network.state_dict().items()}
    save_checkpoint(path, config, arrays)


def load_network(path: str | os.PathLike) -> PlateSrNet:
    config, arrays = load_checkpoint(path)
    expect_kind(config, _CHECKPOINT_KIND, path)
    try:
        cfg = ModelConfig(**config["model"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: bad model config: {e}") from e
    try:
        cfg.validate()
    except ConfigError as e:
        raise CheckpointError(f"{path}: invalid model config: {e}") from e
    net = PlateSrNet(cfg)
    expected = {k: tuple(v.shape) for k, v in net.state_dict().items()}
    match_state(arrays, expected, path)
    net.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in arrays.items()})
    return net
