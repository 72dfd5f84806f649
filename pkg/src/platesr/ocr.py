"""OCR adapter protocol, layout masking, and a small trainable reader.

The toy reader is a four-stage convolutional trunk with seven parallel
36-way classification heads, one per plate position.  It exists to make
the recognition-aware loss and the evaluation protocol executable end to
end; it is not meant to compete with a production OCR engine.
"""

from __future__ import annotations

import os
import time
from dataclasses import asdict, dataclass
from typing import Optional, Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import expect_kind, load_checkpoint, match_state, save_checkpoint
from .errors import CheckpointError, ConfigError, DataError, ShapeError
from .layouts import ALPHABET, DIGITS, LETTERS, PLATE_LEN, PlateLayout
from .network import init_parameters
from .pixelops import CANONICAL_H, CANONICAL_W
from .synthplate import PlateSample

N_CLASSES = len(ALPHABET)
_LETTER_IDX = np.array([ALPHABET.index(c) for c in LETTERS])
_DIGIT_IDX = np.array([ALPHABET.index(c) for c in DIGITS])


@runtime_checkable
class OcrAdapter(Protocol):
    """Anything that reads a 3x60x120 plate image into 7 characters."""

    def predict(
        self, img: np.ndarray, layout: Optional[PlateLayout] = None
    ) -> tuple[str, np.ndarray]:
        """Return (text, per-position confidences in [0, 1])."""
        ...


def apply_layout_mask(logits: np.ndarray, layout: PlateLayout) -> str:
    """Argmax decode restricted to the symbols legal at each position.

    Ties resolve to the earliest symbol in alphabet order (A..Z then 0..9).
    """
    logits = np.asarray(logits)
    if logits.shape != (PLATE_LEN, N_CLASSES):
        raise ShapeError(f"expected ({PLATE_LEN}, {N_CLASSES}) logits, got {logits.shape}")
    chars = []
    for pos in range(PLATE_LEN):
        legal = _LETTER_IDX if layout.position_classes[pos] == "L" else _DIGIT_IDX
        best = legal[int(np.argmax(logits[pos, legal]))]
        chars.append(ALPHABET[best])
    return "".join(chars)


def _decode(logits: np.ndarray, layout: Optional[PlateLayout]) -> tuple[str, np.ndarray]:
    if layout is None:
        idx = np.argmax(logits, axis=1)
        text = "".join(ALPHABET[i] for i in idx)
        probs = _softmax(logits)
        conf = probs[np.arange(PLATE_LEN), idx]
    else:
        text = apply_layout_mask(logits, layout)
        conf = np.empty(PLATE_LEN)
        for pos in range(PLATE_LEN):
            legal = _LETTER_IDX if layout.position_classes[pos] == "L" else _DIGIT_IDX
            probs = _softmax(logits[pos : pos + 1, legal])[0]
            conf[pos] = probs[list(legal).index(ALPHABET.index(text[pos]))]
    return text, conf.astype(np.float64)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class ToyOcr(nn.Module):
    """Four-stage convolutional trunk plus seven parallel position heads.

    After four conv+pool stages a 60x120 input becomes a 3x7 feature grid
    whose 7 columns line up with the 7 plate positions; head k classifies
    column k.  The trunk is shared, so every position contributes to the
    same glyph features.
    """

    def __init__(self, width: int = 16):
        super().__init__()
        if width < 1:
            raise ConfigError(f"width must be >= 1, got {width}")
        w = width
        self.features = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(w, 2 * w, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(2 * w, 4 * w, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(4 * w, 4 * w, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        )
        feat_h = CANONICAL_H // 16
        feat_w = CANONICAL_W // 16
        if feat_w != PLATE_LEN:
            raise ConfigError(
                f"trunk produces {feat_w} columns for {PLATE_LEN} plate positions"
            )
        self._col_dim = 4 * w * feat_h
        self.heads = nn.ModuleList(
            nn.Linear(self._col_dim, N_CLASSES) for _ in range(PLATE_LEN)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a (N, 3, H, W) batch, got {tuple(x.shape)}")
        if x.shape[2] != CANONICAL_H or x.shape[3] != CANONICAL_W:
            raise ShapeError(
                f"expected {CANONICAL_H}x{CANONICAL_W} input, got {x.shape[2]}x{x.shape[3]}"
            )
        h = self.features(x)
        cols = [h[:, :, :, k].flatten(1) for k in range(PLATE_LEN)]
        return torch.stack(
            [head(col) for head, col in zip(self.heads, cols)], dim=1
        )

    def logits(self, img: np.ndarray | torch.Tensor) -> np.ndarray:
        batch = self.batch_logits([img])
        return batch[0]

    def batch_logits(self, imgs: list[np.ndarray | torch.Tensor]) -> np.ndarray:
        tensors = []
        for img in imgs:
            t = torch.as_tensor(np.asarray(img) if isinstance(img, np.ndarray) else img)
            if t.ndim != 3:
                raise ShapeError(f"expected a (3, H, W) image, got {tuple(t.shape)}")
            tensors.append(t.float())
        was_training = self.training
        self.eval()
        with torch.no_grad():
            out = self(torch.stack(tensors))
        if was_training:
            self.train()
        return out.numpy().astype(np.float64)

    def predict(
        self, img: np.ndarray, layout: Optional[PlateLayout] = None
    ) -> tuple[str, np.ndarray]:
        return _decode(self.logits(img), layout)

    def predict_batch(
        self,
        imgs: list[np.ndarray],
        layouts: Optional[list[Optional[PlateLayout]]] = None,
    ) -> list[tuple[str, np.ndarray]]:
        logits = self.batch_logits(imgs)
        if layouts is None:
            layouts = [None] * len(imgs)
        if len(layouts) != len(imgs):
            raise ShapeError(f"got {len(layouts)} layouts for {len(imgs)} images")
        return [_decode(l, lay) for l, lay in zip(logits, layouts)]

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def toy_ocr_build(seed: int = 0, width: int = 16) -> ToyOcr:
    """Deterministically initialized reader; stays under 2M parameters."""
    model = ToyOcr(width=width)
    init_parameters(model, seed)
    return model


@dataclass
class OcrEpochRecord:
    epoch: int
    loss: float
    accuracy: float
    wall_seconds: float


def toy_ocr_train(
    adapter: ToyOcr,
    samples: list[PlateSample],
    epochs: int,
    seed: int,
    batch_size: int = 32,
    lr: float = 1e-3,
    noise_sigma: float = 0.01,
) -> list[OcrEpochRecord]:
    """Train in place with per-head cross-entropy summed over positions.

    A light seeded Gaussian-noise augmentation (``noise_sigma``) keeps the
    reader usable on degraded inputs; pass 0 to disable it.  ``epochs=0``
    returns an empty log and leaves parameters untouched.  Reruns with the
    same adapter seed, samples, and arguments reproduce identical weights.
    """
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if not samples:
        raise DataError("no training samples")
    for i, s in enumerate(samples):
        if not s.layout.is_legal(s.label):
            raise DataError(
                f"sample {i}: label {s.label!r} is not legal for layout {s.layout.value}"
            )
    if epochs == 0:
        return []

    x = torch.from_numpy(np.stack([s.image for s in samples])).float()
    y = torch.tensor(
        [[ALPHABET.index(ch) for ch in s.label] for s in samples], dtype=torch.long
    )
    n = len(samples)
    opt = torch.optim.Adam(adapter.parameters(), lr=lr)
    noise_gen = torch.Generator().manual_seed(int(seed) ^ 0x6E6F6973)
    log = []
    for epoch in range(1, epochs + 1):
        t0 = time.monotonic()
        adapter.train()
        perm = np.random.default_rng(np.random.SeedSequence([int(seed), epoch])).permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = torch.from_numpy(perm[start : start + batch_size].copy())
            xb = x[idx]
            if noise_sigma > 0:
                noise = torch.randn(xb.shape, generator=noise_gen) * noise_sigma
                xb = (xb + noise).clamp(0.0, 1.0)
            logits = adapter(xb)
            loss = sum(
                F.cross_entropy(logits[:, pos], y[idx][:, pos]) for pos in range(PLATE_LEN)
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        adapter.eval()
        correct = 0
        with torch.no_grad():
            for start in range(0, n, 256):
                logits = adapter(x[start : start + 256])
                pred = logits.argmax(dim=2)
                correct += int((pred == y[start : start + 256]).all(dim=1).sum())
        log.append(
            OcrEpochRecord(
                epoch=epoch,
                loss=total / n,
                accuracy=correct / n,
                wall_seconds=time.monotonic() - t0,
            )
        )
    return log


_CHECKPOINT_KIND = "toy_ocr"


def save_toy_ocr(model: ToyOcr, path: str | os.PathLike) -> None:
    width = model.features[0].out_channels
    config = {"kind": _CHECKPOINT_KIND, "width": width}
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    save_checkpoint(path, config, arrays)


def load_toy_ocr(path: str | os.PathLike) -> ToyOcr:
    config, arrays = load_checkpoint(path)
    expect_kind(config, _CHECKPOINT_KIND, path)
    try:
        model = ToyOcr(width=int(config["width"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad reader config: {e}") from e
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    match_state(arrays, expected, path)
    model.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in arrays.items()})
    return model
