"""Recognition-aware perceptual loss.

Each sample's MSE is scaled by (1 + alpha * D) where the details term D
adds the OCR edit distance (normalized by plate length) to the SSIM
complement between restored and ground-truth images.  D is treated as a
constant: it is computed outside the autodiff graph, so gradients flow
only through the MSE factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import ConfigError, OcrError, ShapeError
from .layouts import PLATE_LEN
from .metrics import levenshtein, ssim
from .ocr import OcrAdapter


@dataclass
class LossConfig:
    alpha: float = 1.0
    plate_len: int = PLATE_LEN
    auto_alpha: bool = False
    auto_alpha_eps: float = 1e-8

    def validate(self) -> None:
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.plate_len < 1:
            raise ConfigError(f"plate_len must be >= 1, got {self.plate_len}")
        if self.auto_alpha_eps <= 0:
            raise ConfigError(f"auto_alpha_eps must be > 0, got {self.auto_alpha_eps}")


@dataclass
class LossBreakdown:
    """Total loss plus the per-sample pieces that produced it."""

    total: torch.Tensor
    mse: list[float]
    details: list[float]
    lev_norm: list[float]
    ssim_term: list[float]
    alpha_used: float

    def scalar(self) -> float:
        return float(self.total.detach())


def _to_numpy_image(x: np.ndarray | torch.Tensor, name: str) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        arr = x.detach().cpu().numpy()
    elif isinstance(x, np.ndarray):
        arr = x
    else:
        raise ShapeError(f"{name} must be an array or tensor, got {type(x).__name__}")
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be a single (3, H, W) image, got {arr.shape}")
    return np.ascontiguousarray(arr, dtype=np.float64)


def details_components(
    restored: np.ndarray | torch.Tensor,
    reference: np.ndarray | torch.Tensor,
    ocr: OcrAdapter,
    plate_len: int = PLATE_LEN,
) -> tuple[float, float]:
    """(normalized edit distance, 1 - SSIM) between restored and reference."""
    h = _to_numpy_image(restored, "restored")
    s = _to_numpy_image(reference, "reference")
    if h.shape != s.shape:
        raise ShapeError(f"shape mismatch: {h.shape} vs {s.shape}")
    text_h, _ = ocr.predict(h.astype(np.float32))
    text_s, _ = ocr.predict(s.astype(np.float32))
    lev = levenshtein(text_h, text_s) / plate_len
    return lev, 1.0 - ssim(h, s)


def details_term(
    restored: np.ndarray | torch.Tensor,
    reference: np.ndarray | torch.Tensor,
    ocr: OcrAdapter,
    plate_len: int = PLATE_LEN,
) -> float:
    lev, ssim_comp = details_components(restored, reference, ocr, plate_len)
    return lev + ssim_comp


def _as_sample_list(
    batch: Sequence[np.ndarray | torch.Tensor] | torch.Tensor | np.ndarray, name: str
) -> list:
    if isinstance(batch, (torch.Tensor, np.ndarray)):
        if batch.ndim != 4:
            raise ShapeError(f"{name} batch must be (N, 3, H, W), got {batch.shape}")
        return [batch[i] for i in range(batch.shape[0])]
    return list(batch)


def perceptual_loss(
    restored: Sequence | torch.Tensor,
    reference: Sequence | torch.Tensor,
    ocr: OcrAdapter,
    cfg: Optional[LossConfig] = None,
) -> LossBreakdown:
    """Mean over samples of mse_i * (1 + alpha * D_i).

    ``restored`` may carry gradients; the returned total backpropagates
    through the MSE factor only.  With ``cfg.auto_alpha`` the weight is
    re-derived each call as mean squared error over mean details term.
    """
    cfg = cfg or LossConfig()
    cfg.validate()
    hs = _as_sample_list(restored, "restored")
    ss = _as_sample_list(reference, "reference")
    if len(hs) != len(ss):
        raise ShapeError(f"batch size mismatch: {len(hs)} restored vs {len(ss)} reference")
    if not hs:
        raise ShapeError("empty batch")

    mse_terms = []
    lev_norms = []
    ssim_terms = []
    batch_pairs = None
    if hasattr(ocr, "predict_batch"):
        flat = [_to_numpy_image(t, "image").astype(np.float32) for pair in zip(hs, ss) for t in pair]
        try:
            batch_pairs = ocr.predict_batch(flat)
        except Exception as e:
            raise OcrError(f"OCR failed on loss batch: {e}") from e

    for i, (h, s) in enumerate(zip(hs, ss)):
        ht = torch.as_tensor(h) if not isinstance(h, torch.Tensor) else h
        st = torch.as_tensor(s) if not isinstance(s, torch.Tensor) else s
        if ht.shape != st.shape:
            raise ShapeError(f"sample {i}: shape mismatch {tuple(ht.shape)} vs {tuple(st.shape)}")
        mse_terms.append(torch.mean((ht.float() - st.float()) ** 2))
        try:
            if batch_pairs is not None:
                text_h, _ = batch_pairs[2 * i]
                text_s, _ = batch_pairs[2 * i + 1]
                lev = levenshtein(text_h, text_s) / cfg.plate_len
                ssim_comp = 1.0 - ssim(
                    _to_numpy_image(h, "restored"), _to_numpy_image(s, "reference")
                )
            else:
                lev, ssim_comp = details_components(h, s, ocr, cfg.plate_len)
        except OcrError:
            raise
        except Exception as e:
            raise OcrError(f"OCR failed on sample {i}: {e}") from e
        lev_norms.append(float(lev))
        ssim_terms.append(float(ssim_comp))

    details = [l + s for l, s in zip(lev_norms, ssim_terms)]
    if cfg.auto_alpha:
        mean_sq = float(np.mean([float(m.detach()) for m in mse_terms]))
        alpha = mean_sq / max(float(np.mean(details)), cfg.auto_alpha_eps)
    else:
        alpha = cfg.alpha
    weights = [1.0 + alpha * d for d in details]
    total = torch.stack([m * w for m, w in zip(mse_terms, weights)]).mean()
    return LossBreakdown(
        total=total,
        mse=[float(m.detach()) for m in mse_terms],
        details=details,
        lev_norm=lev_norms,
        ssim_term=ssim_terms,
        alpha_used=float(alpha),
    )
