"""Image-quality and recognition metrics.

SSIM follows the standard single-scale formulation: an 11x11 Gaussian
window with sigma 1.5, stabilizers C1 = (0.01)^2 and C2 = (0.03)^2 for a
unit dynamic range, local statistics restricted to fully valid window
positions, computed per channel and averaged.  All metric arithmetic runs
in float64 regardless of the input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def _gaussian_taps(n: int, sigma: float) -> np.ndarray:
    half = (n - 1) / 2.0
    x = np.arange(n, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


_TAPS = _gaussian_taps(SSIM_WIN, SSIM_SIGMA)
_HALF = SSIM_WIN // 2


def _window_mean(x: np.ndarray) -> np.ndarray:
    # Separable Gaussian correlation; the crop keeps only positions where
    # the window fits entirely inside the image.
    y = correlate1d(x, _TAPS, axis=1, mode="constant")
    y = correlate1d(y, _TAPS, axis=2, mode="constant")
    return y[:, _HALF:-_HALF, _HALF:-_HALF]


def _check_ssim_input(x: np.ndarray, name: str) -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 3:
        raise ShapeError(f"{name} must be a (C, H, W) array")
    if x.shape[1] < SSIM_WIN or x.shape[2] < SSIM_WIN:
        raise ShapeError(
            f"{name} spatial size {x.shape[1]}x{x.shape[2]} is smaller than "
            f"the {SSIM_WIN}x{SSIM_WIN} window"
        )
    return x.astype(np.float64)


class SsimReference:
    """Precomputed window statistics of a fixed reference image.

    Scoring many candidates against one reference (as the degradation
    loop does) only pays for the candidate's statistics each call.
    ``ssim(a, b)`` is defined as ``SsimReference(b).score(a)``, so both
    paths produce bit-identical values.
    """

    def __init__(self, ref: np.ndarray):
        self.shape = ref.shape
        self._ref = _check_ssim_input(ref, "reference")
        self.mu = _window_mean(self._ref)
        self.mu_sq = self.mu * self.mu
        self.var = _window_mean(self._ref * self._ref) - self.mu_sq

    def score(self, img: np.ndarray) -> float:
        x = _check_ssim_input(img, "image")
        if x.shape != self.shape:
            raise ShapeError(f"shape mismatch: {img.shape} vs reference {self.shape}")
        mu1 = _window_mean(x)
        mu1_sq = mu1 * mu1
        var1 = _window_mean(x * x) - mu1_sq
        cov = _window_mean(x * self._ref) - mu1 * self.mu
        num = (2.0 * mu1 * self.mu + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu1_sq + self.mu_sq + SSIM_C1) * (var1 + self.var + SSIM_C2)
        return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM between two (C, H, W) images with unit dynamic range."""
    if not isinstance(a, np.ndarray) or not isinstance(b, np.ndarray):
        raise ShapeError("ssim expects numpy arrays")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return SsimReference(b).score(a)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for unit dynamic range; identical images give +inf."""
    if not isinstance(a, np.ndarray) or not isinstance(b, np.ndarray):
        raise ShapeError("psnr expects numpy arrays")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit-cost insertion, deletion, and substitution."""
    if not isinstance(a, str) or not isinstance(b, str):
        raise ShapeError("levenshtein expects strings")
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


@dataclass(frozen=True)
class RecognitionTally:
    """Counts of predictions with at least 5, 6, or all 7 correct positions."""

    n_total: int
    n_ge7: int
    n_ge6: int
    n_ge5: int

    def percent(self, tier: int) -> float:
        if tier not in (5, 6, 7):
            raise ValueError(f"tier must be 5, 6, or 7, got {tier}")
        if self.n_total == 0:
            return 0.0
        n = {7: self.n_ge7, 6: self.n_ge6, 5: self.n_ge5}[tier]
        return 100.0 * n / self.n_total


def tally_recognition(predictions: list[str], ground_truths: list[str]) -> RecognitionTally:
    """Tally position-wise correctness for 7-character ground-truth labels.

    Characters are compared position by position up to the shorter length.
    A prediction counts as fully correct only when all 7 positions match
    and the lengths agree.
    """
    if len(predictions) != len(ground_truths):
        raise ShapeError(
            f"got {len(predictions)} predictions for {len(ground_truths)} ground truths"
        )
    n_ge7 = n_ge6 = n_ge5 = 0
    for pred, gt in zip(predictions, ground_truths):
        if len(gt) != 7:
            raise ShapeError(f"ground truth {gt!r} is not 7 characters")
        matches = sum(p == g for p, g in zip(pred, gt))
        if matches == 7 and len(pred) == len(gt):
            n_ge7 += 1
        if matches >= 6:
            n_ge6 += 1
        if matches >= 5:
            n_ge5 += 1
    return RecognitionTally(len(predictions), n_ge7, n_ge6, n_ge5)
