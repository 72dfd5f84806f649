"""Synthetic license-plate rendering and corpus sampling.

Plates are drawn onto a 120x60 canvas from an embedded 5x7 dot-matrix
font, then perturbed with a seeded rotation, blur, and brightness jitter.
Every rendered image is snapped onto the 8-bit grid so the array in
memory is exactly what a PNG round trip reproduces.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, rotate

from .errors import DataError
from .layouts import ALPHABET, PLATE_LEN, PlateLayout
from .pixelops import CANONICAL_H, CANONICAL_W, load_png, quantize_unit, save_png

# One string per row, top to bottom; '#' marks an inked dot.  Zero is
# slashed and one carries a flag and base so 0/O and 1/I stay distinct.
FONT_5X7: dict[str, tuple[str, ...]] = {
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": (".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": (".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."),
}

GLYPH_SCALE = 2
GLYPH_W = 5 * GLYPH_SCALE
GLYPH_H = 7 * GLYPH_SCALE
GLYPH_GAP = 4
TEXT_X0 = (CANONICAL_W - (PLATE_LEN * GLYPH_W + (PLATE_LEN - 1) * GLYPH_GAP)) // 2
TEXT_Y0 = (CANONICAL_H - GLYPH_H) // 2 + 3


@dataclass
class PlateSample:
    """A rendered plate image together with its label and provenance."""

    image: np.ndarray
    label: str
    layout: PlateLayout
    seed: int


def _glyph(ch: str) -> np.ndarray:
    rows = FONT_5X7[ch]
    bits = np.array([[c == "#" for c in row] for row in rows], dtype=np.float32)
    return np.kron(bits, np.ones((GLYPH_SCALE, GLYPH_SCALE), dtype=np.float32))


_GLYPHS = {ch: _glyph(ch) for ch in ALPHABET}


def render_plate(label: str, layout: PlateLayout, seed: int) -> PlateSample:
    """Render one plate deterministically from (label, layout, seed)."""
    if not isinstance(layout, PlateLayout):
        raise DataError(f"layout must be a PlateLayout, got {type(layout).__name__}")
    if not layout.is_legal(label):
        raise DataError(f"label {label!r} is not legal for layout {layout.value}")
    rng = np.random.default_rng(seed)

    if layout is PlateLayout.BRAZILIAN:
        bg = rng.uniform(0.62, 0.80)
        base = np.full((3, CANONICAL_H, CANONICAL_W), bg, dtype=np.float32)
    else:
        bg = rng.uniform(0.72, 0.92)
        base = np.full((3, CANONICAL_H, CANONICAL_W), bg, dtype=np.float32)
        strip = np.array([0.10, 0.20, 0.55], dtype=np.float32) + rng.uniform(-0.03, 0.03)
        base[:, :7, :] = strip[:, None, None]
    # Ink spans faded to crisp paint, so glyph contrast varies per plate.
    ink = bg - rng.uniform(0.12, 0.55)
    base[:, :1, :] *= 0.55
    base[:, -1:, :] *= 0.55
    base[:, :, :1] *= 0.55
    base[:, :, -1:] *= 0.55

    for k, ch in enumerate(label):
        g = _GLYPHS[ch]
        x = TEXT_X0 + k * (GLYPH_W + GLYPH_GAP)
        region = base[:, TEXT_Y0 : TEXT_Y0 + GLYPH_H, x : x + GLYPH_W]
        region[:] = region * (1.0 - g) + ink * g

    angle = rng.uniform(-4.0, 4.0)
    img = rotate(base, angle, axes=(1, 2), reshape=False, order=1, mode="nearest")
    sigma = rng.uniform(0.0, 0.5)
    if sigma > 1e-3:
        img = gaussian_filter(img, sigma=(0.0, sigma, sigma))
    img = img * rng.uniform(0.92, 1.08)
    img = quantize_unit(np.clip(img, 0.0, 1.0).astype(np.float32))
    return PlateSample(image=img, label=label, layout=layout, seed=int(seed))


def sample_corpus(n: int, mix: float, seed: int) -> list[PlateSample]:
    """Render ``n`` plates with unique labels; ``mix`` is the Mercosur share.

    Mercosur count is ``round(n * mix)``; the remainder is Brazilian.
    """
    if n < 1:
        raise DataError(f"corpus size must be >= 1, got {n}")
    if not 0.0 <= mix <= 1.0:
        raise DataError(f"mix must lie in [0, 1], got {mix}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x706C]))
    n_merc = int(round(n * mix))
    plan = [PlateLayout.BRAZILIAN] * (n - n_merc) + [PlateLayout.MERCOSUR] * n_merc
    seen: set[str] = set()
    samples = []
    for layout in plan:
        while True:
            label = layout.random_label(rng)
            if label not in seen:
                seen.add(label)
                break
        render_seed = int(rng.integers(0, 2**63, dtype=np.int64))
        samples.append(render_plate(label, layout, render_seed))
    return samples


CORPUS_MANIFEST = "manifest.jsonl"


def write_corpus(samples: list[PlateSample], out_dir: str | os.PathLike) -> Path:
    """Write PNGs plus a JSONL manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / CORPUS_MANIFEST
    with open(manifest, "w", encoding="ascii") as fh:
        for idx, s in enumerate(samples):
            fname = f"{idx:05d}_{s.label}.png"
            save_png(s.image, out / fname)
            rec = {
                "filename": fname,
                "label": s.label,
                "layout": s.layout.value,
                "seed": s.seed,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def read_corpus(corpus_dir: str | os.PathLike) -> list[PlateSample]:
    """Load a corpus written by :func:`write_corpus`."""
    root = Path(corpus_dir)
    manifest = root / CORPUS_MANIFEST
    if not manifest.is_file():
        raise DataError(f"no {CORPUS_MANIFEST} under {root}")
    samples = []
    with open(manifest, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                image = load_png(root / rec["filename"])
                samples.append(
                    PlateSample(
                        image=image,
                        label=rec["label"],
                        layout=PlateLayout(rec["layout"]),
                        seed=int(rec["seed"]),
                    )
                )
            except (KeyError, ValueError, OSError) as e:
                raise DataError(f"{manifest}:{line_no}: bad corpus record: {e}") from e
    return samples
