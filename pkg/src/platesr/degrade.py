"""Controlled degradation into half-open SSIM intervals.

Starting from the clean image, Gaussian noise with a per-step sigma drawn
from a shrinking range is added until the SSIM against the original lands
inside (lo, hi].  Steps that overshoot below lo are discarded and the
sigma range is halved, so the walk approaches the interval from above.
Every intermediate state is snapped onto the 8-bit grid, which makes the
accepted SSIM value exactly reproducible from the stored PNGs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DegradationError, ShapeError
from .metrics import SsimReference
from .pixelops import load_png, quantize_unit, save_png
from .synthplate import PlateSample

SPLIT_NAMES = ("train", "val", "test")
UNION_TAG = "union"


@dataclass(frozen=True)
class SsimInterval:
    """Half-open target band (lo, hi] for achieved SSIM."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise DataError(f"need 0 <= lo < hi <= 1, got ({self.lo}, {self.hi}]")

    def contains(self, value: float) -> bool:
        return self.lo < value <= self.hi

    @property
    def tag(self) -> str:
        return f"{self.lo:.2f}-{self.hi:.2f}"

    @classmethod
    def parse(cls, text: str) -> "SsimInterval":
        parts = text.split(":")
        if len(parts) != 2:
            raise DataError(f"interval {text!r} is not of the form lo:hi")
        try:
            return cls(float(parts[0]), float(parts[1]))
        except ValueError as e:
            raise DataError(f"interval {text!r}: {e}") from e


def parse_intervals(text: str) -> list[SsimInterval]:
    """Parse a comma-separated interval list such as ``0:0.10,0.10:0.25``."""
    items = [piece for piece in text.split(",") if piece.strip()]
    if not items:
        raise DataError("empty interval list")
    return [SsimInterval.parse(piece.strip()) for piece in items]


@dataclass
class DegradedPair:
    lr: np.ndarray
    hr: np.ndarray
    achieved_ssim: float
    interval: SsimInterval
    seed: int
    iterations_used: int


def degrade_to_interval(
    hr: np.ndarray,
    interval: SsimInterval,
    seed: int,
    max_iter: int = 1000,
    sigma_lo: float = 0.01,
    sigma_hi: float = 0.04,
    blur_sigma: float = 0.0,
) -> DegradedPair:
    """Walk the image down to the target SSIM band.

    ``iterations_used`` counts every noise draw, including discarded
    overshoots.  Raises :class:`DegradationError` carrying the closest
    SSIM reached if ``max_iter`` draws are not enough.
    """
    if not isinstance(hr, np.ndarray) or hr.ndim != 3 or hr.shape[0] != 3:
        raise ShapeError(f"hr must be a (3, H, W) array, got {getattr(hr, 'shape', None)}")
    if not 0.0 < sigma_lo <= sigma_hi:
        raise DataError(f"need 0 < sigma_lo <= sigma_hi, got {sigma_lo}, {sigma_hi}")
    if max_iter < 1:
        raise DataError(f"max_iter must be >= 1, got {max_iter}")

    hr_q = quantize_unit(hr)
    rng = np.random.default_rng(seed)
    lr = hr_q.copy()
    if blur_sigma > 0.0:
        from scipy.ndimage import gaussian_filter

        lr = quantize_unit(gaussian_filter(lr, sigma=(0.0, blur_sigma, blur_sigma)))
    ref = SsimReference(hr_q)
    score = ref.score(lr)

    def distance(s: float) -> float:
        if interval.contains(s):
            return 0.0
        return interval.lo - s if s <= interval.lo else s - interval.hi

    best = score
    lo_s, hi_s = float(sigma_lo), float(sigma_hi)
    iterations = 0
    while not interval.contains(score) and iterations < max_iter:
        sigma = rng.uniform(lo_s, hi_s)
        noise = rng.normal(0.0, sigma, size=lr.shape)
        candidate = quantize_unit(np.clip(lr + noise.astype(np.float32), 0.0, 1.0))
        cand_score = ref.score(candidate)
        iterations += 1
        if distance(cand_score) < distance(best):
            best = cand_score
        if cand_score <= interval.lo:
            lo_s, hi_s = lo_s / 2.0, hi_s / 2.0
            continue
        lr, score = candidate, cand_score
    if not interval.contains(score):
        raise DegradationError(
            f"no SSIM in ({interval.lo}, {interval.hi}] after {max_iter} draws; "
            f"closest was {best:.6f}",
            best_ssim=best,
        )
    return DegradedPair(
        lr=lr,
        hr=hr_q,
        achieved_ssim=score,
        interval=interval,
        seed=int(seed),
        iterations_used=iterations,
    )


@dataclass
class DegradedRecord:
    """One manifest row: where a pair lives and how it was produced."""

    index: int
    label: str
    layout: str
    split: str
    interval_tag: str
    interval_lo: float
    interval_hi: float
    seed: int
    status: str
    achieved_ssim: float
    iterations_used: int
    lr_path: str
    hr_path: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "DegradedRecord":
        try:
            raw = json.loads(line)
            return cls(**raw)
        except (ValueError, TypeError) as e:
            raise DataError(f"bad manifest record: {e}") from e

    @property
    def interval(self) -> SsimInterval:
        return SsimInterval(self.interval_lo, self.interval_hi)


@dataclass
class DatasetManifest:
    intervals: list[SsimInterval]
    split_fractions: tuple[float, float, float]
    seed: int
    records: list[DegradedRecord] = field(default_factory=list)

    def subset(self, tag: str = UNION_TAG, split: str | None = None) -> list[DegradedRecord]:
        """Successful records for one interval tag (or the union of all)."""
        known = {iv.tag for iv in self.intervals}
        if tag != UNION_TAG and tag not in known:
            raise DataError(f"unknown subset {tag!r}; expected {sorted(known)} or {UNION_TAG!r}")
        if split is not None and split not in SPLIT_NAMES:
            raise DataError(f"unknown split {split!r}; expected one of {SPLIT_NAMES}")
        out = []
        for rec in self.records:
            if rec.status != "ok":
                continue
            if tag != UNION_TAG and rec.interval_tag != tag:
                continue
            if split is not None and rec.split != split:
                continue
            out.append(rec)
        return out

    def failures(self) -> list[DegradedRecord]:
        return [rec for rec in self.records if rec.status != "ok"]


MANIFEST_NAME = "manifest.jsonl"
META_NAME = "meta.json"


def _split_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def assign_splits(
    labels: list[str], fractions: tuple[float, float, float], seed: int
) -> dict[str, str]:
    """Map each unique label to a split; identical labels always share one."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {fractions}")
    if any(f < 0 for f in fractions):
        raise DataError(f"split fractions must be non-negative, got {fractions}")
    unique = list(dict.fromkeys(labels))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x73706C]))
    order = [unique[i] for i in rng.permutation(len(unique))]
    n_train, n_val, _ = _split_counts(len(unique), fractions)
    mapping = {}
    for pos, label in enumerate(order):
        if pos < n_train:
            mapping[label] = "train"
        elif pos < n_train + n_val:
            mapping[label] = "val"
        else:
            mapping[label] = "test"
    return mapping


def _pair_seed(seed: int, interval_idx: int, sample_idx: int) -> int:
    words = np.random.SeedSequence([int(seed), interval_idx, sample_idx]).generate_state(2)
    return int(words.view(np.uint64)[0])


def build_subsets(
    corpus: list[PlateSample],
    intervals: list[SsimInterval],
    split: tuple[float, float, float] = (0.5, 0.25, 0.25),
    seed: int = 0,
    out_dir: str | os.PathLike | None = None,
    max_iter: int = 1000,
    sigma_lo: float = 0.01,
    sigma_hi: float = 0.04,
    blur_sigma: float = 0.0,
) -> DatasetManifest:
    """Degrade every corpus image into every interval and split by label.

    With ``out_dir`` set, writes ``hr/`` once, ``lr/<tag>/`` per interval,
    and a JSONL manifest; reruns with identical arguments reproduce the
    same bytes.  Pairs that fail to land in their interval are recorded
    with ``status="failed"`` and skipped by :meth:`DatasetManifest.subset`.
    """
    if not corpus:
        raise DataError("empty corpus")
    if not intervals:
        raise DataError("no intervals given")
    tags = [iv.tag for iv in intervals]
    if len(set(tags)) != len(tags):
        raise DataError(f"duplicate interval tags: {tags}")
    split = tuple(float(f) for f in split)
    split_map = assign_splits([s.label for s in corpus], split, seed)

    root = Path(out_dir) if out_dir is not None else None
    if root is not None:
        (root / "hr").mkdir(parents=True, exist_ok=True)
        for tag in tags:
            (root / "lr" / tag).mkdir(parents=True, exist_ok=True)

    manifest = DatasetManifest(intervals=list(intervals), split_fractions=split, seed=int(seed))
    hr_written: set[int] = set()
    for iv_idx, interval in enumerate(intervals):
        for idx, sample in enumerate(corpus):
            pair_seed = _pair_seed(seed, iv_idx, idx)
            base = f"{idx:05d}_{sample.label}.png"
            hr_rel = f"hr/{base}"
            lr_rel = f"lr/{interval.tag}/{base}"
            try:
                pair = degrade_to_interval(
                    sample.image,
                    interval,
                    pair_seed,
                    max_iter=max_iter,
                    sigma_lo=sigma_lo,
                    sigma_hi=sigma_hi,
                    blur_sigma=blur_sigma,
                )
                status, achieved, iters = "ok", pair.achieved_ssim, pair.iterations_used
            except DegradationError as e:
                status, achieved, iters = "failed", e.best_ssim, max_iter
                pair = None
            if root is not None and pair is not None:
                if idx not in hr_written:
                    save_png(pair.hr, root / hr_rel)
                    hr_written.add(idx)
                save_png(pair.lr, root / lr_rel)
            manifest.records.append(
                DegradedRecord(
                    index=idx,
                    label=sample.label,
                    layout=sample.layout.value,
                    split=split_map[sample.label],
                    interval_tag=interval.tag,
                    interval_lo=interval.lo,
                    interval_hi=interval.hi,
                    seed=pair_seed,
                    status=status,
                    achieved_ssim=float(achieved),
                    iterations_used=int(iters),
                    lr_path=lr_rel,
                    hr_path=hr_rel,
                )
            )
    if root is not None:
        write_manifest(manifest, root)
    return manifest


def write_manifest(manifest: DatasetManifest, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    path = root / MANIFEST_NAME
    with open(path, "w", encoding="ascii") as fh:
        for rec in manifest.records:
            fh.write(rec.to_json() + "\n")
    meta = {
        "intervals": [[iv.lo, iv.hi] for iv in manifest.intervals],
        "split_fractions": list(manifest.split_fractions),
        "seed": manifest.seed,
        "n_records": len(manifest.records),
        "n_failed": len(manifest.failures()),
    }
    with open(root / META_NAME, "w", encoding="ascii") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_manifest(data_dir: str | os.PathLike) -> DatasetManifest:
    root = Path(data_dir)
    meta_path = root / META_NAME
    path = root / MANIFEST_NAME
    if not path.is_file() or not meta_path.is_file():
        raise DataError(f"no {MANIFEST_NAME} / {META_NAME} under {root}")
    with open(meta_path, "r", encoding="ascii") as fh:
        meta = json.load(fh)
    manifest = DatasetManifest(
        intervals=[SsimInterval(lo, hi) for lo, hi in meta["intervals"]],
        split_fractions=tuple(meta["split_fractions"]),
        seed=int(meta["seed"]),
    )
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                manifest.records.append(DegradedRecord.from_json(line))
    return manifest


def load_pair(rec: DegradedRecord, data_dir: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Load (lr, hr) for one successful record."""
    if rec.status != "ok":
        raise DataError(f"record {rec.index} ({rec.interval_tag}) has status {rec.status!r}")
    root = Path(data_dir)
    lr_file, hr_file = root / rec.lr_path, root / rec.hr_path
    for p in (lr_file, hr_file):
        if not p.is_file():
            raise DataError(f"missing image file {p}")
    return load_png(lr_file), load_png(hr_file)


def load_pairs(
    manifest: DatasetManifest,
    data_dir: str | os.PathLike,
    tag: str = UNION_TAG,
    split: str | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    return [load_pair(rec, data_dir) for rec in manifest.subset(tag, split)]
