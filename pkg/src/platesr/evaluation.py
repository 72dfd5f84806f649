"""Evaluation protocol and report rendering.

Recognition percentages (all 7 / at least 6 / at least 5 correct
characters) are reported twice per subset: once on the degraded inputs
(the no-restoration baseline) and once on the network outputs, alongside
mean PSNR and SSIM of the restored images against ground truth.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .degrade import UNION_TAG, DatasetManifest, DegradedRecord, load_pair
from .errors import DataError
from .layouts import PlateLayout
from .metrics import psnr, ssim, tally_recognition
from .network import PlateSrNet
from .ocr import OcrAdapter
from .pixelops import load_png, save_png

SECTION_NO_SR = "no_sr"
SECTION_SR = "sr"


@dataclass
class SampleRecord:
    index: int
    label: str
    layout: str
    interval_tag: str
    split: str
    pred_lr: str
    pred_sr: str
    lr_ssim: float
    sr_ssim: float
    sr_psnr: float
    lr_path: str
    hr_path: str
    sr_path: str = ""
    sr_image: Optional[np.ndarray] = None


@dataclass
class SubsetRow:
    section: str
    subset: str
    layout: str
    n: int
    pct_all7: float
    pct_ge6: float
    pct_ge5: float
    mean_psnr_db: Optional[float]
    psnr_inf_count: int
    mean_ssim: float


@dataclass
class EvalReport:
    rows: list[SubsetRow] = field(default_factory=list)
    samples: list[SampleRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _predict_batch(
    ocr: OcrAdapter, images: list[np.ndarray], layouts: list[Optional[PlateLayout]]
) -> list[str]:
    if hasattr(ocr, "predict_batch"):
        return [text for text, _ in ocr.predict_batch(images, layouts)]
    return [ocr.predict(img, layout)[0] for img, layout in zip(images, layouts)]


def evaluate(
    network: PlateSrNet,
    manifest: DatasetManifest,
    data_dir: str | os.PathLike,
    ocr: OcrAdapter,
    split: str | None = "test",
    use_layout_mask: bool = True,
    batch_size: int = 16,
    keep_sr_images: bool = True,
) -> EvalReport:
    """Run the network over every successful pair in the chosen split.

    Records with missing image files are skipped and listed in
    ``report.meta["missing_files"]``.
    """
    records = []
    for iv in manifest.intervals:
        records.extend(manifest.subset(iv.tag, split))
    if not records:
        raise DataError(f"no evaluable records for split {split!r}")

    report = EvalReport()
    report.meta = {
        "split": split,
        "n_candidates": len(records),
        "missing_files": [],
        "use_layout_mask": use_layout_mask,
        "failed_pairs": len(manifest.failures()),
    }

    loaded: list[tuple[DegradedRecord, np.ndarray, np.ndarray]] = []
    for rec in records:
        try:
            lr, hr = load_pair(rec, data_dir)
        except DataError as e:
            report.meta["missing_files"].append(str(e))
            continue
        loaded.append((rec, lr, hr))
    if not loaded:
        raise DataError("all candidate records had missing files")

    was_training = network.training
    network.eval()
    for start in range(0, len(loaded), batch_size):
        chunk = loaded[start : start + batch_size]
        lr_b = torch.from_numpy(np.stack([lr for _, lr, _ in chunk])).float()
        with torch.no_grad():
            sr_b = network(lr_b).numpy()
        lay = [
            PlateLayout(rec.layout) if use_layout_mask else None for rec, _, _ in chunk
        ]
        preds_lr = _predict_batch(ocr, [lr for _, lr, _ in chunk], lay)
        preds_sr = _predict_batch(ocr, [sr_b[i] for i in range(len(chunk))], lay)
        for i, (rec, lr, hr) in enumerate(chunk):
            sr = sr_b[i]
            report.samples.append(
                SampleRecord(
                    index=rec.index,
                    label=rec.label,
                    layout=rec.layout,
                    interval_tag=rec.interval_tag,
                    split=rec.split,
                    pred_lr=preds_lr[i],
                    pred_sr=preds_sr[i],
                    lr_ssim=rec.achieved_ssim,
                    sr_ssim=ssim(sr, hr),
                    sr_psnr=psnr(sr, hr),
                    lr_path=rec.lr_path,
                    hr_path=rec.hr_path,
                    sr_image=sr if keep_sr_images else None,
                )
            )
    if was_training:
        network.train()
    report.rows = compute_rows(report.samples, [iv.tag for iv in manifest.intervals])
    return report


def _row_from_samples(
    section: str, subset: str, layout: str, samples: list[SampleRecord]
) -> SubsetRow:
    preds = [s.pred_sr if section == SECTION_SR else s.pred_lr for s in samples]
    tally = tally_recognition(preds, [s.label for s in samples])
    if section == SECTION_SR:
        vals = [s.sr_psnr for s in samples]
        finite = [v for v in vals if math.isfinite(v)]
        inf_count = len(vals) - len(finite)
        mean_psnr = float(np.mean(finite)) if finite else None
        mean_ssim = float(np.mean([s.sr_ssim for s in samples]))
    else:
        mean_psnr, inf_count = None, 0
        mean_ssim = float(np.mean([s.lr_ssim for s in samples]))
    return SubsetRow(
        section=section,
        subset=subset,
        layout=layout,
        n=len(samples),
        pct_all7=tally.percent(7),
        pct_ge6=tally.percent(6),
        pct_ge5=tally.percent(5),
        mean_psnr_db=mean_psnr,
        psnr_inf_count=inf_count,
        mean_ssim=mean_ssim,
    )


def compute_rows(samples: list[SampleRecord], interval_tags: list[str]) -> list[SubsetRow]:
    rows = []
    subsets = list(interval_tags) + [UNION_TAG]
    for section in (SECTION_NO_SR, SECTION_SR):
        for subset in subsets:
            chosen = [
                s for s in samples if subset == UNION_TAG or s.interval_tag == subset
            ]
            if not chosen:
                continue
            rows.append(_row_from_samples(section, subset, "all", chosen))
            for layout in PlateLayout:
                sub = [s for s in chosen if s.layout == layout.value]
                if sub:
                    rows.append(_row_from_samples(section, subset, layout.value, sub))
    return rows


def _fmt(value: Optional[float], pattern: str = "{:.2f}") -> str:
    if value is None:
        return "-"
    return pattern.format(value)


def _recognition_table(rows: list[SubsetRow], section: str) -> list[str]:
    lines = [
        "| Subset | Layout | n | All 7 | >= 6 | >= 5 |",
        "|---|---|---:|---:|---:|---:|",
    ]
    for row in rows:
        if row.section != section:
            continue
        lines.append(
            f"| {row.subset} | {row.layout} | {row.n} | "
            f"{_fmt(row.pct_all7, '{:.1f}')} | {_fmt(row.pct_ge6, '{:.1f}')} | "
            f"{_fmt(row.pct_ge5, '{:.1f}')} |"
        )
    return lines


def render_markdown(report: EvalReport) -> str:
    lines = ["# Evaluation report", ""]
    meta = report.meta
    lines.append(
        f"Split: {meta.get('split')!r}, samples evaluated: {len(report.samples)}, "
        f"missing files: {len(meta.get('missing_files', []))}, "
        f"layout mask: {meta.get('use_layout_mask')}"
    )
    lines += ["", "## Recognition (% of plates with at least k correct characters)", ""]
    lines += ["### Degraded input (no restoration)", ""]
    lines += _recognition_table(report.rows, SECTION_NO_SR)
    lines += ["", "### Restored output", ""]
    lines += _recognition_table(report.rows, SECTION_SR)
    lines += ["", "## Restoration quality (restored vs ground truth)", ""]
    lines += [
        "| Subset | Layout | n | PSNR (dB) | identical (PSNR inf) | SSIM |",
        "|---|---|---:|---:|---:|---:|",
    ]
    for row in report.rows:
        if row.section != SECTION_SR:
            continue
        lines.append(
            f"| {row.subset} | {row.layout} | {row.n} | {_fmt(row.mean_psnr_db)} | "
            f"{row.psnr_inf_count} | {_fmt(row.mean_ssim, '{:.4f}')} |"
        )
    lines.append("")
    return "\n".join(lines)


def _strip_canvas(lr: np.ndarray, sr: np.ndarray, hr: np.ndarray, gutter: int = 4) -> np.ndarray:
    h, w = lr.shape[1], lr.shape[2]
    canvas = np.ones((3, h, 3 * w + 2 * gutter), dtype=np.float32)
    for k, img in enumerate((lr, sr, hr)):
        x0 = k * (w + gutter)
        canvas[:, :, x0 : x0 + w] = np.clip(img, 0.0, 1.0)
    return canvas


def report(
    eval_report: EvalReport,
    out_dir: str | os.PathLike,
    k_strips: int = 6,
    strip_seed: int = 0,
    data_dir: str | os.PathLike | None = None,
) -> list[Path]:
    """Write markdown and CSV tables plus LR|SR|HR comparison strips.

    Strips need pixel data: either records still carry their restored
    image in memory, or ``sr_path`` plus ``data_dir`` point at files.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written = []

    md_path = root / "report.md"
    md_path.write_text(render_markdown(eval_report), encoding="ascii")
    written.append(md_path)

    rec_path = root / "recognition.csv"
    with open(rec_path, "w", encoding="ascii", newline="") as fh:
        fh.write("section,subset,layout,n,pct_all7,pct_ge6,pct_ge5\n")
        for row in eval_report.rows:
            fh.write(
                f"{row.section},{row.subset},{row.layout},{row.n},"
                f"{row.pct_all7!r},{row.pct_ge6!r},{row.pct_ge5!r}\n"
            )
    written.append(rec_path)

    qual_path = root / "quality.csv"
    with open(qual_path, "w", encoding="ascii", newline="") as fh:
        fh.write("section,subset,layout,n,mean_psnr_db,psnr_inf_count,mean_ssim\n")
        for row in eval_report.rows:
            mean_psnr = "" if row.mean_psnr_db is None else repr(row.mean_psnr_db)
            fh.write(
                f"{row.section},{row.subset},{row.layout},{row.n},"
                f"{mean_psnr},{row.psnr_inf_count},{row.mean_ssim!r}\n"
            )
    written.append(qual_path)

    samples_path = root / "samples.csv"
    with open(samples_path, "w", encoding="ascii", newline="") as fh:
        fh.write(
            "index,label,layout,interval_tag,split,pred_lr,pred_sr,"
            "lr_ssim,sr_ssim,sr_psnr\n"
        )
        for s in eval_report.samples:
            fh.write(
                f"{s.index},{s.label},{s.layout},{s.interval_tag},{s.split},"
                f"{s.pred_lr},{s.pred_sr},{s.lr_ssim!r},{s.sr_ssim!r},{s.sr_psnr!r}\n"
            )
    written.append(samples_path)

    candidates = [
        s
        for s in eval_report.samples
        if s.sr_image is not None or (s.sr_path and data_dir is not None)
    ]
    if candidates and k_strips > 0:
        k = min(k_strips, len(candidates))
        rng = np.random.default_rng(np.random.SeedSequence([int(strip_seed), len(candidates)]))
        chosen = sorted(rng.choice(len(candidates), size=k, replace=False).tolist())
        strips_dir = root / "strips"
        strips_dir.mkdir(exist_ok=True)
        for pos in chosen:
            s = candidates[pos]
            if data_dir is None:
                raise DataError("strips need data_dir to load LR/HR images")
            lr = load_png(Path(data_dir) / s.lr_path)
            hr = load_png(Path(data_dir) / s.hr_path)
            sr = s.sr_image if s.sr_image is not None else load_png(Path(data_dir) / s.sr_path)
            strip_path = strips_dir / f"{s.interval_tag}_{s.index:05d}_{s.label}.png"
            save_png(_strip_canvas(lr, sr, hr), strip_path)
            written.append(strip_path)
    return written


def save_report_json(eval_report: EvalReport, path: str | os.PathLike) -> None:
    payload = {
        "meta": eval_report.meta,
        "rows": [asdict(r) for r in eval_report.rows],
        "samples": [
            {k: v for k, v in asdict(s).items() if k != "sr_image"}
            for s in eval_report.samples
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report_json(path: str | os.PathLike) -> EvalReport:
    try:
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
        rows = [SubsetRow(**r) for r in payload["rows"]]
        samples = [SampleRecord(**s) for s in payload["samples"]]
    except (OSError, ValueError, TypeError, KeyError) as e:
        raise DataError(f"cannot read evaluation report {path}: {e}") from e
    return EvalReport(rows=rows, samples=samples, meta=payload.get("meta", {}))
