"""Evaluation protocol tests: sample records, subset rows, report files."""

import numpy as np
import pytest

from platesr.degrade import UNION_TAG
from platesr.errors import DataError
from platesr.evaluation import (
    SECTION_NO_SR,
    SECTION_SR,
    EvalReport,
    SampleRecord,
    SubsetRow,
    compute_rows,
    evaluate,
    load_report_json,
    render_markdown,
    report,
    save_report_json,
)
from platesr.metrics import ssim, tally_recognition
from platesr.network import ModelConfig, build_network
from platesr.pixelops import load_png

NET_CFG = ModelConfig(channels=4, num_rcb=1, units_per_rcb=1, shuffle_factor=1,
                      recon_blocks=1)


@pytest.fixture(scope="module")
def eval_report(tiny_dataset, tiny_reader):
    out, manifest = tiny_dataset
    net = build_network(NET_CFG, seed=0)
    return evaluate(net, manifest, out, tiny_reader, split="test"), manifest, out


class TestEvaluate:
    def test_covers_test_split(self, eval_report, tiny_dataset):
        rep, manifest, _ = eval_report
        expected = sum(len(manifest.subset(iv.tag, "test")) for iv in manifest.intervals)
        assert len(rep.samples) == expected
        assert rep.meta["split"] == "test"
        assert rep.meta["missing_files"] == []
        for s in rep.samples:
            assert s.split == "test"

    def test_sample_metrics_recomputable(self, eval_report):
        rep, manifest, out = eval_report
        by_key = {(r.index, r.interval_tag): r for r in manifest.records}
        for s in rep.samples:
            rec = by_key[(s.index, s.interval_tag)]
            assert s.lr_ssim == rec.achieved_ssim
            assert s.sr_image is not None
            hr = load_png(out / s.hr_path)
            assert s.sr_ssim == pytest.approx(ssim(s.sr_image, hr), abs=1e-12)
            assert len(s.pred_lr) == len(s.pred_sr) == 7

    def test_row_structure(self, eval_report):
        rep, manifest, _ = eval_report
        tags = [iv.tag for iv in manifest.intervals]
        sections = {r.section for r in rep.rows}
        assert sections == {SECTION_NO_SR, SECTION_SR}
        for section in sections:
            subsets = {r.subset for r in rep.rows if r.section == section}
            assert UNION_TAG in subsets
            assert subsets <= set(tags) | {UNION_TAG}
        union_all = [
            r for r in rep.rows
            if r.section == SECTION_NO_SR and r.subset == UNION_TAG and r.layout == "all"
        ]
        assert len(union_all) == 1
        assert union_all[0].n == len(rep.samples)

    def test_union_row_aggregates_layout_rows(self, eval_report):
        rep, _, _ = eval_report
        for section in (SECTION_NO_SR, SECTION_SR):
            rows = [r for r in rep.rows if r.section == section and r.subset == UNION_TAG]
            all_row = next(r for r in rows if r.layout == "all")
            layout_rows = [r for r in rows if r.layout != "all"]
            assert sum(r.n for r in layout_rows) == all_row.n

    def test_tier_nesting(self, eval_report):
        rep, _, _ = eval_report
        for row in rep.rows:
            assert 0.0 <= row.pct_all7 <= row.pct_ge6 <= row.pct_ge5 <= 100.0

    def test_no_sr_rows_use_achieved_ssim(self, eval_report):
        rep, _, _ = eval_report
        for row in rep.rows:
            if row.section != SECTION_NO_SR:
                continue
            chosen = [
                s for s in rep.samples
                if (row.subset == UNION_TAG or s.interval_tag == row.subset)
                and (row.layout == "all" or s.layout == row.layout)
            ]
            assert row.n == len(chosen)
            assert row.mean_ssim == pytest.approx(np.mean([s.lr_ssim for s in chosen]))
            assert row.mean_psnr_db is None

    def test_sr_rows_match_tally_oracle(self, eval_report):
        rep, _, _ = eval_report
        for row in rep.rows:
            if row.section != SECTION_SR or row.layout != "all":
                continue
            chosen = [
                s for s in rep.samples
                if row.subset == UNION_TAG or s.interval_tag == row.subset
            ]
            tally = tally_recognition([s.pred_sr for s in chosen], [s.label for s in chosen])
            assert row.pct_all7 == tally.percent(7)
            assert row.pct_ge6 == tally.percent(6)
            assert row.mean_ssim == pytest.approx(np.mean([s.sr_ssim for s in chosen]))

    def test_missing_files_are_skipped(self, tiny_dataset, tiny_reader, tmp_path):
        import shutil

        out, manifest = tiny_dataset
        clone = tmp_path / "clone"
        shutil.copytree(out, clone)
        victim = manifest.subset("0.25-0.50", "test")[0]
        (clone / victim.lr_path).unlink()
        net = build_network(NET_CFG, seed=0)
        rep = evaluate(net, manifest, clone, tiny_reader, split="test")
        assert len(rep.meta["missing_files"]) == 1
        assert victim.lr_path in rep.meta["missing_files"][0]
        assert all(
            not (s.index == victim.index and s.interval_tag == victim.interval_tag)
            for s in rep.samples
        )

    def test_empty_split_errors(self, tiny_dataset, tiny_reader):
        out, manifest = tiny_dataset
        net = build_network(NET_CFG, seed=0)
        for rec in manifest.records:
            rec_split = rec.split
        with pytest.raises(DataError):
            evaluate(
                net,
                type(manifest)(
                    intervals=manifest.intervals,
                    split_fractions=manifest.split_fractions,
                    seed=manifest.seed,
                    records=[],
                ),
                out,
                tiny_reader,
            )


class TestComputeRows:
    def sample(self, idx, tag, layout, pred_lr, pred_sr, label="AAA0000"):
        return SampleRecord(
            index=idx, label=label, layout=layout, interval_tag=tag, split="test",
            pred_lr=pred_lr, pred_sr=pred_sr, lr_ssim=0.4, sr_ssim=0.8,
            sr_psnr=float("inf") if idx == 0 else 30.0,
            lr_path="", hr_path="",
        )

    def test_hand_built_rows(self):
        samples = [
            self.sample(0, "0.25-0.50", "brazilian", "AAA0000", "AAA0000"),
            self.sample(1, "0.25-0.50", "brazilian", "AAA0009", "AAA0000"),
        ]
        rows = compute_rows(samples, ["0.25-0.50"])
        no_sr = next(
            r for r in rows
            if r.section == SECTION_NO_SR and r.subset == "0.25-0.50" and r.layout == "all"
        )
        assert no_sr.pct_all7 == 50.0
        assert no_sr.pct_ge6 == 100.0
        sr = next(
            r for r in rows
            if r.section == SECTION_SR and r.subset == "0.25-0.50" and r.layout == "all"
        )
        assert sr.pct_all7 == 100.0
        # One infinite PSNR is counted apart and the finite mean keeps 30.
        assert sr.psnr_inf_count == 1
        assert sr.mean_psnr_db == pytest.approx(30.0)
        assert sr.mean_ssim == pytest.approx(0.8)

    def test_layout_rows_only_for_present_layouts(self):
        samples = [self.sample(0, "0.25-0.50", "brazilian", "AAA0000", "AAA0000")]
        rows = compute_rows(samples, ["0.25-0.50"])
        layouts = {r.layout for r in rows}
        assert layouts == {"all", "brazilian"}


class TestReportFiles:
    def test_markdown_mentions_everything(self, eval_report):
        rep, manifest, _ = eval_report
        text = render_markdown(rep)
        assert "no restoration" in text.lower() or "Degraded input" in text
        for iv in manifest.intervals:
            assert iv.tag in text
        assert UNION_TAG in text

    def test_report_writes_files(self, eval_report, tmp_path):
        rep, _, out = eval_report
        written = report(rep, tmp_path / "rep", k_strips=3, data_dir=out)
        names = {p.name for p in written}
        assert {"report.md", "recognition.csv", "quality.csv", "samples.csv"} <= names
        strips = [p for p in written if p.parent.name == "strips"]
        assert 1 <= len(strips) <= 3
        strip = load_png(strips[0])
        assert strip.shape[1] == 60
        assert strip.shape[2] == 3 * 120 + 2 * 4

    def test_report_deterministic(self, eval_report, tmp_path):
        rep, _, out = eval_report
        a = report(rep, tmp_path / "a", k_strips=2, strip_seed=1, data_dir=out)
        b = report(rep, tmp_path / "b", k_strips=2, strip_seed=1, data_dir=out)
        for pa, pb in zip(sorted(a), sorted(b)):
            assert pa.name == pb.name
            assert pa.read_bytes() == pb.read_bytes()

    def test_csv_column_counts(self, eval_report, tmp_path):
        rep, _, out = eval_report
        report(rep, tmp_path / "rep", k_strips=0, data_dir=out)
        rec_lines = (tmp_path / "rep" / "recognition.csv").read_text().strip().split("\n")
        assert rec_lines[0] == "section,subset,layout,n,pct_all7,pct_ge6,pct_ge5"
        assert len(rec_lines) == 1 + len(rep.rows)
        sample_lines = (tmp_path / "rep" / "samples.csv").read_text().strip().split("\n")
        assert len(sample_lines) == 1 + len(rep.samples)


class TestReportJson:
    def test_round_trip(self, eval_report, tmp_path):
        rep, _, _ = eval_report
        path = tmp_path / "eval.json"
        save_report_json(rep, path)
        back = load_report_json(path)
        assert back.meta == rep.meta
        assert back.rows == rep.rows
        assert len(back.samples) == len(rep.samples)
        for a, b in zip(back.samples, rep.samples):
            assert a.sr_image is None
            assert a.label == b.label
            assert a.sr_ssim == b.sr_ssim

    def test_bad_file(self, tmp_path):
        path = tmp_path / "eval.json"
        path.write_text("{}")
        with pytest.raises(DataError):
            load_report_json(path)
        with pytest.raises(DataError):
            load_report_json(tmp_path / "missing.json")
