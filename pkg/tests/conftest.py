"""Shared fixtures: tiny corpora, degraded datasets, deterministic readers."""

from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from platesr.degrade import SsimInterval, build_subsets
from platesr.layouts import ALPHABET, PLATE_LEN
from platesr.ocr import toy_ocr_build
from platesr.synthplate import sample_corpus

torch.set_num_threads(1)

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


class StripReader:
    """Pixel-driven stand-in reader that accepts any image size.

    The mean brightness of each of seven vertical strips picks one symbol,
    so predictions are deterministic and respond to image content.
    """

    def predict(self, img, layout=None):
        arr = np.asarray(img, dtype=np.float64)
        w = arr.shape[-1]
        edges = np.linspace(0, w, PLATE_LEN + 1).astype(int)
        chars = []
        for k in range(PLATE_LEN):
            m = float(np.clip(arr[..., edges[k] : edges[k + 1]].mean(), 0.0, 1.0))
            chars.append(ALPHABET[min(int(m * len(ALPHABET)), len(ALPHABET) - 1)])
        return "".join(chars), np.ones(PLATE_LEN)


class BatchStripReader(StripReader):
    """StripReader with a batch entry point; logs calls for contract tests."""

    def __init__(self):
        self.calls = []

    def predict(self, img, layout=None):
        self.calls.append(("predict", 1))
        return StripReader.predict(self, img, layout)

    def predict_batch(self, imgs, layouts=None):
        self.calls.append(("predict_batch", len(imgs)))
        return [StripReader.predict(self, img) for img in imgs]


class ConstantReader:
    """Always returns the same text; isolates the MSE/SSIM parts of the loss."""

    def __init__(self, text="A" * PLATE_LEN):
        self.text = text

    def predict(self, img, layout=None):
        return self.text, np.ones(PLATE_LEN)


class ThresholdReader:
    """Bright images read as one string, dark ones as another.

    Lets a test pin the exact edit distance entering the loss.
    """

    def __init__(self, dark="AAAAAAA", bright="AAABBBB", cut=0.5):
        self.dark = dark
        self.bright = bright
        self.cut = cut

    def predict(self, img, layout=None):
        mean = float(np.asarray(img, dtype=np.float64).mean())
        text = self.bright if mean >= self.cut else self.dark
        return text, np.ones(PLATE_LEN)


class FailingReader:
    def predict(self, img, layout=None):
        raise RuntimeError("reader exploded")

    def predict_batch(self, imgs, layouts=None):
        raise RuntimeError("reader exploded")


@pytest.fixture(scope="session")
def corpus8():
    return sample_corpus(8, mix=0.5, seed=1234)


@pytest.fixture(scope="session")
def tiny_reader():
    return toy_ocr_build(seed=3, width=4)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, corpus8):
    """Eight plates degraded into two easy bands, written to disk."""
    out = tmp_path_factory.mktemp("dataset")
    intervals = [SsimInterval(0.25, 0.50), SsimInterval(0.50, 0.75)]
    manifest = build_subsets(corpus8, intervals, seed=5, out_dir=out)
    return out, manifest


ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def record_acceptance(num: int, title: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS[num] = (title, passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, passed = ACCEPTANCE_RESULTS[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num} [{verdict}] {title}")
