"""Reproducible experiment runner for attention-variant comparisons."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .degrade import UNION_TAG, load_pairs, read_manifest
from .errors import ConfigError, DataError
from .evaluation import EvalReport, evaluate, report, save_report_json
from .loss import LossConfig
from .network import ModelConfig, build_network, save_network
from .ocr import load_toy_ocr
from .trainer import TrainConfig, TrainLog, train, write_log_csv


@dataclass
class ExperimentSpec:
    name: str
    data_dir: str
    ocr_checkpoint: str
    out_dir: str
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    subset: str = UNION_TAG
    seed: int = 0
    eval_split: str = "test"
    use_layout_mask: bool = True

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("experiment name must be non-empty")
        self.model.validate()
        self.train.validate()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            raw = json.loads(text)
            model = ModelConfig(**raw.pop("model", {}))
            train_raw = raw.pop("train", {})
            loss = LossConfig(**train_raw.pop("loss", {}))
            train_cfg = TrainConfig(loss=loss, **train_raw)
            return cls(model=model, train=train_cfg, **raw)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad experiment spec: {e}") from e

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentSpec":
        try:
            text = Path(path).read_text(encoding="ascii")
        except OSError as e:
            raise DataError(f"cannot read experiment spec {path}: {e}") from e
        return cls.from_json(text)


def spec_digest(spec: ExperimentSpec) -> str:
    return hashlib.sha256(spec.to_json().encode("ascii")).hexdigest()


def run_experiment(spec: ExperimentSpec) -> tuple[Path, TrainLog, EvalReport]:
    """Train, evaluate, and archive one experiment under its output dir.

    Writes the checkpoint, training log CSV, evaluation outputs, the spec
    itself, and a provenance file with the spec digest, so a finished
    directory is self-describing.
    """
    spec.validate()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = read_manifest(spec.data_dir)
    train_pairs = load_pairs(manifest, spec.data_dir, spec.subset, "train")
    val_pairs = load_pairs(manifest, spec.data_dir, spec.subset, "val")
    if not train_pairs or not val_pairs:
        raise DataError(
            f"subset {spec.subset!r} has {len(train_pairs)} train / "
            f"{len(val_pairs)} val pairs; need both non-empty"
        )
    ocr = load_toy_ocr(spec.ocr_checkpoint)

    torch.manual_seed(spec.seed)
    network = build_network(spec.model, seed=spec.seed)
    _, log = train(network, train_pairs, val_pairs, ocr, spec.train)

    ckpt_path = out / "network.npz"
    save_network(network, ckpt_path)
    write_log_csv(log, out / "train_log.csv")

    eval_report = evaluate(
        network,
        manifest,
        spec.data_dir,
        ocr,
        split=spec.eval_split,
        use_layout_mask=spec.use_layout_mask,
    )
    save_report_json(eval_report, out / "eval.json")
    report(eval_report, out / "report", data_dir=spec.data_dir)

    (out / "spec.json").write_text(spec.to_json(), encoding="ascii")
    provenance = {
        "spec_sha256": spec_digest(spec),
        "best_epoch": log.best_epoch,
        "best_val_loss": log.best_val_loss,
        "epochs_run": len(log.epochs),
        "stop_reason": log.stop_reason,
    }
    with open(out / "provenance.json", "w", encoding="ascii") as fh:
        json.dump(provenance, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return ckpt_path, log, eval_report
