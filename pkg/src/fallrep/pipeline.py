"""Experiment helpers: training-label variants and the ablation grid.

Training labels vary per ablation row; evaluation always uses the default
labeling (both sources, denoised) so every row is scored against the same
targets.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .data_model import Dataset
from .labeling import LabelingConfig, label_dataset, trajectory_broadcast_labels
from .report import EvalConfig, MetricsReport, full_report
from .training import TrainConfig, TrainResult, train


@dataclass(frozen=True)
class AblationRow:
    name: str
    denoising: bool = True
    multi_class: bool = True
    window: bool = True
    continuation: bool = True
    variant: str = "pharl"


ABLATION_ROWS = (
    AblationRow("no_denoising", denoising=False),
    AblationRow("binary_attraction", multi_class=False),
    AblationRow("continuation_only", window=False),
    AblationRow("window_only", continuation=False),
    AblationRow("full"),
    AblationRow("vanilla", variant="vanilla"),
)


def training_labels(raw: Dataset, row: AblationRow,
                    labeling: LabelingConfig = LabelingConfig()) -> Dataset:
    if not row.denoising:
        return trajectory_broadcast_labels(raw)
    return label_dataset(raw, replace(labeling, use_window_source=row.window,
                                      use_continuation_source=row.continuation))


@dataclass
class RunOutcome:
    row: AblationRow
    seed: int
    report: MetricsReport
    result: TrainResult


def run_row(raw: Dataset, row: AblationRow, train_cfg: TrainConfig, eval_cfg: EvalConfig = EvalConfig(),
            labeling: LabelingConfig = LabelingConfig(), split: str = "test",
            checkpoint: str = "best") -> RunOutcome:
    cfg = replace(train_cfg, variant=row.variant, exact_class=row.multi_class)
    result = train(training_labels(raw, row, labeling), cfg)
    evaluated = label_dataset(raw, labeling)
    ck = result.best if checkpoint == "best" else result.final
    report, _ = full_report(ck, evaluated, split, eval_cfg)
    return RunOutcome(row=row, seed=cfg.seed, report=report, result=result)


def run_grid(raw: Dataset, train_cfg: TrainConfig, rows=ABLATION_ROWS,
             eval_cfg: EvalConfig = EvalConfig(), labeling: LabelingConfig = LabelingConfig(),
             split: str = "test", checkpoint: str = "best") -> list[RunOutcome]:
    return [run_row(raw, row, train_cfg, eval_cfg, labeling, split, checkpoint) for row in rows]
