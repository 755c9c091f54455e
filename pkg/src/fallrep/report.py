"""Evaluation runner: one MetricsReport per (checkpoint, split) plus plot data."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import Dataset, PhysicsLabel, label_vector
from .metrics import (
    auc,
    average_precision,
    kendall,
    linear_probe_scores,
    neighborhood_consistency,
    pcr,
    poa_macro,
    project,
    severity_axis,
    spearman,
)
from .training import Checkpoint, EncoderParams, embed

# display order for the text table
PRIORITY = (
    ("spearman_rho", "Spearman rho"),
    ("poa_macro", "POA (macro)"),
    ("contact_ap", "Binary Contact AP"),
    ("contact_auc", "Binary Contact AUC"),
    ("fall_auc", "Fall Detection AUC"),
    ("pcr", "PCR"),
    ("kendall_tau", "Kendall tau"),
)


@dataclass(frozen=True)
class EvalConfig:
    seed: int = 0
    pair_cap: int = 100_000
    k: int = 10
    probe_l2: float = 1e-3
    probe_steps: int = 500


@dataclass
class MetricsReport:
    spearman_rho: float
    poa_macro: float
    contact_ap: float
    contact_auc: float
    fall_auc: float
    pcr: float
    kendall_tau: float
    category_mean_projection: dict
    neighborhood_diagonal: dict
    neighborhood_skipped: dict
    split: str
    n_windows: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalExports:
    projections: list  # (window_id, label name, score)
    neighborhood: list  # (class name, diagonal_rate, skipped_queries)


def full_report(checkpoint: Checkpoint | EncoderParams, dataset: Dataset, split: str = "test",
                config: EvalConfig = EvalConfig()) -> tuple[MetricsReport, EvalExports]:
    """All diagnostics on ``split``; axis and probes are fitted on the train split.

    ``dataset`` must carry the evaluation labels (the default labeling).
    """
    train_w = dataset.windows_in("train")
    eval_w = dataset.windows_in(split)
    if not eval_w:
        raise ValueError(f"split {split!r} is empty")
    tr = embed(checkpoint, train_w)
    ev = embed(checkpoint, eval_w)
    y_tr = label_vector(train_w)
    y_ev = label_vector(eval_w)

    axis = severity_axis(tr.z, y_tr)
    s = project(ev.z, axis)

    contact_scores = linear_probe_scores(tr.z, y_tr > 0, ev.z, config.probe_l2, config.probe_steps)
    fall_tr = np.asarray([w.fall_flag for w in train_w])
    fall_ev = np.asarray([w.fall_flag for w in eval_w])
    fall_scores = linear_probe_scores(tr.z, fall_tr, ev.z, config.probe_l2, config.probe_steps)

    means = {}
    for lab in PhysicsLabel:
        sel = y_ev == int(lab)
        means[lab.name] = float(s[sel].mean()) if sel.any() else None

    nb = neighborhood_consistency(ev.z, y_ev, ev.traj_ids, k=config.k, seed=config.seed)
    report = MetricsReport(
        spearman_rho=spearman(y_ev, s),
        poa_macro=poa_macro(y_ev, s, seed=config.seed, pair_cap=config.pair_cap),
        contact_ap=average_precision(y_ev > 0, contact_scores),
        contact_auc=auc(y_ev > 0, contact_scores),
        fall_auc=auc(fall_ev, fall_scores),
        pcr=pcr(ev.z, y_ev),
        kendall_tau=kendall(y_ev, s),
        category_mean_projection=means,
        neighborhood_diagonal={PhysicsLabel(c).name: v for c, v in nb.diagonal.items()},
        neighborhood_skipped={PhysicsLabel(c).name: v for c, v in nb.skipped.items()},
        split=split,
        n_windows=len(eval_w),
    )
    exports = EvalExports(
        projections=[(w.window_id, PhysicsLabel(int(c)).name, float(v))
                     for w, c, v in zip(eval_w, y_ev, s)],
        neighborhood=[(PhysicsLabel(c).name, nb.diagonal[c], nb.skipped[c]) for c in nb.diagonal],
    )
    return report, exports


def write_eval_outputs(report: MetricsReport, exports: EvalExports, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "metrics.json", out / "projections.csv", out / "neighborhood.csv"]
    paths[0].write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    with open(paths[1], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["window_id", "label", "score"])
        for wid, lab, score in exports.projections:
            wr.writerow([wid, lab, repr(score)])
    with open(paths[2], "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["class", "diagonal_rate", "skipped_queries"])
        for name, rate, skipped in exports.neighborhood:
            wr.writerow([name, repr(rate), skipped])
    return paths


def render_table(reports: Sequence[dict], names: Sequence[str] | None = None) -> str:
    """Plain-text table of the seven headline metrics, one column per run."""
    names = list(names or [f"run{i}" for i in range(len(reports))])
    width = max(len(label) for _, label in PRIORITY) + 2
    colw = max(10, *(len(n) + 2 for n in names))
    lines = ["Metric".ljust(width) + "".join(n.rjust(colw) for n in names)]
    lines.append("-" * len(lines[0]))
    for key, label in PRIORITY:
        cells = []
        for r in reports:
            v = r.get(key)
            cells.append(("n/a" if v is None else f"{v:.4f}").rjust(colw))
        lines.append(label.ljust(width) + "".join(cells))
    lines.append("")
    lines.append("Category mean projection")
    for lab in PhysicsLabel:
        cells = []
        for r in reports:
            v = r.get("category_mean_projection", {}).get(lab.name)
            cells.append(("n/a" if v is None else f"{v:.4f}").rjust(colw))
        lines.append(f"  {lab.name}".ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"
