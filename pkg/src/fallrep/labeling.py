"""Window-level physics labels from raw contact descriptors.

Three filters run in order: temporal alignment (in-window descriptors must
overlap the window), boundary completion (continuation descriptors must
start within ``horizon`` frames after the window end) and reliability
filtering (``impulse >= min_impulse``). Survivors are merged per category by
maximum impulse and the label follows Head > Trunk > Supported dominance.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .data_model import (
    SPLITS,
    ContactDescriptor,
    Dataset,
    DatasetError,
    PhysicsLabel,
    WindowRecord,
)

CategoryImpulseSet = dict  # PhysicsLabel -> max impulse over surviving descriptors


@dataclass(frozen=True)
class LabelingConfig:
    min_impulse: float = 0.0
    use_window_source: bool = True
    use_continuation_source: bool = True
    horizon: int = 30

    def __post_init__(self):
        if not (self.use_window_source or self.use_continuation_source):
            raise ValueError("at least one evidence source must be enabled")
        if self.min_impulse < 0:
            raise ValueError("min_impulse must be nonnegative")
        if self.horizon < 1:
            raise ValueError("continuation horizon must be at least one frame")


def overlaps(t0: int, t1: int, t_s: int, t_e: int) -> bool:
    return t_s < t1 and t_e > t0


def _admissible(window: WindowRecord, c: ContactDescriptor, cfg: LabelingConfig) -> bool:
    if c.source == "in_window":
        return cfg.use_window_source and overlaps(window.t0, window.t1, c.t_s, c.t_e)
    if c.source == "continuation":
        return cfg.use_continuation_source and window.t1 <= c.t_s < window.t1 + cfg.horizon
    raise DatasetError(f"unknown descriptor source {c.source!r}")


def collect_evidence(window: WindowRecord, descriptors: Iterable[ContactDescriptor],
                     config: LabelingConfig = LabelingConfig()) -> CategoryImpulseSet:
    evidence: CategoryImpulseSet = {}
    for c in descriptors:
        if c.traj_id != window.traj_id:
            raise DatasetError(
                f"descriptor from trajectory {c.traj_id!r} offered to window {window.window_id!r}"
            )
        if c.impulse < config.min_impulse or not _admissible(window, c, config):
            continue
        cat = c.category
        if c.impulse > evidence.get(cat, -1.0):
            evidence[cat] = c.impulse
    return evidence


def assign_label(evidence: Mapping[PhysicsLabel, float]) -> PhysicsLabel:
    if PhysicsLabel.Head in evidence:
        return PhysicsLabel.Head
    if PhysicsLabel.Trunk in evidence:
        return PhysicsLabel.Trunk
    return PhysicsLabel.Supported


def label_window(window: WindowRecord, descriptors: Iterable[ContactDescriptor],
                 config: LabelingConfig = LabelingConfig()) -> PhysicsLabel:
    return assign_label(collect_evidence(window, descriptors, config))


def label_windows(windows: Sequence[WindowRecord], descriptors: Iterable[ContactDescriptor],
                  config: LabelingConfig = LabelingConfig()) -> list[WindowRecord]:
    """Return copies of ``windows`` with ``phys_label`` set. Order is preserved."""
    by_traj: dict[str, list[ContactDescriptor]] = {}
    for c in descriptors:
        by_traj.setdefault(c.traj_id, []).append(c)
    return [
        replace(w, phys_label=label_window(w, by_traj.get(w.traj_id, ()), config))
        for w in windows
    ]


def label_dataset(ds: Dataset, config: LabelingConfig = LabelingConfig()) -> Dataset:
    return ds.with_windows(label_windows(ds.windows, ds.contacts, config))


def trajectory_broadcast_labels(ds: Dataset) -> Dataset:
    """Coarse labels without denoising: every window of a fall trajectory gets the
    trajectory's dominant category over all of its descriptors; no-fall windows
    are Supported."""
    dominant: dict[str, PhysicsLabel] = {}
    for c in ds.contacts:
        cur = dominant.get(c.traj_id, PhysicsLabel.Supported)
        dominant[c.traj_id] = max(cur, c.category)
    out = []
    for w in ds.windows:
        label = dominant.get(w.traj_id, PhysicsLabel.Supported) if w.fall_flag else PhysicsLabel.Supported
        out.append(replace(w, phys_label=label))
    return ds.with_windows(out)


def class_counts(ds: Dataset) -> dict[str, dict[str, int]]:
    """Label counts per split, for the summary report."""
    counts: dict[str, Counter] = {}
    for w in ds.windows:
        split = ds.split_of(w)
        name = "unlabeled" if w.phys_label is None else w.phys_label.name
        counts.setdefault(split, Counter())[name] += 1
    return {
        split: {lab.name: c.get(lab.name, 0) for lab in PhysicsLabel}
        | ({"unlabeled": c["unlabeled"]} if c.get("unlabeled") else {})
        for split, c in sorted(counts.items(), key=lambda kv: SPLITS.index(kv[0]))
    }
