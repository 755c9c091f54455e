"""Contrastive relation sets per anchor window, and the batch sampler.

For a batch of labeled windows (optionally extended by memory-bank entries)
every anchor gets

* ``candidates``: all batch and bank windows except itself,
* ``traj_positives``: candidates from the anchor's trajectory,
* ``mask``: cross-trajectory contact candidates, only when the anchor is a
  contact window; removed from the motion denominator,
* ``phys_positives``: cross-trajectory candidates with exactly the anchor's
  contact label (Head or Trunk),
* ``cross_traj_candidates``: candidates from other trajectories.

Sets are held as boolean matrices of shape (anchors, candidates); candidate
columns are the batch rows followed by the retained bank rows.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data_model import PhysicsLabel, WindowRecord


@dataclass(frozen=True)
class AnchorRelations:
    anchor: str
    traj_positives: frozenset
    candidates: frozenset
    mask: frozenset
    phys_positives: frozenset
    cross_traj_candidates: frozenset


@dataclass(frozen=True)
class RelationGraph:
    anchor_ids: tuple
    candidate_ids: tuple
    bank_rows: np.ndarray
    candidates: np.ndarray
    traj_pos: np.ndarray
    mask: np.ndarray
    phys_pos: np.ndarray
    cross_traj: np.ndarray

    @property
    def n_anchors(self) -> int:
        return len(self.anchor_ids)

    @property
    def denominator(self) -> np.ndarray:
        return self.candidates & ~self.mask

    @property
    def skip_motion(self) -> np.ndarray:
        return ~self.traj_pos.any(axis=1)

    @property
    def skip_physics(self) -> np.ndarray:
        return ~self.phys_pos.any(axis=1)

    def anchor(self, i: int) -> AnchorRelations:
        ids = np.asarray(self.candidate_ids, dtype=object)

        def pick(m):
            return frozenset(ids[m[i]].tolist())

        return AnchorRelations(
            anchor=self.anchor_ids[i],
            traj_positives=pick(self.traj_pos),
            candidates=pick(self.candidates),
            mask=pick(self.mask),
            phys_positives=pick(self.phys_pos),
            cross_traj_candidates=pick(self.cross_traj),
        )

    def __iter__(self):
        return (self.anchor(i) for i in range(self.n_anchors))


def _labels(items) -> np.ndarray:
    out = []
    for lab in items:
        if lab is None:
            raise ValueError("relation building requires labeled windows")
        out.append(int(lab))
    return np.asarray(out, dtype=np.int64)


def build_relations(batch: Sequence[WindowRecord], bank=None, *, mask_contacts: bool = True,
                    exact_class: bool = True) -> RelationGraph:
    """Relation sets for every window in ``batch``.

    ``bank`` is anything with parallel ``window_ids``, ``traj_ids`` and
    ``labels`` sequences. Bank entries for windows that are also in the batch
    are dropped in favour of the fresh batch copy. ``mask_contacts=False``
    disables denominator masking; ``exact_class=False`` treats Head and Trunk
    as one class for the physics positives.
    """
    ids = [w.window_id for w in batch]
    trajs = [w.traj_id for w in batch]
    labels = _labels(w.phys_label for w in batch)
    bank_rows = np.zeros(0, dtype=np.int64)
    if bank is not None and len(bank.window_ids):
        in_batch = set(ids)
        keep = [r for r, wid in enumerate(bank.window_ids) if wid not in in_batch]
        bank_rows = np.asarray(keep, dtype=np.int64)
        ids = ids + [bank.window_ids[r] for r in keep]
        trajs = trajs + [bank.traj_ids[r] for r in keep]
        labels = np.concatenate([labels, _labels(bank.labels[r] for r in keep)])

    n = len(batch)
    codes = {}
    traj_code = np.asarray([codes.setdefault(t, len(codes)) for t in trajs], dtype=np.int64)
    contact = labels != int(PhysicsLabel.Supported)

    not_self = np.ones((n, len(ids)), dtype=bool)
    not_self[np.arange(n), np.arange(n)] = False
    same_traj = traj_code[:n, None] == traj_code[None, :]
    cross = not_self & ~same_traj
    both_contact = contact[:n, None] & contact[None, :]

    mask = cross & both_contact if mask_contacts else np.zeros_like(cross)
    if exact_class:
        phys = cross & both_contact & (labels[:n, None] == labels[None, :])
    else:
        phys = cross & both_contact
    return RelationGraph(
        anchor_ids=tuple(ids[:n]),
        candidate_ids=tuple(ids),
        bank_rows=bank_rows,
        candidates=not_self,
        traj_pos=not_self & same_traj,
        mask=mask,
        phys_pos=phys,
        cross_traj=cross,
    )


def _quota_for(quota: Mapping, label: PhysicsLabel) -> int:
    for key in (label, label.name, int(label)):
        if key in quota:
            return int(quota[key])
    return 0


def stratified_batches(windows: Sequence[WindowRecord], batch_size: int, quota: Mapping,
                       seed) -> list[list[str]]:
    """Partition ``windows`` into seeded batches that each carry at least the
    requested number of Head and Trunk windows while those classes last.

    Every window appears exactly once; all batches but the last are full.
    With zero quotas this is a plain seeded shuffle.
    """
    q_head = _quota_for(quota, PhysicsLabel.Head)
    q_trunk = _quota_for(quota, PhysicsLabel.Trunk)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if q_head < 0 or q_trunk < 0 or q_head + q_trunk > batch_size:
        raise ValueError(f"quota {q_head}+{q_trunk} does not fit batch_size {batch_size}")
    rng = np.random.default_rng(seed)
    n = len(windows)
    order = rng.permutation(n)
    n_batches = -(-n // batch_size)
    sizes = [batch_size] * (n_batches - 1) + [n - batch_size * (n_batches - 1)] if n else []

    # quota windows are allotted to every batch up front, so early filler
    # draws cannot starve later batches of a rare class
    members = [[] for _ in sizes]
    taken = np.zeros(n, dtype=bool)
    if q_head or q_trunk:
        labels = _labels(w.phys_label for w in windows)
        for lab, q in ((PhysicsLabel.Head, q_head), (PhysicsLabel.Trunk, q_trunk)):
            pool = iter(int(i) for i in order if labels[i] == int(lab))
            for b, size in enumerate(sizes):
                room = min(q, size - len(members[b]))
                for i in itertools.islice(pool, room):
                    members[b].append(i)
                    taken[i] = True
    rest = iter(int(i) for i in order if not taken[i])
    batches = []
    for b, size in enumerate(sizes):
        picks = members[b] + list(itertools.islice(rest, size - len(members[b])))
        picks = [picks[k] for k in rng.permutation(len(picks))]
        batches.append([windows[i].window_id for i in picks])
    return batches
