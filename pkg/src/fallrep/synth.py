"""Seeded synthetic fall datasets with planted physics labels.

Each fall trajectory has a contiguous block of contact windows. A contact
window's evidence arrives through in-window descriptors, continuation
descriptors starting just after the window end, or both. Window features are

    trajectory signature + phase drift + fall component
    + signal_strength * (label component)  + confuser component + noise

where confusers are Supported windows that carry the Trunk-like component
but no contact evidence and no impact cue.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data_model import (
    BodyRegion,
    ContactDescriptor,
    Dataset,
    PhysicsLabel,
    TrajectoryRecord,
    WindowRecord,
    dump_jsonl,
    write_dataset,
)

ROUTES = ("window", "continuation", "both")
LIMBS = (BodyRegion.Arm, BodyRegion.Hand, BodyRegion.Leg, BodyRegion.Foot)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    num_trajectories: int = 200
    frames_per_trajectory: int = 192
    window_len: int = 32
    window_stride: int = 32
    feature_dim: int = 16
    class_mix: tuple = (0.56, 0.34, 0.10)
    signal_strength: float = 0.5
    confuser_strength: float = 0.5
    seed: int = 0
    fall_fraction: float = 0.6
    horizon: int = 30
    route_probs: tuple = (0.6, 0.25, 0.15)
    split_fractions: tuple = (0.8, 0.1, 0.1)
    noise: float = 0.3
    motion_scale: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "class_mix", tuple(float(x) for x in self.class_mix))
        object.__setattr__(self, "route_probs", tuple(float(x) for x in self.route_probs))
        object.__setattr__(self, "split_fractions", tuple(float(x) for x in self.split_fractions))
        if len(self.class_mix) != 3 or abs(sum(self.class_mix) - 1.0) > 1e-9 or min(self.class_mix) < 0:
            raise SynthError("class_mix must be three nonnegative proportions summing to 1")
        if not 0 < self.window_len <= self.frames_per_trajectory:
            raise SynthError("window_len must lie in [1, frames_per_trajectory]")
        if self.window_stride < 1 or self.num_trajectories < 1 or self.feature_dim < 6:
            raise SynthError("window_stride and num_trajectories must be positive, feature_dim >= 6")
        if not (0 <= self.signal_strength <= 1 and 0 <= self.confuser_strength <= 1):
            raise SynthError("signal_strength and confuser_strength must lie in [0, 1]")
        if abs(sum(self.route_probs) - 1.0) > 1e-9 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise SynthError("route_probs and split_fractions must sum to 1")


@dataclass
class PlantedTruth:
    labels: dict = field(default_factory=dict)
    fall_flags: dict = field(default_factory=dict)
    routes: dict = field(default_factory=dict)
    confusers: set = field(default_factory=set)

    def rows(self):
        for tid, flag in self.fall_flags.items():
            yield {"kind": "trajectory", "traj_id": tid, "fall_flag": flag}
        for wid, lab in self.labels.items():
            yield {
                "kind": "window",
                "window_id": wid,
                "phys_label": lab.name,
                "route": self.routes.get(wid, "none"),
                "confuser": wid in self.confusers,
            }


def _scatter_labels(windows, contacts, horizon):
    """Event-centric label realisation: each descriptor raises every window it reaches."""
    out = {w.window_id: PhysicsLabel.Supported for w in windows}
    by_traj = {}
    for w in windows:
        by_traj.setdefault(w.traj_id, []).append(w)
    for c in contacts:
        for w in by_traj.get(c.traj_id, ()):
            if c.source == "in_window":
                reach = c.t_s < w.t1 and w.t0 < c.t_e
            else:
                reach = 0 <= c.t_s - w.t1 < horizon
            if reach and c.category > out[w.window_id]:
                out[w.window_id] = c.category
    return out


def _split_assignment(strata, fractions, rng):
    split = {}
    for members in strata:
        members = [members[i] for i in rng.permutation(len(members))]
        m = len(members)
        n_val = int(round(fractions[1] * m))
        n_test = int(round(fractions[2] * m))
        if m >= 3:
            n_val, n_test = max(n_val, 1), max(n_test, 1)
        n_val = min(n_val, m)
        n_test = min(n_test, m - n_val)
        for i, tid in enumerate(members):
            split[tid] = "val" if i < n_val else "test" if i < n_val + n_test else "train"
    return split


def generate(config: SynthConfig = SynthConfig()) -> tuple[Dataset, PlantedTruth]:
    cfg = config
    rng = np.random.default_rng([cfg.seed, 7])
    starts = list(range(0, cfg.frames_per_trajectory - cfg.window_len + 1, cfg.window_stride))
    n_win = len(starts)
    n = cfg.num_trajectories
    n_fall = int(round(cfg.fall_fraction * n))
    total = n * n_win
    k_head = int(round(cfg.class_mix[2] * total))
    k_contact = int(round((cfg.class_mix[1] + cfg.class_mix[2]) * total))
    if k_contact > n_fall * max(n_win - 1, 0):
        raise SynthError(
            f"class mix needs {k_contact} contact windows but {n_fall} fall trajectories "
            f"hold at most {n_fall * max(n_win - 1, 0)}"
        )

    traj_ids = [f"t{i:04d}" for i in range(n)]
    fall = np.zeros(n, dtype=bool)
    fall[rng.permutation(n)[:n_fall]] = True
    fall_idx = np.flatnonzero(fall)

    # contact block length per fall trajectory
    block = np.zeros(n, dtype=int)
    left = k_contact
    if left >= n_fall:
        block[fall_idx] = 1
        left -= n_fall
    while left > 0:
        room = fall_idx[block[fall_idx] < n_win - 1]
        block[room[rng.integers(room.size)]] += 1
        left -= 1

    plan: dict[tuple[int, int], PhysicsLabel] = {}
    contact_slots: dict[int, list[int]] = {}
    for t in fall_idx:
        if block[t] == 0:
            continue
        onset = int(rng.integers(1, n_win - block[t] + 1))
        contact_slots[t] = list(range(onset, onset + block[t]))
        for k in contact_slots[t]:
            plan[(t, k)] = PhysicsLabel.Trunk
    left = k_head
    order = [t for t in rng.permutation(fall_idx) if t in contact_slots]
    while left > 0:
        for t in order:
            free = [k for k in contact_slots[t] if plan[(t, k)] is PhysicsLabel.Trunk]
            if not free or left == 0:
                continue
            h = min(left, int(rng.integers(1, 3)), len(free))
            for k in rng.choice(free, size=h, replace=False):
                plan[(t, int(k))] = PhysicsLabel.Head
            left -= h

    # feature directions
    basis, _ = np.linalg.qr(rng.normal(size=(cfg.feature_dim, cfg.feature_dim)))
    e_imp, e_head, e_ant, e_cue, e_fall = basis[:, 0], basis[:, 1], basis[:, 2], basis[:, 3], basis[:, 4]
    cue_dims, nuisance = basis[:, :5], basis[:, 5:]
    amp = 4.0 * cfg.signal_strength
    proto = {
        PhysicsLabel.Supported: np.zeros(cfg.feature_dim),
        PhysicsLabel.Trunk: e_imp,
        PhysicsLabel.Head: 1.5 * e_imp + 1.0 * e_head,
    }
    p_confuser = 0.5 * cfg.confuser_strength

    h = cfg.horizon
    span = max(1, min(h, cfg.window_stride))
    trajectories, windows, contacts = [], [], []
    truth = PlantedTruth()
    planned_labels = {}
    for t, tid in enumerate(traj_ids):
        signature = nuisance @ rng.normal(scale=cfg.motion_scale, size=nuisance.shape[1])
        signature = signature + cue_dims @ rng.normal(scale=0.5, size=cue_dims.shape[1])
        drift = nuisance @ rng.normal(scale=0.5 * cfg.motion_scale, size=nuisance.shape[1])
        fall_part = (0.8 * amp * e_fall) if fall[t] else 0.0
        truth.fall_flags[tid] = bool(fall[t])
        for k, t0 in enumerate(starts):
            t1 = t0 + cfg.window_len
            wid = f"{tid}_w{k:02d}"
            label = plan.get((t, k), PhysicsLabel.Supported)
            planned_labels[wid] = label
            x = signature + (k / max(n_win - 1, 1)) * drift + fall_part
            x = x + rng.normal(scale=cfg.noise, size=cfg.feature_dim)
            if label.is_contact:
                route = ROUTES[int(rng.choice(3, p=cfg.route_probs))]
                truth.routes[wid] = route
                if route == "continuation":
                    x = x + amp * (0.5 * proto[label] + 0.7 * e_ant)
                else:
                    x = x + amp * (proto[label] + 0.6 * e_cue)
                if route in ("window", "both"):
                    contacts.extend(_contact_events(tid, label, t0, t1, "in_window", rng, cfg.window_len))
                if route in ("continuation", "both"):
                    contacts.extend(_contact_events(tid, label, t1, t1 + span, "continuation", rng, span))
            else:
                if rng.random() < p_confuser:
                    truth.confusers.add(wid)
                    x = x + amp * proto[PhysicsLabel.Trunk]
            # limb contacts carry no contact category, whatever their magnitude
            if rng.random() < (0.5 if fall[t] else 0.3):
                contacts.append(_limb_event(tid, t0, t1, "in_window", rng))
            if fall[t] and rng.random() < 0.2:
                contacts.append(_limb_event(tid, t1, t1 + span, "continuation", rng))
            windows.append(WindowRecord(
                window_id=wid, traj_id=tid, t0=t0, t1=t1,
                features=tuple(float(v) for v in x), fall_flag=bool(fall[t]),
            ))

    realised = _scatter_labels(windows, contacts, h)
    if cfg.window_stride >= max(cfg.window_len, h) and realised != planned_labels:
        raise RuntimeError("generated descriptors do not realise the planned labels")
    truth.labels = realised

    head_trajs = {w.traj_id for w in windows if realised[w.window_id] is PhysicsLabel.Head}
    strata = [
        [tid for tid in traj_ids if tid in head_trajs],
        [tid for t, tid in enumerate(traj_ids) if fall[t] and tid not in head_trajs],
        [tid for t, tid in enumerate(traj_ids) if not fall[t]],
    ]
    split = _split_assignment(strata, cfg.split_fractions, rng)
    for t, tid in enumerate(traj_ids):
        trajectories.append(TrajectoryRecord(tid, bool(fall[t]), cfg.frames_per_trajectory, split[tid]))
    return Dataset(trajectories, windows, contacts), truth


def _contact_events(tid, label, lo, hi, source, rng, span):
    start = lo + int(rng.integers(0, max(span - 2, 1)))
    end = min(start + int(rng.integers(2, 7)), hi if source == "in_window" else start + 6)
    end = max(end, start + 1)
    events = []
    if label is PhysicsLabel.Head:
        events.append(ContactDescriptor(tid, BodyRegion.Head, start, end, _impulse(rng, 2.0), source))
        if rng.random() < 0.7:
            events.append(ContactDescriptor(tid, BodyRegion.Torso, start, end, _impulse(rng, 3.0), source))
    else:
        region = BodyRegion.Torso if rng.random() < 0.6 else BodyRegion.Hip
        events.append(ContactDescriptor(tid, region, start, end, _impulse(rng, 3.0), source))
    return events


def _limb_event(tid, lo, hi, source, rng):
    region = LIMBS[int(rng.integers(len(LIMBS)))]
    start = lo + int(rng.integers(0, max(hi - lo - 2, 1)))
    end = min(start + int(rng.integers(2, 7)), hi) if source == "in_window" else start + 4
    return ContactDescriptor(tid, region, start, max(end, start + 1), _impulse(rng, 4.0), source)


def _impulse(rng, scale):
    # bounded below by 0.2 N*s so a zero threshold keeps every descriptor
    return float(round(0.2 + scale * rng.lognormal(0.0, 0.6), 6))


def write_synthetic(config: SynthConfig, directory: str | Path) -> tuple[Path, Dataset, PlantedTruth]:
    ds, truth = generate(config)
    directory = Path(directory)
    manifest = write_dataset(ds, directory)
    dump_jsonl(directory / "planted.jsonl", truth.rows())
    (directory / "synth_config.json").write_text(json.dumps(asdict(config), indent=2) + "\n")
    return manifest, ds, truth


def read_planted(path: str | Path) -> PlantedTruth:
    truth = PlantedTruth()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if row["kind"] == "trajectory":
                truth.fall_flags[row["traj_id"]] = row["fall_flag"]
            else:
                truth.labels[row["window_id"]] = PhysicsLabel[row["phys_label"]]
                if row["route"] != "none":
                    truth.routes[row["window_id"]] = row["route"]
                if row["confuser"]:
                    truth.confusers.add(row["window_id"])
    return truth
