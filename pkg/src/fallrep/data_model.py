"""Record types shared by every stage, plus the line-delimited file format.

A dataset on disk is a directory holding ``trajectories.jsonl``,
``windows.jsonl`` and ``contacts.jsonl`` together with a ``manifest.json``
that names the three files and lists the split assignment. All intervals
are half-open integer frame ranges ``[start, end)``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SPLITS = ("train", "val", "test")
SOURCES = ("in_window", "continuation")
MANIFEST_NAME = "manifest.json"
FORMAT_TAG = "fallrep-dataset"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Raised for malformed, dangling or inconsistent dataset records."""


class PhysicsLabel(enum.IntEnum):
    """Coarse contact category. The integer value is the ordinal rank used by evaluation."""

    Supported = 0
    Trunk = 1
    Head = 2

    @property
    def is_contact(self) -> bool:
        return self is not PhysicsLabel.Supported


class BodyRegion(str, enum.Enum):
    Head = "Head"
    Torso = "Torso"
    Hip = "Hip"
    Arm = "Arm"
    Hand = "Hand"
    Leg = "Leg"
    Foot = "Foot"

    @property
    def category(self) -> PhysicsLabel:
        return REGION_CATEGORY[self]


REGION_CATEGORY = {
    BodyRegion.Head: PhysicsLabel.Head,
    BodyRegion.Torso: PhysicsLabel.Trunk,
    BodyRegion.Hip: PhysicsLabel.Trunk,
    BodyRegion.Arm: PhysicsLabel.Supported,
    BodyRegion.Hand: PhysicsLabel.Supported,
    BodyRegion.Leg: PhysicsLabel.Supported,
    BodyRegion.Foot: PhysicsLabel.Supported,
}


@dataclass(frozen=True)
class TrajectoryRecord:
    traj_id: str
    fall_flag: bool
    num_frames: int
    split: str


@dataclass(frozen=True)
class WindowRecord:
    window_id: str
    traj_id: str
    t0: int
    t1: int
    features: tuple[float, ...]
    fall_flag: bool
    phys_label: PhysicsLabel | None = None

    @property
    def dim(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class ContactDescriptor:
    traj_id: str
    region: BodyRegion
    t_s: int
    t_e: int
    impulse: float
    source: str

    @property
    def category(self) -> PhysicsLabel:
        return REGION_CATEGORY[self.region]


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[TrajectoryRecord, ...] = ()
    windows: tuple[WindowRecord, ...] = ()
    contacts: tuple[ContactDescriptor, ...] = ()
    _traj_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "contacts", tuple(self.contacts))
        object.__setattr__(self, "_traj_index", {t.traj_id: t for t in self.trajectories})

    def trajectory(self, traj_id: str) -> TrajectoryRecord:
        return self._traj_index[traj_id]

    @property
    def feature_dim(self) -> int | None:
        return self.windows[0].dim if self.windows else None

    def split_of(self, window: WindowRecord) -> str:
        return self._traj_index[window.traj_id].split

    def windows_in(self, split: str) -> list[WindowRecord]:
        return [w for w in self.windows if self._traj_index[w.traj_id].split == split]

    def contacts_by_traj(self) -> dict[str, list[ContactDescriptor]]:
        out: dict[str, list[ContactDescriptor]] = {t.traj_id: [] for t in self.trajectories}
        for c in self.contacts:
            out.setdefault(c.traj_id, []).append(c)
        return out

    def split_ids(self) -> dict[str, list[str]]:
        out = {s: [] for s in SPLITS}
        for t in self.trajectories:
            out[t.split].append(t.traj_id)
        return out

    def with_windows(self, windows: Iterable[WindowRecord]) -> "Dataset":
        return replace(self, windows=tuple(windows))


def feature_matrix(windows: Sequence[WindowRecord]) -> np.ndarray:
    if not windows:
        return np.zeros((0, 0))
    return np.asarray([w.features for w in windows], dtype=np.float64)


def label_vector(windows: Sequence[WindowRecord]) -> np.ndarray:
    if any(w.phys_label is None for w in windows):
        raise DatasetError("window without physics label")
    return np.asarray([int(w.phys_label) for w in windows], dtype=np.int64)


# -- validation ---------------------------------------------------------------

def validate_dataset(ds: Dataset) -> None:
    """Check every type invariant; raise DatasetError on the first violation."""
    trajs: dict[str, TrajectoryRecord] = {}
    for t in ds.trajectories:
        if t.traj_id in trajs:
            raise DatasetError(f"duplicate traj_id {t.traj_id!r}")
        if t.split not in SPLITS:
            raise DatasetError(f"trajectory {t.traj_id!r}: unknown split {t.split!r}")
        if not isinstance(t.num_frames, int) or t.num_frames <= 0:
            raise DatasetError(f"trajectory {t.traj_id!r}: num_frames must be a positive integer")
        trajs[t.traj_id] = t

    dim = None
    seen = set()
    for w in ds.windows:
        if w.window_id in seen:
            raise DatasetError(f"duplicate window_id {w.window_id!r}")
        seen.add(w.window_id)
        parent = trajs.get(w.traj_id)
        if parent is None:
            raise DatasetError(f"window {w.window_id!r} references unknown trajectory {w.traj_id!r}")
        if not (0 <= w.t0 < w.t1 <= parent.num_frames):
            raise DatasetError(
                f"window {w.window_id!r}: interval [{w.t0}, {w.t1}) outside [0, {parent.num_frames})"
            )
        if dim is None:
            dim = w.dim
        elif w.dim != dim:
            raise DatasetError(
                f"window {w.window_id!r}: feature dimension {w.dim} differs from {dim}"
            )
        if not all(math.isfinite(x) for x in w.features):
            raise DatasetError(f"window {w.window_id!r}: non-finite feature value")
        if w.fall_flag != parent.fall_flag:
            raise DatasetError(f"window {w.window_id!r}: fall_flag differs from its trajectory")

    for i, c in enumerate(ds.contacts):
        if c.traj_id not in trajs:
            raise DatasetError(f"contact #{i} references unknown trajectory {c.traj_id!r}")
        validate_descriptor(c, f"contact #{i}")


def validate_descriptor(c: ContactDescriptor, where: str = "contact") -> None:
    if not c.t_s < c.t_e:
        raise DatasetError(f"{where}: empty interval [{c.t_s}, {c.t_e})")
    if not (c.impulse >= 0 and math.isfinite(c.impulse)):
        raise DatasetError(f"{where}: impulse must be finite and nonnegative, got {c.impulse}")
    if c.source not in SOURCES:
        raise DatasetError(f"{where}: unknown source {c.source!r}")
    if not isinstance(c.region, BodyRegion):
        raise DatasetError(f"{where}: region must be a BodyRegion")


# -- (de)serialization --------------------------------------------------------

def _traj_to_json(t: TrajectoryRecord) -> dict:
    return {"traj_id": t.traj_id, "fall_flag": t.fall_flag, "num_frames": t.num_frames, "split": t.split}


def _window_to_json(w: WindowRecord) -> dict:
    return {
        "window_id": w.window_id,
        "traj_id": w.traj_id,
        "t0": w.t0,
        "t1": w.t1,
        "features": list(w.features),
        "fall_flag": w.fall_flag,
        "phys_label": None if w.phys_label is None else w.phys_label.name,
    }


def _contact_to_json(c: ContactDescriptor) -> dict:
    return {
        "traj_id": c.traj_id,
        "region": c.region.value,
        "t_s": c.t_s,
        "t_e": c.t_e,
        "impulse": c.impulse,
        "source": c.source,
    }


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise DatasetError(f"{where}: field {key!r} must be an integer")
    if kind is bool and not isinstance(value, bool):
        raise DatasetError(f"{where}: field {key!r} must be a boolean")
    if kind is str and not isinstance(value, str):
        raise DatasetError(f"{where}: field {key!r} must be a string")
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DatasetError(f"{where}: field {key!r} must be a real number")
        value = float(value)
    return value


def _traj_from_json(obj: dict, where: str) -> TrajectoryRecord:
    return TrajectoryRecord(
        traj_id=_require(obj, "traj_id", str, where),
        fall_flag=_require(obj, "fall_flag", bool, where),
        num_frames=_require(obj, "num_frames", int, where),
        split=_require(obj, "split", str, where),
    )


def _window_from_json(obj: dict, where: str) -> WindowRecord:
    feats = obj.get("features")
    if not isinstance(feats, list):
        raise DatasetError(f"{where}: field 'features' must be an array")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in feats):
        raise DatasetError(f"{where}: 'features' must contain only numbers")
    label = obj.get("phys_label")
    if label is not None:
        try:
            label = PhysicsLabel[label]
        except KeyError:
            raise DatasetError(f"{where}: unknown phys_label {label!r}") from None
    return WindowRecord(
        window_id=_require(obj, "window_id", str, where),
        traj_id=_require(obj, "traj_id", str, where),
        t0=_require(obj, "t0", int, where),
        t1=_require(obj, "t1", int, where),
        features=tuple(float(x) for x in feats),
        fall_flag=_require(obj, "fall_flag", bool, where),
        phys_label=label,
    )


def _contact_from_json(obj: dict, where: str) -> ContactDescriptor:
    region = _require(obj, "region", str, where)
    try:
        region = BodyRegion(region)
    except ValueError:
        raise DatasetError(f"{where}: unknown body region {region!r}") from None
    return ContactDescriptor(
        traj_id=_require(obj, "traj_id", str, where),
        region=region,
        t_s=_require(obj, "t_s", int, where),
        t_e=_require(obj, "t_e", int, where),
        impulse=_require(obj, "impulse", float, where),
        source=_require(obj, "source", str, where),
    )


def dump_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":"), allow_nan=False))
            fh.write("\n")


def read_jsonl(path: Path, parse) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{Path(path).name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: malformed record ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"{where}: record must be a key-value object")
            out.append(parse(obj, where))
    return out


def write_windows(path: Path, windows: Iterable[WindowRecord]) -> None:
    dump_jsonl(path, (_window_to_json(w) for w in windows))


def write_dataset(ds: Dataset, directory: str | Path, windows_name: str = "windows.jsonl",
                  manifest_name: str = MANIFEST_NAME) -> Path:
    """Validate and write ``ds`` under ``directory``; return the manifest path."""
    validate_dataset(ds)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"trajectories": "trajectories.jsonl", "windows": windows_name, "contacts": "contacts.jsonl"}
    dump_jsonl(directory / files["trajectories"], (_traj_to_json(t) for t in ds.trajectories))
    write_windows(directory / files["windows"], ds.windows)
    dump_jsonl(directory / files["contacts"], (_contact_to_json(c) for c in ds.contacts))
    manifest = {"format": FORMAT_TAG, "version": FORMAT_VERSION, **files, "splits": ds.split_ids()}
    path = directory / manifest_name
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_dataset(manifest: str | Path) -> Dataset:
    """Load a dataset from its manifest file (or a directory holding ``manifest.json``)."""
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    try:
        meta = json.loads(manifest.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest.name}: malformed manifest ({exc.msg})") from None
    if meta.get("format") != FORMAT_TAG:
        raise DatasetError(f"{manifest.name}: not a dataset manifest")
    base = manifest.parent
    for key in ("trajectories", "windows", "contacts"):
        if not (base / meta.get(key, "")).is_file():
            raise DatasetError(f"{manifest.name}: missing {key} file {meta.get(key)!r}")
    ds = Dataset(
        trajectories=read_jsonl(base / meta["trajectories"], _traj_from_json),
        windows=read_jsonl(base / meta["windows"], _window_from_json),
        contacts=read_jsonl(base / meta["contacts"], _contact_from_json),
    )
    validate_dataset(ds)
    splits = meta.get("splits")
    if splits is not None:
        recorded = {tid: s for s, ids in splits.items() for tid in ids}
        actual = {t.traj_id: t.split for t in ds.trajectories}
        if recorded != actual:
            raise DatasetError(f"{manifest.name}: split assignment disagrees with trajectory records")
    return ds
