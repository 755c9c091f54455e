"""Training loop, memory bank, checkpoints and inference."""
from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import Dataset, PhysicsLabel, WindowRecord, feature_matrix
from .encoder import TRAINABLE, Adam, EncoderParams, backward, forward
from .losses import LossConfig, LossError, composite_loss, loss_gradient
from .relations import build_relations, stratified_batches

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
VARIANTS = ("pharl", "vanilla")
HISTORY_COLUMNS = (
    "epoch", "train_motion", "train_physics", "train_var", "train_total", "val_total",
    "effective_lambda_phys",
)

# named seed substreams
STREAM_INIT = 1
STREAM_BATCHES = 2


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite training loss ({value}) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-4
    batch_size: int = 128
    seed: int = 0
    bank_capacity: int = 512
    warmup_epochs: int = 10
    loss: LossConfig = field(default_factory=LossConfig)
    variant: str = "pharl"
    hidden_dim: int = 64
    embed_dim: int = 32
    quota_head: int = 8
    quota_trunk: int = 16
    exact_class: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("epochs must be >= 1 and batch_size >= 2")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.bank_capacity < 0:
            raise ValueError("bank_capacity must be nonnegative")

    @property
    def is_pharl(self) -> bool:
        return self.variant == "pharl"

    def effective_loss(self) -> LossConfig:
        """Vanilla control: unmasked trajectory contrast only."""
        if self.is_pharl:
            return self.loss
        return replace(self.loss, lambda_phys=0.0, lambda_var=0.0)

    def lambda_phys_at(self, epoch: int) -> float:
        lam = self.effective_loss().lambda_phys
        if self.warmup_epochs == 0:
            return lam
        return lam * min(1.0, epoch / self.warmup_epochs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig(**d["loss"])
        return cls(**d)


class MemoryBank:
    """FIFO store of detached embeddings with trajectory and label metadata."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.embeddings = np.zeros((0, dim))
        self.window_ids: list[str] = []
        self.traj_ids: list[str] = []
        self.labels: list[PhysicsLabel] = []

    def __len__(self) -> int:
        return len(self.window_ids)

    def push(self, windows: Sequence[WindowRecord], embeddings: np.ndarray) -> None:
        if self.capacity == 0:
            return
        c = self.capacity
        self.embeddings = np.vstack([self.embeddings, np.array(embeddings, copy=True)])[-c:]
        self.window_ids = (self.window_ids + [w.window_id for w in windows])[-c:]
        self.traj_ids = (self.traj_ids + [w.traj_id for w in windows])[-c:]
        self.labels = (self.labels + [w.phys_label for w in windows])[-c:]

    def state(self) -> dict:
        return {
            "window_ids": list(self.window_ids),
            "traj_ids": list(self.traj_ids),
            "labels": [int(x) for x in self.labels],
        }

    @classmethod
    def restore(cls, capacity: int, embeddings: np.ndarray, state: dict) -> "MemoryBank":
        bank = cls(capacity, embeddings.shape[1])
        bank.embeddings = np.array(embeddings, dtype=np.float64)
        bank.window_ids = list(state["window_ids"])
        bank.traj_ids = list(state["traj_ids"])
        bank.labels = [PhysicsLabel(x) for x in state["labels"]]
        return bank


@dataclass
class Checkpoint:
    params: EncoderParams
    optimizer: Adam
    epoch: int
    val_loss: float
    config: TrainConfig
    bank: MemoryBank | None = None

    def save(self, path: str | Path) -> Path:
        """Zip of ``.npy`` members plus ``meta.json``; member timestamps are fixed."""
        path = Path(path)
        arrays = {f"param/{k}": v for k, v in self.params.arrays().items()}
        for k in self.optimizer.m:
            arrays[f"adam_m/{k}"] = self.optimizer.m[k]
            arrays[f"adam_v/{k}"] = self.optimizer.v[k]
        if self.bank is not None:
            arrays["bank/embeddings"] = self.bank.embeddings
        meta = {
            "format": "fallrep-checkpoint",
            "version": CHECKPOINT_VERSION,
            "epoch": self.epoch,
            "val_loss": self.val_loss,
            "adam_t": self.optimizer.t,
            "config": self.config.to_dict(),
            "shapes": {k: list(v.shape) for k, v in arrays.items()},
            "bank": None if self.bank is None else self.bank.state(),
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            zf.writestr(zipfile.ZipInfo("meta.json", (1980, 1, 1, 0, 0, 0)),
                        json.dumps(meta, sort_keys=True, indent=1))
            for key in sorted(arrays):
                buf = io.BytesIO()
                np.save(buf, np.ascontiguousarray(arrays[key]), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(key + ".npy", (1980, 1, 1, 0, 0, 0)), buf.getvalue())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != "fallrep-checkpoint":
                raise ValueError(f"{path}: not a checkpoint")
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {meta['version']}")
            arrays = {k: np.load(io.BytesIO(zf.read(k + ".npy"))) for k in meta["shapes"]}
        cfg = TrainConfig.from_dict(meta["config"])
        params = EncoderParams(**{k.split("/", 1)[1]: v for k, v in arrays.items()
                                  if k.startswith("param/")})
        opt = Adam(lr=cfg.learning_rate, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                   eps=cfg.adam_eps, t=meta["adam_t"])
        for k in TRAINABLE:
            if f"adam_m/{k}" in arrays:
                opt.m[k] = arrays[f"adam_m/{k}"]
                opt.v[k] = arrays[f"adam_v/{k}"]
        bank = None
        if meta.get("bank") is not None:
            bank = MemoryBank.restore(cfg.bank_capacity, arrays["bank/embeddings"], meta["bank"])
        return cls(params=params, optimizer=opt, epoch=meta["epoch"], val_loss=meta["val_loss"],
                   config=cfg, bank=bank)

    def snapshot(self) -> "Checkpoint":
        opt = Adam(lr=self.optimizer.lr, beta1=self.optimizer.beta1, beta2=self.optimizer.beta2,
                   eps=self.optimizer.eps, t=self.optimizer.t,
                   m={k: v.copy() for k, v in self.optimizer.m.items()},
                   v={k: v.copy() for k, v in self.optimizer.v.items()})
        bank = None
        if self.bank is not None:
            bank = MemoryBank.restore(self.bank.capacity, self.bank.embeddings, self.bank.state())
        return Checkpoint(self.params.copy(), opt, self.epoch, self.val_loss, self.config, bank)


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list[dict]


@dataclass(frozen=True)
class EmbeddingMatrix:
    window_ids: tuple
    traj_ids: tuple
    z: np.ndarray
    pre_projection: np.ndarray

    def __len__(self) -> int:
        return len(self.window_ids)


def embed(checkpoint: Checkpoint | EncoderParams, windows: Sequence[WindowRecord]) -> EmbeddingMatrix:
    """Unit-norm embeddings for ``windows`` in input order. Uses features only."""
    params = checkpoint.params if isinstance(checkpoint, Checkpoint) else checkpoint
    x = feature_matrix(windows)
    if len(windows) == 0:
        x = np.zeros((0, params.feature_dim))
    cache = forward(params, x)
    return EmbeddingMatrix(
        window_ids=tuple(w.window_id for w in windows),
        traj_ids=tuple(w.traj_id for w in windows),
        z=cache.z,
        pre_projection=cache.u,
    )


def _graph_for(config: TrainConfig, windows, bank=None):
    return build_relations(windows, bank, mask_contacts=config.is_pharl,
                           exact_class=config.exact_class)


def validation_loss(params: EncoderParams, windows: Sequence[WindowRecord], config: TrainConfig) -> float:
    """Full target objective on the whole split as a single batch, without bank."""
    if len(windows) < 2:
        return math.nan
    cache = forward(params, feature_matrix(windows))
    graph = _graph_for(config, windows)
    loss_cfg = config.effective_loss()
    return composite_loss(graph, cache.z, cache.u, loss_cfg).total


def write_history(path: str | Path, history: list[dict]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in HISTORY_COLUMNS) + "\n")
    return path


def train(dataset: Dataset, config: TrainConfig, resume: Checkpoint | None = None,
          history: list[dict] | None = None, best: Checkpoint | None = None) -> TrainResult:
    """Optimise the encoder on the train split; select by validation loss.

    Windows must carry ``phys_label``; those labels drive relation building.
    ``resume`` continues from a saved checkpoint (its epoch is the last one
    completed); ``history`` and ``best`` carry what was recorded before it.
    """
    train_w = dataset.windows_in("train")
    val_w = dataset.windows_in("val")
    if not train_w or not val_w:
        raise ValueError("training needs non-empty train and val splits")
    index = {w.window_id: w for w in train_w}
    loss_cfg = config.effective_loss()
    quota = {"Head": config.quota_head, "Trunk": config.quota_trunk} if config.is_pharl else {}

    if resume is None:
        rng = np.random.default_rng([config.seed, STREAM_INIT])
        params = EncoderParams.init(feature_matrix(train_w), config.hidden_dim, config.embed_dim, rng)
        opt = Adam(lr=config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2,
                   eps=config.adam_eps)
        bank = MemoryBank(config.bank_capacity, config.embed_dim)
        start = 0
        history = []
        best = None
    else:
        state = resume.snapshot()
        params, opt, bank = state.params, state.optimizer, state.bank
        if bank is None:
            bank = MemoryBank(config.bank_capacity, config.embed_dim)
        start = resume.epoch + 1
        history = list(history or [])
        best = (best or resume).snapshot()

    for epoch in range(start, config.epochs):
        lam = config.lambda_phys_at(epoch)
        batches = stratified_batches(train_w, config.batch_size, quota,
                                     [config.seed, STREAM_BATCHES, epoch])
        sums = np.zeros(4)
        counted = 0
        for batch_ids in batches:
            batch = [index[i] for i in batch_ids]
            cache = forward(params, feature_matrix(batch))
            graph = _graph_for(config, batch, bank if len(bank) else None)
            try:
                parts, g_z, g_u = loss_gradient(graph, cache.z, cache.u, loss_cfg,
                                                bank_embeddings=bank.embeddings, lambda_phys=lam)
            except LossError:
                # no trajectory positive anywhere in this batch: nothing to contrast
                bank.push(batch, cache.z)
                continue
            if not math.isfinite(parts.total):
                raise TrainingDiverged(epoch, parts.total)
            opt.step(params, backward(params, cache, g_z, g_u))
            bank.push(batch, cache.z)
            sums += (parts.motion, parts.physics, parts.variance, parts.total)
            counted += 1
        means = sums / max(counted, 1)
        val = validation_loss(params, val_w, config)
        if not math.isfinite(val):
            raise TrainingDiverged(epoch, val)
        history.append({
            "epoch": epoch,
            "train_motion": float(means[0]),
            "train_physics": float(means[1]),
            "train_var": float(means[2]),
            "train_total": float(means[3]),
            "val_total": float(val),
            "effective_lambda_phys": float(lam),
        })
        current = Checkpoint(params, opt, epoch, float(val), config, bank)
        if best is None or val < best.val_loss:
            best = current.snapshot()
        log.debug("epoch %d train %.4f val %.4f", epoch, means[3], val)

    final = Checkpoint(params, opt, config.epochs - 1, history[-1]["val_total"], config, bank)
    return TrainResult(best=best, final=final.snapshot(), history=history)
