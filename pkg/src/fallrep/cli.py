"""Command-line entry point: ``fallrep <stage> ...``.

Exit codes: 0 success, 1 validation error, 2 runtime error, 3 failed
``eval --assert`` check.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import operator
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .data_model import DatasetError, load_dataset, write_dataset
from .labeling import class_counts, label_dataset, trajectory_broadcast_labels
from .losses import LossError
from .metrics import MetricError
from .pipeline import ABLATION_ROWS, run_row
from .relations import build_relations, stratified_batches
from .report import PRIORITY, full_report, render_table, write_eval_outputs
from .synth import write_synthetic
from .training import STREAM_BATCHES, Checkpoint, TrainingDiverged, train, write_history

log = logging.getLogger("fallrep")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3


class AssertionFailed(Exception):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_run_manifest(out: Path, stage: str, cfg: ExperimentConfig, inputs, outputs, seed, started):
    manifest = {
        "tool": "fallrep",
        "version": __version__,
        "stage": stage,
        "seed": seed,
        "config": cfg.to_dict(),
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _dataset_inputs(manifest: Path) -> list[Path]:
    manifest = manifest / "manifest.json" if manifest.is_dir() else manifest
    meta = json.loads(manifest.read_text())
    return [manifest] + [manifest.parent / meta[k] for k in ("trajectories", "windows", "contacts")]


# -- stages -------------------------------------------------------------------

def cmd_synth(args, cfg: ExperimentConfig):
    out = Path(args.out)
    manifest, ds, truth = write_synthetic(cfg.synth, out)
    outputs = [manifest, out / "trajectories.jsonl", out / "windows.jsonl", out / "contacts.jsonl",
               out / "planted.jsonl", out / "synth_config.json"]
    print(f"wrote {len(ds.trajectories)} trajectories, {len(ds.windows)} windows, "
          f"{len(ds.contacts)} contacts to {out}")
    return outputs, [], cfg.synth.seed


def cmd_label(args, cfg: ExperimentConfig):
    src = Path(args.dataset)
    ds = load_dataset(src)
    if args.mode == "broadcast":
        labeled = trajectory_broadcast_labels(ds)
    else:
        labeled = label_dataset(ds, cfg.labeling)
    out = Path(args.out) if args.out else (src if src.is_dir() else src.parent)
    manifest = write_dataset(labeled, out, windows_name="windows.labeled.jsonl",
                             manifest_name="manifest.labeled.json")
    counts = class_counts(labeled)
    summary = out / "label_summary.json"
    summary.write_text(json.dumps({"mode": args.mode, "counts": counts}, indent=2) + "\n")
    for split, c in counts.items():
        print(f"{split:>6}: " + "  ".join(f"{k}={v}" for k, v in c.items()))
    outputs = [manifest, out / "windows.labeled.jsonl", out / "trajectories.jsonl",
               out / "contacts.jsonl", summary]
    return outputs, _dataset_inputs(src), None


def cmd_graph(args, cfg: ExperimentConfig):
    ds = load_dataset(args.dataset)
    index = {w.window_id: w for w in ds.windows}
    if args.window_ids:
        ids = [s for s in args.window_ids.split(",") if s]
        missing = [i for i in ids if i not in index]
        if missing:
            raise DatasetError(f"unknown window ids: {', '.join(missing)}")
    else:
        pool = ds.windows_in(args.split)
        # same sampler and seed stream the trainer uses for this epoch
        quota = {"Head": cfg.train.quota_head, "Trunk": cfg.train.quota_trunk} if cfg.train.is_pharl else {}
        batches = stratified_batches(pool, args.batch_size or cfg.train.batch_size, quota,
                                     [cfg.train.seed, STREAM_BATCHES, args.epoch])
        if not 0 <= args.batch_index < len(batches):
            raise ValueError(f"batch index {args.batch_index} out of range (0..{len(batches) - 1})")
        ids = batches[args.batch_index]
    batch = [index[i] for i in ids]
    graph = build_relations(batch, exact_class=cfg.train.exact_class)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    skip_m, skip_p = graph.skip_motion, graph.skip_physics
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for i, rel in enumerate(graph):
            fh.write(json.dumps({
                "anchor": rel.anchor,
                "traj_positives": sorted(rel.traj_positives),
                "candidates": sorted(rel.candidates),
                "mask": sorted(rel.mask),
                "phys_positives": sorted(rel.phys_positives),
                "cross_traj_candidates": sorted(rel.cross_traj_candidates),
                "skip_motion": bool(skip_m[i]),
                "skip_physics": bool(skip_p[i]),
            }, separators=(",", ":")) + "\n")
    print(f"wrote relations for {graph.n_anchors} anchors to {out}")
    return [out], _dataset_inputs(Path(args.dataset)), cfg.train.seed


def cmd_train(args, cfg: ExperimentConfig):
    ds = load_dataset(args.dataset)
    if any(w.phys_label is None for w in ds.windows):
        raise DatasetError("training needs a labeled dataset; run `fallrep label` first")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(ds, cfg.train)
    paths = [
        result.best.save(out / "best.ckpt"),
        result.final.save(out / "final.ckpt"),
        write_history(out / "history.csv", result.history),
    ]
    print(f"best epoch {result.best.epoch} (val {result.best.val_loss:.6f}); "
          f"final val {result.final.val_loss:.6f}")
    return paths, _dataset_inputs(Path(args.dataset)), cfg.train.seed


_ASSERT_RE = re.compile(r"^\s*([a-z_]+)\s*(>=|<=|>|<|==)\s*([-+0-9.eE]+)\s*$")
_OPS = {">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt, "==": operator.eq}


def _parse_assert(expr: str):
    m = _ASSERT_RE.match(expr)
    keys = {k for k, _ in PRIORITY}
    if not m or m.group(1) not in keys:
        raise ConfigError(f"bad --assert expression {expr!r}; expected <metric><op><number>")
    return m.group(1), m.group(2), float(m.group(3))


def cmd_eval(args, cfg: ExperimentConfig):
    checks = [_parse_assert(e) for e in args.assert_ or ()]
    ds = load_dataset(args.dataset)
    ck_path = Path(args.checkpoint)
    if ck_path.is_dir():
        ck_path = ck_path / f"{cfg.eval.checkpoint}.ckpt"
    ck = Checkpoint.load(ck_path)
    split = args.split or cfg.eval.split
    report, exports = full_report(ck, ds, split, cfg.eval.metrics)
    paths = write_eval_outputs(report, exports, args.out)
    print(render_table([report.to_dict()], [split]), end="")
    failed = []
    for key, op, value in checks:
        actual = getattr(report, key)
        ok = _OPS[op](actual, value)
        print(f"assert {key} {op} {value}: {'PASS' if ok else 'FAIL'} (got {actual:.6f})")
        if not ok:
            failed.append(key)
    result = paths, _dataset_inputs(Path(args.dataset)) + [ck_path], cfg.eval.metrics.seed
    if failed:
        raise AssertionFailed(", ".join(failed), result)
    return result


def cmd_report(args, cfg: ExperimentConfig):
    reports = [json.loads(Path(p).read_text()) for p in args.metrics]
    names = args.names.split(",") if args.names else [Path(p).parent.name or str(p) for p in args.metrics]
    text = render_table(reports, names)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        return [Path(args.out)], [Path(p) for p in args.metrics], None
    return None


ABLATION_COLUMNS = ("row", "seed", "denoising", "multi_class", "window", "continuation", "variant",
                    *(k for k, _ in PRIORITY), "mean_proj_Supported", "mean_proj_Trunk", "mean_proj_Head")


def cmd_ablate(args, cfg: ExperimentConfig):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]
    inputs = []
    rows_out = []
    for seed in seeds:
        if args.dataset:
            raw = load_dataset(args.dataset)
            inputs = _dataset_inputs(Path(args.dataset))
        else:
            from .synth import generate
            raw, _ = generate(replace(cfg.synth, seed=seed))
        for row in ABLATION_ROWS:
            outcome = run_row(raw, row, replace(cfg.train, seed=seed), cfg.eval.metrics, cfg.labeling,
                              cfg.eval.split, cfg.eval.checkpoint)
            r = outcome.report
            rows_out.append({
                "row": row.name, "seed": seed, "denoising": row.denoising,
                "multi_class": row.multi_class, "window": row.window,
                "continuation": row.continuation, "variant": row.variant,
                **{k: getattr(r, k) for k, _ in PRIORITY},
                **{f"mean_proj_{k}": v for k, v in r.category_mean_projection.items()},
            })
            print(f"seed {seed} {row.name:<18} rho={r.spearman_rho:.4f} poa={r.poa_macro:.4f} "
                  f"contact_auc={r.contact_auc:.4f}", flush=True)
    path = out / "ablation.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows_out)
    medians = []
    for row in ABLATION_ROWS:
        sel = [r for r in rows_out if r["row"] == row.name]
        med = {k: float(np.median([r[k] for r in sel])) for k, _ in PRIORITY}
        med["category_mean_projection"] = {
            lab: float(np.median([r[f"mean_proj_{lab}"] for r in sel]))
            for lab in ("Supported", "Trunk", "Head")
        }
        medians.append(med)
    text = render_table(medians, [r.name for r in ABLATION_ROWS])
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return [path, out / "ablation.txt"], inputs, seeds


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fallrep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fallrep {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON experiment config")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. train.loss.tau=0.1")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("label", help="assign window physics labels")
    common(sp)
    sp.add_argument("--dataset", required=True, help="dataset manifest or directory")
    sp.add_argument("--out", help="output directory (default: next to the input)")
    sp.add_argument("--mode", choices=("denoised", "broadcast"), default="denoised")

    sp = sub.add_parser("graph", help="dump relation sets for one batch")
    common(sp)
    sp.add_argument("--dataset", required=True, help="labeled dataset manifest")
    sp.add_argument("--out", required=True, help="output .jsonl path")
    sp.add_argument("--window-ids", help="comma-separated batch members")
    sp.add_argument("--split", default="train")
    sp.add_argument("--batch-index", type=int, default=0)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--epoch", type=int, default=0)

    sp = sub.add_parser("train", help="train the encoder")
    common(sp)
    sp.add_argument("--dataset", required=True, help="labeled dataset manifest")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("eval", help="compute the metric suite")
    common(sp)
    sp.add_argument("--dataset", required=True, help="dataset labeled with evaluation labels")
    sp.add_argument("--checkpoint", required=True, help="checkpoint file or training output directory")
    sp.add_argument("--split")
    sp.add_argument("--out", required=True)
    sp.add_argument("--assert", dest="assert_", action="append", metavar="EXPR",
                    help="acceptance check such as 'spearman_rho>=0.3'; exit 3 on failure")

    sp = sub.add_parser("report", help="render metrics.json files as a table")
    common(sp)
    sp.add_argument("metrics", nargs="+")
    sp.add_argument("--names")
    sp.add_argument("--out")

    sp = sub.add_parser("ablate", help="run the ablation grid plus the vanilla control")
    common(sp)
    sp.add_argument("--dataset", help="raw dataset manifest (default: synthesise per seed)")
    sp.add_argument("--seeds", default="0,1,2")
    sp.add_argument("--out", required=True)
    return p


COMMANDS = {
    "synth": cmd_synth, "label": cmd_label, "graph": cmd_graph, "train": cmd_train,
    "eval": cmd_eval, "report": cmd_report, "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        cfg = load_config(args.config, args.overrides)
        try:
            result = COMMANDS[args.command](args, cfg)
            status = EXIT_OK
        except AssertionFailed as exc:
            print(f"acceptance check failed: {exc}", file=sys.stderr)
            result, status = exc.result, EXIT_ASSERT
        if result is not None:
            outputs, inputs, seed = result
            _write_run_manifest(Path(outputs[0]).parent, args.command, cfg, inputs, outputs, seed, started)
        return status
    except (TrainingDiverged, LossError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, FileNotFoundError) as exc:
        # config, dataset and argument validation all surface as ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
