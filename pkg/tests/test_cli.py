import csv
import json

import pytest

from fallrep.cli import main
from fallrep.config import ConfigError, apply_overrides, build_config, load_config

SMALL = ["--set", "synth.num_trajectories=30", "--set", "train.epochs=3", "--set", "train.warmup_epochs=1",
         "--set", "train.batch_size=32", "--set", "train.quota_head=2", "--set", "train.quota_trunk=4"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    d, t, e = root / "data", root / "train", root / "eval"
    assert main(["synth", "--out", str(d), *SMALL]) == 0
    assert main(["label", "--dataset", str(d), *SMALL]) == 0
    assert main(["train", "--dataset", str(d / "manifest.labeled.json"), "--out", str(t), *SMALL]) == 0
    assert main(["eval", "--dataset", str(d / "manifest.labeled.json"), "--checkpoint", str(t),
                 "--out", str(e), *SMALL]) == 0
    return root


def test_pipeline_outputs(pipeline):
    metrics = json.loads((pipeline / "eval" / "metrics.json").read_text())
    for key in ("spearman_rho", "poa_macro", "contact_ap", "contact_auc", "fall_auc", "pcr",
                "kendall_tau", "category_mean_projection", "neighborhood_diagonal"):
        assert key in metrics
    assert -1 <= metrics["spearman_rho"] <= 1 and 0 <= metrics["poa_macro"] <= 1
    assert metrics["pcr"] > 0
    for name in ("best.ckpt", "final.ckpt", "history.csv"):
        assert (pipeline / "train" / name).is_file()
    with open(pipeline / "train" / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "train_motion", "train_physics", "train_var", "train_total",
                             "val_total", "effective_lambda_phys"]
    assert len(rows) == 3
    with open(pipeline / "eval" / "projections.csv") as fh:
        assert next(csv.reader(fh)) == ["window_id", "label", "score"]
    with open(pipeline / "eval" / "neighborhood.csv") as fh:
        assert next(csv.reader(fh)) == ["class", "diagonal_rate", "skipped_queries"]


def test_run_manifest_lists_outputs(pipeline):
    for stage in ("data", "train", "eval"):
        man = json.loads((pipeline / stage / "run_manifest.json").read_text())
        for name in man["outputs"]:
            assert (pipeline / stage / name).is_file()
        assert man["config"]["synth"]["num_trajectories"] == 30
    man = json.loads((pipeline / "train" / "run_manifest.json").read_text())
    assert all(len(h) == 64 for h in man["inputs"].values())


def test_stage_idempotence(pipeline, tmp_path):
    d = pipeline / "data"
    before = {p.name: p.read_bytes() for p in d.iterdir() if p.name != "run_manifest.json"}
    assert main(["synth", "--out", str(d), *SMALL]) == 0
    assert main(["label", "--dataset", str(d), *SMALL]) == 0
    after = {p.name: p.read_bytes() for p in d.iterdir() if p.name != "run_manifest.json"}
    assert before == after
    e2 = tmp_path / "eval2"
    assert main(["eval", "--dataset", str(d / "manifest.labeled.json"), "--checkpoint",
                 str(pipeline / "train"), "--out", str(e2), *SMALL]) == 0
    for name in ("metrics.json", "projections.csv", "neighborhood.csv"):
        assert (e2 / name).read_bytes() == (pipeline / "eval" / name).read_bytes()


def test_assert_exit_codes(pipeline, tmp_path):
    args = ["eval", "--dataset", str(pipeline / "data" / "manifest.labeled.json"),
            "--checkpoint", str(pipeline / "train" / "best.ckpt"), "--out", str(tmp_path), *SMALL]
    assert main(args + ["--assert", "pcr>0"]) == 0
    assert main(args + ["--assert", "spearman_rho>1.5"]) == 3
    assert main(args + ["--assert", "nonsense"]) == 1


def test_graph_dump(pipeline, tmp_path):
    out = tmp_path / "rel.jsonl"
    labeled = pipeline / "data" / "manifest.labeled.json"
    assert main(["graph", "--dataset", str(labeled), "--out", str(out), *SMALL]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 32
    ids = ",".join(r["anchor"] for r in rows[:3])
    assert main(["graph", "--dataset", str(labeled), "--out", str(out), "--window-ids", ids]) == 0
    assert len(out.read_text().splitlines()) == 3
    assert main(["graph", "--dataset", str(labeled), "--out", str(out), "--window-ids", "nope"]) == 1


def test_report(pipeline, tmp_path, capsys):
    assert main(["report", str(pipeline / "eval" / "metrics.json"), "--names", "run",
                 "--out", str(tmp_path / "t.txt")]) == 0
    text = (tmp_path / "t.txt").read_text()
    order = ["Spearman rho", "POA (macro)", "Binary Contact AP", "Binary Contact AUC",
             "Fall Detection AUC", "PCR", "Kendall tau"]
    assert [text.index(k) for k in order] == sorted(text.index(k) for k in order)


def test_validation_errors(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--set", "synth.bogus=1"]) == 1
    assert "synth.bogus" in capsys.readouterr().err
    assert main(["train", "--dataset", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    assert main(["frobnicate"]) == 1


def test_train_on_unlabeled_dataset(pipeline, tmp_path):
    assert main(["train", "--dataset", str(pipeline / "data" / "manifest.json"),
                 "--out", str(tmp_path), *SMALL]) == 1


def test_ablate_small(tmp_path):
    args = ["ablate", "--out", str(tmp_path), "--seeds", "0", *SMALL, "--set", "train.epochs=2"]
    assert main(args) == 0
    with open(tmp_path / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["row"] for r in rows] == ["no_denoising", "binary_attraction", "continuation_only",
                                        "window_only", "full", "vanilla"]


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("train:\n  epochs: 7\n  warmup_epochs: 2\n  loss:\n    tau: 0.1\neval:\n  split: val\n  k: 5\n")
    cfg = load_config(path, ["train.loss.tau_p=0.3", "synth.class_mix=[0.5, 0.4, 0.1]"])
    assert cfg.train.epochs == 7 and cfg.train.loss.tau == 0.1 and cfg.train.loss.tau_p == 0.3
    assert cfg.eval.split == "val" and cfg.eval.metrics.k == 5
    assert cfg.synth.class_mix == (0.5, 0.4, 0.1)
    assert build_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize("tree,key", [
    ({"train": {"loss": {"temperature": 1}}}, "train.loss.temperature"),
    ({"nonsense": {}}, "nonsense"),
    ({"eval": {"checkpoint": "latest"}}, "eval.checkpoint"),
])
def test_config_errors_name_the_key(tree, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        build_config(tree)


def test_override_syntax():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["train.epochs"])
    assert apply_overrides({}, ["a.b.c=1"]) == {"a": {"b": {"c": 1}}}


@pytest.mark.parametrize("name", ["default.yaml", "smoke.yaml"])
def test_shipped_configs_parse(name):
    from pathlib import Path
    load_config(Path(__file__).parent.parent / "configs" / name)
